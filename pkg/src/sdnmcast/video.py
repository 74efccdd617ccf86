"""Reference video model for QoE evaluation.

The two-description split is temporal: even frame indices form
description 0, odd indices description 1.  Either description alone is
playable (missing frames are concealed from their predecessors); both
together reproduce the full sequence.

The built-in reference is a seeded synthetic sequence (drifting
gradient plus low-level noise) so tests need no assets; raw 8-bit luma
files with a small binary header are accepted for real sequences.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = int.from_bytes(b"RAWL", "little")
HEADER = struct.Struct("<4I")

# per-frame phase drift; sets the concealment distortion floor
# (frame-copy of the predecessor lands near 30 dB)
FRAME_PHASE = 0.12


class VideoModel:
    def __init__(self, width=64, height=48, fps=15.0, seed=0,
                 frames=None):
        self.width = width
        self.height = height
        self.fps = fps
        self.seed = seed
        self._frames = frames       # preloaded frames override synthesis
        self._cache = {}

    @staticmethod
    def description_of(frame_index):
        return frame_index % 2

    def frame(self, k):
        """8-bit luma plane for frame index k."""
        if self._frames is not None:
            return self._frames[k % len(self._frames)]
        cached = self._cache.get(k)
        if cached is not None:
            return cached
        y, x = np.mgrid[0:self.height, 0:self.width]
        base = 128.0 + 96.0 * np.sin(0.15 * x + 0.10 * y
                                     + FRAME_PHASE * k)
        rng = np.random.default_rng((self.seed, k))
        noise = rng.normal(0.0, 2.0, size=base.shape)
        frame = np.clip(np.rint(base + noise), 0, 255).astype(np.uint8)
        if len(self._cache) < 4096:
            self._cache[k] = frame
        return frame

    def gray_frame(self):
        return np.full((self.height, self.width), 128, dtype=np.uint8)


def write_raw_video(path, frames, width, height):
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, width, height, len(frames)))
        for frame in frames:
            fh.write(np.asarray(frame, dtype=np.uint8).tobytes())


def read_raw_video(path, fps=15.0):
    """Load a raw-luma file into a VideoModel."""
    with open(path, "rb") as fh:
        head = fh.read(HEADER.size)
        if len(head) != HEADER.size:
            raise ValueError("truncated header")
        magic, width, height, n_frames = HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic:#x}")
        frames = []
        size = width * height
        for _ in range(n_frames):
            buf = fh.read(size)
            if len(buf) != size:
                raise ValueError("truncated frame data")
            frames.append(np.frombuffer(buf, dtype=np.uint8)
                          .reshape(height, width))
    return VideoModel(width, height, fps=fps, frames=frames)
