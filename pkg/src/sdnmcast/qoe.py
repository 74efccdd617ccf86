"""Per-client QoE computation from reception logs.

Metrics: packet loss against the emission manifest, pre-roll delay per
join interval (with denied markers for intervals that never received a
packet), video reconstruction with whole-frame copy concealment, PSNR
on luma, and pause counting under a simple buffered playout model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PSNR_CAP_DB = 100.0
DEFAULT_PREROLL_BUFFER_S = 1.0

DENIED = "denied"


@dataclass
class ReceptionLog:
    sub_id: str
    cls: str
    # per-description serving intervals (desc, dp_id, start, end)
    intervals: list = field(default_factory=list)
    # (flow, desc, frame, seq, size, sent_at, recv_at)
    packets: list = field(default_factory=list)

    def join_intervals(self, eps=1e-9):
        """Subscriber-level service intervals: the per-description
        intervals merged wherever they touch or overlap."""
        spans = sorted((s, e) for _, _, s, e in self.intervals)
        merged = []
        for s, e in spans:
            if merged and s <= merged[-1][1] + eps:
                merged[-1][1] = max(merged[-1][1], e)
            else:
                merged.append([s, e])
        return [(s, e) for s, e in merged]


def build_reception_logs(result):
    """Assemble one ReceptionLog per subscriber from a RunResult."""
    logs = {}
    for sub_id, rec in result.subscribers.items():
        logs[sub_id] = ReceptionLog(sub_id, rec.cls)
    for sub_id, desc, dp_id, start, end in result.serve_intervals:
        logs[sub_id].intervals.append((desc, dp_id, start, end))
    for sub_id, packets in result.receptions.items():
        logs[sub_id].packets = sorted(packets, key=lambda p: (p[6], p[2],
                                                              p[3]))
    return logs


def _interval_flows(log):
    """Candidate flow keys for one serving interval, multicast and
    unicast alike."""
    for desc, dp_id, start, end in log.intervals:
        yield desc, dp_id, start, end, (f"mc:{dp_id}",
                                        f"uc:{log.sub_id}:{dp_id}")


def expected_packets(log, manifests, guard_s=0.0, eps=1e-9):
    """Per-frame expected packet counts and emission times for the
    frames emitted to this subscriber during its serving intervals.

    Frames emitted within `guard_s` of the interval end are excluded:
    they are still in flight when the subscriber departs and their
    non-delivery is not congestive loss.

    Returns {frame_index: (n_packets, emit_time)}.
    """
    expected = {}
    for desc, dp_id, start, end, flows in _interval_flows(log):
        lo = min(start + guard_s, end)
        hi = max(start, end - guard_s)
        if hi < lo:
            lo, hi = start, end
        for flow in flows:
            window = {}
            for t, frame, n in manifests.get(flow, ()):
                if lo - eps <= t <= hi + eps:
                    window[frame] = (n, t)
            if not window and guard_s > 0:
                # interval shorter than the guards: fall back unguarded
                for t, frame, n in manifests.get(flow, ()):
                    if start - eps <= t <= end + eps:
                        window[frame] = (n, t)
            expected.update(window)
    return expected


def emitted_frames(manifests):
    """Global {frame: (n_packets, first emission time)} over every
    flow, independent of any subscriber's intervals."""
    out = {}
    for entries in manifests.values():
        for t, frame, n in entries:
            if frame not in out or t < out[frame][1]:
                out[frame] = (n, t)
    return out


def packet_loss_pct(log, manifests, guard_s=0.0):
    """100 * (expected - received) / expected over the served
    intervals; None when the client was never served."""
    expected = expected_packets(log, manifests, guard_s=guard_s)
    n_expected = sum(n for n, _ in expected.values())
    if n_expected == 0:
        return None
    received = 0
    for _, _, frame, _, _, sent_at, _ in log.packets:
        if frame in expected:
            received += 1
    received = min(received, n_expected)
    return 100.0 * (n_expected - received) / n_expected


def pre_roll_delay(log, eps=1e-9):
    """Per join interval: first reception minus subscribe time, or the
    DENIED marker when the interval received nothing."""
    out = []
    recv_times = [p[6] for p in log.packets]
    for start, end in log.join_intervals():
        first = None
        for t in recv_times:
            if start - eps <= t <= end + eps:
                first = t if first is None or t < first else first
        out.append(DENIED if first is None else first - start)
    return out


def frame_receptions(log):
    """Per-frame [seqs received, last arrival, first arrival]."""
    per_frame = {}
    for _, _, frame, seq, _, _, recv_at in log.packets:
        got = per_frame.setdefault(frame, [set(), recv_at, recv_at])
        got[0].add(seq)
        if recv_at > got[1]:
            got[1] = recv_at
        if recv_at < got[2]:
            got[2] = recv_at
    return per_frame


def reconstruct_video(log, video_model, expected=None, manifests=None):
    """Whole-frame reconstruction with frame-copy concealment.

    A frame is the reference frame when every one of its packets
    arrived; otherwise it is a copy of the preceding reconstructed
    frame (mid-gray bootstrap for a missing first frame).  Returns
    (frames, reference_frames, frame_indices).
    """
    if expected is None:
        expected = expected_packets(log, manifests or {})
    emitted = emitted_frames(manifests) if manifests else {}
    per_frame = frame_receptions(log)
    first_recv = {k: got[2] for k, got in per_frame.items()}
    recon, ref, indices = [], [], []
    eps = 1e-9
    for start, end in log.join_intervals():
        in_window = [k for k, (_, t) in expected.items()
                     if start - eps <= t <= end + eps]
        in_window += [k for k, t in first_recv.items()
                      if k not in expected and start - eps <= t <= end + eps]
        if not in_window:
            continue
        lo, hi = min(in_window), max(in_window)
        prev = video_model.gray_frame()
        for k in range(lo, hi + 1):
            ref_frame = video_model.frame(k)
            complete = False
            n_info = expected.get(k) or emitted.get(k)
            if n_info is not None:
                got = per_frame.get(k)
                complete = got is not None and len(got[0]) >= n_info[0]
            frame = ref_frame if complete else prev
            recon.append(frame)
            ref.append(ref_frame)
            indices.append(k)
            prev = frame
    return recon, ref, indices


def psnr(reconstructed, reference, cap_db=PSNR_CAP_DB):
    """Mean over per-frame 10*log10(255^2 / MSE), capped for identical
    frames."""
    if len(reconstructed) != len(reference):
        raise ValueError("frame count mismatch")
    if not reconstructed:
        return None
    values = []
    for a, b in zip(reconstructed, reference):
        fa = np.asarray(a, dtype=np.float64)
        fb = np.asarray(b, dtype=np.float64)
        if fa.shape != fb.shape:
            raise ValueError("frame dimension mismatch")
        mse = float(np.mean((fa - fb) ** 2))
        if mse == 0.0:
            values.append(cap_db)
        else:
            values.append(min(cap_db, 10.0 * math.log10(255.0 ** 2 / mse)))
    return sum(values) / len(values)


def count_pauses(log, manifests=None, expected=None,
                 preroll_buffer=DEFAULT_PREROLL_BUFFER_S, eps=1e-9):
    """Buffered playout model: the clock starts one pre-roll buffer
    after the first packet; each maximal interval where the next due
    frame is not yet playable at its deadline is one pause.  A frame is
    playable once fully received, or skippable as soon as any later
    frame has fully arrived (concealment without a stall)."""
    if expected is None:
        expected = expected_packets(log, manifests or {})
    per_frame = frame_receptions(log)
    pauses = 0
    for start, end in log.join_intervals():
        frames = sorted(k for k, (_, t) in expected.items()
                        if start - eps <= t <= end + eps)
        if not frames:
            continue
        avail = []
        for k in frames:
            got = per_frame.get(k)
            n, _ = expected[k]
            if got is not None and len(got[0]) >= n:
                avail.append(got[1])
            else:
                avail.append(None)
        # a missing frame becomes skippable when a later frame arrives
        effective = [None] * len(frames)
        future = math.inf
        for i in range(len(frames) - 1, -1, -1):
            own = avail[i] if avail[i] is not None else math.inf
            effective[i] = min(own, future)
            if avail[i] is not None and avail[i] < future:
                future = avail[i]
        first_recv = min((a for a in avail if a is not None),
                         default=None)
        if first_recv is None:
            continue
        clock = first_recv + preroll_buffer
        emit0 = expected[frames[0]][1]
        offset = 0.0
        for i, k in enumerate(frames):
            due = clock + (expected[k][1] - emit0) + offset
            eff = effective[i]
            if eff is math.inf:
                # stream died inside the interval
                if due < end - eps:
                    pauses += 1
                break
            if eff > due + eps:
                pauses += 1
                offset += eff - due
    return pauses


@dataclass
class ClientQoE:
    sub_id: str
    cls: str
    loss_pct: object            # float or None (never served)
    pre_roll: list              # per join interval: float or DENIED
    psnr_db: object             # float or None
    pauses: int
    served_fraction: float

    @property
    def denied(self):
        """True when the client attempted service but every join
        interval received nothing."""
        return bool(self.pre_roll) and all(p is DENIED
                                           for p in self.pre_roll)

    @property
    def served(self):
        return any(p is not DENIED for p in self.pre_roll)

    def pre_roll_value(self):
        vals = sorted(p for p in self.pre_roll if p is not DENIED)
        if not vals:
            return None
        return vals[len(vals) // 2]


DEFAULT_LOSS_GUARD_S = 0.25


def evaluate_run(result, scenario, video_model=None,
                 preroll_buffer=DEFAULT_PREROLL_BUFFER_S,
                 loss_guard_s=DEFAULT_LOSS_GUARD_S):
    """Full per-client QoE for one finished run."""
    if video_model is None:
        video_model = VideoModelDefault(scenario)
    logs = build_reception_logs(result)
    window = max(result.end_time - scenario.subscribers_start_s, 1e-9)
    out = []
    for sub_id in sorted(logs):
        log = logs[sub_id]
        expected = expected_packets(log, result.manifests,
                                    guard_s=loss_guard_s)
        loss = packet_loss_pct(log, result.manifests,
                               guard_s=loss_guard_s)
        rolls = pre_roll_delay(log)
        recon, ref, _ = reconstruct_video(log, video_model,
                                          expected=expected,
                                          manifests=result.manifests)
        quality = psnr(recon, ref) if recon else None
        pauses = count_pauses(log, expected=expected,
                              preroll_buffer=preroll_buffer)
        # a failure-forced outage is a pause until service resumes
        pauses += sum(1 for s, _, _ in result.outages if s == sub_id)
        served_time = sum(e - s for s, e in log.join_intervals())
        out.append(ClientQoE(sub_id, log.cls, loss, rolls, quality,
                             pauses, min(1.0, served_time / window)))
    return out


def VideoModelDefault(scenario):
    from .video import VideoModel
    return VideoModel(fps=scenario.video_fps, seed=scenario.seed)


def qoe_csv_lines(clients):
    """Delimited per-client report matching the documented header."""
    lines = ["sub_id,class,loss_pct,pre_roll_s,psnr_db,pauses,"
             "served_fraction"]
    for c in clients:
        loss = "-" if c.loss_pct is None else f"{c.loss_pct:.4f}"
        roll = c.pre_roll_value()
        roll_s = "-" if roll is None else f"{roll:.4f}"
        quality = "-" if c.psnr_db is None else f"{c.psnr_db:.4f}"
        lines.append(f"{c.sub_id},{c.cls},{loss},{roll_s},{quality},"
                     f"{c.pauses},{c.served_fraction:.4f}")
    return lines
