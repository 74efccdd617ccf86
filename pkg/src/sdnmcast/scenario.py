"""Experiment configuration.

A Scenario captures everything one simulation run needs; the flat
key/value config format maps 1:1 onto its fields.  Unknown keys are
rejected so a config file can never silently drift.
"""

from __future__ import annotations

from dataclasses import dataclass, fields


class ConfigError(Exception):
    pass


MODES = ("multicast", "alm_sdn", "alm_learning")
ALGORITHMS = ("min_hop", "dijkstra", "minmax")

# synthetic stand-ins for the four captured traffic patterns:
# (packet_size_bytes, mean_interarrival_s, exponential?)
CROSS_PATTERNS = {
    "http": (1200, 0.005, True),
    "ftp": (1400, 1400 * 8 / 20e6, False),
    "rtc": (200, 0.020, False),
    "stream": (1400, 1400 * 8 / 2e6, False),
}
PATTERN_BURST = 1024  # packets per pattern before re-drawing


@dataclass
class Scenario:
    name: str = "default"
    # topology: either a file or generator parameters
    topology_file: str = ""
    n_switches: int = 15
    avg_degree: float = 2.67
    link_capacity_bps: float = 100e6
    link_prop_delay_s: float = 0.001
    queue_limit: int = 100

    mode: str = "multicast"
    algorithm: str = "minmax"

    n_dps: int = 2
    n_clients: int = 10
    premium_fraction: float = 0.5
    n_cross_generators: int = 10
    # multiplies cross packet sizes (and intervals) to trade event-rate
    # for the same offered bitrate at desk scale
    cross_size_scale: float = 1.0

    duration_s: float = 1200.0
    cross_start_s: float = 0.0
    dp_start_s: float = 60.0
    subscribers_start_s: float = 120.0
    dwell_s: float = 45.0
    p_join: float = 0.8
    p_leave: float = 0.2
    poll_period_s: float = 1.0
    migration_period_s: float = 10.0
    hysteresis: float = 1.1

    video_fps: float = 15.0
    video_bitrate_bps: float = 1_000_000.0
    video_mtu: int = 1400
    frame_size_lognormal_sigma: float = 0.0  # 0 = deterministic size

    # scheduled DP failures: "dp_id@time,dp_id@time"
    dp_failures: str = ""

    seed: int = 1
    log_level: str = "video"   # full | video | control
    track_video_copies: bool = False

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm}")
        if not 0.0 <= self.premium_fraction <= 1.0:
            raise ConfigError("premium_fraction must be in [0,1]")
        if self.n_cross_generators < 0:
            raise ConfigError("n_cross_generators must be >= 0")
        for key in ("dwell_s", "poll_period_s", "migration_period_s",
                    "duration_s", "video_fps"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive")
        if self.log_level not in ("full", "video", "control"):
            raise ConfigError(f"unknown log_level {self.log_level}")
        return self

    def frame_interval_s(self):
        return 1.0 / self.video_fps

    def mean_frame_bytes(self):
        return self.video_bitrate_bps / (self.video_fps * 8.0)

    def failures(self):
        out = []
        if self.dp_failures:
            for part in self.dp_failures.split(","):
                dp_id, at = part.split("@")
                out.append((float(at), dp_id.strip()))
        return sorted(out)


def _coerce(kind, value):
    if kind is bool:
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"bad boolean {value!r}")
    return kind(value)


def parse_config(text):
    """Parse a flat ``key = value`` config document into a Scenario."""
    known = {f.name: f.type for f in fields(Scenario)}
    types = {f.name: type(getattr(Scenario(), f.name))
             for f in fields(Scenario)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(types[key], val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return Scenario(**values).validate()


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
