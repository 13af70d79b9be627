"""Decoder inputs from event streams.

Three featurizations, all causal and sampled every ``t_s_ms``:

* ``frame``      per-channel event count in ``(t - T_bin, t]``
* ``segmented``  the same window cut into ``b`` equal sub-windows, flattened
                 channel-major (index ``i * b + k``, oldest sub-window first)
* ``binary``     1 if the channel fired in ``(t - T_s, t]``, else 0

Samples whose window would start before the recording (``t < T_bin``) are
dropped.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError
from .events import EventStream, SpikeTrain, make_events
from .synth import ReachTrajectory

MODES = ("frame", "segmented", "binary")


@dataclass(frozen=True)
class FeatureConfig:
    t_bin_ms: int = 200
    t_s_ms: int = 4
    n_segments: int = 1
    mode: str = "frame"

    def violations(self) -> list[str]:
        out = []
        if self.mode not in MODES:
            out.append(f"unknown feature mode {self.mode!r}")
        if self.t_bin_ms <= 0 or self.t_s_ms <= 0:
            out.append("t_bin_ms and t_s_ms must be positive")
        if self.n_segments < 1:
            out.append("n_segments must be >= 1")
        elif self.mode == "segmented" and self.t_bin_ms % self.n_segments:
            out.append(f"t_bin_ms={self.t_bin_ms} is not divisible by n_segments={self.n_segments}")
        if self.mode == "binary" and self.t_bin_ms != self.t_s_ms:
            out.append("binary mode requires t_bin_ms == t_s_ms")
        if self.mode in ("frame", "segmented") and self.t_bin_ms < self.t_s_ms:
            out.append("t_bin_ms must be >= t_s_ms")
        return out

    def check(self) -> None:
        v = self.violations()
        if v:
            raise ConfigError("; ".join(v))

    @property
    def segments(self) -> int:
        return self.n_segments if self.mode == "segmented" else 1


@dataclass
class FeatureFrame:
    sample_times_us: np.ndarray
    X: np.ndarray  # (n, n_features) float32
    Y: np.ndarray  # (n, 2) float64
    reach_ids: np.ndarray  # (n,) int
    config: FeatureConfig = field(default_factory=FeatureConfig)
    n_channels: int = 96
    config_hash: str = ""

    def __post_init__(self):
        n = len(self.X)
        if not (len(self.Y) == n == len(self.reach_ids) == len(self.sample_times_us)):
            raise ConfigError("X, Y, reach_ids and sample times must have equal length")

    def __len__(self) -> int:
        return len(self.X)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, mask) -> "FeatureFrame":
        return FeatureFrame(
            self.sample_times_us[mask], self.X[mask], self.Y[mask], self.reach_ids[mask],
            self.config, self.n_channels, self.config_hash,
        )

    def reaches(self, ids=None) -> list[np.ndarray]:
        """Sample indices of each reach (chronological), optionally restricted to ``ids``."""
        r = self.reach_ids
        cuts = np.flatnonzero(np.diff(r)) + 1
        groups = np.split(np.arange(len(r)), cuts)
        if ids is not None:
            keep = set(int(i) for i in ids)
            groups = [g for g in groups if len(g) and int(r[g[0]]) in keep]
        return [g for g in groups if len(g)]


def sample_grid(cfg: FeatureConfig, traj: ReachTrajectory) -> np.ndarray:
    """Sample times (us) at multiples of T_s with a fully populated window."""
    ts_us = cfg.t_s_ms * 1000
    if ts_us % traj.sample_period_us:
        raise ConfigError(
            f"feature stride {cfg.t_s_ms} ms is not a multiple of the trajectory period {traj.sample_period_us} us"
        )
    last = (traj.n_samples - 1) * traj.sample_period_us
    k0 = -(-cfg.t_bin_ms * 1000 // ts_us)
    return np.arange(k0, last // ts_us + 1, dtype=np.int64) * ts_us


def window_counts(stream: EventStream, t_us: np.ndarray, t_bin_us: int, b: int) -> np.ndarray:
    """Counts per (sample, channel, sub-window) over ``(t - t_bin, t]``; shape (n, n_ch, b)."""
    n_ch = stream.n_channels
    out = np.zeros((len(t_us), n_ch, b), dtype=np.int64)
    edges = t_us[:, None] - t_bin_us + (np.arange(b + 1)[None, :] * t_bin_us) // b
    ts = stream.timestamp_us.astype(np.int64)
    order = np.argsort(stream.channel, kind="stable")
    ch_sorted = stream.channel[order]
    bounds = np.searchsorted(ch_sorted, np.arange(n_ch + 1))
    for c in range(n_ch):
        times = ts[order[bounds[c]:bounds[c + 1]]]
        if len(times) == 0:
            continue
        cum = np.searchsorted(times, edges, side="right")
        out[:, c, :] = np.diff(cum, axis=1)
    return out


def _targets(traj: ReachTrajectory, t_us: np.ndarray):
    idx = t_us // traj.sample_period_us
    return traj.velocities[idx].astype(np.float64), traj.reach_index()[idx]


def featurize(stream: EventStream, traj: ReachTrajectory, cfg: FeatureConfig) -> FeatureFrame:
    cfg.check()
    t = sample_grid(cfg, traj)
    b = cfg.segments
    counts = window_counts(stream, t, cfg.t_bin_ms * 1000, b)
    X = counts.reshape(len(t), stream.n_channels * b)
    if cfg.mode == "binary":
        X = np.minimum(X, 1)
    Y, reach = _targets(traj, t)
    return FeatureFrame(t, X.astype(np.float32), Y, reach, cfg, stream.n_channels)


def bin_counts(stream: EventStream, traj: ReachTrajectory, t_bin_ms: int = 200, t_s_ms: int = 4) -> FeatureFrame:
    return featurize(stream, traj, FeatureConfig(t_bin_ms, t_s_ms, 1, "frame"))


def segmented_bin_counts(stream, traj, t_bin_ms: int = 200, t_s_ms: int = 4, n_segments: int = 8) -> FeatureFrame:
    return featurize(stream, traj, FeatureConfig(t_bin_ms, t_s_ms, n_segments, "segmented"))


def binarize_stream(stream, traj, t_s_ms: int = 4) -> FeatureFrame:
    return featurize(stream, traj, FeatureConfig(t_s_ms, t_s_ms, 1, "binary"))


def spike_train_to_stream(train: SpikeTrain) -> EventStream:
    ch = np.concatenate([np.full(len(t), c, dtype=np.int64) for c, t in enumerate(train.spike_times_us)] or [np.empty(0, np.int64)])
    ts = np.concatenate(train.spike_times_us or [np.empty(0, np.int64)])
    return EventStream(train.n_channels, train.duration_us, make_events(ch, ts, np.ones(len(ch), dtype=np.int8)))


# --- reach split --------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple
    val: tuple
    test: tuple

    def part(self, name: str) -> tuple:
        return getattr(self, name)

    def mask(self, reach_ids: np.ndarray, name: str) -> np.ndarray:
        return np.isin(reach_ids, np.asarray(self.part(name), dtype=np.int64))


def split_reaches(n_reaches: int) -> DatasetSplit:
    """Chronological 50/25/25 split by reach index."""
    if n_reaches < 4:
        raise ConfigError(f"need at least 4 reaches to split, got {n_reaches}")
    # round-half-up quotas keep every part within one reach of its share
    n_train = (2 * n_reaches + 2) // 4
    n_val = (n_reaches + 2) // 4
    r = list(range(n_reaches))
    return DatasetSplit(tuple(r[:n_train]), tuple(r[n_train:n_train + n_val]), tuple(r[n_train + n_val:]))


def segment_and_split(traj: ReachTrajectory, seed: int = 0) -> DatasetSplit:
    """Split reaches found from target changes. ``seed`` is accepted for
    interface symmetry; the split is chronological and does not use it."""
    tgt = traj.target_positions
    change = np.flatnonzero(np.any(np.diff(tgt, axis=0) != 0, axis=1)) + 1
    n = 1 + len(change)
    return split_reaches(max(n, traj.n_reaches))


# --- feature file ---------------------------------------------------------------

_FMAGIC = b"NFEA"
_FHEAD = struct.Struct("<4sHBBHHIIQI32s")


def write_features(ff: FeatureFrame, path) -> None:
    cfg = ff.config
    head = _FHEAD.pack(
        _FMAGIC, 1, MODES.index(cfg.mode), 0, ff.n_channels, cfg.segments,
        cfg.t_bin_ms, cfg.t_s_ms, len(ff), ff.n_features, ff.config_hash.encode()[:32].ljust(32, b"\0"),
    )
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(ff.sample_times_us, dtype="<u8").tobytes())
        fh.write(np.ascontiguousarray(ff.X, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(ff.Y, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ff.reach_ids, dtype="<i4").tobytes())


def read_features(path) -> FeatureFrame:
    data = Path(path).read_bytes()
    if len(data) < _FHEAD.size:
        raise ParseError("truncated feature header", offset=len(data))
    magic, ver, mode, _, n_ch, b, t_bin, t_s, n, nf, h = _FHEAD.unpack_from(data)
    if magic != _FMAGIC:
        raise ParseError(f"bad magic {magic!r}", offset=0)
    need = _FHEAD.size + n * (8 + 4 * nf + 16 + 4)
    if len(data) != need:
        raise ParseError(f"feature file size {len(data)} != expected {need}", offset=min(len(data), need))
    off = _FHEAD.size
    t = np.frombuffer(data, "<u8", n, off).astype(np.int64)
    off += 8 * n
    X = np.frombuffer(data, "<f4", n * nf, off).reshape(n, nf).astype(np.float32)
    off += 4 * n * nf
    Y = np.frombuffer(data, "<f8", n * 2, off).reshape(n, 2).astype(np.float64)
    off += 16 * n
    r = np.frombuffer(data, "<i4", n, off).astype(np.int64)
    mode_s = MODES[mode]
    cfg = FeatureConfig(t_bin, t_s, b if mode_s == "segmented" else 1, mode_s)
    return FeatureFrame(t, X, Y, r, cfg, n_ch, h.rstrip(b"\0").decode())
