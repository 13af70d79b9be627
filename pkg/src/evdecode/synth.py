"""Synthetic stand-ins for a reaching dataset.

Reach trajectories with minimum-jerk profiles, cosine-tuned Poisson spike
trains, a noisy multichannel extracellular waveform, and a delta-modulation
front-end that turns the waveform into ON/OFF address events.

Every channel draws from its own generator seeded by ``(seed, channel)``, so
generating channels one at a time (to bound memory) or all at once gives the
same bits.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DomainError
from .events import EVENT_DTYPE, EventStream, SpikeTrain, sort_order

REFRACTORY_US = 1000


def channel_rng(seed: int, channel: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, channel, stream]))


# --- kinematics ---------------------------------------------------------------


@dataclass
class ReachTrajectory:
    sample_period_us: int
    positions: np.ndarray  # (n, 2)
    velocities: np.ndarray  # (n, 2), units/s
    target_positions: np.ndarray  # (n, 2)
    reach_boundaries: np.ndarray  # (n_reaches,) sample indices

    @property
    def n_samples(self) -> int:
        return len(self.positions)

    @property
    def duration_us(self) -> int:
        return self.n_samples * self.sample_period_us

    @property
    def n_reaches(self) -> int:
        return len(self.reach_boundaries)

    def reach_index(self) -> np.ndarray:
        """Reach id of every sample."""
        ids = np.zeros(self.n_samples, dtype=np.int64)
        ids[self.reach_boundaries[1:]] = 1
        return np.cumsum(ids)


def min_jerk(s: np.ndarray) -> np.ndarray:
    return 10 * s**3 - 15 * s**4 + 6 * s**5


def gen_reaches(
    n_reaches: int,
    sample_period_us: int = 4000,
    workspace: float = 1.0,
    seed: int = 0,
    reach_ms: tuple[float, float] = (400.0, 700.0),
    hold_ms: float = 100.0,
    start=(0.0, 0.0),
    targets=None,
) -> ReachTrajectory:
    """Chain ``n_reaches`` point-to-point movements inside ``[-workspace, workspace]^2``.

    Each reach moves from the current position to its target along a
    minimum-jerk path, then holds for ``hold_ms``. ``targets`` overrides the
    uniformly drawn targets.
    """
    if n_reaches < 1:
        raise DomainError("n_reaches must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xEAC4]))
    if targets is None:
        targets = rng.uniform(-workspace, workspace, size=(n_reaches, 2))
    targets = np.asarray(targets, dtype=np.float64).reshape(n_reaches, 2)
    durations = rng.uniform(reach_ms[0], reach_ms[1], size=n_reaches)
    dt_ms = sample_period_us / 1000.0
    hold = max(1, int(round(hold_ms / dt_ms)))

    pos = [np.asarray(start, dtype=np.float64).reshape(1, 2)]
    tgt = []
    bounds = []
    n = 0
    cur = pos[0][0]
    for i in range(n_reaches):
        m = max(1, int(round(durations[i] / dt_ms)))
        s = np.arange(1, m + 1) / m
        seg = cur + (targets[i] - cur) * min_jerk(s)[:, None]
        seg = np.vstack([seg, np.repeat(targets[i][None], hold, axis=0)])
        bounds.append(n)
        pos.append(seg)
        tgt.append(np.repeat(targets[i][None], len(seg), axis=0))
        n += len(seg)
        cur = targets[i]
    # the initial sample belongs to the first reach
    positions = np.vstack(pos)[:-1]
    target_positions = np.vstack(tgt)
    velocities = np.zeros_like(positions)
    velocities[:-1] = np.diff(positions, axis=0) / (sample_period_us * 1e-6)
    return ReachTrajectory(sample_period_us, positions, velocities, target_positions, np.asarray(bounds, dtype=np.int64))


def write_trajectory(traj: ReachTrajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_us", "x", "y", "vx", "vy", "target_x", "target_y"])
        t = np.arange(traj.n_samples) * traj.sample_period_us
        for k in range(traj.n_samples):
            w.writerow(
                [int(t[k])]
                + [repr(float(v)) for v in (*traj.positions[k], *traj.velocities[k], *traj.target_positions[k])]
            )


def read_trajectory(path) -> ReachTrajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0].astype(np.int64)
    period = int(t[1] - t[0]) if len(t) > 1 else 4000
    tgt = data[:, 5:7]
    change = np.flatnonzero(np.any(np.diff(tgt, axis=0) != 0, axis=1)) + 1
    bounds = np.concatenate([[0], change]).astype(np.int64)
    return ReachTrajectory(period, data[:, 1:3].copy(), data[:, 3:5].copy(), tgt.copy(), bounds)


# --- spikes ------------------------------------------------------------------


@dataclass
class TuningModel:
    preferred_direction: np.ndarray
    baseline_rate: np.ndarray
    modulation_depth: np.ndarray

    @property
    def n_channels(self) -> int:
        return len(self.preferred_direction)

    def rates(self, velocities: np.ndarray) -> np.ndarray:
        """Firing rate (Hz) of every channel for every velocity sample, shape (n_ch, n)."""
        u = np.stack([np.cos(self.preferred_direction), np.sin(self.preferred_direction)], axis=1)
        # |v| cos(theta_v - theta_pref) == v . u_pref
        proj = u @ velocities.T
        lam = self.baseline_rate[:, None] + self.modulation_depth[:, None] * proj
        return np.maximum(lam, 0.0)


def random_tuning(n_channels: int = 96, seed: int = 0, baseline=(2.0, 8.0), depth=(3.0, 8.0)) -> TuningModel:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7E]))
    return TuningModel(
        preferred_direction=rng.uniform(-np.pi, np.pi, n_channels),
        baseline_rate=rng.uniform(*baseline, n_channels),
        modulation_depth=rng.uniform(*depth, n_channels),
    )


def enforce_refractory(times: np.ndarray, refractory_us: int = REFRACTORY_US) -> np.ndarray:
    keep = []
    last = None
    for t in times.tolist():
        if last is None or t - last >= refractory_us:
            keep.append(t)
            last = t
    return np.asarray(keep, dtype=np.int64)


def gen_spikes(traj: ReachTrajectory, tuning: TuningModel, seed: int = 0, lead_ms: float = 0.0) -> SpikeTrain:
    """Inhomogeneous Poisson spikes with cosine velocity tuning.

    The rate is piecewise constant over trajectory samples; spikes come from
    thinning a homogeneous process at the channel's peak rate. ``lead_ms``
    makes firing anticipate the movement. A 1 ms absolute refractory period is
    enforced afterwards.
    """
    n = traj.n_samples
    shift = int(round(lead_ms * 1000 / traj.sample_period_us))
    idx = np.minimum(np.arange(n) + shift, n - 1)
    rates = tuning.rates(traj.velocities[idx])
    duration = traj.duration_us
    out = []
    for ch in range(tuning.n_channels):
        rng = channel_rng(seed, ch, 1)
        lam = rates[ch]
        lam_max = float(lam.max()) if n else 0.0
        if lam_max <= 0.0:
            out.append(np.empty(0, dtype=np.int64))
            continue
        n_cand = rng.poisson(lam_max * duration * 1e-6)
        cand = np.sort(rng.uniform(0.0, duration, n_cand))
        keep = rng.uniform(0.0, 1.0, n_cand) < lam[(cand // traj.sample_period_us).astype(np.int64)] / lam_max
        times = np.floor(cand[keep]).astype(np.int64)
        out.append(enforce_refractory(times))
    return SpikeTrain(tuning.n_channels, out, duration_us=duration)


# --- waveform and front-end ---------------------------------------------------


def biphasic_template(sample_rate_hz: int = 24000, length_ms: float = 1.0) -> np.ndarray:
    """Unit-trough biphasic action potential shape (sharp trough, slower rebound)."""
    t = np.arange(int(round(length_ms * sample_rate_hz / 1000))) / sample_rate_hz * 1000.0
    w = -np.exp(-(((t - 0.2) / 0.07) ** 2)) + 0.45 * np.exp(-(((t - 0.5) / 0.15) ** 2))
    return w / -w.min()


@dataclass
class EncoderParams:
    delta: float = 1.0
    spike_amplitude: float = 2.0
    noise_std: float = 0.27
    sample_rate_hz: int = 24000
    spike_template: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not self.delta > 0:
            raise DomainError("delta must be > 0")
        if self.sample_rate_hz <= 0:
            raise DomainError("sample_rate_hz must be > 0")
        if self.noise_std < 0:
            raise DomainError("noise_std must be >= 0")
        if self.spike_template is None:
            self.spike_template = biphasic_template(self.sample_rate_hz)
        self.spike_template = np.asarray(self.spike_template, dtype=np.float64)


def n_signal_samples(duration_us: int, sample_rate_hz: int) -> int:
    return duration_us * sample_rate_hz // 1_000_000


def sample_time_us(n, sample_rate_hz: int):
    return np.asarray(n, dtype=np.int64) * 1_000_000 // sample_rate_hz


def channel_waveform(times_us: np.ndarray, n_samples: int, params: EncoderParams, rng: np.random.Generator | None):
    if params.noise_std > 0 and rng is not None:
        x = rng.standard_normal(n_samples) * params.noise_std
    else:
        x = np.zeros(n_samples)
    if len(times_us):
        tmpl = params.spike_template * params.spike_amplitude
        start = np.asarray(times_us, dtype=np.int64) * params.sample_rate_hz // 1_000_000
        idx = start[:, None] + np.arange(len(tmpl))[None, :]
        vals = np.broadcast_to(tmpl, idx.shape)
        inside = idx < n_samples
        np.add.at(x, idx[inside], vals[inside])
    return x


def synth_waveform(spikes: SpikeTrain, params: EncoderParams, seed: int = 0, duration_us: int | None = None) -> np.ndarray:
    """Noisy multichannel waveform, shape (n_channels, duration * sample_rate)."""
    duration_us = spikes.duration_us if duration_us is None else duration_us
    n = n_signal_samples(duration_us, params.sample_rate_hz)
    out = np.empty((spikes.n_channels, n))
    for ch, times in enumerate(spikes.spike_times_us):
        _check_spike_times(times, duration_us, ch)
        out[ch] = channel_waveform(times, n, params, channel_rng(seed, ch, 2))
    return out


def _check_spike_times(times, duration_us, ch):
    if len(times) and times[-1] > duration_us:
        raise DomainError(f"channel {ch}: spike at {times[-1]} us beyond duration {duration_us} us")


@numba.njit(cache=True)
def _delta_modulate(x, delta):
    n = x.shape[0]
    idx = np.empty(16, dtype=np.int64)
    pol = np.empty(16, dtype=np.int8)
    m = 0
    if n == 0:
        return idx[:0], pol[:0]
    r0 = x[0]
    k = 0
    for i in range(n):
        s = x[i]
        while s - (r0 + k * delta) >= delta:
            k += 1
            if m == idx.shape[0]:
                idx = np.concatenate((idx, np.empty(m, dtype=np.int64)))
                pol = np.concatenate((pol, np.empty(m, dtype=np.int8)))
            idx[m] = i
            pol[m] = 1
            m += 1
        while (r0 + k * delta) - s >= delta:
            k -= 1
            if m == idx.shape[0]:
                idx = np.concatenate((idx, np.empty(m, dtype=np.int64)))
                pol = np.concatenate((pol, np.empty(m, dtype=np.int8)))
            idx[m] = i
            pol[m] = -1
            m += 1
    return idx[:m], pol[:m]


def delta_modulate(x: np.ndarray, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Sample indices and polarities of ON/OFF events for one channel.

    The reference level starts at ``x[0]`` and moves in steps of ``delta``;
    a single sample may emit several events.
    """
    return _delta_modulate(np.ascontiguousarray(x, dtype=np.float64), float(delta))


def _merge(parts, n_channels, duration_us) -> EventStream:
    if parts:
        events = np.concatenate(parts)
        events = events[sort_order(events)]
    else:
        events = np.empty(0, dtype=EVENT_DTYPE)
    return EventStream(n_channels, duration_us, events)


def _channel_events(ch, x, params):
    idx, pol = delta_modulate(x, params.delta)
    ev = np.empty(len(idx), dtype=EVENT_DTYPE)
    ev["channel"] = ch
    ev["timestamp_us"] = sample_time_us(idx, params.sample_rate_hz)
    ev["polarity"] = pol
    return ev


def ncns_encode(signal: np.ndarray, params: EncoderParams) -> EventStream:
    """Delta-modulation front-end over a (n_channels, n_samples) signal."""
    signal = np.atleast_2d(signal)
    n_ch, n = signal.shape
    duration = int(sample_time_us(n, params.sample_rate_hz))
    return _merge([_channel_events(ch, signal[ch], params) for ch in range(n_ch)], n_ch, duration)


def encode_spike_train(spikes: SpikeTrain, params: EncoderParams, seed: int = 0, duration_us: int | None = None) -> EventStream:
    """``ncns_encode(synth_waveform(...))`` one channel at a time.

    Produces exactly the same stream as the two-step path while holding a
    single channel of waveform in memory.
    """
    duration_us = spikes.duration_us if duration_us is None else duration_us
    n = n_signal_samples(duration_us, params.sample_rate_hz)
    parts = []
    for ch, times in enumerate(spikes.spike_times_us):
        _check_spike_times(times, duration_us, ch)
        x = channel_waveform(times, n, params, channel_rng(seed, ch, 2))
        parts.append(_channel_events(ch, x, params))
    duration = int(sample_time_us(n, params.sample_rate_hz))
    return _merge(parts, spikes.n_channels, duration)
