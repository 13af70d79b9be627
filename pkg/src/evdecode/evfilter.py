"""Temporal-neighbourhood event filter and its spike-detector setting.

An event on channel ``c`` at time ``t`` passes when at least ``n_th`` earlier
events of channel ``c`` (any polarity, passed or blocked) fall in
``[t - tau, t)``, and the channel is not refractory, i.e. no event of that
channel passed within the last ``t_ref`` microseconds. With ``t_ref`` around
1 ms only one event per action potential gets through, which turns the
filter into a spike detector.

History is kept per channel as a ring of ``(timestamp, multiplicity)`` slots.
Events sharing a timestamp collapse into one slot, so ``n_th + 1`` slots are
always enough to answer the window query exactly.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numba
import numpy as np

from .errors import DomainError
from .events import Event, EventStream, is_sorted

SPD_REFRACTORY_US = 1000


@dataclass(frozen=True)
class FilterParams:
    n_th: int = 2
    tau_us: int = 500
    t_ref_us: int = 0

    def __post_init__(self):
        if self.n_th < 0:
            raise DomainError("n_th must be >= 0")
        if self.tau_us <= 0:
            raise DomainError("tau_us must be > 0")
        if self.t_ref_us < 0:
            raise DomainError("t_ref_us must be >= 0")

    @classmethod
    def spike_detector(cls, n_th: int = 2, tau_us: int = 500) -> "FilterParams":
        return cls(n_th, tau_us, SPD_REFRACTORY_US)


class ChannelWindow:
    """Recent-event history and refractory state for one channel."""

    def __init__(self, n_th: int):
        self.slots: deque = deque(maxlen=n_th + 1)  # [timestamp, count], oldest first
        self.last_pass: int | None = None

    def count_in(self, lo: int, t: int) -> int:
        n = 0
        for ts, cnt in reversed(self.slots):
            if ts >= t:
                continue
            if ts < lo:
                break
            n += cnt
        return n

    def record(self, t: int) -> None:
        if self.slots and self.slots[-1][0] == t:
            self.slots[-1][1] += 1
        else:
            self.slots.append([t, 1])


class EventFilter:
    """Event-at-a-time filter; :func:`filter_events` is the bulk equivalent."""

    def __init__(self, params: FilterParams, n_channels: int):
        self.params = params
        self.windows = [ChannelWindow(params.n_th) for _ in range(n_channels)]
        self._last_t = -1

    def push(self, event: Event) -> bool:
        c, t, _ = event
        if t < self._last_t:
            raise DomainError(f"event at {t} us arrives after {self._last_t} us")
        self._last_t = t
        p = self.params
        w = self.windows[c]
        ok = w.count_in(t - p.tau_us, t) >= p.n_th
        if ok and w.last_pass is not None and t < w.last_pass + p.t_ref_us:
            ok = False
        w.record(t)
        if ok:
            w.last_pass = t
        return ok


@numba.njit(cache=True)
def _filter_kernel(channel, ts, n_channels, n_th, tau, t_ref):
    n = channel.shape[0]
    cap = n_th + 1
    ring_t = np.zeros((n_channels, cap), dtype=np.int64)
    ring_c = np.zeros((n_channels, cap), dtype=np.int64)
    head = np.zeros(n_channels, dtype=np.int64)
    size = np.zeros(n_channels, dtype=np.int64)
    last_pass = np.zeros(n_channels, dtype=np.int64)
    has_pass = np.zeros(n_channels, dtype=np.bool_)
    keep = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        c = channel[i]
        t = ts[i]
        lo = t - tau
        cnt = 0
        for j in range(size[c]):
            k = (head[c] - j) % cap
            s = ring_t[c, k]
            if s >= t:
                continue
            if s < lo:
                break
            cnt += ring_c[c, k]
        ok = cnt >= n_th
        if ok and has_pass[c] and t < last_pass[c] + t_ref:
            ok = False
        if size[c] > 0 and ring_t[c, head[c]] == t:
            ring_c[c, head[c]] += 1
        else:
            h = (head[c] + 1) % cap if size[c] > 0 else head[c]
            ring_t[c, h] = t
            ring_c[c, h] = 1
            head[c] = h
            if size[c] < cap:
                size[c] += 1
        if ok:
            last_pass[c] = t
            has_pass[c] = True
        keep[i] = ok
    return keep


def filter_mask(stream: EventStream, params: FilterParams) -> np.ndarray:
    if not is_sorted(stream.events):
        raise DomainError("filter input must be sorted by (timestamp, channel, polarity)")
    return _filter_kernel(
        stream.channel.astype(np.int64),
        stream.timestamp_us.astype(np.int64),
        stream.n_channels,
        params.n_th,
        params.tau_us,
        params.t_ref_us,
    )


def filter_events(stream: EventStream, params: FilterParams) -> EventStream:
    return stream.select(filter_mask(stream, params))


def detect_spikes(stream: EventStream, n_th: int = 2, tau_us: int = 500) -> EventStream:
    return filter_events(stream, FilterParams.spike_detector(n_th, tau_us))


def compression_ratio(raw: EventStream | int, filtered: EventStream | int) -> float:
    """``count(raw) / count(filtered)``; ``math.inf`` when nothing passed."""
    n_raw = raw if isinstance(raw, int) else len(raw)
    n_f = filtered if isinstance(filtered, int) else len(filtered)
    if n_raw == 0:
        raise DomainError("compression ratio undefined for an empty raw stream")
    if n_f == 0:
        return math.inf
    return n_raw / n_f
