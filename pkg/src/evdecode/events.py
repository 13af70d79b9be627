"""Address-event types and the on-disk event formats.

Events are kept as a numpy structured array (channel, timestamp_us, polarity)
so that million-event streams stay cheap; :class:`Event` is the scalar view.

Binary layout (little-endian)::

    magic "NEVT" | version u16 | n_channels u16 | duration_us u64 | event_count u64
    event_count x {channel u16, timestamp_us u64, polarity i8}   # 11 bytes each
"""

from __future__ import annotations

import io
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import DomainError, ParseError

log = logging.getLogger(__name__)

EVENT_DTYPE = np.dtype([("channel", "<u2"), ("timestamp_us", "<u8"), ("polarity", "i1")])
assert EVENT_DTYPE.itemsize == 11

MAGIC = b"NEVT"
VERSION = 1
_HEADER = struct.Struct("<4sHHQQ")
CSV_HEADER = "channel,timestamp_us,polarity"


class Event(NamedTuple):
    channel: int
    timestamp_us: int
    polarity: int


def sort_order(events: np.ndarray) -> np.ndarray:
    """Stable index order by (timestamp, channel, polarity)."""
    return np.lexsort((events["polarity"], events["channel"], events["timestamp_us"]))


def is_sorted(events: np.ndarray) -> bool:
    if len(events) < 2:
        return True
    t = events["timestamp_us"]
    c = events["channel"].astype(np.int64)
    p = events["polarity"].astype(np.int64)
    dt = np.diff(t.astype(np.int64))
    dc = np.diff(c)
    dp = np.diff(p)
    ok = (dt > 0) | ((dt == 0) & ((dc > 0) | ((dc == 0) & (dp >= 0))))
    return bool(ok.all())


def make_events(channel, timestamp_us, polarity) -> np.ndarray:
    channel = np.asarray(channel)
    out = np.empty(len(channel), dtype=EVENT_DTYPE)
    out["channel"] = channel
    out["timestamp_us"] = timestamp_us
    out["polarity"] = polarity
    return out


@dataclass(eq=False)
class EventStream:
    n_channels: int
    duration_us: int
    events: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=EVENT_DTYPE))
    resorted: bool = field(default=False, repr=False)

    def __post_init__(self):
        self.events = np.asarray(self.events, dtype=EVENT_DTYPE)
        if self.n_channels <= 0:
            raise DomainError(f"n_channels must be positive, got {self.n_channels}")
        if len(self.events):
            bad = np.flatnonzero(self.events["channel"] >= self.n_channels)
            if len(bad):
                raise DomainError(
                    f"event {bad[0]} has channel {self.events['channel'][bad[0]]} >= n_channels {self.n_channels}"
                )
            badp = np.flatnonzero(np.abs(self.events["polarity"].astype(np.int16)) != 1)
            if len(badp):
                raise DomainError(f"event {badp[0]} has polarity {self.events['polarity'][badp[0]]}")
            tmax = int(self.events["timestamp_us"].max())
            if tmax > self.duration_us:
                raise DomainError(f"timestamp {tmax} exceeds duration_us {self.duration_us}")
            if not is_sorted(self.events):
                self.events = self.events[sort_order(self.events)]
                self.resorted = True

    @classmethod
    def from_events(cls, n_channels: int, duration_us: int, events: Sequence[Event]) -> "EventStream":
        arr = np.array([tuple(e) for e in events], dtype=EVENT_DTYPE)
        return cls(n_channels, duration_us, arr)

    @property
    def channel(self) -> np.ndarray:
        return self.events["channel"]

    @property
    def timestamp_us(self) -> np.ndarray:
        return self.events["timestamp_us"]

    @property
    def polarity(self) -> np.ndarray:
        return self.events["polarity"]

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        for c, t, p in zip(self.channel.tolist(), self.timestamp_us.tolist(), self.polarity.tolist()):
            yield Event(c, t, p)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.n_channels == other.n_channels
            and self.duration_us == other.duration_us
            and np.array_equal(self.events, other.events)
        )

    def select(self, mask: np.ndarray) -> "EventStream":
        """Sub-stream keeping events where ``mask`` is true (order preserved)."""
        return EventStream(self.n_channels, self.duration_us, self.events[mask])

    def channel_events(self, ch: int) -> np.ndarray:
        return self.events[self.events["channel"] == ch]


@dataclass(eq=False)
class SpikeTrain:
    n_channels: int
    spike_times_us: list
    duration_us: int = 0

    def __post_init__(self):
        if len(self.spike_times_us) != self.n_channels:
            raise DomainError("one spike-time sequence per channel is required")
        self.spike_times_us = [np.asarray(t, dtype=np.int64) for t in self.spike_times_us]
        for ch, t in enumerate(self.spike_times_us):
            if len(t) > 1 and np.any(np.diff(t) <= 0):
                raise DomainError(f"spike times on channel {ch} are not strictly increasing")
            if len(t) and t[0] < 0:
                raise DomainError(f"negative spike time on channel {ch}")
        last = max((int(t[-1]) for t in self.spike_times_us if len(t)), default=0)
        self.duration_us = max(int(self.duration_us), last)

    def __len__(self) -> int:
        return sum(len(t) for t in self.spike_times_us)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpikeTrain):
            return NotImplemented
        return (
            self.n_channels == other.n_channels
            and self.duration_us == other.duration_us
            and all(np.array_equal(a, b) for a, b in zip(self.spike_times_us, other.spike_times_us))
        )


def stream_stats(stream: EventStream) -> dict:
    counts = np.bincount(stream.channel.astype(np.int64), minlength=stream.n_channels)
    total = int(counts.sum())
    rate = 0.0 if stream.duration_us == 0 else total / (stream.duration_us * 1e-6)
    return {"per_channel": counts.tolist(), "total": total, "rate_hz": rate}


# --- serialization -----------------------------------------------------------


def write_events(stream: EventStream, path, format: str = "binary") -> None:
    path = Path(path)
    if format == "binary":
        header = _HEADER.pack(MAGIC, VERSION, stream.n_channels, stream.duration_us, len(stream))
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(stream.events, dtype=EVENT_DTYPE).tobytes())
    elif format == "csv":
        buf = io.StringIO()
        buf.write(f"# n_channels={stream.n_channels} duration_us={stream.duration_us}\n")
        buf.write(CSV_HEADER + "\n")
        if len(stream):
            rows = np.column_stack(
                [stream.channel.astype(np.int64), stream.timestamp_us.astype(np.int64), stream.polarity.astype(np.int64)]
            )
            np.savetxt(buf, rows, fmt="%d", delimiter=",")
        path.write_text(buf.getvalue())
    else:
        raise ValueError(f"unknown event format {format!r}")


def read_events(path, format: str = "binary", n_channels: int | None = None, duration_us: int | None = None) -> EventStream:
    """Read an event file.

    CSV files may start with a ``# n_channels=.. duration_us=..`` comment;
    without it the metadata comes from the keyword arguments or is inferred.
    If the stored order violates the (timestamp, channel, polarity) order the
    stream is re-sorted and ``stream.resorted`` is set.
    """
    path = Path(path)
    if format == "binary":
        stream = _read_binary(path.read_bytes())
    elif format == "csv":
        stream = _read_csv(path.read_text(), n_channels, duration_us)
    else:
        raise ValueError(f"unknown event format {format!r}")
    if stream.resorted:
        log.warning("%s: events were not in canonical order and have been re-sorted", path)
    return stream


def _read_binary(data: bytes) -> EventStream:
    if len(data) < _HEADER.size:
        raise ParseError("truncated header", offset=len(data))
    magic, version, n_channels, duration_us, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise ParseError(f"unsupported version {version}", offset=4)
    body = len(data) - _HEADER.size
    need = count * EVENT_DTYPE.itemsize
    if body < need:
        rec = body // EVENT_DTYPE.itemsize
        raise ParseError(f"truncated record {rec} of {count}", offset=_HEADER.size + rec * EVENT_DTYPE.itemsize)
    if body > need:
        raise ParseError("trailing bytes after last record", offset=_HEADER.size + need)
    events = np.frombuffer(data, dtype=EVENT_DTYPE, count=count, offset=_HEADER.size).copy()
    badp = np.flatnonzero(np.abs(events["polarity"].astype(np.int16)) != 1)
    if len(badp):
        i = int(badp[0])
        raise ParseError(
            f"record {i}: invalid polarity byte 0x{events['polarity'][i].astype(np.uint8):02x}",
            offset=_HEADER.size + i * EVENT_DTYPE.itemsize + 10,
        )
    badc = np.flatnonzero(events["channel"] >= n_channels)
    if len(badc):
        i = int(badc[0])
        raise DomainError(f"record {i}: channel {events['channel'][i]} >= n_channels {n_channels}")
    return EventStream(n_channels, duration_us, events)


def _read_csv(text: str, n_channels, duration_us) -> EventStream:
    lines = text.splitlines()
    lineno = 0
    if lines and lines[0].startswith("#"):
        meta = dict(kv.split("=", 1) for kv in lines[0][1:].split())
        n_channels = n_channels if n_channels is not None else int(meta["n_channels"])
        duration_us = duration_us if duration_us is not None else int(meta["duration_us"])
        lineno = 1
    if lineno >= len(lines) or lines[lineno].strip() != CSV_HEADER:
        raise ParseError(f"expected header {CSV_HEADER!r}", offset=lineno + 1)
    rows = []
    for i in range(lineno + 1, len(lines)):
        line = lines[i].strip()
        if not line:
            continue
        parts = line.split(",")
        try:
            if len(parts) != 3:
                raise ValueError
            c, t, p = (int(x) for x in parts)
        except ValueError:
            raise ParseError(f"malformed record {line!r}", offset=i + 1) from None
        if p not in (1, -1):
            raise ParseError(f"invalid polarity {p}", offset=i + 1)
        if c < 0 or t < 0:
            raise ParseError("negative channel or timestamp", offset=i + 1)
        rows.append((c, t, p))
    events = np.array(rows, dtype=EVENT_DTYPE) if rows else np.empty(0, dtype=EVENT_DTYPE)
    if n_channels is None:
        n_channels = int(events["channel"].max()) + 1 if rows else 1
    if duration_us is None:
        duration_us = int(events["timestamp_us"].max()) if rows else 0
    return EventStream(n_channels, duration_us, events)
