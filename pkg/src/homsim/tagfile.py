"""Time-tag streams and the PTAG1 text format.

File layout (UTF-8, LF line endings, no trailing whitespace)::

    PTAG1
    sync_period_ps=12500
    source=...
    seed=42
    mode=HOM_parallel
    ---
    0<TAB>1834
    1<TAB>14302
    ...

Only ``sync_period_ps`` is required. Header keys are written in the fixed
order above; records are written sorted by (timestamp, channel).
"""

from __future__ import annotations

import io
import os
import re
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ParseError

MAGIC = "PTAG1"
HEADER_KEYS = ("sync_period_ps", "source", "seed", "mode")
_SEPARATOR = "---"
_RECORD = re.compile(r"(-?[0-9]+)\t(-?[0-9]+)")
_INT = re.compile(r"-?(0|[1-9][0-9]*)")


@dataclass(frozen=True, eq=False)
class TagStream:
    """Detector events from a pulsed experiment, timestamps in integer ps."""

    sync_period_ps: int
    channels: np.ndarray
    timestamps: np.ndarray
    source: str | None = None
    seed: int | None = None
    mode: str | None = None

    def __post_init__(self):
        if not isinstance(self.sync_period_ps, (int, np.integer)) or self.sync_period_ps <= 0:
            raise ParameterError(f"sync_period_ps must be a positive integer, got {self.sync_period_ps!r}")
        object.__setattr__(self, "sync_period_ps", int(self.sync_period_ps))
        ch = np.asarray(self.channels)
        ts = np.asarray(self.timestamps)
        if ch.ndim != 1 or ch.shape != ts.shape:
            raise ParameterError("channels and timestamps must be 1-D arrays of equal length")
        if len(ts) and not (np.issubdtype(ts.dtype, np.integer) and np.issubdtype(ch.dtype, np.integer)):
            raise ParameterError("channels and timestamps must be integers")
        ch = ch.astype(np.uint8, copy=False) if np.all((ch == 0) | (ch == 1)) else None
        if ch is None:
            raise ParameterError("channels must be 0 or 1")
        ts = ts.astype(np.int64, copy=False)
        if len(ts) and (ts[0] < 0 or np.any(np.diff(ts) < 0)):
            raise ParameterError("timestamps must be non-negative and non-decreasing")
        ch.setflags(write=False)
        ts.setflags(write=False)
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "timestamps", ts)

    @classmethod
    def from_unsorted(cls, sync_period_ps, channels, timestamps, **header) -> "TagStream":
        """Build a stream from records in any order (sorted by timestamp, then channel)."""
        ch = np.asarray(channels)
        ts = np.asarray(timestamps, dtype=np.int64)
        order = np.lexsort((ch, ts))
        return cls(sync_period_ps, ch[order], ts[order], **header)

    def __len__(self):
        return len(self.timestamps)

    @property
    def pulse_index(self) -> np.ndarray:
        return self.timestamps // self.sync_period_ps

    @property
    def phase(self) -> np.ndarray:
        """Timestamp modulo the sync period."""
        return self.timestamps % self.sync_period_ps

    def records(self):
        """Iterate (channel, timestamp, pulse_index) tuples."""
        return zip(self.channels.tolist(), self.timestamps.tolist(), self.pulse_index.tolist())

    def select(self, mask) -> "TagStream":
        return TagStream(self.sync_period_ps, self.channels[mask], self.timestamps[mask],
                         self.source, self.seed, self.mode)

    def header(self) -> dict:
        out = {"sync_period_ps": self.sync_period_ps, "source": self.source, "seed": self.seed,
               "mode": self.mode}
        return {k: v for k, v in out.items() if v is not None}

    def equals(self, other: "TagStream") -> bool:
        return (self.header() == other.header() and np.array_equal(self.channels, other.channels)
                and np.array_equal(self.timestamps, other.timestamps))


def _check_header_value(key, value):
    text = str(value)
    if "\n" in text or "\r" in text or text != text.rstrip() or text != text.lstrip():
        raise ParameterError(f"header value for {key!r} must be a single line without surrounding whitespace")
    return text


def format_tags(stream: TagStream) -> str:
    """Canonical PTAG1 text of ``stream``."""
    lines = [MAGIC]
    for key, value in stream.header().items():
        lines.append(f"{key}={_check_header_value(key, value)}")
    lines.append(_SEPARATOR)
    order = np.lexsort((stream.channels, stream.timestamps))
    buf = io.StringIO()
    buf.write("\n".join(lines))
    buf.write("\n")
    if len(order):
        ch = stream.channels[order].astype(str)
        ts = stream.timestamps[order].astype(str)
        buf.write("\n".join(np.char.add(np.char.add(ch, "\t"), ts).tolist()))
        buf.write("\n")
    return buf.getvalue()


def write_tags(stream: TagStream, target=None):
    """Write canonical bytes to a path or binary file; return them when ``target`` is None."""
    data = format_tags(stream).encode("utf-8")
    if target is None:
        return data
    if isinstance(target, (str, os.PathLike)):
        with open(target, "wb") as fh:
            fh.write(data)
    else:
        target.write(data)
    return None


def _read_source(source) -> str:
    if isinstance(source, (bytes, bytearray, memoryview)):
        raw = bytes(source)
    elif isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            raw = fh.read()
    else:
        raw = source.read()
        if isinstance(raw, str):
            raw = raw.encode("utf-8")
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8 at byte offset {exc.start}") from exc


def _parse_header(lines) -> tuple[dict, int]:
    if not lines or lines[0] != MAGIC:
        first = lines[0] if lines else ""
        if re.fullmatch(r"PTAG\d+", first):
            raise ParseError(f"unknown format version {first!r}", line=1)
        raise ParseError(f"missing {MAGIC} magic", line=1)
    header: dict = {}
    for i in range(1, len(lines)):
        line = lines[i]
        if line == _SEPARATOR:
            break
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError(f"malformed header line {line!r}", line=i + 1)
        if key not in HEADER_KEYS:
            raise ParseError(f"unknown header key {key!r}", line=i + 1)
        if key in header:
            raise ParseError(f"duplicate header key {key!r}", line=i + 1)
        if value != value.strip() or "\r" in value:
            raise ParseError("trailing whitespace in header", line=i + 1)
        if key in ("sync_period_ps", "seed"):
            if not _INT.fullmatch(value):
                raise ParseError(f"{key} must be an integer, got {value!r}", line=i + 1)
            value = int(value)
            if key == "sync_period_ps" and value <= 0:
                raise ParseError("sync_period_ps must be positive", line=i + 1)
        header[key] = value
    else:
        raise ParseError(f"header not terminated by {_SEPARATOR!r}", line=len(lines))
    if "sync_period_ps" not in header:
        raise ParseError("missing required header key 'sync_period_ps'", line=i + 1)
    return header, i + 1


def parse_tags(source) -> TagStream:
    """Parse PTAG1 data from bytes, a path, or a binary file object."""
    text = _read_source(source)
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    header, first = _parse_header(lines)
    n = len(lines) - first
    channels = np.empty(n, dtype=np.uint8)
    timestamps = np.empty(n, dtype=np.int64)
    prev = 0
    for k in range(n):
        line = lines[first + k]
        m = _RECORD.fullmatch(line)
        if m is None:
            raise ParseError(f"malformed record {line!r} (expected '<0|1><TAB><timestamp_ps>')",
                             line=first + k + 1)
        ch, ts = m.group(1), m.group(2)
        if ch not in ("0", "1"):
            raise ParseError(f"channel {ch} outside {{0, 1}}", line=first + k + 1)
        if not _INT.fullmatch(ts) or ts.startswith("-"):
            raise ParseError(f"timestamp {ts!r} is not a canonical non-negative integer", line=first + k + 1)
        ts = int(ts)
        if ts < prev:
            raise ParseError(f"timestamp {ts} decreases (previous {prev})", line=first + k + 1)
        channels[k] = int(ch)
        timestamps[k] = ts
        prev = ts
    return TagStream(header["sync_period_ps"], channels, timestamps, header.get("source"),
                     header.get("seed"), header.get("mode"))
