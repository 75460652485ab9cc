"""Detection events and the event CSV format.

Format (LF line endings, ASCII decimal integers)::

    # biphoton-eraser v0.1.0 config_digest=<hex>      (optional leading comments)
    event_id,detector,time_ps,x_um
    0,D0,3335641,-1250
    1,D3,11675282,

Rows are sorted by ``time_ps`` with ties broken by ``event_id``; ``x_um`` is set
exactly for D0 rows.
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from . import _pykernels, kernels
from .amplitudes import Detector
from .errors import EventFormatError

EVENT_HEADER = "event_id,detector,time_ps,x_um"


@dataclass(frozen=True)
class DetectionEvent:
    event_id: int
    detector: Detector
    time_ps: int
    x_um: Optional[int] = None

    def __post_init__(self):
        if self.time_ps < 0:
            raise ValueError("time_ps must be >= 0")
        if (self.detector == Detector.D0) != (self.x_um is not None):
            raise ValueError("x_um must be present exactly for D0 events")


@dataclass
class EventStream:
    """Column-oriented batch of detection events.

    ``x_um`` is meaningful only where ``detector == 0``; other entries are zero.
    """

    event_id: np.ndarray
    detector: np.ndarray
    time_ps: np.ndarray
    x_um: np.ndarray

    @classmethod
    def empty(cls) -> "EventStream":
        return cls(np.empty(0, np.uint64), np.empty(0, np.int8),
                   np.empty(0, np.int64), np.empty(0, np.int64))

    @classmethod
    def from_events(cls, events) -> "EventStream":
        events = list(events)
        return cls(
            np.array([e.event_id for e in events], dtype=np.uint64),
            np.array([int(e.detector) for e in events], dtype=np.int8),
            np.array([e.time_ps for e in events], dtype=np.int64),
            np.array([e.x_um or 0 for e in events], dtype=np.int64),
        )

    @classmethod
    def concat(cls, streams) -> "EventStream":
        streams = list(streams)
        if not streams:
            return cls.empty()
        return cls(*(np.concatenate([getattr(s, f) for s in streams])
                     for f in ("event_id", "detector", "time_ps", "x_um")))

    def __len__(self) -> int:
        return int(self.time_ps.size)

    def __getitem__(self, idx) -> "EventStream":
        return EventStream(self.event_id[idx], self.detector[idx],
                           self.time_ps[idx], self.x_um[idx])

    def __iter__(self) -> Iterator[DetectionEvent]:
        for eid, det, t, x in zip(self.event_id.tolist(), self.detector.tolist(),
                                  self.time_ps.tolist(), self.x_um.tolist()):
            yield DetectionEvent(eid, Detector(det), t, x if det == 0 else None)

    def sorted(self) -> "EventStream":
        order = np.lexsort((self.event_id, self.time_ps))
        return self[order]

    def counts(self) -> dict:
        hist = np.bincount(self.detector.astype(np.int64), minlength=5)
        return {Detector(i).name: int(hist[i]) for i in range(5)}


def format_events(stream: EventStream, backend=None) -> str:
    """Event rows (no header) as CSV text."""
    return kernels.format_rows(stream.event_id, stream.detector, stream.time_ps,
                               stream.x_um, backend).decode("ascii")


class EventCSVWriter:
    """Event sink writing the CSV format; usable as a context manager."""

    def __init__(self, target, comment: Optional[str] = None):
        if isinstance(target, (str, os.PathLike)):
            self._fh = open(target, "w", encoding="ascii", newline="\n")
            self._owns = True
        else:
            self._fh = target
            self._owns = False
        if comment:
            self._fh.write(f"# {comment}\n")
        self._fh.write(EVENT_HEADER + "\n")
        self.rows = 0

    def __call__(self, stream: EventStream) -> None:
        self._fh.write(format_events(stream))
        self.rows += len(stream)

    def close(self) -> None:
        if self._owns:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _open_binary(source):
    if isinstance(source, (bytes, bytearray)):
        return io.BytesIO(bytes(source)), True
    if isinstance(source, (str, os.PathLike)):
        return open(source, "rb"), True
    if isinstance(source, io.TextIOBase):
        return io.BytesIO(source.read().encode("ascii", errors="replace")), True
    return source, False


def _raise_row_error(line: bytes, lineno: int, last_t: int, last_id: int):
    try:
        _pykernels.parse_row(line.decode("ascii", errors="replace"), last_t, last_id)
    except ValueError as exc:
        raise EventFormatError(str(exc), lineno) from None
    raise EventFormatError("malformed row", lineno)


def iter_event_chunks(source, block_bytes: int = 1 << 22, backend=None) -> Iterator[EventStream]:
    """Parse and validate an event CSV, yielding one batch per block read.

    Raises ``EventFormatError`` carrying the 1-based line number of the first
    offending line: malformed rows, x_um on a non-D0 row (or missing on D0),
    decreasing time_ps, or ties not ordered by event_id. A zero-byte source is an
    empty stream; otherwise the header must follow any leading ``#`` comments.
    """
    fh, owns = _open_binary(source)
    try:
        lineno = 0
        while True:
            raw = fh.readline()
            if not raw:
                if lineno:
                    raise EventFormatError(f"missing header {EVENT_HEADER!r}", lineno + 1)
                return
            lineno += 1
            line = raw.rstrip(b"\n")
            if line.startswith(b"#"):
                continue
            if line != EVENT_HEADER.encode():
                raise EventFormatError(f"expected header {EVENT_HEADER!r}", lineno)
            break
        last_t, last_id = -1, -1
        carry = b""
        while True:
            block = fh.read(block_bytes)
            data = carry + block
            if not block:
                if not data:
                    return
                if not data.endswith(b"\n"):
                    data += b"\n"
                carry = b""
            else:
                cut = data.rfind(b"\n") + 1
                data, carry = data[:cut], data[cut:]
                if not data:
                    continue
            ids, dets, times, xs, err, new_t, new_id = kernels.parse_rows(
                data, last_t, last_id, backend)
            if err >= 0:
                lines = data.split(b"\n")
                prev_t = int(times[-1]) if len(times) else last_t
                prev_id = int(ids[-1]) if len(ids) else last_id
                _raise_row_error(lines[err], lineno + err + 1, prev_t, prev_id)
            lineno += len(times)
            last_t, last_id = new_t, new_id
            if len(times):
                yield EventStream(ids, dets, times, xs)
            if not block:
                return
    finally:
        if owns:
            fh.close()


def ingest_events(source, backend=None) -> EventStream:
    """Read and validate a whole event CSV (path, bytes or file object)."""
    return EventStream.concat(iter_event_chunks(source, backend=backend))


def read_leading_comment(path) -> Optional[str]:
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        first = fh.readline()
    return first[2:].rstrip("\n") if first.startswith("# ") else None
