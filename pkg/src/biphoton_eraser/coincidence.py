"""Coincidence matching of D0 clicks with delayed idler clicks, and x histograms."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .amplitudes import IDLER_DETECTORS
from .errors import InsufficientDataError, InvalidParameterError
from .events import EventStream
from .fringe_model import FringeFit, fit_fringe
from .params import C_LIGHT, ApparatusGeometry

PAIR_NAMES = ("0-1", "0-2", "0-3", "0-4")
HISTOGRAM_HEADER = "pair,x_center_um,count"


@dataclass(frozen=True)
class CoincidenceConfig:
    """Matching window around the nominal delay.

    A D0 click at t and an idler click at u coincide when
    |u - t - expected_delay_ps| < window_ps / 2 (open interval).
    """

    expected_delay_ps: int = 8339
    window_ps: int = 3000
    matching_policy: str = "closest"
    x_bin_um: int = 50

    def __post_init__(self):
        if self.window_ps <= 0:
            raise InvalidParameterError("window_ps must be > 0")
        if self.x_bin_um <= 0:
            raise InvalidParameterError("x_bin_um must be > 0")
        if self.matching_policy not in kernels.POLICIES:
            raise InvalidParameterError(f"unknown matching policy {self.matching_policy!r}")

    @classmethod
    def for_geometry(cls, g: ApparatusGeometry, **kwargs) -> "CoincidenceConfig":
        delay = int(round((g.path_li - g.path_l0) / C_LIGHT * 1e12))
        return cls(expected_delay_ps=delay, **kwargs)


@dataclass
class MatchResult:
    d0_id: np.ndarray
    d0_time: np.ndarray
    x_um: np.ndarray
    idler_id: np.ndarray
    idler_time: np.ndarray
    idler_detector: np.ndarray
    d0_total: int = 0
    idler_total: int = 0
    unmatched_idlers: int = 0
    x_range_um: Optional[tuple] = None

    @property
    def matched(self) -> int:
        return int(self.d0_time.size)

    @property
    def unmatched_d0(self) -> int:
        return self.d0_total - self.matched

    @property
    def gaps_ps(self) -> np.ndarray:
        return self.idler_time - self.d0_time


class CoincidenceMatcher:
    """Streaming matcher; ``feed`` time-ordered batches, then ``finish``.

    D0 clicks are resolved as soon as no later event can fall in their window, so
    results do not depend on how the stream is split into batches.
    """

    def __init__(self, cfg: CoincidenceConfig, backend=None):
        self.cfg = cfg
        self.backend = backend
        self._d0_id = np.empty(0, np.uint64)
        self._d0_t = np.empty(0, np.int64)
        self._d0_x = np.empty(0, np.int64)
        self._id_id = np.empty(0, np.uint64)
        self._id_t = np.empty(0, np.int64)
        self._id_det = np.empty(0, np.int8)
        self._consumed = np.empty(0, np.uint8)
        self._lo = 0
        self._last_time = None
        self._out = []
        self._d0_total = 0
        self._idler_total = 0
        self._unmatched_idlers = 0
        self._x_min = None
        self._x_max = None

    def feed(self, stream: EventStream) -> None:
        if not len(stream):
            return
        t = stream.time_ps
        if np.any(np.diff(t) < 0) or (self._last_time is not None and t[0] < self._last_time):
            raise InvalidParameterError("events must arrive in nondecreasing time order")
        self._last_time = int(t[-1])
        is_d0 = stream.detector == 0
        idler = ~is_d0 & (stream.detector <= 4)
        if is_d0.any():
            xs = stream.x_um[is_d0]
            lo, hi = int(xs.min()), int(xs.max())
            self._x_min = lo if self._x_min is None else min(self._x_min, lo)
            self._x_max = hi if self._x_max is None else max(self._x_max, hi)
        self._d0_id = np.concatenate([self._d0_id, stream.event_id[is_d0]])
        self._d0_t = np.concatenate([self._d0_t, t[is_d0]])
        self._d0_x = np.concatenate([self._d0_x, stream.x_um[is_d0]])
        self._id_id = np.concatenate([self._id_id, stream.event_id[idler]])
        self._id_t = np.concatenate([self._id_t, t[idler]])
        self._id_det = np.concatenate([self._id_det, stream.detector[idler]])
        self._consumed = np.concatenate([self._consumed, np.zeros(int(idler.sum()), np.uint8)])
        self._d0_total += int(is_d0.sum())
        self._idler_total += int(idler.sum())
        self._process(final=False)

    def _process(self, final: bool) -> None:
        cfg = self.cfg
        if final:
            n_ready = self._d0_t.size
        else:
            ready = 2 * (self._last_time - self._d0_t - cfg.expected_delay_ps) >= cfg.window_ps
            n_ready = int(np.count_nonzero(ready))
        if n_ready == 0 and not final:
            return
        lo = self._lo
        if n_ready:
            match, lo = kernels.match_window(
                self._d0_t[:n_ready], self._id_t, self._consumed, cfg.expected_delay_ps,
                cfg.window_ps, cfg.matching_policy, self._lo, self.backend)
            hit = match >= 0
            j = match[hit]
            self._out.append((self._d0_id[:n_ready][hit], self._d0_t[:n_ready][hit],
                              self._d0_x[:n_ready][hit], self._id_id[j], self._id_t[j],
                              self._id_det[j]))
            self._d0_id = self._d0_id[n_ready:]
            self._d0_t = self._d0_t[n_ready:]
            self._d0_x = self._d0_x[n_ready:]
        # idlers below lo are too early for every remaining D0
        drop = self._id_t.size if final else lo
        self._unmatched_idlers += int(drop - np.count_nonzero(self._consumed[:drop]))
        self._id_id = self._id_id[drop:]
        self._id_t = self._id_t[drop:]
        self._id_det = self._id_det[drop:]
        self._consumed = np.ascontiguousarray(self._consumed[drop:])
        self._lo = 0 if final else lo - drop

    def finish(self) -> MatchResult:
        self._process(final=True)
        parts = list(zip(*self._out)) if self._out else [[]] * 6
        dtypes = (np.uint64, np.int64, np.int64, np.uint64, np.int64, np.int8)
        arrays = [np.concatenate(p).astype(dt) if len(p) else np.empty(0, dt)
                  for p, dt in zip(parts, dtypes)]
        x_range = None if self._x_min is None else (self._x_min, self._x_max)
        return MatchResult(*arrays, d0_total=self._d0_total, idler_total=self._idler_total,
                           unmatched_idlers=self._unmatched_idlers, x_range_um=x_range)


def match_coincidences(events: EventStream, cfg: CoincidenceConfig, backend=None) -> MatchResult:
    """Match a whole time-ordered stream in one pass."""
    matcher = CoincidenceMatcher(cfg, backend)
    matcher.feed(events)
    return matcher.finish()


@dataclass
class FringeHistogram:
    """Coincidence counts per D0 x bin for the pairs 0-1 .. 0-4."""

    x_center_um: np.ndarray
    counts: dict = field(default_factory=dict)
    matched: int = 0
    unmatched_d0: int = 0
    accidental_estimate: float = float("nan")

    def __post_init__(self):
        for name in PAIR_NAMES:
            self.counts.setdefault(name, np.zeros(self.x_center_um.size, np.int64))

    @property
    def x_m(self) -> np.ndarray:
        return self.x_center_um * 1e-6

    def total(self, pair: str) -> int:
        return int(self.counts[pair].sum())

    def fit(self, pair: str, g: ApparatusGeometry, **kwargs) -> FringeFit:
        return fit_fringe(self.x_m, self.counts[pair], g, **kwargs)

    def to_csv(self, path, comment: Optional[str] = None) -> None:
        lines = [f"# {comment}"] if comment else []
        lines.append(HISTOGRAM_HEADER)
        for name in PAIR_NAMES:
            for x, c in zip(self.x_center_um.tolist(), self.counts[name].tolist()):
                lines.append(f"{name},{x},{c}")
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "FringeHistogram":
        rows = {name: {} for name in PAIR_NAMES}
        with open(path, "r", encoding="ascii") as fh:
            body = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
        if not body or body[0] != HISTOGRAM_HEADER:
            raise InvalidParameterError(f"{path}: expected header {HISTOGRAM_HEADER!r}")
        for line in body[1:]:
            pair, x, c = line.split(",")
            rows[pair][int(x)] = int(c)
        xs = np.array(sorted(rows[PAIR_NAMES[0]]), dtype=np.int64)
        counts = {name: np.array([rows[name].get(x, 0) for x in xs.tolist()], np.int64)
                  for name in PAIR_NAMES}
        return cls(xs, counts, matched=int(sum(c.sum() for c in counts.values())))


def bin_index(x_um, x_bin_um: int) -> np.ndarray:
    """Index of the bin centred on a multiple of ``x_bin_um``."""
    return (np.asarray(x_um, dtype=np.int64) + x_bin_um // 2) // x_bin_um


def histogram(result: MatchResult, cfg: CoincidenceConfig) -> FringeHistogram:
    """Bin matched pairs by D0 x and idler detector.

    Bins span every D0 position seen in the stream, so all four pairs share them.
    """
    b = cfg.x_bin_um
    if result.x_range_um is None:
        return FringeHistogram(np.empty(0, np.int64), matched=0, unmatched_d0=0)
    lo, hi = (int(v) for v in bin_index(np.array(result.x_range_um), b))
    centers = b * np.arange(lo, hi + 1, dtype=np.int64)
    idx = bin_index(result.x_um, b) - lo
    counts = {}
    for name, det in zip(PAIR_NAMES, IDLER_DETECTORS):
        sel = result.idler_detector == int(det)
        counts[name] = np.bincount(idx[sel], minlength=centers.size).astype(np.int64)
    return FringeHistogram(centers, counts, matched=result.matched,
                           unmatched_d0=result.unmatched_d0)


@dataclass
class AccidentalEstimate:
    rate: dict
    rate_err: dict
    d0_clicks: int
    offset_ps: int

    @property
    def total_rate(self) -> float:
        return float(sum(self.rate.values()))


def accidental_rate_estimate(events: EventStream, cfg: CoincidenceConfig,
                             offset_factor: float = 10.0) -> AccidentalEstimate:
    """Accidental coincidences per D0 click from a window shifted off the true delay.

    The window is centred at ``(1 + offset_factor) * expected_delay``; use a negative
    ``offset_factor`` to probe the other side. Idler clicks are counted without
    consumption.
    """
    t = events.time_ps
    if t.size == 0 or int(t[-1] - t[0]) < 100 * cfg.window_ps:
        raise InsufficientDataError("event span shorter than 100 coincidence windows")
    d0_t = t[events.detector == 0]
    if d0_t.size == 0:
        raise InsufficientDataError("no D0 clicks")
    offset = int(round(offset_factor * cfg.expected_delay_ps))
    centre2 = 2 * (d0_t + cfg.expected_delay_ps + offset)
    rate, err = {}, {}
    for name, det in zip(PAIR_NAMES, IDLER_DETECTORS):
        u2 = 2 * t[events.detector == int(det)]
        lo = np.searchsorted(u2, centre2 - cfg.window_ps, side="right")
        hi = np.searchsorted(u2, centre2 + cfg.window_ps, side="left")
        n = int(np.sum(np.maximum(hi - lo, 0)))
        rate[name] = n / d0_t.size
        err[name] = math.sqrt(n) / d0_t.size
    return AccidentalEstimate(rate, err, int(d0_t.size), offset)
