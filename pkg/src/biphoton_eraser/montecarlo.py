"""Monte Carlo generation of time-tagged detector clicks.

Each detected pair produces one D0 click and one idler click (D1..D4). The D0
scan position of a pair is drawn by rejection sampling over the scan settings
(uniform proposal, acceptance proportional to the singles density), so the
number of pairs per setting follows the diffraction envelope while the mean is
``pairs / steps``. The idler detector is then drawn from the conditional branch
probabilities at that setting.

Random streams come from one ``SeedSequence``: child 0 drives the allocation of
pairs to settings, children 1..K drive the K scan steps, the last five drive the
dark counts of D0..D4. Steps are independent and may run concurrently; their
placement in time is a serial cumulative sum.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .amplitudes import IDLER_DETECTORS, Detector
from .errors import InvalidParameterError, SamplingError
from .events import DetectionEvent, EventStream
from .fringe_model import channel_rates
from .params import C_LIGHT, ApparatusGeometry, BiphotonPacket

MAX_PROPOSALS = 10_000
BOUND_MARGIN = 1.01
_CHUNK = 1 << 18


@dataclass(frozen=True)
class ScanSpec:
    """D0 positions x_min, x_min + step, ... <= x_max (metres).

    ``step = 0`` with ``x_min == x_max`` parks D0 at a fixed position.
    """

    x_min: float = -1.25e-3
    x_max: float = 1.25e-3
    step: float = 50e-6

    def __post_init__(self):
        if self.step == 0:
            if self.x_min != self.x_max:
                raise InvalidParameterError("a fixed position needs x_min == x_max")
        elif not (self.step > 0 and self.x_min < self.x_max):
            raise InvalidParameterError("scan needs step > 0 and x_min < x_max")

    @classmethod
    def fixed(cls, x: float) -> "ScanSpec":
        return cls(x, x, 0.0)

    @property
    def is_fixed(self) -> bool:
        return self.step == 0

    def settings_um(self) -> np.ndarray:
        """Scan positions as integer micrometres."""
        if self.is_fixed:
            return np.array([round(self.x_min * 1e6)], dtype=np.int64)
        n = int(math.floor((self.x_max - self.x_min) / self.step * (1 + 1e-12))) + 1
        return np.rint((self.x_min + self.step * np.arange(n)) * 1e6).astype(np.int64)


@dataclass(frozen=True)
class SimConfig:
    pairs: int = 1_000_000
    seed: int = 42
    pair_rate: float = 1e5
    jitter_sigma: float = 1e-9
    dark_rate_per_detector: float = 100.0
    geometry: ApparatusGeometry = field(default_factory=ApparatusGeometry)
    packet: BiphotonPacket = field(default_factory=BiphotonPacket.degenerate)
    scan: ScanSpec = field(default_factory=ScanSpec)
    efficiency: tuple = (1.0, 1.0, 1.0, 1.0, 1.0)
    corrections: bool = False

    def __post_init__(self):
        if self.pairs < 0:
            raise InvalidParameterError("pairs must be >= 0")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidParameterError("seed must be a 64-bit unsigned integer")
        if not self.pair_rate > 0:
            raise InvalidParameterError("pair_rate must be > 0")
        if not self.jitter_sigma >= 0:
            raise InvalidParameterError("jitter_sigma must be >= 0")
        if not self.dark_rate_per_detector >= 0:
            raise InvalidParameterError("dark rate must be >= 0")
        if len(self.efficiency) != 5 or not all(0 <= e <= 1 for e in self.efficiency):
            raise InvalidParameterError("efficiency needs five values in [0, 1]")
        self.packet.check_against(self.geometry)

    @property
    def steps(self) -> int:
        return int(self.scan.settings_um().size)

    @property
    def dwell(self) -> float:
        return self.pairs / self.steps


@dataclass
class SimSummary:
    pairs_emitted: int
    clicks: dict
    dark_clicks: dict
    pairs_per_step: list
    seed: int
    pair_rate: float
    jitter_sigma: float
    dark_rate_per_detector: float
    duration_ps: int

    def as_dict(self) -> dict:
        return {
            "pairs_emitted": self.pairs_emitted,
            "clicks": dict(self.clicks),
            "dark_clicks": dict(self.dark_clicks),
            "seed": self.seed,
            "pair_rate": self.pair_rate,
            "jitter_sigma": self.jitter_sigma,
            "dark_rate_per_detector": self.dark_rate_per_detector,
            "duration_ps": self.duration_ps,
            "steps": len(self.pairs_per_step),
        }


def branch_table(g: ApparatusGeometry, x, corrections: bool = False) -> np.ndarray:
    """Rows of p(D1..D4 | x) for each position in ``x`` plus the singles density.

    Returns an array of shape (len(x), 5): four conditional probabilities and the
    unnormalized singles density sum_j R0j(x) in the last column.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    rates = channel_rates(x, g, corrections)
    joint = np.column_stack([rates[d] for d in IDLER_DETECTORS])
    total = joint.sum(axis=1)
    probs = np.empty_like(joint)
    ok = total > 1e-300
    probs[ok] = joint[ok] / total[ok, None]
    if not ok.all():
        # on an envelope null take the limit with the common envelope divided out
        phase = np.pi * x[~ok] * g.slit_sep_d / (g.lambda_signal * g.focal_f)
        probs[~ok] = np.column_stack([0.5 * np.cos(phase) ** 2, 0.5 * np.sin(phase) ** 2,
                                      np.full(phase.shape, 0.25), np.full(phase.shape, 0.25)])
    return np.column_stack([probs, total])


def branch_probabilities(g: ApparatusGeometry, x: float, corrections: bool = False) -> dict:
    """p(Dj | x) for the idler detectors, normalized to sum to one."""
    row = branch_table(g, [x], corrections)[0]
    return {det: float(row[i]) for i, det in enumerate(IDLER_DETECTORS)}


def rejection_sample_indices(rng: np.random.Generator, weights: np.ndarray, n: int,
                             bound: float, max_proposals: int = MAX_PROPOSALS) -> np.ndarray:
    """Draw ``n`` indices with probability proportional to ``weights``.

    Proposals are uniform over the indices and accepted when u * bound < weight.
    Raises ``SamplingError`` if any draw needs more than ``max_proposals``.
    """
    weights = np.asarray(weights, dtype=float)
    if n == 0:
        return np.empty(0, dtype=np.int64)
    if not (bound > 0 and np.all(weights <= bound)):
        raise SamplingError("envelope bound does not dominate the density")
    rate = float(weights.mean()) / bound
    out = []
    remaining = n
    run = 0
    while remaining > 0:
        batch = min(int(remaining / max(rate, 1e-4) * 1.1) + 64, 1 << 22)
        k = rng.integers(0, weights.size, batch)
        u = rng.random(batch)
        accepted = np.flatnonzero(u * bound < weights[k])
        if accepted.size == 0:
            run += batch
            if run >= max_proposals:
                raise SamplingError(f"no acceptance after {run} proposals")
            continue
        accepted = accepted[:remaining]
        gaps = np.diff(accepted, prepend=-1 - run) - 1
        if gaps.max() >= max_proposals:
            raise SamplingError(f"a draw needed more than {max_proposals} proposals")
        out.append(k[accepted])
        remaining -= accepted.size
        run = batch - 1 - int(accepted[-1])
    return np.concatenate(out)


def rejection_sample_one(rng: np.random.Generator, weights: np.ndarray, bound: float,
                         max_proposals: int = MAX_PROPOSALS) -> int:
    for _ in range(max_proposals):
        k = int(rng.integers(0, weights.size))
        if rng.random() * bound < weights[k]:
            return k
    raise SamplingError(f"no acceptance after {max_proposals} proposals")


def path_delays_ps(g: ApparatusGeometry):
    """(L0 / c, (Li - L0) / c) rounded to integer picoseconds."""
    return round(g.path_l0 / C_LIGHT * 1e12), round(g.delay * 1e12)


def _prepare(cfg: SimConfig):
    settings_um = cfg.scan.settings_um()
    table = branch_table(cfg.geometry, settings_um * 1e-6, cfg.corrections)
    density = table[:, 4]
    bound = BOUND_MARGIN * float(density.max())
    if bound <= 0:
        raise SamplingError("singles density vanishes at every scan setting")
    return settings_um, np.cumsum(table[:, :4], axis=1), density, bound


def sample_pair(rng: np.random.Generator, cfg: SimConfig, x_setting: Optional[float] = None,
                t_prev: float = 0.0, pair_index: int = 0):
    """Generate one detected pair.

    ``x_setting`` (metres) fixes the D0 position; when omitted it is drawn by
    rejection sampling over the scan settings. Returns ``(d0_event, idler_event,
    emission_time)``; detection-efficiency thinning is left to the caller.
    """
    settings_um, cum, density, bound = _prepare(cfg)
    if x_setting is None:
        k = rejection_sample_one(rng, density, bound)
        x_um = int(settings_um[k])
        cum_k = cum[k]
    else:
        x_um = int(round(x_setting * 1e6))
        cum_k = np.cumsum(branch_table(cfg.geometry, [x_um * 1e-6], cfg.corrections)[0, :4])
    g = cfg.geometry
    t_emit = t_prev + rng.exponential(1.0 / cfg.pair_rate)
    branch = int(np.searchsorted(cum_k, rng.random() * cum_k[-1], side="right"))
    branch = min(branch, 3)
    jitter = rng.normal(0.0, cfg.jitter_sigma, 2) if cfg.jitter_sigma > 0 else (0.0, 0.0)
    path0_ps, delay_ps = path_delays_ps(g)
    emit_ps = round(t_emit * 1e12)
    t0 = max(emit_ps + path0_ps + round(jitter[0] * 1e12), 0)
    tj = max(emit_ps + path0_ps + delay_ps + round(jitter[1] * 1e12), 0)
    d0 = DetectionEvent(2 * pair_index, Detector.D0, t0, x_um)
    idler = DetectionEvent(2 * pair_index + 1, IDLER_DETECTORS[branch], tj)
    return d0, idler, t_emit


def _simulate_step(seed_seq, n, cum_k, cfg: SimConfig):
    rng = np.random.Generator(np.random.Philox(seed_seq))
    rel = np.cumsum(rng.exponential(1.0 / cfg.pair_rate, n))
    u = rng.random(n) * cum_k[-1]
    branch = np.minimum(np.searchsorted(cum_k, u, side="right"), 3).astype(np.int8) + 1
    if cfg.jitter_sigma > 0:
        jitter = rng.normal(0.0, cfg.jitter_sigma, (2, n))
    else:
        jitter = np.zeros((2, n))
    eff = np.asarray(cfg.efficiency)
    if np.any(eff < 1.0):
        keep_u = rng.random((2, n))
        keep0 = keep_u[0] < eff[0]
        keepi = keep_u[1] < eff[branch]
    else:
        keep0 = keepi = None
    return rel, branch, jitter, keep0, keepi


def _dark_counts(seed_seq, rate, duration_s):
    rng = np.random.Generator(np.random.Philox(seed_seq))
    n = int(rng.poisson(rate * duration_s)) if rate > 0 and duration_s > 0 else 0
    return np.sort(rng.random(n)) * duration_s


def run_simulation(cfg: SimConfig, sink: Callable[[EventStream], None],
                   workers: int = 1) -> SimSummary:
    """Simulate the scan and feed the time-ordered click stream to ``sink``.

    ``sink`` is called with ``EventStream`` batches in nondecreasing time order.
    Output depends only on ``cfg``; ``workers`` > 1 generates steps concurrently.
    """
    g = cfg.geometry
    settings_um, cum, density, bound = _prepare(cfg)
    n_steps = settings_um.size
    root = np.random.SeedSequence(cfg.seed)
    children = root.spawn(1 + n_steps + 5)
    alloc_rng = np.random.Generator(np.random.Philox(children[0]))
    step_of_pair = rejection_sample_indices(alloc_rng, density, cfg.pairs, bound)
    per_step = np.bincount(step_of_pair, minlength=n_steps)

    jobs = [(children[1 + k], int(per_step[k]), cum[k], cfg) for k in range(n_steps)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda job: _simulate_step(*job), jobs))
    else:
        results = [_simulate_step(*job) for job in jobs]

    # serial stage: steps follow one another on a continuous Poisson clock
    emission, step_start = [], np.empty(n_steps)
    clock = 0.0
    for k, (rel, *_rest) in enumerate(results):
        step_start[k] = clock
        emission.append(clock + rel)
        if rel.size:
            clock += rel[-1]
    emission = np.concatenate(emission) if emission else np.empty(0)
    branch = np.concatenate([r[1] for r in results])
    jitter = np.concatenate([r[2] for r in results], axis=1)
    n = emission.size
    pair_x = np.repeat(settings_um, per_step)

    # integer ps throughout so a noiseless gap is exactly the integer delay
    path0_ps, delay_ps = path_delays_ps(g)
    emit_ps = np.rint(emission * 1e12)
    t0_ps = np.maximum(emit_ps + path0_ps + np.rint(jitter[0] * 1e12), 0)
    ti_ps = np.maximum(emit_ps + path0_ps + delay_ps + np.rint(jitter[1] * 1e12), 0)
    ids = 2 * np.arange(n, dtype=np.uint64)
    cols = {
        "event_id": [ids, ids + 1],
        "detector": [np.zeros(n, np.int8), branch],
        "time_ps": [t0_ps.astype(np.int64), ti_ps.astype(np.int64)],
        "x_um": [pair_x, np.zeros(n, np.int64)],
    }
    if results and results[0][3] is not None:
        keep0 = np.concatenate([r[3] for r in results])
        keepi = np.concatenate([r[4] for r in results])
        for name in cols:
            cols[name] = [cols[name][0][keep0], cols[name][1][keepi]]

    duration = (clock + g.path_li / C_LIGHT + 10 * cfg.jitter_sigma) if n else 0.0
    next_id = 2 * n
    dark_clicks = {}
    for det in range(5):
        times = _dark_counts(children[1 + n_steps + det], cfg.dark_rate_per_detector, duration)
        dark_clicks[Detector(det).name] = int(times.size)
        t_ps = np.rint(times * 1e12).astype(np.int64)
        if det == 0:
            step = np.searchsorted(step_start + g.path_l0 / C_LIGHT, times, side="right") - 1
            x = settings_um[np.clip(step, 0, n_steps - 1)]
        else:
            x = np.zeros(times.size, np.int64)
        cols["event_id"].append(np.arange(next_id, next_id + times.size, dtype=np.uint64))
        cols["detector"].append(np.full(times.size, det, np.int8))
        cols["time_ps"].append(t_ps)
        cols["x_um"].append(x)
        next_id += times.size

    stream = EventStream(*(np.concatenate(cols[name]) for name in
                           ("event_id", "detector", "time_ps", "x_um"))).sorted()
    for start in range(0, len(stream), _CHUNK):
        sink(stream[start:start + _CHUNK])

    return SimSummary(
        pairs_emitted=int(n),
        clicks=stream.counts(),
        dark_clicks=dark_clicks,
        pairs_per_step=per_step.tolist(),
        seed=cfg.seed,
        pair_rate=cfg.pair_rate,
        jitter_sigma=cfg.jitter_sigma,
        dark_rate_per_detector=cfg.dark_rate_per_detector,
        duration_ps=int(round(duration * 1e12)),
    )


def simulate(cfg: SimConfig, workers: int = 1):
    """Run a simulation in memory; returns ``(EventStream, SimSummary)``."""
    chunks = []
    summary = run_simulation(cfg, chunks.append, workers)
    return EventStream.concat(chunks), summary
