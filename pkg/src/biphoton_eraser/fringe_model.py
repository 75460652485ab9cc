"""Closed-form joint-detection rates, visibility degradation and fringe fitting."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .amplitudes import IDLER_DETECTORS, Detector, IntegrationGrid, glauber_rate_numeric
from .errors import FitDegenerateError, InvalidParameterError
from .params import ApparatusGeometry, BiphotonPacket

__all__ = [
    "ApparatusGeometry", "FringeFit", "sinc", "rate_r01", "rate_r02", "rate_r03",
    "rate_r04", "envelope", "apply_detector_aperture", "apply_pump_divergence",
    "channel_rates", "expected_visibility_factor", "fit_fringe", "phase_shift_error",
    "oracle_crosscheck", "oracle_curves",
]

# Relative weight of each channel in the joint rate: D1/D2 share half the pairs,
# D3/D4 a quarter each.
BRANCH_WEIGHTS = {Detector.D1: 0.5, Detector.D2: 0.5, Detector.D3: 0.25, Detector.D4: 0.25}


def sinc(u):
    """sin(u)/u with the removable singularity filled by its Taylor series."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < 1e-4
    safe = np.where(small, 1.0, u)
    u2 = u * u
    out = np.where(small, 1.0 - u2 / 6.0 + u2 * u2 / 120.0, np.sin(safe) / safe)
    return out if out.ndim else float(out)


def _phase_arg(x, g: ApparatusGeometry):
    return np.pi * np.asarray(x, dtype=float) / (g.lambda_signal * g.focal_f)


def envelope(x, g: ApparatusGeometry, offset: float = 0.0):
    """Single-slit diffraction envelope sinc^2(pi (x - offset) a / (lambda f))."""
    return sinc(_phase_arg(np.asarray(x, dtype=float) - offset, g) * g.slit_width_a) ** 2


def rate_r01(x, g: ApparatusGeometry):
    """D0-D1 joint rate sinc^2 cos^2, equal to 1 at x = 0."""
    arg = _phase_arg(x, g)
    return sinc(arg * g.slit_width_a) ** 2 * np.cos(arg * g.slit_sep_d) ** 2


def rate_r02(x, g: ApparatusGeometry):
    """D0-D2 joint rate sinc^2 sin^2 (the anti-fringe)."""
    arg = _phase_arg(x, g)
    return sinc(arg * g.slit_width_a) ** 2 * np.sin(arg * g.slit_sep_d) ** 2


def rate_r03(x, g: ApparatusGeometry):
    return envelope(x, g, g.offset_d3)


def rate_r04(x, g: ApparatusGeometry):
    return envelope(x, g, g.offset_d4)


_RATE_FUNCS = {Detector.D1: rate_r01, Detector.D2: rate_r02,
               Detector.D3: rate_r03, Detector.D4: rate_r04}


def rate(detector, x, g: ApparatusGeometry):
    return _RATE_FUNCS[Detector.parse(detector)](x, g)


def _uniform_spacing(x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise InvalidParameterError("curve needs at least two samples")
    steps = np.diff(x)
    dx = float(np.mean(steps))
    if dx <= 0 or not np.allclose(steps, dx, rtol=1e-6, atol=0.0):
        raise InvalidParameterError("curve must be uniformly sampled in increasing x")
    return dx


def aperture_kernel(dx: float, w: float) -> np.ndarray:
    """Discrete box of width ``w``: each cell weighted by its overlap with [-w/2, w/2]."""
    half = 0.5 * w
    n = int(math.ceil(half / dx - 0.5))
    centers = dx * np.arange(-n, n + 1)
    lo = np.maximum(centers - 0.5 * dx, -half)
    hi = np.minimum(centers + 0.5 * dx, half)
    kernel = np.clip(hi - lo, 0.0, None)
    return kernel / kernel.sum()


def gaussian_kernel(dx: float, sigma: float, truncate: float = 8.0) -> np.ndarray:
    n = max(int(math.ceil(truncate * sigma / dx)), 1)
    j = dx * np.arange(-n, n + 1)
    kernel = np.exp(-0.5 * (j / sigma) ** 2)
    return kernel / kernel.sum()


def apply_detector_aperture(x, y, w: float) -> np.ndarray:
    """Average ``y`` over a detector of width ``w`` (rectangular convolution).

    An aperture no wider than one sample is a delta kernel and returns ``y``
    unchanged; otherwise the sampling must resolve the aperture (dx <= w/8).
    Edges use half-sample symmetric reflection.
    """
    dx = _uniform_spacing(x)
    y = np.asarray(y, dtype=float)
    if w < 0:
        raise InvalidParameterError("aperture width must be >= 0")
    if w <= dx * (1.0 + 1e-9):
        return y.copy()
    if dx > w / 8.0 * (1.0 + 1e-9):
        raise InvalidParameterError(
            f"sampling step {dx:.3e} m too coarse for aperture {w:.3e} m (need <= w/8)")
    return ndimage.convolve1d(y, aperture_kernel(dx, w), mode="reflect")


def apply_pump_divergence(x, y, sigma: float) -> np.ndarray:
    """Gaussian blur of ``y`` with standard deviation ``sigma`` along x."""
    dx = _uniform_spacing(x)
    y = np.asarray(y, dtype=float)
    if sigma < 0:
        raise InvalidParameterError("sigma must be >= 0")
    if sigma == 0:
        return y.copy()
    return ndimage.convolve1d(y, gaussian_kernel(dx, sigma), mode="reflect")


def expected_visibility_factor(g: ApparatusGeometry, corrections: bool = True) -> float:
    """Visibility multiplier of aperture and pump divergence on a pure fringe."""
    if not corrections:
        return 1.0
    period = g.fringe_period
    aperture = abs(sinc(math.pi * g.detector_aperture_w / period))
    divergence = math.exp(-2.0 * math.pi ** 2 * (g.pump_divergence_sigma / period) ** 2)
    return aperture * divergence


def _smoothing_grid(x: np.ndarray, g: ApparatusGeometry):
    target = min(g.detector_aperture_w / 16.0, g.fringe_period / 256.0)
    if g.pump_divergence_sigma > 0:
        target = min(target, g.pump_divergence_sigma / 8.0)
    margin = g.detector_aperture_w + 8.0 * g.pump_divergence_sigma + g.fringe_period
    if x.size >= 2:
        steps = np.diff(x)
        h = float(np.mean(steps))
        if h > 0 and np.allclose(steps, h, rtol=1e-9, atol=0.0):
            # refine the caller's grid so every requested point is a node
            m = max(int(math.ceil(h / target)), 1)
            dx = h / m
            pad = int(math.ceil(margin / dx))
            idx = np.arange(-pad, (x.size - 1) * m + pad + 1)
            return x[0] + dx * idx, pad + m * np.arange(x.size)
    lo, hi = float(x.min()) - margin, float(x.max()) + margin
    n = int(math.ceil((hi - lo) / target)) + 1
    return np.linspace(lo, hi, n), None


def channel_rates(x, g: ApparatusGeometry, corrections: bool = False) -> dict:
    """Branch-weighted joint rates R0j(x) for j = 1..4.

    Weights are 1/2 for D1/D2 and 1/4 for D3/D4, so the four rates sum to the
    singles envelope at D0. With ``corrections`` the detector aperture and pump
    divergence convolutions are applied.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not corrections:
        return {det: BRANCH_WEIGHTS[det] * rate(det, x, g) for det in IDLER_DETECTORS}
    fine, nodes = _smoothing_grid(x, g)
    out = {}
    for det in IDLER_DETECTORS:
        y = BRANCH_WEIGHTS[det] * rate(det, fine, g)
        y = apply_detector_aperture(fine, y, g.detector_aperture_w)
        y = apply_pump_divergence(fine, y, g.pump_divergence_sigma)
        out[det] = y[nodes] if nodes is not None else np.interp(x, fine, y)
    return out


@dataclass(frozen=True)
class FringeFit:
    visibility: float
    phase: float
    period: float
    envelope_scale: float
    residual_rms: float
    visibility_err: float = float("nan")
    baseline: float = 0.0
    chi2: float = float("nan")
    dof: int = 0

    def __post_init__(self):
        if not 0.0 <= self.visibility <= 1.0:
            raise InvalidParameterError("visibility must lie in [0, 1]")
        if not self.period > 0:
            raise InvalidParameterError("period must be > 0")


def wrap_phase(phi: float) -> float:
    """Map an angle to (-pi, pi]."""
    phi = math.remainder(phi, 2.0 * math.pi)
    return math.pi if phi == -math.pi else phi


def phase_shift_error(phi1: float, phi2: float) -> float:
    """|phi2 - phi1 - pi| with the difference taken modulo 2 pi."""
    return abs(wrap_phase(phi2 - phi1 - math.pi))


def fit_fringe(x, counts, g: ApparatusGeometry, *, envelope_curve=None, sigma=None,
               min_counts: float = 1000.0, min_bins: int = 12) -> FringeFit:
    """Fit E(x) * S/2 * (1 + V cos(2 pi x / period + phi)) + baseline.

    The period is fixed to lambda f / d. ``envelope_curve`` defaults to the
    single-slit envelope of ``g``; pass ones for a pure fringe (the baseline is then
    dropped, being indistinguishable from S). The model is linear in
    (S/2, S V cos phi / 2, -S V sin phi / 2, baseline), so the fit is a weighted
    linear least-squares solve. Default weights are Poisson, 1/sqrt(max(count, 1)).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(counts, dtype=float)
    period = g.fringe_period
    diagnostics = {
        "bins": int(x.size),
        "span": float(np.ptp(x)) if x.size else 0.0,
        "period": period,
        "total": float(y.sum()) if y.size else 0.0,
    }
    if x.size < min_bins:
        raise FitDegenerateError(f"need >= {min_bins} bins, got {x.size}", diagnostics)
    if diagnostics["total"] < min_counts:
        raise FitDegenerateError(
            f"insufficient counts: {diagnostics['total']:g} < {min_counts:g}", diagnostics)
    if diagnostics["span"] < 2.0 * period * (1.0 - 1e-9):
        raise FitDegenerateError("scan spans fewer than two fringe periods", diagnostics)

    env = envelope(x, g) if envelope_curve is None else np.asarray(envelope_curve, float)
    k = 2.0 * math.pi / period
    columns = [env, env * np.cos(k * x), env * np.sin(k * x)]
    with_baseline = np.ptp(env) > 1e-12 * np.max(np.abs(env))
    if with_baseline:
        columns.append(np.ones_like(x))
    design = np.column_stack(columns)
    err = np.sqrt(np.maximum(y, 1.0)) if sigma is None else np.asarray(sigma, float)
    a_w = design / err[:, None]
    coef, _, rank, _ = np.linalg.lstsq(a_w, y / err, rcond=None)
    if rank < design.shape[1] or coef[0] <= 0:
        diagnostics.update(rank=int(rank), mean_coef=float(coef[0]))
        raise FitDegenerateError("fringe model is degenerate for this data", diagnostics)

    c0, c1, c2 = coef[:3]
    amp = math.hypot(c1, c2)
    vis = amp / c0
    phase = wrap_phase(math.atan2(-c2, c1))
    cov = np.linalg.inv(a_w.T @ a_w)
    if amp > 0:
        grad = np.array([-amp / c0 ** 2, c1 / (c0 * amp), c2 / (c0 * amp)])
    else:
        grad = np.array([0.0, 1.0 / c0, 1.0 / c0]) / math.sqrt(2.0)
    vis_err = float(math.sqrt(max(grad @ cov[:3, :3] @ grad, 0.0)))

    model = design @ coef
    resid = y - model
    scale = float(np.max(np.abs(y))) or 1.0
    return FringeFit(
        visibility=float(min(max(vis, 0.0), 1.0)),
        phase=phase,
        period=period,
        envelope_scale=float(2.0 * c0),
        residual_rms=float(np.sqrt(np.mean(resid ** 2)) / scale),
        visibility_err=vis_err,
        baseline=float(coef[3]) if with_baseline else 0.0,
        chi2=float(np.sum((resid / err) ** 2)),
        dof=int(x.size - design.shape[1]),
    )


def oracle_curves(g: ApparatusGeometry, packet: BiphotonPacket, n_points: int = 64,
                  detector=Detector.D1, x_max: float | None = None,
                  grid: IntegrationGrid | None = None):
    """Numeric Glauber rate and closed form for one channel on a shared grid.

    Returns ``(x, numeric, closed)``, unnormalized. Envelope offsets are not part
    of the amplitude model and are ignored here.
    """
    if n_points < 32:
        raise InvalidParameterError("oracle cross-check needs n_points >= 32")
    det = Detector.parse(detector)
    x_max = 2.5 * g.fringe_period if x_max is None else x_max
    x = np.linspace(-x_max, x_max, n_points)
    plain = dataclasses.replace(g, offset_d3=0.0, offset_d4=0.0)
    numeric = glauber_rate_numeric(det, x, plain, packet, grid)
    closed = rate(det, x, plain)
    return x, numeric, closed


def oracle_crosscheck(g: ApparatusGeometry, packet: BiphotonPacket, n_points: int = 64,
                      detector=None, x_max: float | None = None,
                      grid: IntegrationGrid | None = None) -> float:
    """Max deviation between max-normalized numeric and closed-form rates.

    ``detector=None`` checks all four channels and returns the worst.
    """
    detectors = IDLER_DETECTORS if detector is None else (Detector.parse(detector),)
    worst = 0.0
    for det in detectors:
        _, numeric, closed = oracle_curves(g, packet, n_points, det, x_max, grid)
        numeric = numeric / numeric.max()
        closed = closed / closed.max()
        worst = max(worst, float(np.max(np.abs(numeric - closed))))
    return worst
