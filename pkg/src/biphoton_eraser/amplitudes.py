"""Two-photon amplitude layer.

Amplitudes are plain Python/numpy complex numbers. The beamsplitter convention is
the symmetric one: transmission leaves the phase unchanged, reflection multiplies
by ``1j``, each port carrying a factor ``1/sqrt(2)``.

Photon 1 (signal) goes to the scanning detector D0; photon 2 (idler) goes through
BSA/BSB either straight to D3/D4 (which-path) or via the mirrors to the final
beamsplitter BS and on to D1/D2 (path information erased).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidParameterError
from .params import C_LIGHT, ApparatusGeometry, BiphotonPacket

SQRT1_2 = 1.0 / math.sqrt(2.0)

# Arm phases of the idler interferometer: reflection at BSA/BSB contributes 1j,
# these offsets bring both arms to BS with the relative phase that makes the D1
# port the symmetric (A + B) combination.
_ARM_PHASE_A = -1j
_ARM_PHASE_B = -1.0
# Constant phase on the D2 output leg, absorbed by the L2/c shift in t2.
_PORT_PHASE_D2 = -1j


class Detector(enum.IntEnum):
    D0 = 0
    D1 = 1
    D2 = 2
    D3 = 3
    D4 = 4

    @classmethod
    def parse(cls, value) -> "Detector":
        if isinstance(value, cls):
            return value
        if isinstance(value, str) and value.upper() in cls.__members__:
            return cls[value.upper()]
        if isinstance(value, (int, np.integer)) and 0 <= int(value) <= 4:
            return cls(int(value))
        raise InvalidParameterError(f"unknown detector {value!r}")


IDLER_DETECTORS = (Detector.D1, Detector.D2, Detector.D3, Detector.D4)


class SourceRegion(enum.Enum):
    A = "A"
    B = "B"


@dataclass(frozen=True)
class PathTimes:
    """Path-referenced times t0 = T0 - L0/c and tj = Tj - Lj/c for one amplitude."""

    t0: float
    tj: float
    source_region: SourceRegion
    detector: Detector

    def __post_init__(self):
        if not (math.isfinite(self.t0) and math.isfinite(self.tj)):
            raise InvalidParameterError("path times must be finite")
        det = Detector.parse(self.detector)
        if det is Detector.D0:
            raise InvalidParameterError("PathTimes pairs D0 with an idler detector D1..D4")
        if det is Detector.D3 and self.source_region is not SourceRegion.A:
            raise InvalidParameterError("D3 only receives path-A idlers")
        if det is Detector.D4 and self.source_region is not SourceRegion.B:
            raise InvalidParameterError("D4 only receives path-B idlers")

    @classmethod
    def from_lab(cls, t0_lab, tj_lab, detector, region, g: ApparatusGeometry) -> "PathTimes":
        return cls(t0_lab - g.path_l0 / C_LIGHT, tj_lab - g.path_li / C_LIGHT,
                   SourceRegion(region), Detector.parse(detector))

    def amplitude(self, packet: BiphotonPacket) -> complex:
        return complex(packet_amplitude(self.t0, self.tj, packet))


def bs_apply(in_a: complex, in_b: complex) -> tuple[complex, complex]:
    """Symmetric 50-50 beamsplitter acting on the two input port amplitudes."""
    out_1 = (in_a + 1j * in_b) * SQRT1_2
    out_2 = (1j * in_a + in_b) * SQRT1_2
    return out_1, out_2


def bs_matrix() -> np.ndarray:
    return SQRT1_2 * np.array([[1.0, 1j], [1j, 1.0]])


def pi_window(dt, dl_window: float):
    """Rectangular biphoton support: 1 where 0 <= dt <= dl_window (inclusive), else 0."""
    if not dl_window > 0:
        raise InvalidParameterError(f"dl_window must be > 0, got {dl_window!r}")
    dt = np.asarray(dt, dtype=float)
    out = ((dt >= 0.0) & (dt <= dl_window)).astype(float)
    return out if out.ndim else float(out)


def packet_amplitude(t0, tj, packet: BiphotonPacket):
    """Biphoton amplitude A0 * Pi(t0 - tj) * exp(-i (omega_e t0 + omega_o tj))."""
    t0 = np.asarray(t0, dtype=float)
    tj = np.asarray(tj, dtype=float)
    window = pi_window(t0 - tj, packet.dl_window)
    phase = -(packet.omega_e * t0 + packet.omega_o * tj)
    amp = packet.amp0 * window * np.exp(1j * np.mod(phase, 2.0 * math.pi))
    return amp if np.ndim(amp) else complex(amp)


def combine_paths(detector, amp_a, amp_b):
    """Idler-side amplitude reaching ``detector`` from path amplitudes A and B.

    D3 and D4 see a single transmission at BSA or BSB. D1 and D2 see a reflection
    at BSA/BSB followed by the final beamsplitter BS, giving (A + B)/2 and (A - B)/2.
    """
    det = Detector.parse(detector)
    if det is Detector.D3:
        return amp_a * SQRT1_2
    if det is Detector.D4:
        return amp_b * SQRT1_2
    if det in (Detector.D1, Detector.D2):
        in_a = 1j * SQRT1_2 * amp_a * _ARM_PHASE_A
        in_b = 1j * SQRT1_2 * amp_b * _ARM_PHASE_B
        out_1, out_2 = bs_apply(in_a, in_b)
        return out_1 if det is Detector.D1 else out_2 * _PORT_PHASE_D2
    raise InvalidParameterError(f"detector {det.name} has no idler amplitude")


@lru_cache(maxsize=16)
def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def slit_factor(x, center: float, g: ApparatusGeometry, n_slit: int = 64):
    """Far-field signal amplitude at D0 position ``x`` from a slit at ``center``.

    Coherent average of exp(-2 pi i s x / (lambda f)) over the slit, by
    Gauss-Legendre quadrature. Unit modulus at x = 0.
    """
    nodes, weights = _gauss_legendre(n_slit)
    s = center + 0.5 * g.slit_width_a * nodes
    k = 2.0 * math.pi / (g.lambda_signal * g.focal_f)
    x = np.asarray(x, dtype=float)
    phase = np.exp(-1j * k * np.multiply.outer(x, s))
    return 0.5 * (phase @ weights)


def joint_wavefunction(detector, t0_lab, tj_lab, g: ApparatusGeometry,
                       packet: BiphotonPacket, x: float = 0.0, n_slit: int = 64):
    """Joint D0-Dj amplitude for lab detection times ``t0_lab``, ``tj_lab``.

    Each source region carries amplitude 1/sqrt(2); the signal amplitude at D0
    position ``x`` is the far-field slit factor of that region (A at +d/2, B at
    -d/2). The interferometer arms are equal, so both regions share tj.
    """
    det = Detector.parse(detector)
    if det is Detector.D0:
        raise InvalidParameterError("joint_wavefunction needs an idler detector D1..D4")
    t0 = np.asarray(t0_lab, dtype=float) - g.path_l0 / C_LIGHT
    tj = np.asarray(tj_lab, dtype=float) - g.path_li / C_LIGHT
    biphoton = packet_amplitude(t0, tj, packet)
    s_a = complex(slit_factor(x, +0.5 * g.slit_sep_d, g, n_slit))
    s_b = complex(slit_factor(x, -0.5 * g.slit_sep_d, g, n_slit))
    amp_a = SQRT1_2 * s_a * biphoton
    amp_b = SQRT1_2 * s_b * biphoton
    return combine_paths(det, amp_a, amp_b)


@dataclass(frozen=True)
class IntegrationGrid:
    """Quadrature settings for the numeric joint-detection rate.

    Time is integrated in (tau = t0 - tj, tj) with ``n_time`` Gauss-Legendre nodes
    per segment; tau spans [-dl/2, 3 dl/2] split at the window edges, tj spans
    ``span_factor * dl``.
    """

    n_time: int = 64
    n_slit: int = 64
    span_factor: float = 4.0

    def validate(self) -> None:
        if self.n_time < 64:
            raise InvalidParameterError(f"n_time must be >= 64 nodes, got {self.n_time}")
        if self.n_slit < 8:
            raise InvalidParameterError(f"n_slit must be >= 8 nodes, got {self.n_slit}")
        if not self.span_factor > 0:
            raise InvalidParameterError("span_factor must be > 0")


def _time_nodes(packet: BiphotonPacket, grid: IntegrationGrid):
    nodes, weights = _gauss_legendre(grid.n_time)
    dl = packet.dl_window
    taus, w_tau = [], []
    for lo, hi in ((-0.5 * dl, 0.0), (0.0, dl), (dl, 1.5 * dl)):
        half = 0.5 * (hi - lo)
        taus.append(lo + half * (nodes + 1.0))
        w_tau.append(half * weights)
    span = grid.span_factor * dl
    tj = 0.5 * span * (nodes + 1.0)
    w_tj = 0.5 * span * weights
    return np.concatenate(taus), np.concatenate(w_tau), tj, w_tj, span


def glauber_rate_numeric(detector, x, g: ApparatusGeometry, packet: BiphotonPacket,
                         grid: IntegrationGrid | None = None):
    """Joint detection rate (1/T) double-integral of |Psi(t0, tj)|^2 at D0 position x.

    Brute-force counterpart of the closed-form fringe laws: time integral by
    quadrature over the biphoton support, slit extent by quadrature over each slit.
    """
    grid = grid or IntegrationGrid()
    grid.validate()
    det = Detector.parse(detector)
    tau, w_tau, tj, w_tj, span = _time_nodes(packet, grid)
    tau_m, tj_m = np.meshgrid(tau, tj, indexing="ij")
    weights = np.outer(w_tau, w_tj)
    t0_lab = tau_m + tj_m + g.path_l0 / C_LIGHT
    tj_lab = tj_m + g.path_li / C_LIGHT

    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty(xs.shape)
    for i, xi in enumerate(xs):
        psi = joint_wavefunction(det, t0_lab, tj_lab, g, packet, xi, grid.n_slit)
        out[i] = np.sum(weights * (psi.real ** 2 + psi.imag ** 2)) / span
    return out if np.ndim(x) else float(out[0])
