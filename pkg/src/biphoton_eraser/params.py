"""Apparatus geometry and biphoton packet parameters shared by all layers."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidParameterError

C_LIGHT = 299_792_458.0  # m/s


@dataclass(frozen=True)
class ApparatusGeometry:
    """Double-slit source, Fourier lens and detector geometry (SI units, metres).

    ``slit_width_a`` and ``slit_sep_d`` describe the two pumped regions A and B.
    ``path_l0`` is the signal path to D0 and ``path_li`` the (common) idler path to
    D1..D4. ``detector_aperture_w`` and ``pump_divergence_sigma`` feed the
    visibility-degradation convolutions; ``offset_d3``/``offset_d4`` shift the
    which-path envelopes.
    """

    slit_width_a: float = 0.3e-3
    slit_sep_d: float = 0.7e-3
    focal_f: float = 0.5
    lambda_signal: float = 702.2e-9
    lambda_pump: float = 351.1e-9
    path_l0: float = 1.0
    path_li: float = 3.5
    detector_aperture_w: float = 0.10e-3
    pump_divergence_sigma: float = 0.05e-3
    offset_d3: float = 0.0
    offset_d4: float = 0.0

    def __post_init__(self):
        for name in ("slit_width_a", "slit_sep_d", "focal_f", "lambda_signal",
                     "lambda_pump", "path_l0", "path_li", "detector_aperture_w"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidParameterError(f"{name} must be a positive length, got {value!r}")
        if not (math.isfinite(self.pump_divergence_sigma) and self.pump_divergence_sigma >= 0):
            raise InvalidParameterError("pump_divergence_sigma must be >= 0")
        if self.slit_sep_d <= self.slit_width_a:
            raise InvalidParameterError("slit_sep_d must exceed slit_width_a (slits would overlap)")
        if self.path_li <= self.path_l0:
            raise InvalidParameterError("path_li must exceed path_l0 (idler must be delayed)")
        if abs(self.lambda_signal - 2.0 * self.lambda_pump) > 1e-9 * self.lambda_signal:
            raise InvalidParameterError(
                "lambda_signal must equal 2*lambda_pump (degenerate down-conversion)")

    @property
    def fringe_period(self) -> float:
        """Double-slit fringe period lambda*f/d in the Fourier plane."""
        return self.lambda_signal * self.focal_f / self.slit_sep_d

    @property
    def envelope_null(self) -> float:
        """First zero of the single-slit envelope, lambda*f/a."""
        return self.lambda_signal * self.focal_f / self.slit_width_a

    @property
    def delay(self) -> float:
        """Idler-minus-signal propagation delay (Li - L0)/c in seconds."""
        return (self.path_li - self.path_l0) / C_LIGHT


@dataclass(frozen=True)
class BiphotonPacket:
    """Parameters of the type-II biphoton amplitude.

    ``dl_window`` is the product D*L (seconds) setting the rectangular support of
    the amplitude in t0 - tj; ``amp0`` is the overall normalization.
    """

    omega_e: float
    omega_o: float
    dl_window: float = 300e-15
    amp0: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.dl_window) and self.dl_window > 0):
            raise InvalidParameterError("dl_window must be > 0")
        if not (math.isfinite(self.omega_e) and math.isfinite(self.omega_o)):
            raise InvalidParameterError("center frequencies must be finite")
        if not math.isfinite(self.amp0):
            raise InvalidParameterError("amp0 must be finite")

    @classmethod
    def degenerate(cls, lambda_pump: float = 351.1e-9, dl_window: float = 300e-15,
                   amp0: float = 1.0) -> "BiphotonPacket":
        """Packet with both photons at half the pump frequency."""
        omega_p = 2.0 * math.pi * C_LIGHT / lambda_pump
        return cls(omega_e=omega_p / 2.0, omega_o=omega_p / 2.0,
                   dl_window=dl_window, amp0=amp0)

    @property
    def omega_pump(self) -> float:
        return self.omega_e + self.omega_o

    def check_against(self, g: ApparatusGeometry) -> None:
        """Raise unless the center frequencies sum to the pump frequency of ``g``."""
        omega_p = 2.0 * math.pi * C_LIGHT / g.lambda_pump
        if abs(self.omega_pump - omega_p) > 1e-9 * omega_p:
            raise InvalidParameterError(
                f"omega_e + omega_o = {self.omega_pump:.6e} does not match pump {omega_p:.6e}")


def normalized_amp0(g: ApparatusGeometry, dl_window: float) -> float:
    """Amplitude A0 making the x-integrated rate summed over D1..D4 equal to one.

    The summed rate is A0**2 * DL * sinc**2(pi x a / (lambda f)), whose integral over
    x is A0**2 * DL * lambda f / a.
    """
    if dl_window <= 0:
        raise InvalidParameterError("dl_window must be > 0")
    return math.sqrt(g.slit_width_a / (dl_window * g.lambda_signal * g.focal_f))
