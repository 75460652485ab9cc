"""Flat ``key = value`` run configuration.

One entry per line, ``#`` starts a comment, keys carry their unit as a suffix.
Unknown keys, duplicates and malformed values are rejected with the key named.
Optional keys accept ``none``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Any, Callable, Optional

from . import __version__
from .coincidence import CoincidenceConfig
from .errors import ConfigError, InvalidParameterError
from .montecarlo import ScanSpec, SimConfig
from .params import C_LIGHT, ApparatusGeometry, BiphotonPacket


def _float(text):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("not finite")
    return value


def _int(text):
    return int(text, 10)


def _bool(text):
    lowered = text.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError("expected true/false")


def _policy(text):
    if text not in ("closest", "first"):
        raise ValueError("expected closest or first")
    return text


@dataclass(frozen=True)
class Key:
    name: str
    default: Any
    parse: Callable[[str], Any]
    check: Optional[Callable[[Any], bool]] = None
    requirement: str = ""
    optional: bool = False


_pos = (lambda v: v > 0, "must be > 0")
_nonneg = (lambda v: v >= 0, "must be >= 0")
_unit = (lambda v: 0 <= v <= 1, "must lie in [0, 1]")

KEYS = [
    Key("slit_width_mm", 0.3, _float, *_pos),
    Key("slit_sep_mm", 0.7, _float, *_pos),
    Key("focal_mm", 500.0, _float, *_pos),
    Key("lambda_signal_nm", 702.2, _float, *_pos),
    Key("lambda_pump_nm", 351.1, _float, *_pos),
    Key("path_l0_m", 1.0, _float, *_pos),
    Key("delay_m", 2.5, _float, *_pos),
    Key("aperture_mm", 0.1, _float, *_pos),
    Key("divergence_mm", 0.05, _float, *_nonneg),
    Key("offset_d3_um", 0.0, _float),
    Key("offset_d4_um", 0.0, _float),
    Key("corrections", False, _bool),
    Key("dl_window_fs", 300.0, _float, *_pos),
    Key("pairs", 1_000_000, _int, *_nonneg),
    Key("dwell_pairs", None, _int, *_pos, optional=True),
    Key("seed", 42, _int, lambda v: 0 <= v < 2 ** 64, "must be a 64-bit unsigned integer"),
    Key("pair_rate_hz", 1e5, _float, *_pos),
    Key("jitter_ns", 1.0, _float, *_nonneg),
    Key("dark_rate_hz", 100.0, _float, *_nonneg),
    Key("efficiency_d0", 1.0, _float, *_unit),
    Key("efficiency_d1", 1.0, _float, *_unit),
    Key("efficiency_d2", 1.0, _float, *_unit),
    Key("efficiency_d3", 1.0, _float, *_unit),
    Key("efficiency_d4", 1.0, _float, *_unit),
    Key("scan_min_um", -1250.0, _float),
    Key("scan_max_um", 1250.0, _float),
    Key("scan_step_um", 50.0, _float, *_pos),
    Key("scan_fixed_um", None, _float, optional=True),
    Key("workers", 1, _int, *_pos),
    Key("window_ns", 3.0, _float, *_pos),
    Key("matching_policy", "closest", _policy),
    Key("x_bin_um", 50, _int, *_pos),
    Key("expected_delay_ps", None, _int, optional=True),
    Key("curve_step_um", 2.0, _float, *_pos),
]
KEY_INDEX = {k.name: k for k in KEYS}


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RunConfig:
    """Effective configuration: every key resolved to a value."""

    def __init__(self, values: Optional[dict] = None):
        self.values = {k.name: k.default for k in KEYS}
        self._given = set(values or ())
        for name, value in (values or {}).items():
            if name not in KEY_INDEX:
                raise ConfigError(f"unknown key {name!r}", name)
            self.values[name] = value
        self._resolve()
        self._build()

    def __getitem__(self, name):
        return self.values[name]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'", None)
            name, _, value = (part.strip() for part in line.partition("="))
            key = KEY_INDEX.get(name)
            if key is None:
                raise ConfigError(f"line {lineno}: unknown key {name!r}", name)
            if name in values:
                raise ConfigError(f"line {lineno}: duplicate key {name!r}", name)
            if key.optional and value.lower() == "none":
                values[name] = None
                continue
            try:
                parsed = key.parse(value)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {name!r}: {value!r} ({exc})",
                                  name) from None
            if key.check is not None and not key.check(parsed):
                raise ConfigError(f"line {lineno}: {name} {key.requirement}", name)
            values[name] = parsed
        return cls(values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.parse(fh.read())

    def emit(self) -> str:
        return "".join(f"{k.name} = {_format(self.values[k.name])}\n" for k in KEYS)

    def digest(self) -> str:
        return hashlib.sha256(self.emit().encode("ascii")).hexdigest()[:16]

    def provenance(self) -> str:
        return f"biphoton-eraser v{__version__} config_digest={self.digest()}"

    def _resolve(self) -> None:
        v = self.values
        if v["dwell_pairs"] is not None:
            steps = self._scan().settings_um().size
            pairs = v["dwell_pairs"] * steps
            if "pairs" in self._given and v["pairs"] != pairs:
                raise ConfigError("pairs and dwell_pairs disagree", "dwell_pairs")
            v["pairs"] = pairs
            v["dwell_pairs"] = None
        if v["expected_delay_ps"] is None:
            # same arithmetic as ApparatusGeometry.delay, so it equals the simulated gap
            li = v["path_l0_m"] + v["delay_m"]
            v["expected_delay_ps"] = int(round((li - v["path_l0_m"]) / C_LIGHT * 1e12))

    def _scan(self) -> ScanSpec:
        v = self.values
        try:
            if v["scan_fixed_um"] is not None:
                return ScanSpec.fixed(v["scan_fixed_um"] * 1e-6)
            return ScanSpec(v["scan_min_um"] * 1e-6, v["scan_max_um"] * 1e-6,
                            v["scan_step_um"] * 1e-6)
        except InvalidParameterError as exc:
            raise ConfigError(f"scan_min_um/scan_max_um/scan_step_um: {exc}",
                              "scan_min_um") from None

    def _build(self) -> None:
        v = self.values
        try:
            self.geometry = ApparatusGeometry(
                slit_width_a=v["slit_width_mm"] * 1e-3,
                slit_sep_d=v["slit_sep_mm"] * 1e-3,
                focal_f=v["focal_mm"] * 1e-3,
                lambda_signal=v["lambda_signal_nm"] * 1e-9,
                lambda_pump=v["lambda_pump_nm"] * 1e-9,
                path_l0=v["path_l0_m"],
                path_li=v["path_l0_m"] + v["delay_m"],
                detector_aperture_w=v["aperture_mm"] * 1e-3,
                pump_divergence_sigma=v["divergence_mm"] * 1e-3,
                offset_d3=v["offset_d3_um"] * 1e-6,
                offset_d4=v["offset_d4_um"] * 1e-6,
            )
        except InvalidParameterError as exc:
            raise _geometry_error(exc) from None
        self.packet = BiphotonPacket.degenerate(self.geometry.lambda_pump,
                                                v["dl_window_fs"] * 1e-15)
        self.scan = self._scan()
        self.sim = SimConfig(
            pairs=v["pairs"], seed=v["seed"], pair_rate=v["pair_rate_hz"],
            jitter_sigma=v["jitter_ns"] * 1e-9, dark_rate_per_detector=v["dark_rate_hz"],
            geometry=self.geometry, packet=self.packet, scan=self.scan,
            efficiency=tuple(v[f"efficiency_d{i}"] for i in range(5)),
            corrections=v["corrections"],
        )
        window_ps = int(round(v["window_ns"] * 1000))
        if window_ps <= 0:
            raise ConfigError("window_ns rounds to zero picoseconds", "window_ns")
        self.coincidence = CoincidenceConfig(
            expected_delay_ps=v["expected_delay_ps"],
            window_ps=window_ps,
            matching_policy=v["matching_policy"],
            x_bin_um=v["x_bin_um"],
        )


_FIELD_KEYS = {
    "slit_width_a": "slit_width_mm", "slit_sep_d": "slit_sep_mm", "focal_f": "focal_mm",
    "lambda_signal": "lambda_signal_nm", "lambda_pump": "lambda_pump_nm",
    "path_l0": "path_l0_m", "path_li": "delay_m", "detector_aperture_w": "aperture_mm",
    "pump_divergence_sigma": "divergence_mm",
}


def _geometry_error(exc: InvalidParameterError) -> ConfigError:
    """Restate a geometry error in terms of config keys."""
    message = str(exc)
    first, pos = None, len(message)
    for field_name, key in _FIELD_KEYS.items():
        at = message.find(field_name)
        if at >= 0 and at < pos:
            first, pos = key, at
        message = message.replace(field_name, key)
    return ConfigError(message, first)
