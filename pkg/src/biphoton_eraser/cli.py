"""Command-line front end: ``scan``, ``simulate``, ``analyze`` and ``report``.

Exit codes: 0 success, 2 config or usage error, 3 I/O or malformed input,
4 analysis degenerate.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .amplitudes import IDLER_DETECTORS
from .coincidence import (PAIR_NAMES, accidental_rate_estimate, bin_index, histogram,
                          match_coincidences)
from .config import RunConfig
from .errors import (ConfigError, EventFormatError, FitDegenerateError, InsufficientDataError,
                     InvalidParameterError)
from .events import EventCSVWriter, EventStream, ingest_events
from .fringe_model import channel_rates, expected_visibility_factor, fit_fringe, phase_shift_error
from .montecarlo import run_simulation

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DEGENERATE = 0, 2, 3, 4
SCAN_HEADER = "x_um,r01,r02,r03,r04"

V_INTERFERENCE_MIN = 0.95
PHASE_ERROR_MAX = 0.05
V_FLAT_MAX = 0.02
GAP_TOLERANCE_NS = 0.01


def _err(message: str) -> None:
    print(f"biphoton-eraser: {message}", file=sys.stderr)


def _load_config(path) -> RunConfig:
    try:
        return RunConfig.load(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    except InvalidParameterError as exc:
        raise ConfigError(str(exc)) from None


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.6g}"
    return str(value)


# scan

def cmd_scan(config_path, out_path) -> int:
    cfg = _load_config(config_path)
    v = cfg.values
    step = v["curve_step_um"]
    n = int(math.floor((v["scan_max_um"] - v["scan_min_um"]) / step * (1 + 1e-12))) + 1
    x_um = v["scan_min_um"] + step * np.arange(n)
    rates = channel_rates(x_um * 1e-6, cfg.geometry, corrections=v["corrections"])
    cols = [rates[det] for det in IDLER_DETECTORS]
    lines = [f"# {cfg.provenance()}", SCAN_HEADER]
    for i, x in enumerate(x_um.tolist()):
        xs = str(int(round(x))) if abs(x - round(x)) < 1e-9 else repr(x)
        lines.append(",".join([xs] + [f"{c[i]:.12e}" for c in cols]))
    with open(out_path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return EXIT_OK


# simulate

def cmd_simulate(config_path, out_path, workers: Optional[int] = None) -> int:
    cfg = _load_config(config_path)
    workers = workers or cfg["workers"]
    with EventCSVWriter(out_path, comment=cfg.provenance()) as writer:
        summary = run_simulation(cfg.sim, writer, workers=workers)
    clicks = " ".join(f"{k}={n}" for k, n in summary.clicks.items())
    print(f"pairs = {summary.pairs_emitted}")
    print(f"seed = {summary.seed}")
    print(f"steps = {len(summary.pairs_per_step)}")
    print(f"clicks = {clicks}")
    print(f"dark_clicks = {' '.join(f'{k}={n}' for k, n in summary.dark_clicks.items())}")
    print(f"duration_ps = {summary.duration_ps}")
    print(f"events = {writer.rows}")
    return EXIT_OK


# analyze

def _singles_check(events: EventStream, cfg: RunConfig) -> None:
    """Fit the D0 singles; a degenerate fit means there is nothing to analyze."""
    x = events.x_um[events.detector == 0]
    b = cfg.coincidence.x_bin_um
    if x.size == 0:
        raise FitDegenerateError("insufficient counts: no D0 clicks")
    idx = bin_index(x, b)
    lo = int(idx.min())
    counts = np.bincount(idx - lo)
    centers = b * (lo + np.arange(counts.size)) * 1e-6
    fit_fringe(centers, counts, cfg.geometry)


def _analytic_chi2(counts: np.ndarray, model: np.ndarray):
    total = float(counts.sum())
    norm = float(model.sum())
    if total <= 0 or norm <= 0:
        return float("nan")
    expected = model * (total / norm)
    chi2 = float(np.sum((counts - expected) ** 2 / np.maximum(expected, 1.0)))
    return chi2 / max(counts.size - 1, 1)


def analyze_events(events: EventStream, cfg: RunConfig) -> dict:
    """Match, histogram and fit; returns the report fields and the histogram."""
    g = cfg.geometry
    corrections = cfg["corrections"]
    _singles_check(events, cfg)
    result = match_coincidences(events, cfg.coincidence)
    hist = histogram(result, cfg.coincidence)
    model = channel_rates(hist.x_m, g, corrections=corrections)
    models = [model[det] for det in IDLER_DETECTORS]
    envelopes = {
        "0-1": 2.0 * (models[0] + models[1]),
        "0-2": 2.0 * (models[0] + models[1]),
        "0-3": 4.0 * models[2],
        "0-4": 4.0 * models[3],
    }
    report = {
        "corrections": bool(corrections),
        "expected_factor": expected_visibility_factor(g, corrections),
        "d0_total": result.d0_total,
        "matched": result.matched,
        "unmatched_d0": result.unmatched_d0,
        "matched_fraction": result.matched / result.d0_total if result.d0_total else 0.0,
        "unmatched_idlers": result.unmatched_idlers,
    }
    phases = {}
    for name, mdl in zip(PAIR_NAMES, models):
        key = name.replace("-", "")
        counts = hist.counts[name]
        report[f"counts{key}"] = int(counts.sum())
        try:
            fit = fit_fringe(hist.x_m, counts, g, envelope_curve=envelopes[name])
            report[f"V{key}"] = fit.visibility
            report[f"V{key}_err"] = fit.visibility_err
            report[f"phi{key}"] = fit.phase
            report[f"chi2_dof{key}"] = fit.chi2 / fit.dof if fit.dof > 0 else float("nan")
            phases[name] = fit.phase
        except FitDegenerateError as exc:
            for field in (f"V{key}", f"V{key}_err", f"phi{key}", f"chi2_dof{key}"):
                report[field] = float("nan")
            report[f"fit{key}"] = f"degenerate ({exc})"
        report[f"chi2_analytic_dof{key}"] = _analytic_chi2(counts, mdl)
    if "0-1" in phases and "0-2" in phases:
        report["phase_error"] = phase_shift_error(phases["0-1"], phases["0-2"])
    else:
        report["phase_error"] = float("nan")
    summed = hist.counts["0-1"] + hist.counts["0-2"]
    try:
        report["V_sum12"] = fit_fringe(hist.x_m, summed, g, envelope_curve=envelopes["0-1"]).visibility
    except FitDegenerateError:
        report["V_sum12"] = float("nan")
    gaps = result.gaps_ps
    report["mean_gap_ns"] = float(gaps.mean()) / 1000.0 if gaps.size else float("nan")
    report["expected_gap_ns"] = g.delay * 1e9
    try:
        acc = accidental_rate_estimate(events, cfg.coincidence)
        report["accidental_per_d0"] = acc.total_rate
        report["accidental_per_d0_err"] = math.sqrt(sum(e ** 2 for e in acc.rate_err.values()))
    except InsufficientDataError:
        report["accidental_per_d0"] = float("nan")
        report["accidental_per_d0_err"] = float("nan")
    hist.accidental_estimate = report["accidental_per_d0"]
    return {"report": report, "histogram": hist, "match": result}


def format_report(report: dict, provenance: str) -> str:
    def fmt(value):
        return f"{value:.10g}" if isinstance(value, float) and not math.isnan(value) else _fmt(value)

    lines = [f"# {provenance}"]
    lines += [f"{k} = {fmt(v)}" for k, v in report.items()]
    return "\n".join(lines) + "\n"


def cmd_analyze(events_path, config_path, out_path) -> int:
    cfg = _load_config(config_path)
    try:
        events = ingest_events(events_path)
    except EventFormatError as exc:
        _err(f"{events_path}: {exc}")
        return EXIT_IO
    try:
        out = analyze_events(events, cfg)
    except FitDegenerateError as exc:
        _err(str(exc))
        return EXIT_DEGENERATE
    out["histogram"].to_csv(out_path, comment=cfg.provenance())
    text = format_report(out["report"], cfg.provenance())
    with open(f"{out_path}.report", "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


# report

def read_report(path) -> dict:
    """Parse a ``key = value`` report; accepts the histogram path or the ``.report``."""
    path = os.fspath(path)
    if not path.endswith(".report") and os.path.exists(path + ".report"):
        path += ".report"
    with open(path, "r", encoding="ascii") as fh:
        text = fh.read()
    values = {}
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        key, _, raw = (p.strip() for p in line.partition("="))
        try:
            values[key] = float(raw)
        except ValueError:
            values[key] = {"true": True, "false": False}.get(raw, raw)
    return values


def evaluate_report(r: dict) -> list:
    """Rows of (criterion, threshold, value, passed) for one analysis."""
    factor = float(r.get("expected_factor", 1.0))
    v_min = V_INTERFERENCE_MIN * factor
    rows = []

    def row(name, threshold, value, ok):
        ok = bool(ok) and not (isinstance(value, float) and math.isnan(value))
        rows.append((name, threshold, value, ok))

    for key in ("V01", "V02"):
        val = float(r.get(key, math.nan))
        row(key, f">= {v_min:.4f}", val, val >= v_min)
    val = float(r.get("phase_error", math.nan))
    row("|phi02 - phi01 - pi|", f"<= {PHASE_ERROR_MAX}", val, val <= PHASE_ERROR_MAX)
    for key in ("V03", "V04", "V_sum12"):
        val = float(r.get(key, math.nan))
        row(key, f"<= {V_FLAT_MAX}", val, val <= V_FLAT_MAX)
    gap = float(r.get("mean_gap_ns", math.nan))
    expected = float(r.get("expected_gap_ns", math.nan))
    row("mean gap ns", f"{expected:.4f} +- {GAP_TOLERANCE_NS}", gap,
        abs(gap - expected) <= GAP_TOLERANCE_NS)
    return rows


def consistency_rows(a: dict, b: dict) -> list:
    """Visibility agreement between two analyses within combined 3 sigma."""
    rows = []
    for key in ("V01", "V02", "V03", "V04"):
        va, vb = float(a.get(key, math.nan)), float(b.get(key, math.nan))
        ea, eb = float(a.get(f"{key}_err", math.nan)), float(b.get(f"{key}_err", math.nan))
        bound = 3.0 * math.hypot(ea, eb)
        diff = abs(va - vb)
        ok = diff <= bound and not math.isnan(diff)
        rows.append((f"{key} repeat", f"<= {bound:.4g}", diff, ok))
    return rows


def cmd_report(paths) -> int:
    reports = []
    for path in paths:
        try:
            reports.append((path, read_report(path)))
        except OSError as exc:
            _err(f"cannot read analysis {path}: {exc.strerror or exc}")
            return EXIT_CONFIG
    lines = []
    width = 24
    for path, r in reports:
        tag = "corrections on" if r.get("corrections") is True else "corrections off"
        lines.append(f"analysis {path} ({tag}, expected factor {_fmt(r.get('expected_factor', 1.0))})")
        lines.append(f"  {'criterion':<{width}} {'threshold':<20} {'value':<12} result")
        for name, threshold, value, ok in evaluate_report(r):
            lines.append(f"  {name:<{width}} {threshold:<20} {_fmt(value):<12} "
                         f"{'PASS' if ok else 'FAIL'}")
    if len(reports) > 1:
        base_path, base = reports[0]
        for path, r in reports[1:]:
            lines.append(f"repeatability {base_path} vs {path}")
            for name, threshold, value, ok in consistency_rows(base, r):
                lines.append(f"  {name:<{width}} {threshold:<20} {_fmt(value):<12} "
                             f"{'PASS' if ok else 'FAIL'}")
    print("\n".join(lines))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biphoton-eraser",
                                     description="Delayed-choice quantum eraser simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("scan", help="write analytic R01..R04 curves")
    p.add_argument("config")
    p.add_argument("out")
    p = sub.add_parser("simulate", help="write a simulated event CSV")
    p.add_argument("config")
    p.add_argument("out")
    p.add_argument("--workers", type=int, default=None, help="threads for scan steps")
    p = sub.add_parser("analyze", help="match coincidences and fit fringes")
    p.add_argument("events")
    p.add_argument("config")
    p.add_argument("out")
    p = sub.add_parser("report", help="PASS/FAIL table over analysis outputs")
    p.add_argument("paths", nargs="+")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "scan":
            return cmd_scan(args.config, args.out)
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out, args.workers)
        if args.command == "analyze":
            return cmd_analyze(args.events, args.config, args.out)
        return cmd_report(args.paths)
    except (ConfigError, InvalidParameterError) as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except (OSError, EventFormatError) as exc:
        _err(f"I/O error: {exc}")
        return EXIT_IO
