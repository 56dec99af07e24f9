"""Scenario configuration, orchestration, and the command-line interface.

Verbs: run <config>, validate-kernel <config>, analyze <run-dir>,
compare <dir-a> <dir-b>.  Exit codes: 0 pass, 1 invariant failure,
2 configuration error.  The PIEZOBEAM_OUTPUT_ROOT environment variable
overrides the root under which relative output directories are created.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import SCHEMA_VERSION
from .beam import (
    BeamConfig,
    Grid,
    initial_condition_library,
    load_snapshot,
    save_snapshot,
)
from .errors import ConfigError, InvariantViolation
from .fractional import (
    FracParams,
    build_quadrature,
    caputo_via_modes,
    closed_form_moment,
    discrete_moment,
    reference_caputo,
)
from .integrator import default_dt, run
from .stability import (
    LyapunovSample,
    assemble_generator,
    default_lambda_grid,
    estimate_loglog_slope,
    evaluate_functionals,
    feasible_lyapunov_constants,
    fit_decay,
    lyapunov_check,
    resolvent_sweep,
    resonant_frequencies,
    slope_window,
)
from . import reporting

OUTPUT_ROOT_ENV = "PIEZOBEAM_OUTPUT_ROOT"

_DEFAULT_CONFIG = {
    "schema_version": SCHEMA_VERSION,
    "beam": {
        "rho": 1.0,
        "alpha": 2.0,
        "beta": 1.0,
        "gamma": 1.0,
        "mag_mu": 1.0,
        "length": 1.0,
        "thermal": False,
        "delta": 0.0,
        "c_heat": 1.0,
        "kappa": 1.0,
        "frac1": {"a": 0.5, "eta": 1.0, "gain": 1.0},
        "frac2": {"a": 0.5, "eta": 1.0, "gain": 1.0},
    },
    "grid": {"n_cells": 100},
    "modes": {"n_modes": 128, "xi_max": None},
    "time": {"dt": None, "t_end": 50.0, "report_cadence": 1},
    "initial": {"name": "fundamental"},
    "analyses": {
        "energy_log": True,
        "decay_fit": False,
        "lyapunov": False,
        "resolvent": False,
        "kernel_validation": False,
    },
    "tolerances": {"identity_residual": None},
    "output": {"dir": "runs/scenario", "figures": True, "snapshot_final": True},
}

# The sources give no numeric material constants; these presets are declared
# artifact defaults (unit constants with alpha = 2, beta = gamma = 1).
PRESETS = {
    "paper-nonthermal": {
        "beam": {"thermal": False, "delta": 0.0},
        "analyses": {"energy_log": True, "decay_fit": True},
        "output": {"dir": "runs/paper-nonthermal"},
    },
    "paper-thermal": {
        "beam": {"thermal": True, "delta": 1.0, "c_heat": 1.0, "kappa": 1.0},
        "analyses": {"energy_log": True, "decay_fit": True, "lyapunov": True},
        "output": {"dir": "runs/paper-thermal"},
    },
}


# subtrees with either/or semantics are replaced, not merged
_REPLACE_KEYS = {"initial"}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in _REPLACE_KEYS and isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario: beam physics, grid, time window, analyses, output."""

    raw: dict

    @property
    def beam(self) -> BeamConfig:
        b = self.raw["beam"]
        return BeamConfig(
            rho=b["rho"],
            alpha=b["alpha"],
            beta=b["beta"],
            gamma=b["gamma"],
            mag_mu=b["mag_mu"],
            length=b["length"],
            thermal=b["thermal"],
            delta=b["delta"],
            c_heat=b["c_heat"],
            kappa=b["kappa"],
            frac1=FracParams(**b["frac1"]),
            frac2=FracParams(**b["frac2"]),
        )

    @property
    def grid(self) -> Grid:
        return Grid(self.raw["grid"]["n_cells"], self.raw["beam"]["length"])

    @property
    def n_modes(self) -> int:
        return self.raw["modes"]["n_modes"]

    @property
    def xi_max(self):
        return self.raw["modes"]["xi_max"]

    @property
    def analyses(self) -> dict:
        return self.raw["analyses"]

    @property
    def output_dir(self) -> Path:
        path = Path(self.raw["output"]["dir"])
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not path.is_absolute():
            path = Path(root) / path
        return path

    def dt(self) -> float:
        configured = self.raw["time"]["dt"]
        return configured if configured is not None else default_dt(self.beam, self.grid)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def _validate_raw(raw: dict) -> list[str]:
    errs: list[str] = []
    version = str(raw.get("schema_version", SCHEMA_VERSION))
    if version.split(".")[0] != SCHEMA_VERSION.split(".")[0]:
        errs.append(f"schema_version: unsupported major version {version!r}")
    b = raw["beam"]
    for fr in ("frac1", "frac2"):
        a = b[fr]["a"]
        if not 0.0 < a < 1.0:
            errs.append(f"beam.{fr}.a: fractional order must lie in (0,1), got {a}")
        if b[fr]["eta"] <= 0.0:
            errs.append(f"beam.{fr}.eta: must be > 0 (the damping bound uses eta^(a-1))")
        if b[fr]["gain"] < 0.0:
            errs.append(f"beam.{fr}.gain: must be >= 0")
    for name in ("rho", "alpha", "beta", "mag_mu", "length"):
        if b[name] <= 0.0:
            errs.append(f"beam.{name}: must be > 0")
    if b["alpha"] - b["gamma"] ** 2 * b["beta"] <= 0.0:
        errs.append("beam.alpha: alpha - gamma^2*beta must be > 0 (effective stiffness)")
    if b["thermal"]:
        if b["delta"] < 0.0:
            errs.append("beam.delta: must be >= 0")
        if b["c_heat"] <= 0.0:
            errs.append("beam.c_heat: must be > 0")
        if b["kappa"] <= 0.0:
            errs.append("beam.kappa: must be > 0")
    if raw["grid"]["n_cells"] < 8:
        errs.append("grid.n_cells: must be >= 8")
    if raw["modes"]["n_modes"] < 2:
        errs.append("modes.n_modes: must be >= 2")
    t = raw["time"]
    if t["dt"] is not None and t["dt"] <= 0.0:
        errs.append("time.dt: must be > 0 (or null for the default rule)")
    if t["t_end"] < 0.0:
        errs.append("time.t_end: must be >= 0")
    if t["report_cadence"] < 1:
        errs.append("time.report_cadence: must be >= 1")
    init = raw["initial"]
    if ("name" in init) == ("snapshot" in init):
        errs.append("initial: exactly one of 'name' or 'snapshot' is required")
    if "snapshot" in init and not Path(init["snapshot"]).exists():
        errs.append(f"initial.snapshot: path {init['snapshot']!r} does not exist")
    if raw["analyses"]["lyapunov"] and not b["thermal"]:
        errs.append("analyses.lyapunov: requires beam.thermal = true")
    tol = raw["tolerances"]["identity_residual"]
    if tol is not None and tol <= 0.0:
        errs.append("tolerances.identity_residual: must be > 0 or null")
    return errs


def config_from_dict(data: dict) -> ScenarioConfig:
    """Expand preset, fill defaults, validate; all failures reported at once."""
    data = copy.deepcopy(data)
    preset = data.pop("preset", None)
    base = _DEFAULT_CONFIG
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; pick one of {sorted(PRESETS)}")
        base = _deep_merge(base, PRESETS[preset])
    raw = _deep_merge(base, data)
    errs = _validate_raw(raw)
    if errs:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errs))
    return ScenarioConfig(raw=raw)


def load_config(path) -> ScenarioConfig:
    """Load and validate a JSON scenario file."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: JSON parse error at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return config_from_dict(data)


# --- kernel validation suite -------------------------------------------------

KERNEL_ORDERS = (0.3, 0.5, 0.7)
KERNEL_ETAS = (0.1, 1.0, 10.0)
KERNEL_SHIFTS = (0.0, 1.0, 10.0)
MOMENT_TOL = 0.01
HALVING_BAND = (0.35, 0.65)
CROSS_TOL = 0.02
SPOT_TOL = 0.01


def kernel_validation_suite(scenario: ScenarioConfig | None = None) -> dict:
    """Oracle suite for the diffusive kernel; returns a JSON-ready report.

    Checks the discrete moment against the closed form on the reference
    (a, eta, lambda) grid, the error-halving behavior under node doubling,
    the convolution cross-validation, and the analytic spot value.
    """
    failures = []
    moment_cases = []
    for a in KERNEL_ORDERS:
        for eta in KERNEL_ETAS:
            params = FracParams(a, eta, 1.0)
            ops = {n: build_quadrature(params, n) for n in (128, 256, 512)}
            for lam in KERNEL_SHIFTS:
                exact = closed_form_moment(a, eta, lam)
                errs = {
                    n: abs(discrete_moment(op, lam) - exact) / exact
                    for n, op in ops.items()
                }
                ratios = [errs[256] / errs[128], errs[512] / errs[256]]
                ok = errs[128] <= MOMENT_TOL and all(
                    HALVING_BAND[0] <= r <= HALVING_BAND[1] for r in ratios
                )
                moment_cases.append(
                    {
                        "a": a,
                        "eta": eta,
                        "lambda": lam,
                        "rel_error_n128": errs[128],
                        "halving_ratios": ratios,
                        "ok": ok,
                    }
                )
                if not ok:
                    failures.append(
                        f"moment check failed at a={a}, eta={eta}, lambda={lam}"
                    )
    t = np.arange(2049) * (5.0 / 2048.0)
    cross_cases = []
    for a in KERNEL_ORDERS:
        for eta in (0.5, 1.0):
            params = FracParams(a, eta, 1.0)
            for name, f in (("t", t), ("sin t", np.sin(t))):
                via = caputo_via_modes(f, t[1], params, 128)
                ref = reference_caputo(f, t[1], a, eta)
                rel = float(np.linalg.norm(via - ref) / np.linalg.norm(ref))
                ok = rel <= CROSS_TOL
                cross_cases.append(
                    {"a": a, "eta": eta, "f": name, "rel_l2": rel, "ok": ok}
                )
                if not ok:
                    failures.append(
                        f"cross-validation failed at a={a}, eta={eta}, f={name}"
                    )
    # half derivative of t at t=1 in the vanishing-weight limit
    tt = np.arange(1025) / 1024.0
    spot = caputo_via_modes(tt, tt[1], FracParams(0.5, 1e-3, 1.0), 128)[-1]
    spot_exact = 2.0 / math.sqrt(math.pi)
    spot_err = abs(spot - spot_exact) / spot_exact
    if spot_err > SPOT_TOL:
        failures.append(f"spot value 2/sqrt(pi) missed by {spot_err:.3%}")
    report = {
        "moment_cases": moment_cases,
        "cross_validation": cross_cases,
        "spot_value": {"value": spot, "exact": spot_exact, "rel_error": spot_err,
                       "ok": spot_err <= SPOT_TOL},
        "failures": failures,
        "ok": not failures,
    }
    return report


# --- scenario orchestration --------------------------------------------------


class _SampleCollector:
    """Observer storing full Lyapunov samples at the report cadence."""

    def __init__(self, cfg, grid):
        self.cfg, self.grid = cfg, grid
        self.samples: list[LyapunovSample] = []

    def __call__(self, t, state, report):
        f = evaluate_functionals(self.cfg, self.grid, state)
        self.samples.append(
            LyapunovSample(t, report.energy, f.i1, f.i2, f.i3, f.i4,
                           report.identity_residual)
        )


def run_scenario(scenario: ScenarioConfig) -> int:
    """Execute the configured pipeline; returns the process exit code.

    Writes energy.csv, analysis.json, optional snapshots, figures, and a
    machine-readable failure manifest when any invariant check fails.
    """
    cfg = scenario.beam
    grid = scenario.grid
    out = scenario.output_dir
    out.mkdir(parents=True, exist_ok=True)
    reporting.write_json(out / "config.json", scenario.to_dict())

    analyses = scenario.analyses
    failures: list[str] = []
    analysis: dict = {"schema_version": reporting.ANALYSIS_SCHEMA_VERSION}

    if analyses["kernel_validation"]:
        kernel = kernel_validation_suite(scenario)
        analysis["kernel_validation"] = kernel
        reporting.write_json(out / "kernel_validation.json", kernel)
        for tag, params in (("damper1", cfg.frac1), ("damper2", cfg.frac2)):
            op = build_quadrature(params, scenario.n_modes, xi_max=scenario.xi_max)
            reporting.write_modes_csv(out / f"modes_{tag}.csv", op)
        failures.extend(kernel["failures"])
        if scenario.raw["output"]["figures"]:
            ns = [128, 256, 512]
            errs = {}
            for a in KERNEL_ORDERS:
                params = FracParams(a, 1.0, 1.0)
                exact = closed_form_moment(a, 1.0, 0.0)
                errs[f"a={a}"] = [
                    abs(discrete_moment(build_quadrature(params, n), 0.0) - exact) / exact
                    for n in ns
                ]
            reporting.fig_kernel(out / "kernel_validation.png", ns, errs)

    needs_sim = (
        analyses["energy_log"]
        or analyses["decay_fit"]
        or analyses["lyapunov"]
        or scenario.raw["output"]["snapshot_final"]
    )
    reports = None
    if needs_sim:
        init = scenario.raw["initial"]
        if "name" in init:
            state = initial_condition_library(
                init["name"], cfg, grid, scenario.n_modes, xi_max=scenario.xi_max
            )
            t0 = 0.0
        else:
            state, t0 = load_snapshot(
                init["snapshot"], cfg, grid, scenario.n_modes, xi_max=scenario.xi_max
            )
        dt = scenario.dt()
        t_end = scenario.raw["time"]["t_end"]
        cadence = scenario.raw["time"]["report_cadence"]
        observers = []
        collector = None
        if analyses["lyapunov"]:
            collector = _SampleCollector(cfg, grid)
            observers.append(collector)
        try:
            result = run(
                cfg, grid, state, dt, t0 + t_end,
                report_every=cadence, observers=observers, t0=t0,
            )
        except InvariantViolation as exc:
            failures.append(f"energy monotonicity violated: {exc}")
            _finalize(out, analysis, failures)
            return 1
        reports = result.reports
        reporting.write_energy_csv(out / "energy.csv", reports)
        res_tol = scenario.raw["tolerances"]["identity_residual"]
        if res_tol is not None:
            worst = max(r.identity_residual for r in reports[1:]) if len(reports) > 1 else 0.0
            analysis["max_identity_residual"] = worst
            if worst > res_tol:
                failures.append(
                    f"identity residual {worst:.3e} exceeds tolerance {res_tol:.3e}"
                )
        if scenario.raw["output"]["snapshot_final"]:
            save_snapshot(out / "final_state.csv", result.state, grid, result.t)

        fit = None
        if analyses["decay_fit"]:
            window = (max(t0 + 0.5 * t_end, 1e-9), t0 + t_end)
            try:
                fit = fit_decay(reports, window)
                analysis["decay"] = {
                    "model": fit.model,
                    "rate_omega": fit.rate_omega,
                    "exponent_p": fit.exponent_p,
                    "quality_exponential": fit.quality_exponential,
                    "quality_polynomial": fit.quality_polynomial,
                    "window": list(fit.window),
                    "n_samples": fit.n_samples,
                }
            except ValueError as exc:
                failures.append(f"decay fit failed: {exc}")
        if analyses["lyapunov"]:
            reporting.write_lyapunov_csv(out / "lyapunov.csv", collector.samples)
            try:
                lcfg = feasible_lyapunov_constants(cfg)
                rep = lyapunov_check(cfg, collector.samples, lcfg)
                analysis["lyapunov"] = _lyapunov_payload(rep)
                if not rep.sandwich_ok:
                    failures.append(
                        f"Lyapunov sandwich violated (m1={rep.m1:g}, m2={rep.m2:g})"
                    )
                if rep.fraction_satisfied < 0.99:
                    failures.append(
                        "Lyapunov derivative bound satisfied on only "
                        f"{rep.fraction_satisfied:.1%} of steps (need 99%)"
                    )
                if scenario.raw["output"]["figures"]:
                    s = collector.samples
                    ts = [x.t for x in s if x.energy > 0]
                    ratios = [
                        (lcfg.n * x.energy + lcfg.n1 * x.i1 + lcfg.n2 * x.i2
                         + lcfg.n3 * x.i3 + lcfg.n4 * x.i4) / x.energy
                        for x in s
                        if x.energy > 0
                    ]
                    reporting.fig_lyapunov(out / "lyapunov.png", ts, ratios, rep.m1, rep.m2)
            except ConfigError as exc:
                failures.append(f"Lyapunov check failed: {exc}")
        if scenario.raw["output"]["figures"] and reports is not None:
            reporting.fig_energy(out / "energy.png", reports, fit=fit)

    if analyses["resolvent"]:
        gen = assemble_generator(cfg, grid, scenario.n_modes, xi_max=scenario.xi_max)
        lams = default_lambda_grid(cfg, grid)
        norms = resolvent_sweep(gen, lams)
        reporting.write_resolvent_csv(out / "resolvent.csv", lams, norms)
        window = slope_window(cfg, grid)
        peaks = resonant_frequencies(gen, window)
        peak_norms = resolvent_sweep(gen, peaks)
        norm_at_zero = float(resolvent_sweep(gen, [0.0])[0])
        analysis["resolvent"] = [
            {"lambda": float(l), "norm": float(n)} for l, n in zip(lams, norms)
        ]
        growth = {"norm_at_zero": norm_at_zero, "window": list(window)}
        if not np.isfinite(norm_at_zero):
            failures.append("resolvent norm at lambda=0 is not finite")
        try:
            growth["slope"] = estimate_loglog_slope(peaks, peak_norms, window)
        except ValueError as exc:
            failures.append(f"resolvent slope estimation failed: {exc}")
        analysis["resolvent_growth"] = growth
        if scenario.raw["output"]["figures"]:
            reporting.fig_resolvent(
                out / "resolvent.png", lams, norms, peaks, peak_norms,
                growth.get("slope"), window,
            )

    return _finalize(out, analysis, failures)


def _lyapunov_payload(rep) -> dict:
    lc = rep.constants
    return {
        "m1": rep.m1,
        "m2": rep.m2,
        "n0": rep.n0,
        "lambdas": list(rep.lambdas),
        "fraction_satisfied": rep.fraction_satisfied,
        "n_pairs": rep.n_pairs,
        "sandwich_ok": rep.sandwich_ok,
        "constants": {
            "N": lc.n, "N1": lc.n1, "N2": lc.n2, "N3": lc.n3, "N4": lc.n4,
            "eta1": lc.eta1, "eta2": lc.eta2, "eta3": lc.eta3, "eta4": lc.eta4,
            "Cp": lc.cp, "M": lc.m_bound,
        },
    }


def _finalize(out: Path, analysis: dict, failures: list[str]) -> int:
    analysis["failures"] = failures
    analysis["ok"] = not failures
    reporting.write_json(out / "analysis.json", analysis)
    if failures:
        reporting.write_json(
            out / "failure_manifest.json",
            {"schema_version": reporting.ANALYSIS_SCHEMA_VERSION, "failures": failures},
        )
        for f in failures:
            print(f"FAIL: {f}", file=sys.stderr)
        return 1
    return 0


# --- run comparison ----------------------------------------------------------


def compare_runs(dir_a, dir_b, tolerances: dict | None = None) -> dict:
    """Column-wise deviations between two runs' energy logs.

    Raises ConfigError on schema mismatch; tolerances map column names to
    maximal allowed absolute deviation.
    """
    ea = reporting.read_energy_csv(Path(dir_a) / "energy.csv")
    eb = reporting.read_energy_csv(Path(dir_b) / "energy.csv")
    if set(ea) != set(eb):
        raise ConfigError("energy logs have different columns")
    n = min(len(ea["t"]), len(eb["t"]))
    if len(ea["t"]) != len(eb["t"]):
        note = f"row counts differ ({len(ea['t'])} vs {len(eb['t'])}); compared first {n}"
    else:
        note = None
    report: dict = {"columns": {}, "ok": True}
    if note:
        report["note"] = note
    tolerances = tolerances or {}
    for col in ea:
        va, vb = ea[col][:n], eb[col][:n]
        max_abs = float(np.max(np.abs(va - vb))) if n else 0.0
        scale = float(np.max(np.abs(va))) if n else 0.0
        entry = {
            "max_abs_deviation": max_abs,
            "max_rel_deviation": max_abs / scale if scale > 0 else 0.0,
        }
        tol = tolerances.get(col)
        if tol is not None:
            entry["tolerance"] = tol
            entry["ok"] = max_abs <= tol
            report["ok"] = report["ok"] and entry["ok"]
        report["columns"][col] = entry
    return report


# --- entry point --------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="piezobeam",
        description="Simulation and stability lab for a fractionally damped "
        "piezoelectric beam",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("config", help="JSON scenario file")
    p_run.add_argument("--out", help="override the output directory")

    p_val = sub.add_parser("validate-kernel", help="run the kernel oracle suite")
    p_val.add_argument("config", help="JSON scenario file")
    p_val.add_argument("--out", help="override the output directory")

    p_an = sub.add_parser("analyze", help="re-run analyses on an existing run dir")
    p_an.add_argument("run_dir", help="directory produced by 'run'")

    p_cmp = sub.add_parser("compare", help="diff two run directories")
    p_cmp.add_argument("dir_a")
    p_cmp.add_argument("dir_b")
    p_cmp.add_argument(
        "--tol",
        action="append",
        default=[],
        metavar="COL=VALUE",
        help="per-column absolute tolerance (repeatable)",
    )
    return parser


def _cmd_run(args, kernel_only: bool = False) -> int:
    scenario = load_config(args.config)
    raw = scenario.to_dict()
    if args.out:
        raw["output"]["dir"] = args.out
    if kernel_only:
        raw["analyses"] = {
            "energy_log": False,
            "decay_fit": False,
            "lyapunov": False,
            "resolvent": False,
            "kernel_validation": True,
        }
        raw["output"]["snapshot_final"] = False
    scenario = config_from_dict(raw)
    return run_scenario(scenario)


def _cmd_analyze(args) -> int:
    run_dir = Path(args.run_dir)
    cfg_path = run_dir / "config.json"
    if not cfg_path.exists():
        raise ConfigError(f"{run_dir} has no config.json")
    scenario = load_config(cfg_path)
    cfg, grid = scenario.beam, scenario.grid
    analysis: dict = {"schema_version": reporting.ANALYSIS_SCHEMA_VERSION}
    failures: list[str] = []
    energy_path = run_dir / "energy.csv"
    fit = None
    if energy_path.exists():
        data = reporting.read_energy_csv(energy_path)
        series = list(zip(data["t"], data["energy"]))
        t_lo = max(data["t"][0] + 0.5 * (data["t"][-1] - data["t"][0]), 1e-9)
        try:
            fit = fit_decay(series, (t_lo, float(data["t"][-1])))
            analysis["decay"] = {
                "model": fit.model,
                "rate_omega": fit.rate_omega,
                "exponent_p": fit.exponent_p,
                "quality_exponential": fit.quality_exponential,
                "quality_polynomial": fit.quality_polynomial,
                "window": list(fit.window),
                "n_samples": fit.n_samples,
            }
        except ValueError as exc:
            failures.append(f"decay fit failed: {exc}")
    lyap_path = run_dir / "lyapunov.csv"
    if lyap_path.exists():
        samples = reporting.read_lyapunov_csv(lyap_path)
        try:
            lcfg = feasible_lyapunov_constants(cfg)
            rep = lyapunov_check(cfg, samples, lcfg)
            analysis["lyapunov"] = _lyapunov_payload(rep)
            if not rep.sandwich_ok:
                failures.append("Lyapunov sandwich violated")
        except ConfigError as exc:
            failures.append(f"Lyapunov check failed: {exc}")
    analysis["failures"] = failures
    analysis["ok"] = not failures
    reporting.write_json(run_dir / "analysis.json", analysis)
    print(json.dumps(analysis, indent=2, sort_keys=True))
    return 0 if not failures else 1


def _cmd_compare(args) -> int:
    tolerances = {}
    for item in args.tol:
        if "=" not in item:
            raise ConfigError(f"--tol expects COL=VALUE, got {item!r}")
        col, val = item.split("=", 1)
        tolerances[col] = float(val)
    report = compare_runs(args.dir_a, args.dir_b, tolerances)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0 if report["ok"] else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "validate-kernel":
            return _cmd_run(args, kernel_only=True)
        if args.command == "analyze":
            return _cmd_analyze(args)
        if args.command == "compare":
            return _cmd_compare(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
