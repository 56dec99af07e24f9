"""Acceptance suite: every numerically checkable contract at its stated
tolerance, one pass/fail line per criterion (run with -s to see them).

Shared protocol choices (documented where they matter):
  - decay experiments use initial data supported on the resolved part of the
    discrete spectrum; band-edge quasi-modes (k dx near pi) have artificially
    vanishing damping on any fixed grid and are excluded from initial data,
    not from the dynamics;
  - the polynomial-decay signature uses data at the regularity edge (modal
    energies ~ frequency^-3), for which the theoretical decay rate is sharp,
    with the spatial grid refined together with the mode bank so the resolved
    band actually widens;
  - the resolvent slope is measured on the peak envelope (resonant
    frequencies) over one decade ending at the resolved frequency c_min/dx.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from piezobeam.beam import BeamConfig, Grid, initial_condition_library
from piezobeam.cli import config_from_dict
from piezobeam.fractional import (
    FracParams,
    build_quadrature,
    caputo_via_modes,
    closed_form_moment,
    discrete_moment,
    reference_caputo,
)
from piezobeam.integrator import default_dt, run
from piezobeam.stability import (
    assemble_generator,
    estimate_loglog_slope,
    evaluate_functionals,
    feasible_lyapunov_constants,
    fit_decay,
    lyapunov_check,
    LyapunovSample,
    regularity_edge_state,
    resolved_initial_state,
    resolvent_sweep,
    resonant_frequencies,
    slope_window,
)

THERMAL_PRESET = config_from_dict({"preset": "paper-thermal"}).beam
NONTHERMAL_PRESET = config_from_dict({"preset": "paper-nonthermal"}).beam


def report(cid: str, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {cid}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"{cid} failed: {detail}"


def lsq_order(values) -> float:
    """Least-squares convergence order across successive halvings."""
    k = np.arange(len(values))
    return -float(np.polyfit(k, np.log2(values), 1)[0])


# --- criterion 1: kernel moment oracle ---------------------------------------


def test_criterion_1_kernel_moment_oracle():
    worst_err = 0.0
    worst_ratio = (0.5, None)
    ok = True
    for a in (0.3, 0.5, 0.7):
        for eta in (0.1, 1.0, 10.0):
            params = FracParams(a, eta, 1.0)
            ops = {n: build_quadrature(params, n) for n in (128, 256, 512)}
            for lam in (0.0, 1.0, 10.0):
                exact = closed_form_moment(a, eta, lam)
                errs = {n: abs(discrete_moment(op, lam) - exact) / exact
                        for n, op in ops.items()}
                worst_err = max(worst_err, errs[128])
                for r in (errs[256] / errs[128], errs[512] / errs[256]):
                    if abs(r - 0.5) > abs(worst_ratio[0] - 0.5):
                        worst_ratio = (r, (a, eta, lam))
                    ok = ok and 0.35 <= r <= 0.65
                ok = ok and errs[128] <= 0.01
    report(
        "C1 kernel moment oracle",
        ok,
        f"worst rel err at N=128: {worst_err:.2e} (<= 1e-2); "
        f"halving ratio farthest from 0.5: {worst_ratio[0]:.3f} in [0.35, 0.65]",
    )


# --- criterion 2: fractional-derivative cross-validation ----------------------


def test_criterion_2_cross_validation():
    dt = 5.0 / 2048.0
    t = np.arange(2049) * dt
    worst = 0.0
    for a in (0.3, 0.5, 0.7):
        for eta in (0.5, 1.0):
            params = FracParams(a, eta, 1.0)
            for f in (t, np.sin(t)):
                via = caputo_via_modes(f, dt, params, 128)
                ref = reference_caputo(f, dt, a, eta)
                worst = max(worst, float(np.linalg.norm(via - ref)
                                         / np.linalg.norm(ref)))
    tt = np.arange(1025) / 1024.0
    spot = caputo_via_modes(tt, tt[1], FracParams(0.5, 1e-3, 1.0), 128)[-1]
    spot_err = abs(spot - 2.0 / math.sqrt(math.pi)) / (2.0 / math.sqrt(math.pi))
    ok = worst <= 0.02 and spot_err <= 0.01
    report(
        "C2 fractional cross-validation",
        ok,
        f"worst rel L2 discrepancy {worst:.2e} (<= 2e-2); "
        f"half-derivative spot error {spot_err:.2e} (<= 1e-2)",
    )


# --- criterion 3: discrete dissipation law -------------------------------------


def test_criterion_3_dissipation_identity():
    details = []
    ok = True
    for cfg in (NONTHERMAL_PRESET, THERMAL_PRESET):
        grid = Grid(200, cfg.length)
        st = initial_condition_library("fundamental", cfg, grid, n_modes=64)
        dt0 = default_dt(cfg, grid)
        worst = []
        for k in range(3):
            res = run(cfg, grid, st, dt0 / 2**k, 0.5, report_every=1)
            worst.append(max(r.identity_residual for r in res.reports[1:]))
            energies = [r.energy for r in res.reports]
            ok = ok and all(b <= a + 1e-12 * max(1.0, a)
                            for a, b in zip(energies, energies[1:]))
        order = lsq_order(worst)
        label = "thermal" if cfg.thermal else "non-thermal"
        details.append(f"{label} order {order:.2f}")
        ok = ok and order >= 1.8
    report(
        "C3 dissipation identity",
        ok,
        "; ".join(details) + " (>= 1.8); energy non-increasing at every step",
    )


# --- criterion 4: conservative limit ---------------------------------------------


def test_criterion_4_conservative_limit():
    fp0 = FracParams(0.5, 1.0, 0.0)
    cfg = BeamConfig(rho=1.0, alpha=2.0, beta=1.0, gamma=1.0, mag_mu=1.0,
                     length=1.0, frac1=fp0, frac2=fp0)
    grid = Grid(100, 1.0)
    st = initial_condition_library("fundamental", cfg, grid, n_modes=16)
    dt0 = default_dt(cfg, grid)
    drifts = []
    for k in range(2):
        res = run(cfg, grid, st, dt0 / 2**k, 20.0, report_every=10**6)
        e0, e1 = res.reports[0].energy, res.reports[-1].energy
        drifts.append(abs(e1 - e0) / e0)
    # implicit midpoint conserves the discrete quadratic energy exactly, so
    # the drift sits at the roundoff floor; order-2 reduction is asserted
    # only when the drift is above that floor (see decisions ledger)
    floor = 1e-10
    at_floor = all(d <= floor for d in drifts)
    order_ok = at_floor or drifts[1] <= drifts[0] / 4.0 * 1.3
    ok = drifts[0] <= 1e-4 and order_ok
    report(
        "C4 conservative limit",
        ok,
        f"relative drift over [0,20]: {drifts[0]:.2e}, {drifts[1]:.2e} "
        f"(<= 1e-4; both at roundoff floor)" if at_floor else
        f"relative drifts {drifts[0]:.2e} -> {drifts[1]:.2e}",
    )


# --- criteria 5 and 8 share the thermal preset runs --------------------------------


class _Collector:
    def __init__(self, cfg, grid):
        self.cfg, self.grid = cfg, grid
        self.samples = []

    def __call__(self, t, state, rep):
        f = evaluate_functionals(self.cfg, self.grid, state)
        self.samples.append(
            LyapunovSample(t, rep.energy, f.i1, f.i2, f.i3, f.i4,
                           rep.identity_residual)
        )


@pytest.fixture(scope="module")
def thermal_runs():
    out = {}
    cfg = THERMAL_PRESET
    for n in (100, 200):
        grid = Grid(n, cfg.length)
        st = resolved_initial_state(cfg, grid, 128, omega_cut=40.0)
        dt = 0.5 * default_dt(cfg, grid)
        collector = _Collector(cfg, grid)
        res = run(cfg, grid, st, dt, 50.0, report_every=1, observers=[collector])
        out[n] = (res, collector.samples)
    return out


def test_criterion_5_thermal_exponential_decay(thermal_runs):
    fits = {}
    for n, (res, _) in thermal_runs.items():
        fits[n] = fit_decay(res.reports, (25.0, 50.0))
    omega_change = abs(fits[100].rate_omega - fits[200].rate_omega) / fits[200].rate_omega
    ok = (
        all(f.quality_exponential >= 0.99 for f in fits.values())
        and all(f.rate_omega > 0.0 for f in fits.values())
        and omega_change <= 0.10
    )
    report(
        "C5 thermal exponential decay",
        ok,
        f"R^2(n=100) = {fits[100].quality_exponential:.4f}, "
        f"R^2(n=200) = {fits[200].quality_exponential:.4f} (>= 0.99); "
        f"omega = {fits[100].rate_omega:.4f} / {fits[200].rate_omega:.4f}, "
        f"change {omega_change:.1%} (<= 10%)",
    )


def test_criterion_8_lyapunov_machinery(thermal_runs):
    cfg = THERMAL_PRESET
    _, samples = thermal_runs[100]
    lcfg = feasible_lyapunov_constants(cfg)
    rep = lyapunov_check(cfg, samples, lcfg)
    ok = rep.sandwich_ok and rep.fraction_satisfied >= 0.99
    report(
        "C8 Lyapunov machinery",
        ok,
        f"sandwich 0 < m1 = {rep.m1:.1f} <= m2 = {rep.m2:.1f} at every step; "
        f"derivative bound (N0 = {rep.n0:.3f}) satisfied on "
        f"{rep.fraction_satisfied:.2%} of steps (>= 99%)",
    )


# --- criterion 6: non-exponential signature ------------------------------------------


@pytest.fixture(scope="module")
def nonthermal_refinement_runs():
    cfg = NONTHERMAL_PRESET
    out = []
    for n, n_modes in ((50, 64), (100, 128), (200, 256)):
        grid = Grid(n, cfg.length)
        st = regularity_edge_state(cfg, grid, n_modes)
        res = run(cfg, grid, st, default_dt(cfg, grid), 60.0, report_every=5)
        out.append((n, n_modes, grid, res))
    return out


def test_criterion_6_polynomial_signature(nonthermal_refinement_runs):
    cfg = NONTHERMAL_PRESET
    rates = []
    for n, n_modes, grid, res in nonthermal_refinement_runs:
        rates.append(fit_decay(res.reports, (25.0, 60.0)).rate_omega)
    decreasing = all(b < a for a, b in zip(rates, rates[1:]))

    # power-law epoch of the finest level: up to where the decay saddle
    # leaves the resolved band (gamma ~ 0.68 / sqrt(omega) measured)
    n, n_modes, grid, res = nonthermal_refinement_runs[-1]
    epoch_hi = 3.0 * math.sqrt(0.5 * min(cfg.wave_speeds()) / grid.dx) / (2.0 * 0.68)
    fit = fit_decay(res.reports, (3.0, epoch_hi))
    poly_wins = fit.quality_polynomial >= fit.quality_exponential
    exponent_ok = 2.0 <= fit.exponent_p <= 6.0
    ok = decreasing and poly_wins and exponent_ok
    report(
        "C6 polynomial-decay signature",
        ok,
        f"fitted exp rates across (cells, modes) doubling: "
        f"{rates[0]:.3f} > {rates[1]:.3f} > {rates[2]:.3f}; "
        f"late window [3, {epoch_hi:.0f}]: R^2 poly {fit.quality_polynomial:.3f} >= "
        f"exp {fit.quality_exponential:.3f}, exponent {fit.exponent_p:.2f} in [2, 6]",
    )


# --- criterion 7: resolvent growth ---------------------------------------------------


def test_criterion_7_resolvent_growth():
    details = []
    ok = True
    for a in (0.3, 0.5, 0.7):
        fp = FracParams(a, 1.0, 1.0)
        cfg = BeamConfig(rho=1.0, alpha=2.0, beta=1.0, gamma=1.0, mag_mu=1.0,
                         length=1.0, frac1=fp, frac2=fp)
        grid = Grid(100, 1.0)
        gen = assemble_generator(cfg, grid, n_modes=128)
        window = slope_window(cfg, grid)
        peaks = resonant_frequencies(gen, window)
        norms = resolvent_sweep(gen, peaks)
        slope = estimate_loglog_slope(peaks, norms, window)
        zero_norm = resolvent_sweep(gen, [0.0])[0]
        # damped system: the imaginary axis stays in the resolvent set
        ok = ok and bool(np.all(np.isfinite(norms)))
        ok = ok and abs(slope - (1.0 - a)) <= 0.3 and np.isfinite(zero_norm)
        details.append(f"a={a}: slope {slope:.3f} (target {1.0 - a:.1f} +- 0.3), "
                       f"|R(0)| = {zero_norm:.2f}")
    report("C7 resolvent growth", ok, "; ".join(details))


# --- criterion 9: spatial convergence --------------------------------------------------


def _mms_orders(cfg) -> list[float]:
    L = cfg.length
    thermal = cfg.thermal
    Av, Ap, Ath = 1.0, 0.7, 0.5
    w1, w2, w3 = 2.3, 3.1, 1.7
    k = math.pi / L
    kth = 1.5 * math.pi / L

    def exact(x, t):
        V = Av * np.sin(k * x) ** 2 * np.cos(w1 * t)
        P = Ap * np.sin(k * x) ** 2 * np.cos(w2 * t)
        Th = Ath * np.cos(kth * x) * np.cos(w3 * t)
        return V, P, Th

    errs = []
    for n in (25, 50, 100, 200):
        grid = Grid(n, L)
        x = grid.x
        s2 = np.sin(k * x) ** 2
        c2 = np.cos(2.0 * k * x)
        sin2kx = np.sin(2.0 * k * x)
        cth, sth = np.cos(kth * x), np.sin(kth * x)

        def forcing(t):
            c1t, c2t, c3t = math.cos(w1 * t), math.cos(w2 * t), math.cos(w3 * t)
            vtt = -(w1**2) * Av * s2 * c1t
            ptt = -(w2**2) * Ap * s2 * c2t
            vxx = 2.0 * k**2 * Av * c2 * c1t
            pxx = 2.0 * k**2 * Ap * c2 * c2t
            fv = cfg.rho * vtt - cfg.alpha * vxx + cfg.gamma * cfg.beta * pxx
            fp_ = cfg.mag_mu * ptt - cfg.beta * pxx + cfg.gamma * cfg.beta * vxx
            fth = None
            if thermal:
                fv = fv + cfg.delta * (-kth * Ath * sth * c3t)
                tht = -w3 * Ath * cth * math.sin(w3 * t)
                thxx = -(kth**2) * Ath * cth * c3t
                vxt = -w1 * Av * k * sin2kx * math.sin(w1 * t)
                fth = cfg.c_heat * tht - cfg.kappa * thxx + cfg.delta * vxt
            return fv, fp_, fth

        V0, P0, Th0 = exact(x, 0.0)
        st = initial_condition_library("zero", cfg, grid, n_modes=16)
        theta0 = None
        if thermal:
            theta0 = Th0.copy()
            theta0[-1] = 0.0
        st = st.copy_with(v=V0, p=P0, theta=theta0)
        dt = default_dt(cfg, grid)
        n_steps = int(round(1.0 / dt))
        res = run(cfg, grid, st, 1.0 / n_steps, 1.0, forcing=forcing,
                  report_every=10**9)
        Ve, Pe, The = exact(x, res.t)
        err2 = grid.dx * np.sum((res.state.v - Ve) ** 2)
        err2 += grid.dx * np.sum((res.state.p - Pe) ** 2)
        if thermal:
            The = The.copy()
            The[-1] = 0.0
            err2 += grid.dx * np.sum((res.state.theta - The) ** 2)
        errs.append(math.sqrt(err2))
    return [float(np.log2(errs[i] / errs[i + 1])) for i in range(len(errs) - 1)]


def test_criterion_9_spatial_convergence():
    orders_nt = _mms_orders(NONTHERMAL_PRESET)
    orders_th = _mms_orders(THERMAL_PRESET)
    ok = all(1.8 <= o <= 2.2 for o in orders_nt + orders_th)
    report(
        "C9 spatial convergence",
        ok,
        f"manufactured-solution L2 orders: non-thermal "
        f"{[f'{o:.2f}' for o in orders_nt]}, thermal "
        f"{[f'{o:.2f}' for o in orders_th]} (2.0 +- 0.2)",
    )
