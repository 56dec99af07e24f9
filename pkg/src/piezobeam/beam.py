"""Physical configuration, spatial grid, augmented state, and semi-discrete
right-hand sides for the damped piezoelectric beam, with and without the
Fourier heat coupling.

Spatial scheme: second-order centered differences with ghost-node closures.
At x = L the boundary gradients come from the 2x2 Robin solve fed by the
damper outputs; at x = 0 the temperature ghost enforces theta_x = 0 by
mirror symmetry.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, SnapshotError
from .fractional import DiffusiveOperator, FracParams, build_quadrature, read_output

__all__ = [
    "BeamConfig",
    "Grid",
    "BeamState",
    "BeamRhs",
    "solve_boundary_gradients",
    "rhs_nonthermal",
    "rhs_thermal",
    "initial_condition_library",
    "INITIAL_CONDITIONS",
    "save_snapshot",
    "load_snapshot",
]


@dataclass(frozen=True)
class BeamConfig:
    """All physical and damping parameters of one scenario.

    The effective stiffness alpha1 = alpha - gamma**2 * beta must be
    positive; it is also the determinant factor of the boundary matrix.
    When ``thermal`` is false the heat parameters are ignored.
    """

    rho: float
    alpha: float
    beta: float
    gamma: float
    mag_mu: float
    length: float
    frac1: FracParams
    frac2: FracParams
    thermal: bool = False
    delta: float = 0.0
    c_heat: float = 1.0
    kappa: float = 1.0

    def __post_init__(self) -> None:
        problems = self.validation_errors()
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def alpha1(self) -> float:
        return self.alpha - self.gamma**2 * self.beta

    def validation_errors(self) -> list[str]:
        errs = []
        for name in ("rho", "alpha", "beta", "mag_mu", "length"):
            if getattr(self, name) <= 0.0:
                errs.append(f"{name} must be > 0")
        if self.alpha - self.gamma**2 * self.beta <= 0.0:
            errs.append("alpha - gamma^2*beta must be > 0 (effective stiffness alpha1)")
        if self.thermal:
            if self.delta < 0.0:
                errs.append("delta must be >= 0")
            if self.c_heat <= 0.0:
                errs.append("c_heat must be > 0")
            if self.kappa <= 0.0:
                errs.append("kappa must be > 0")
        return errs

    def wave_speeds(self) -> tuple[float, float]:
        return (np.sqrt(self.alpha / self.rho), np.sqrt(self.beta / self.mag_mu))

    def boundary_matrix(self) -> np.ndarray:
        gb = self.gamma * self.beta
        return np.array([[self.alpha, -gb], [-gb, self.beta]])


@dataclass(frozen=True)
class Grid:
    """Uniform node grid x_j = j*dx on [0, L]."""

    n_cells: int
    length: float

    def __post_init__(self) -> None:
        if self.n_cells < 8:
            raise ConfigError(f"n_cells must be >= 8, got {self.n_cells}")
        if self.length <= 0.0:
            raise ConfigError("length must be > 0")

    @property
    def dx(self) -> float:
        return self.length / self.n_cells

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n_nodes)


@dataclass(frozen=True)
class BeamState:
    """Full augmented state on the node grid at one time.

    Arrays have length n_cells + 1.  Dirichlet values v[0] = p[0] = 0 and,
    for thermal states, theta[-1] = 0 are enforced on construction.
    """

    v: np.ndarray
    v_t: np.ndarray
    p: np.ndarray
    p_t: np.ndarray
    damper1: DiffusiveOperator
    damper2: DiffusiveOperator
    theta: np.ndarray | None = None

    def __post_init__(self) -> None:
        n = len(self.v)
        for name in ("v_t", "p", "p_t"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must have the same length as v")
        if self.theta is not None and len(self.theta) != n:
            raise ValueError("theta must have the same length as v")
        if self.v[0] != 0.0 or self.p[0] != 0.0 or self.v_t[0] != 0.0 or self.p_t[0] != 0.0:
            raise ValueError("Dirichlet values at x=0 must vanish")
        if self.theta is not None and self.theta[-1] != 0.0:
            raise ValueError("theta must vanish at x=L")

    @property
    def thermal(self) -> bool:
        return self.theta is not None

    def copy_with(self, **kw) -> "BeamState":
        return replace(self, **kw)


class BeamRhs(NamedTuple):
    """Time derivatives of the nodal fields (entries at x=0 are zero)."""

    v: np.ndarray
    v_t: np.ndarray
    p: np.ndarray
    p_t: np.ndarray
    theta: np.ndarray | None = None


def solve_boundary_gradients(cfg: BeamConfig, o1: float, o2: float) -> tuple[float, float]:
    """Boundary gradients (V_x(L), P_x(L)) from the 2x2 Robin system.

    Solves [[alpha, -gamma*beta], [-gamma*beta, beta]] (vx, px) =
    (-l1*o1, -l2*o2); the determinant beta*alpha1 is positive by config
    invariant, so the solve cannot fail.
    """
    rhs = np.array([-cfg.frac1.gain * o1, -cfg.frac2.gain * o2])
    vx, px = np.linalg.solve(cfg.boundary_matrix(), rhs)
    return float(vx), float(px)


def _second_diff(u: np.ndarray, dx: float) -> np.ndarray:
    """Centered second difference on interior nodes (zeros at both ends)."""
    out = np.zeros_like(u)
    out[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / dx**2
    return out


def _boundary_second_diff(u: np.ndarray, ux_L: float, dx: float) -> float:
    """Ghost-node closure at x=L: centered u_xx using u_x(L) = ux_L."""
    return 2.0 * (u[-2] - u[-1] + dx * ux_L) / dx**2


def rhs_nonthermal(cfg: BeamConfig, grid: Grid, state: BeamState) -> BeamRhs:
    """Semi-discrete right-hand side of the non-thermal augmented system.

    Interior nodes use centered differences; the x = L rows use the ghost
    closure with the gradients returned by solve_boundary_gradients, fed by
    the current damper outputs.  Modal states are advanced separately.
    """
    dx = grid.dx
    gb = cfg.gamma * cfg.beta
    o1 = read_output(state.damper1)
    o2 = read_output(state.damper2)
    vx_L, px_L = solve_boundary_gradients(cfg, o1, o2)

    vxx = _second_diff(state.v, dx)
    pxx = _second_diff(state.p, dx)
    vxx[-1] = _boundary_second_diff(state.v, vx_L, dx)
    pxx[-1] = _boundary_second_diff(state.p, px_L, dx)

    dv_t = (cfg.alpha * vxx - gb * pxx) / cfg.rho
    dp_t = (cfg.beta * pxx - gb * vxx) / cfg.mag_mu
    dv = state.v_t.copy()
    dp = state.p_t.copy()
    dv[0] = dp[0] = dv_t[0] = dp_t[0] = 0.0
    return BeamRhs(v=dv, v_t=dv_t, p=dp, p_t=dp_t)


def rhs_thermal(cfg: BeamConfig, grid: Grid, state: BeamState) -> BeamRhs:
    """Semi-discrete right-hand side with the Fourier heat coupling.

    Adds -(delta/rho) theta_x to the velocity equation and evolves theta by
    c theta_t = kappa theta_xx - delta v_xt, with a mirror ghost at x = 0
    (theta_x = 0) and Dirichlet theta(L) = 0.
    """
    if not cfg.thermal:
        raise ConfigError("rhs_thermal requires a config with thermal=True")
    if state.theta is None:
        raise ValueError("state has no temperature field")
    dx = grid.dx
    th = state.theta
    base = rhs_nonthermal(cfg, grid, state)

    # temperature gradient seen by the velocity equation: centered inside,
    # one-sided cell gradient at x=L (theta(L)=0 folded in)
    thx = np.zeros_like(th)
    thx[1:-1] = (th[2:] - th[:-2]) / (2.0 * dx)
    thx[-1] = (th[-1] - th[-2]) / dx
    dv_t = base.v_t - (cfg.delta / cfg.rho) * thx
    dv_t[0] = 0.0

    thxx = _second_diff(th, dx)
    thxx[0] = 2.0 * (th[1] - th[0]) / dx**2  # mirror ghost, theta_x(0)=0
    vtx = np.zeros_like(th)
    vtx[0] = (state.v_t[1] - state.v_t[0]) / dx
    vtx[1:-1] = (state.v_t[2:] - state.v_t[:-2]) / (2.0 * dx)
    dth = (cfg.kappa * thxx - cfg.delta * vtx) / cfg.c_heat
    dth[-1] = 0.0  # Dirichlet at x=L
    return BeamRhs(v=base.v, v_t=dv_t, p=base.p, p_t=base.p_t, theta=dth)


def _fresh_dampers(cfg: BeamConfig, n_modes: int, xi_max: float | None):
    d1 = build_quadrature(cfg.frac1, n_modes, xi_max=xi_max)
    d2 = build_quadrature(cfg.frac2, n_modes, xi_max=xi_max)
    return d1, d2


def _zero(cfg, grid, d1, d2):
    z = np.zeros(grid.n_nodes)
    theta = np.zeros(grid.n_nodes) if cfg.thermal else None
    return BeamState(v=z.copy(), v_t=z.copy(), p=z.copy(), p_t=z.copy(),
                     damper1=d1, damper2=d2, theta=theta)


def _fundamental(cfg, grid, d1, d2):
    x = grid.x
    arg = np.pi * x / (2.0 * grid.length)
    z = np.zeros(grid.n_nodes)
    theta = np.cos(arg) if cfg.thermal else None
    if theta is not None:
        theta[-1] = 0.0
    return BeamState(v=np.sin(arg), v_t=z.copy(), p=z.copy(), p_t=z.copy(),
                     damper1=d1, damper2=d2, theta=theta)


def _excited(cfg, grid, d1, d2):
    # nonzero velocities for functional/quadrature cross checks; boundary
    # compatible: zero slope of v and p at x=L, Dirichlet at x=0
    x = grid.x
    L = grid.length
    v = np.sin(np.pi * x / (2.0 * L))
    p = 0.5 * (1.0 - np.cos(np.pi * x / L))
    v_t = np.sin(np.pi * x / L)
    p_t = np.sin(3.0 * np.pi * x / (2.0 * L))
    v_t[0] = p_t[0] = 0.0
    theta = None
    if cfg.thermal:
        theta = np.cos(np.pi * x / (2.0 * L))
        theta[-1] = 0.0
    return BeamState(v=v, v_t=v_t, p=p, p_t=p_t, damper1=d1, damper2=d2, theta=theta)


INITIAL_CONDITIONS = {
    "zero": _zero,
    "fundamental": _fundamental,
    "excited": _excited,
}


def initial_condition_library(
    name: str,
    cfg: BeamConfig,
    grid: Grid,
    n_modes: int = 128,
    xi_max: float | None = None,
) -> BeamState:
    """Boundary-compatible initial states with zero damper modes.

    Known names: 'zero', 'fundamental' (V0 = sin(pi x / 2L), rest at rest,
    theta0 = cos(pi x / 2L)) and 'excited' (nonzero velocities).  Damper
    modes always start at zero; there is no way to seed them here.
    """
    try:
        maker = INITIAL_CONDITIONS[name]
    except KeyError:
        raise ConfigError(
            f"unknown initial condition {name!r}; pick one of {sorted(INITIAL_CONDITIONS)}"
        ) from None
    d1, d2 = _fresh_dampers(cfg, n_modes, xi_max)
    return maker(cfg, grid, d1, d2)


# --- snapshots -----------------------------------------------------------

_SNAPSHOT_MAGIC = "# piezobeam-snapshot v1"


def _fmt(x: float) -> str:
    return repr(float(x))


def save_snapshot(path, state: BeamState, grid: Grid, t: float) -> None:
    """Write a restartable CSV snapshot: nodal fields plus modal vectors.

    Floats are written with round-trip precision so a reload is bit-exact.
    """
    n = len(state.v)
    lines = [_SNAPSHOT_MAGIC]
    lines.append(f"# t = {_fmt(t)}")
    lines.append(f"# thermal = {int(state.thermal)}")
    lines.append(f"# n_nodes = {n}")
    lines.append(f"# n_modes = {state.damper1.n_modes}")
    cols = "x,v,v_t,p,p_t" + (",theta" if state.thermal else "")
    lines.append(cols)
    xs = grid.x
    for j in range(n):
        row = [xs[j], state.v[j], state.v_t[j], state.p[j], state.p_t[j]]
        if state.thermal:
            row.append(state.theta[j])
        lines.append(",".join(_fmt(v) for v in row))
    lines.append("k,phi1,phi2")
    for k in range(state.damper1.n_modes):
        lines.append(
            f"{k},{_fmt(state.damper1.modal_state[k])},{_fmt(state.damper2.modal_state[k])}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_snapshot(path, cfg: BeamConfig, grid: Grid, n_modes: int,
                  xi_max: float | None = None) -> tuple[BeamState, float]:
    """Reload a snapshot written by save_snapshot; returns (state, t)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != _SNAPSHOT_MAGIC:
        raise SnapshotError(f"{path}: not a piezobeam snapshot")
    meta = {}
    i = 1
    while i < len(lines) and lines[i].startswith("#"):
        key, _, val = lines[i][1:].partition("=")
        meta[key.strip()] = val.strip()
        i += 1
    t = float(meta["t"])
    thermal = bool(int(meta["thermal"]))
    n = int(meta["n_nodes"])
    modes = int(meta["n_modes"])
    if thermal != cfg.thermal:
        raise SnapshotError("snapshot thermal flag does not match config")
    if n != grid.n_nodes:
        raise SnapshotError(f"snapshot has {n} nodes, grid expects {grid.n_nodes}")
    if modes != n_modes:
        raise SnapshotError(f"snapshot has {modes} modes, config expects {n_modes}")
    header = lines[i]
    i += 1
    ncols = len(header.split(","))
    table = np.array(
        [[float(v) for v in lines[i + j].split(",")] for j in range(n)]
    )
    if table.shape[1] != ncols:
        raise SnapshotError("snapshot field table is malformed")
    i += n
    if lines[i] != "k,phi1,phi2":
        raise SnapshotError("snapshot modal section is missing")
    i += 1
    phi = np.array([[float(v) for v in lines[i + k].split(",")[1:]] for k in range(modes)])
    d1, d2 = _fresh_dampers(cfg, n_modes, xi_max)
    state = BeamState(
        v=table[:, 1], v_t=table[:, 2], p=table[:, 3], p_t=table[:, 4],
        damper1=d1.with_state(phi[:, 0]), damper2=d2.with_state(phi[:, 1]),
        theta=table[:, 5] if thermal else None,
    )
    return state, t
