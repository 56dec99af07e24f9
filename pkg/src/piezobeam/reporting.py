"""CSV/JSON artifact writers and matplotlib figure rendering.

All floats are printed with 17 significant digits so identical runs produce
byte-identical delimited output; figures are rendered offline (Agg) to PNG
files alongside the data.
"""

from __future__ import annotations

import json

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ConfigError

ENERGY_SCHEMA = "piezobeam-energy/1"
LYAPUNOV_SCHEMA = "piezobeam-lyapunov/1"
RESOLVENT_SCHEMA = "piezobeam-resolvent/1"
ANALYSIS_SCHEMA_VERSION = "1.0"


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _check_schema(line: str, expected: str, path) -> None:
    if not line.startswith("# schema="):
        raise ConfigError(f"{path}: missing schema header")
    found = line[len("# schema=") :].strip()
    exp_name, exp_major = expected.rsplit("/", 1)
    try:
        name, major = found.rsplit("/", 1)
    except ValueError:
        raise ConfigError(f"{path}: malformed schema tag {found!r}") from None
    if name != exp_name or major != exp_major:
        raise ConfigError(f"{path}: unsupported schema {found!r} (expected {expected})")


ENERGY_COLUMNS = ("t", "energy", "boundary_dissipation", "thermal_dissipation",
                  "identity_residual")


def write_energy_csv(path, reports) -> None:
    lines = [f"# schema={ENERGY_SCHEMA}", ",".join(ENERGY_COLUMNS)]
    for r in reports:
        lines.append(
            ",".join(
                fmt(v)
                for v in (
                    r.t,
                    r.energy,
                    r.boundary_dissipation,
                    r.thermal_dissipation,
                    r.identity_residual,
                )
            )
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_energy_csv(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    _check_schema(lines[0], ENERGY_SCHEMA, path)
    header = lines[1].split(",")
    if tuple(header) != ENERGY_COLUMNS:
        raise ConfigError(f"{path}: unexpected columns {header}")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
    return {name: data[:, i] for i, name in enumerate(header)}


def write_lyapunov_csv(path, samples) -> None:
    cols = ("t", "energy", "i1", "i2", "i3", "i4", "identity_residual")
    lines = [f"# schema={LYAPUNOV_SCHEMA}", ",".join(cols)]
    for s in samples:
        lines.append(
            ",".join(fmt(v) for v in (s.t, s.energy, s.i1, s.i2, s.i3, s.i4, s.residual))
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_lyapunov_csv(path):
    from .stability import LyapunovSample

    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    _check_schema(lines[0], LYAPUNOV_SCHEMA, path)
    out = []
    for ln in lines[2:]:
        vals = [float(v) for v in ln.split(",")]
        out.append(LyapunovSample(*vals))
    return out


def write_resolvent_csv(path, lambdas, norms) -> None:
    lines = [f"# schema={RESOLVENT_SCHEMA}", "lambda,norm"]
    for lam, nrm in zip(lambdas, norms):
        lines.append(f"{fmt(lam)},{fmt(nrm)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_modes_csv(path, op) -> None:
    """Debug dump of one mode bank: k, xi, weight, mu."""
    lines = ["k,xi,weight,mu"]
    for k in range(op.n_modes):
        lines.append(
            f"{k},{fmt(op.nodes[k])},{fmt(op.weights[k])},{fmt(op.kernel_values[k])}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _json_default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# --- figures ----------------------------------------------------------------


def _save(fig, path):
    fig.savefig(path, dpi=130, metadata={"Software": "piezobeam"})
    plt.close(fig)


def fig_energy(path, reports, fit=None) -> None:
    t = np.array([r.t for r in reports])
    e = np.array([r.energy for r in reports])
    fig, (ax, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax.semilogy(t, np.maximum(e, 1e-300), lw=1.2, label="energy")
    if fit is not None and fit.window[1] > fit.window[0]:
        tt = np.linspace(*fit.window, 100)
        mask = (t >= fit.window[0]) & (t <= fit.window[1])
        if np.any(mask):
            anchor_t, anchor_e = t[mask][0], e[mask][0]
            ax.semilogy(
                tt,
                anchor_e * np.exp(-fit.rate_omega * (tt - anchor_t)),
                "--",
                label=f"exp fit, rate {fit.rate_omega:.3g}",
            )
            ax.semilogy(
                tt,
                anchor_e * (tt / anchor_t) ** (-fit.exponent_p),
                ":",
                label=f"poly fit, exponent {fit.exponent_p:.3g}",
            )
    ax.set_xlabel("t")
    ax.set_ylabel("E(t)")
    ax.legend(fontsize=8)
    res = np.array([r.identity_residual for r in reports])
    ax2.semilogy(t[1:], np.maximum(res[1:], 1e-300), lw=0.9, color="tab:red")
    ax2.set_xlabel("t")
    ax2.set_ylabel("identity residual")
    fig.tight_layout()
    _save(fig, path)


def fig_resolvent(path, lambdas, norms, peak_freqs=None, peak_norms=None,
                  slope=None, window=None) -> None:
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.loglog(lambdas, norms, ".-", ms=3, lw=0.7, label="sweep")
    if peak_freqs is not None and len(peak_freqs):
        ax.loglog(peak_freqs, peak_norms, "o", ms=3, label="resonance peaks")
        if slope is not None and window is not None:
            ref = np.array(window)
            anchor = np.nanmedian(peak_norms)
            ax.loglog(ref, anchor * (ref / ref[0]) ** slope, "--",
                      label=f"slope {slope:.3f}")
    ax.set_xlabel("frequency")
    ax.set_ylabel("resolvent norm")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def fig_lyapunov(path, ts, ratios, m1, m2) -> None:
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.plot(ts, ratios, lw=1.0)
    ax.axhline(m1, ls="--", color="gray", label=f"m1 = {m1:.3g}")
    ax.axhline(m2, ls=":", color="gray", label=f"m2 = {m2:.3g}")
    ax.set_xlabel("t")
    ax.set_ylabel("L(t) / E(t)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def fig_kernel(path, n_modes_list, errors_by_case) -> None:
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for label, errs in errors_by_case.items():
        ax.loglog(n_modes_list, errs, ".-", label=label, lw=0.8, ms=4)
    ax.loglog(
        n_modes_list,
        [errors_by_case[next(iter(errors_by_case))][0] * n_modes_list[0] / n for n in n_modes_list],
        "k--",
        lw=0.8,
        label="1/N",
    )
    ax.set_xlabel("modes")
    ax.set_ylabel("relative moment error")
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)
