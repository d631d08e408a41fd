"""Weighted difference-quotient seminorms, exponent fits, and mu-sweeps.

The Nikolskii-style quantity attached to a trajectory field w is

    S(h) = aggregate over t of  int_Omega |phi * Delta^h w|^2 dx

with Delta^h the shift difference along the time axis, a tangential
axis, or the normal axis x_d.  Shifts are whole multiples of the cell
size (or time step), taken between quadrature points at the same
intra-cell offset, so no interpolation enters.  The cutoff phi sits
outside the difference, evaluated at the unshifted point, on every
spatial axis (so tangential differences of fields depending only on
x_d vanish identically); on the time axis it is baked into the field,
which is the same thing since phi does not depend on t.  A bound
S(h) <= C h^{2s} shows up as a log-log slope 2s, so fitted exponents
are slope/2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import evolution
from .constitutive import KINEMATIC
from .evolution import FieldHistory
from .fem import Cutoff

FIELDS = ("sigma", "xi", "sigma_dot", "xi_dot", "grad_u_dot")


# -- field access -------------------------------------------------------------


def _history_field(history: FieldHistory, name: str) -> np.ndarray:
    """Field as (Nt, ncells, nqp, ncomp); squared comps sum to the norm^2."""
    if name == "sigma":
        arr = history.sigma
    elif name == "xi":
        arr = history.xi
        if arr.ndim == 3:                       # isotropic scalar
            arr = arr[..., None]
    elif name == "sigma_dot":
        arr = history.sigma_dot()
    elif name == "xi_dot":
        arr = history.xi_dot()
        if arr.ndim == 3:
            arr = arr[..., None]
    elif name == "grad_u_dot":
        g = history.grad_u_dot()
        arr = g.reshape(g.shape[:3] + (-1,))
    else:
        raise ValueError(f"unknown field {name!r}; choices: {FIELDS}")
    return arr


def diff_quotient(field_arr: np.ndarray, axis: str, steps: int,
                  grid) -> np.ndarray:
    """Shift difference w(. + h) - w(.) over the valid index range.

    field_arr is (Nt, ncells, nqp, K); axis is "time", "tangential-j"
    or "normal"; steps is the shift in grid/time units.  The returned
    array has the shrunken extent along the differenced axis.
    """
    if steps < 1:
        raise ValueError("shift must be a positive number of steps")
    if axis == "time":
        if steps >= field_arr.shape[0]:
            raise ValueError("time shift exceeds the trajectory length")
        return field_arr[steps:] - field_arr[:-steps]
    ax = _space_axis(axis, grid.d)
    shaped = field_arr.reshape((field_arr.shape[0],) + grid.cell_counts
                               + field_arr.shape[2:])
    moved = np.moveaxis(shaped, 1 + ax, 1)
    if steps >= moved.shape[1]:
        raise ValueError(f"shift {steps} cells exceeds the domain extent")
    diff = moved[:, steps:] - moved[:, :-steps]
    return np.moveaxis(diff, 1, 1 + ax)


def _space_axis(axis: str, d: int) -> int:
    if axis == "normal":
        return d - 1
    if axis.startswith("tangential-"):
        j = int(axis.split("-")[1])
        if not 1 <= j <= d - 1:
            raise ValueError(f"tangential axis {j} out of range for d={d}")
        return j - 1
    raise ValueError(f"unknown axis {axis!r}")


# -- seminorm tables ----------------------------------------------------------


@dataclass
class SeminormTable:
    axis: str
    field: str
    mode: str                  # "sup" | "integral" aggregation over t
    h: np.ndarray
    values: np.ndarray
    base: float                # ladder base step (cell size or dt)
    cap: float                 # largest admissible h
    weight: str = "phi"
    times_span: float = 0.0

    def rows(self):
        return list(zip(self.h.tolist(), self.values.tolist()))


def _ladder(base: float, cap: float) -> np.ndarray:
    out = []
    h = base
    while h <= cap * (1 + 1e-12):
        out.append(h)
        h *= 2.0
    if not out:
        raise ValueError(f"empty shift ladder (base {base:g}, cap {cap:g})")
    return np.asarray(out)


def _aggregate(vals: np.ndarray, mode: str, dt: float) -> float:
    """Aggregate per-time integrals: sup, or a left-rule time integral."""
    if mode == "sup":
        return float(vals.max()) if vals.size else 0.0
    if vals.size < 2:
        return 0.0
    return float(vals[:-1].sum() * dt)


def seminorm_table(history: FieldHistory, axis: str, field_name: str,
                   cutoff: Cutoff, mode: str) -> SeminormTable:
    """Weighted squared-L2 difference-quotient aggregate over a dyadic ladder."""
    if mode not in ("sup", "integral"):
        raise ValueError("mode must be 'sup' or 'integral'")
    grid = history.grid
    dt = history.dt
    arr = _history_field(history, field_name)
    phi = cutoff.qp_values                      # (ncells, nqp)

    if axis == "time":
        base, cap = dt, history.times[-1] - history.times[0]
        ladder = _ladder(base, cap / 2.0)
        weighted = arr * phi[None, :, :, None]
        values = []
        for h in ladder:
            k = int(round(h / dt))
            diff = weighted[k:] - weighted[:-k]
            per_t = (diff**2).sum(axis=(1, 2, 3)) * grid.qp_weight
            values.append(_aggregate(per_t, mode, dt))
        return SeminormTable(axis=axis, field=field_name, mode=mode,
                             h=ladder, values=np.asarray(values),
                             base=base, cap=cap / 2.0)

    ax = _space_axis(axis, grid.d)
    extent = 1.0 if ax == grid.d - 1 else 2.0
    base = grid.h
    ladder = _ladder(base, min(0.5, extent - base))
    cells = grid.cell_counts
    shaped = arr.reshape((arr.shape[0],) + cells + arr.shape[2:])
    phi_s = phi.reshape(cells + (grid.nqp,))
    moved = np.moveaxis(shaped, 1 + ax, 1)
    phi_m = np.moveaxis(phi_s, ax, 0)
    values = []
    for h in ladder:
        k = int(round(h / base))
        # phi applied at the unshifted point, outside the difference
        diff = (moved[:, k:] - moved[:, :-k]) * phi_m[None, :-k][..., None]
        per_t = (diff**2).sum(axis=tuple(range(1, diff.ndim))) * grid.qp_weight
        values.append(_aggregate(per_t, mode, dt))
    return SeminormTable(axis=axis, field=field_name, mode=mode, h=ladder,
                         values=np.asarray(values), base=base,
                         cap=min(0.5, extent - base))


# -- exponent fits ------------------------------------------------------------


@dataclass
class FitResult:
    s_hat: float | None
    r2: float | None
    n_used: int
    zero_rows: list
    identically_regular: bool
    window: tuple


def fit_exponent(table: SeminormTable, window: tuple | None = None) -> FitResult:
    """Least-squares slope of log S(h) vs log h over the window; s = slope/2.

    Zero rows are excluded and flagged; an all-zero table is the
    distinguished "identically regular" outcome rather than a fit.
    """
    if window is None:
        window = (2.0 * table.base, table.cap / 2.0)
    if np.all(table.values == 0.0):
        return FitResult(s_hat=None, r2=None, n_used=0, zero_rows=[],
                         identically_regular=True, window=window)
    mask = (table.h >= window[0] * (1 - 1e-9)) & (table.h <= window[1] * (1 + 1e-9))
    zero_rows = table.h[mask & (table.values == 0.0)].tolist()
    mask &= table.values > 0.0
    hs, vals = table.h[mask], table.values[mask]
    if hs.size < 2:
        return FitResult(s_hat=None, r2=None, n_used=int(hs.size),
                         zero_rows=zero_rows, identically_regular=False,
                         window=window)
    x, y = np.log(hs), np.log(vals)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = ((y - y.mean())**2).sum()
    r2 = 1.0 - resid @ resid / ss_tot if ss_tot > 0 else 1.0
    return FitResult(s_hat=float(slope / 2.0), r2=float(r2), n_used=int(hs.size),
                     zero_rows=zero_rows, identically_regular=False,
                     window=window)


# -- exponent targets ---------------------------------------------------------


@dataclass(frozen=True)
class ExponentTargets:
    model: str
    boundary: str
    d: int
    sigma_normal: float
    sigdot_time: float
    sigdot_tangential: float
    sigdot_normal: float
    alpha: float


def alpha_exponent(d: int) -> float:
    """Normal-direction exponent for isotropic hardening near Neumann data."""
    return (2 * d - 7 + np.sqrt(1 + 4 * d**2 + 20 * d)) / (8 * (d - 1))


def target_exponents(d: int, model: str, boundary: str) -> ExponentTargets:
    """Theoretical exponents for (sigma, xi) and their rates by regime.

    Kinematic hardening carries (3/5, 1/2, 1/2, 1/5) regardless of the
    boundary condition; isotropic hardening matches that near Dirichlet
    data, and degrades the normal exponents to (alpha(d), alpha(d)/3)
    near Neumann data.  "mixed" resolves to the Neumann regime, which is
    the one valid on both sides away from the interface.
    """
    if d not in (2, 3):
        raise ValueError("d must be 2 or 3")
    if boundary == "mixed":
        boundary = "neumann"
    if boundary not in ("dirichlet", "neumann"):
        raise ValueError("boundary must be dirichlet, neumann or mixed")
    a = float(alpha_exponent(d))
    if model == KINEMATIC or boundary == "dirichlet":
        return ExponentTargets(model=model, boundary=boundary, d=d,
                               sigma_normal=0.6, sigdot_time=0.5,
                               sigdot_tangential=0.5, sigdot_normal=0.2,
                               alpha=a)
    return ExponentTargets(model=model, boundary=boundary, d=d,
                           sigma_normal=a, sigdot_time=0.5,
                           sigdot_tangential=0.5, sigdot_normal=a / 3.0,
                           alpha=a)


def beta_lambda(p: float, d: int) -> tuple[float, float, bool]:
    """Anisotropic-embedding parameters: beta(p, d) and lambda(beta, d).

    Returns (beta, lambda, degenerate); for d = 2 the admissible range
    for p is unbounded above (flagged degenerate).
    """
    degenerate = d == 2
    if p <= 2:
        raise ValueError("p must exceed 2")
    if d > 2:
        p_max = 2.0 * (d - 1) / (d - 2)
        if p >= p_max:
            raise ValueError(f"p must lie in (2, {p_max:g}) for d={d}")
    beta = (p - 2.0) / (4.0 * (d - 1) - 2.0 * p * (d - 2))
    lam = 1.0 / (2.0 * beta * (d - 1) + 1.0)
    return float(beta), float(lam), degenerate


# -- interpolation-lemma ratio check -----------------------------------------


@dataclass
class InterpolationReport:
    delta: float
    h: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    ratio: np.ndarray
    flagged: list
    degenerate: bool
    window: tuple
    spread: float | None

    def as_rows(self):
        return [{"h": float(h), "lhs": float(l), "rhs": float(r),
                 "ratio": (float(q) if np.isfinite(q) else None)}
                for h, l, r, q in zip(self.h, self.lhs, self.rhs, self.ratio)]


def interpolation_check(history: FieldHistory, cutoff: Cutoff, delta: float,
                        window: tuple | None = None) -> InterpolationReport:
    """Ratio of the time-interpolation estimate per normal shift h.

    LHS(h) integrates |phi Delta_d^h sigma_dot|^2 + |phi Delta_d^h xi_dot|^2
    over space-time, RHS(h) is the same quantity for the fields themselves
    raised to the power 1/3 - delta.  Degenerate (all-elastic) histories
    are flagged, not failed.
    """
    if not 0.0 < delta < 1.0 / 3.0:
        raise ValueError("delta must lie in (0, 1/3)")
    if len(history.times) < 9:
        raise ValueError("need at least 8 time steps for the ratio check")
    t_dot_sig = seminorm_table(history, "normal", "sigma_dot", cutoff, "integral")
    t_dot_xi = seminorm_table(history, "normal", "xi_dot", cutoff, "integral")
    t_sig = seminorm_table(history, "normal", "sigma", cutoff, "integral")
    t_xi = seminorm_table(history, "normal", "xi", cutoff, "integral")
    lhs = t_dot_sig.values + t_dot_xi.values
    rhs_base = t_sig.values + t_xi.values
    exponent = 1.0 / 3.0 - delta
    rhs = np.where(rhs_base > 0, rhs_base**exponent, 0.0)
    ratio = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.inf)
    flagged = t_sig.h[rhs_base == 0.0].tolist()
    degenerate = bool(np.all(rhs_base == 0.0))
    if window is None:
        window = (2.0 * t_sig.base, t_sig.cap / 2.0)
    mask = ((t_sig.h >= window[0] * (1 - 1e-9))
            & (t_sig.h <= window[1] * (1 + 1e-9))
            & np.isfinite(ratio) & (ratio > 0))
    spread = None
    if mask.any() and not degenerate:
        sel = ratio[mask]
        spread = float(sel.max() / sel.min())
    return InterpolationReport(delta=delta, h=t_sig.h, lhs=lhs, rhs=rhs,
                               ratio=ratio, flagged=flagged,
                               degenerate=degenerate, window=window,
                               spread=spread)


# -- strip gradient diagnostics -----------------------------------------------


@dataclass
class StripReport:
    h: float
    n_cell_layers: int
    times: np.ndarray
    normal_grad_strip: np.ndarray    # per-step int_strip |D_d udot phi|^2
    sym_grad_strip: np.ndarray       # per-step int_strip |E(udot) phi|^2
    normal_grad_time_integral: float
    sym_grad_time_integral: float


def strip_gradient_norm(history: FieldHistory, h: float,
                        cutoff: Cutoff) -> StripReport:
    """Velocity-gradient energies on the boundary strip x_d in (0, h)."""
    grid = history.grid
    k = int(round(h * grid.n))
    if abs(k - h * grid.n) > 1e-9 or k < 1:
        raise ValueError(f"h={h:g} is not a positive multiple of 1/n")
    if h >= cutoff.h0 + 1e-12:
        raise ValueError(f"h={h:g} must stay below the cutoff plateau h0")
    cells = grid.cell_counts
    layer_idx = np.unravel_index(np.arange(grid.ncells), cells)[grid.d - 1]
    strip = layer_idx < k
    if not strip.any():
        raise ValueError("empty strip")
    phi_sq = cutoff.qp_values[strip] ** 2
    udot = history.u_dot()
    nvals, evals = [], []
    for step in range(udot.shape[0]):
        g = grid.gradient(udot[step])[strip]
        dd = g[..., :, grid.d - 1]
        nvals.append(((dd**2).sum(axis=-1) * phi_sq).sum() * grid.qp_weight)
        e = grid.sym_gradient(udot[step])[strip]
        evals.append(((e**2).sum(axis=-1) * phi_sq).sum() * grid.qp_weight)
    dt = history.dt
    nvals = np.asarray(nvals)
    evals = np.asarray(evals)
    return StripReport(h=h, n_cell_layers=k, times=history.times[1:],
                       normal_grad_strip=nvals, sym_grad_strip=evals,
                       normal_grad_time_integral=float(nvals.sum() * dt),
                       sym_grad_time_integral=float(evals.sum() * dt))


# -- probe orchestration and mu sweeps ----------------------------------------


TARGET_KEYS = {
    ("normal", "sigma"): "sigma_normal",
    ("normal", "xi"): "sigma_normal",
    ("time", "sigma_dot"): "sigdot_time",
    ("time", "xi_dot"): "sigdot_time",
    ("time", "grad_u_dot"): "sigdot_time",
    ("normal", "sigma_dot"): "sigdot_normal",
    ("normal", "xi_dot"): "sigdot_normal",
    ("normal", "grad_u_dot"): "sigdot_normal",
}


def probe_regime(scenario) -> str:
    mode = scenario.geometry.mode
    if mode == "all-dirichlet":
        return "dirichlet"
    if mode == "all-neumann-bottom":
        return "neumann"
    return scenario.cutoff_config["side"]


def target_for(axis: str, field_name: str, targets: ExponentTargets,
               model: str) -> float | None:
    """Theory exponent a probe row is compared against (None: no claim)."""
    if field_name == "grad_u_dot" and model != KINEMATIC:
        return None
    if axis.startswith("tangential"):
        if field_name in ("sigma", "xi"):
            return 1.0                      # W^{1,2} in the tangent directions
        return targets.sigdot_tangential
    if axis == "time" and field_name in ("sigma", "xi"):
        return 1.0                          # W^{1,2}(0,T; L^2) data regularity
    return getattr(targets, TARGET_KEYS.get((axis, field_name), ""), None)


@dataclass
class ProbeRow:
    axis: str
    field: str
    mode: str
    table: SeminormTable
    fit: FitResult
    target: float | None


@dataclass
class ProbeReport:
    rows: list
    targets: ExponentTargets
    interpolation: InterpolationReport | None
    delta: float

    def summary(self) -> list[dict]:
        out = []
        for row in self.rows:
            out.append({
                "axis": row.axis, "field": row.field, "mode": row.mode,
                "s_hat": row.fit.s_hat, "r2": row.fit.r2,
                "n_used": row.fit.n_used,
                "identically_regular": row.fit.identically_regular,
                "zero_rows": row.fit.zero_rows,
                "window": list(row.fit.window),
                "target": row.target,
                "margin": (None if (row.target is None or row.fit.s_hat is None)
                           else row.fit.s_hat - row.target),
            })
        return out


def run_probes(scenario, history: FieldHistory,
               cutoff: Cutoff | None = None) -> ProbeReport:
    """Evaluate every probe the scenario requests, plus the Lemma ratio."""
    if cutoff is None:
        cutoff = scenario.cutoff()
    targets = target_exponents(scenario.d, scenario.model,
                               probe_regime(scenario))
    rows = []
    for probe in scenario.probes:
        table = seminorm_table(history, probe["axis"], probe["field"], cutoff,
                               probe["mode"])
        window = scenario.fit_window(
            "time" if probe["axis"] == "time" else "space")
        fit = fit_exponent(table, window=window)
        rows.append(ProbeRow(axis=probe["axis"], field=probe["field"],
                             mode=probe["mode"], table=table, fit=fit,
                             target=target_for(probe["axis"], probe["field"],
                                               targets, scenario.model)))
    interp = None
    if len(history.times) >= 9:
        interp = interpolation_check(history, cutoff, scenario.delta,
                                     window=scenario.fit_window("space"))
    return ProbeReport(rows=rows, targets=targets, interpolation=interp,
                       delta=scenario.delta)


@dataclass
class SweepEntry:
    mu: float
    energy_summary: dict
    probe_summary: list | None
    failure: str | None


@dataclass
class UniformityReport:
    entries: list
    spreads: dict
    overshoot_l2_slope: float | None
    overshoot_linf_slope: float | None
    failures: list


_SWEEP_QUANTITIES = ("sup_sigdot", "sup_xidot", "sup_udot_h1",
                     "uniform_bound_lhs", "e_pen_final")


def energy_summary(report: evolution.EnergyReport) -> dict:
    return {
        "sup_sigdot": report.sup_sigdot,
        "sup_xidot": report.sup_xidot,
        "sup_udot_h1": report.sup_udot_h1,
        "e_pen_final": float(report.e_pen[-1]),
        "overshoot_l2_final": float(report.overshoot_l2[-1]),
        "overshoot_linf_final": float(report.overshoot_linf[-1]),
        "overshoot_linf_max": float(report.overshoot_linf.max()),
        "dissipation_total": report.dissipation_total,
        "uniform_bound_lhs": report.uniform_bound_lhs(),
    }


def mu_sweep(scenario, mus=None, keep_probe_fields: bool | None = None):
    """Run the scenario once per mu and compare the uniform quantities.

    Spread ratios are max/min over the sweep; the overshoot decay slope
    is the log-log fit of the final-time overshoot against mu.  Failed
    runs are recorded as partial entries.
    """
    if mus is None:
        mus = scenario.mu_list
    mus = sorted((float(m) for m in mus), reverse=True)
    if any(m <= 0 for m in mus):
        raise ValueError("mu values must be positive")
    if keep_probe_fields is None:
        keep_probe_fields = bool(scenario.probes)
    grid = scenario.grid()
    cutoff = scenario.cutoff() if keep_probe_fields else None
    entries, failures = [], []
    for mu in mus:
        params = scenario.material(mu)
        try:
            history, report = evolution.run(
                grid, params, scenario.data, scenario.T, scenario.N,
                solver_method=scenario.solver,
                keep_history=keep_probe_fields)
        except evolution.GlobalSolverError as exc:
            entries.append(SweepEntry(mu=mu, energy_summary={},
                                      probe_summary=None, failure=str(exc)))
            failures.append({"mu": mu, "error": str(exc)})
            continue
        probe_summary = None
        if keep_probe_fields and scenario.probes:
            probe_summary = run_probes(scenario, history,
                                       cutoff=cutoff).summary()
        entries.append(SweepEntry(mu=mu, energy_summary=energy_summary(report),
                                  probe_summary=probe_summary, failure=None))
    ok = [e for e in entries if e.failure is None]
    spreads = {}
    for key in _SWEEP_QUANTITIES:
        vals = np.array([e.energy_summary[key] for e in ok])
        if vals.size == 0:
            continue
        if vals.max() == 0.0:
            spreads[key] = 1.0
        elif vals.min() == 0.0:
            spreads[key] = float("inf")
        else:
            spreads[key] = float(vals.max() / vals.min())
    slopes = {}
    for key in ("overshoot_l2_final", "overshoot_linf_final"):
        pts = [(e.mu, e.energy_summary[key]) for e in ok
               if e.energy_summary.get(key, 0.0) > 0.0]
        if len(pts) >= 2:
            lm = np.log([p[0] for p in pts])
            lo = np.log([p[1] for p in pts])
            slopes[key] = float(np.polyfit(lm, lo, 1)[0])
        else:
            slopes[key] = None
    return UniformityReport(entries=entries, spreads=spreads,
                            overshoot_l2_slope=slopes["overshoot_l2_final"],
                            overshoot_linf_slope=slopes["overshoot_linf_final"],
                            failures=failures)
