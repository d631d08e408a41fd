"""Rothe time stepping of the penalized system on the Q1 grid.

Each step solves the nonlinear discrete equilibrium for the nodal
displacement with the stress given by the pointwise backward-Euler
update of the strain increment, using Newton iterations with the
consistent tangent and a backtracking line search.  Energy diagnostics
mirroring the a-priori estimates (penalty energy, dissipation sums,
suprema of the backward-difference rates) are accumulated during the
run so that mu-sweeps do not have to keep full field histories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import constitutive, tensors
from .constitutive import (ConstitutiveState, MaterialParams, local_update,
                           consistent_tangent, yield_excess)
from .fem import Grid

NEWTON_MAX_ITER = 50
NEWTON_RTOL = 1e-10


class GlobalSolverError(RuntimeError):
    """Newton failed at some time step; carries diagnostics."""

    def __init__(self, message, step_index=None, iterations=None, residual=None):
        super().__init__(message)
        self.step_index = step_index
        self.iterations = iterations
        self.residual = residual


@dataclass
class EnergyReport:
    """Discrete energy diagnostics along a trajectory.

    Arrays indexed by time level (length N+1) or by step (length N).
    """

    times: np.ndarray
    e_pen: np.ndarray
    overshoot_linf: np.ndarray
    overshoot_l2: np.ndarray
    sigdot_l2: np.ndarray
    xidot_l2: np.ndarray
    udot_h1: np.ndarray
    dissipation_cum: np.ndarray

    @property
    def sup_sigdot(self) -> float:
        return float(self.sigdot_l2.max()) if self.sigdot_l2.size else 0.0

    @property
    def sup_xidot(self) -> float:
        return float(self.xidot_l2.max()) if self.xidot_l2.size else 0.0

    @property
    def sup_udot_h1(self) -> float:
        return float(self.udot_h1.max()) if self.udot_h1.size else 0.0

    @property
    def dissipation_total(self) -> float:
        return float(self.dissipation_cum[-1]) if self.dissipation_cum.size else 0.0

    def uniform_bound_lhs(self) -> float:
        """E_pen(T) + dissipation, the mu-uniform quantity of the estimates."""
        return float(self.e_pen[-1]) + self.dissipation_total

    def as_table(self) -> dict:
        return {
            "times": self.times, "e_pen": self.e_pen,
            "overshoot_linf": self.overshoot_linf,
            "overshoot_l2": self.overshoot_l2,
            "sigdot_l2": self.sigdot_l2, "xidot_l2": self.xidot_l2,
            "udot_h1": self.udot_h1, "dissipation_cum": self.dissipation_cum,
        }


@dataclass
class FieldHistory:
    """Full space-time record of a run on the Rothe grid."""

    times: np.ndarray
    u: np.ndarray                       # (N+1, nnodes, d)
    sigma: np.ndarray                   # (N+1, ncells, nqp, m)
    xi: np.ndarray                      # (N+1, ncells, nqp[, m])
    ep: np.ndarray
    grid: Grid = field(repr=False)
    params: MaterialParams = field(repr=False)
    newton_iters: list = field(default_factory=list)
    residual_rel: list = field(default_factory=list)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def state_at(self, k: int) -> ConstitutiveState:
        return ConstitutiveState(self.sigma[k], self.xi[k], self.ep[k])

    def sigma_dot(self) -> np.ndarray:
        return np.diff(self.sigma, axis=0) / self.dt

    def xi_dot(self) -> np.ndarray:
        return np.diff(self.xi, axis=0) / self.dt

    def u_dot(self) -> np.ndarray:
        return np.diff(self.u, axis=0) / self.dt

    def grad_u_dot(self) -> np.ndarray:
        """(N, ncells, nqp, d, d) gradients of the backward-difference rates."""
        ud = self.u_dot()
        return np.stack([self.grid.gradient(ud[k]) for k in range(ud.shape[0])])


def initial_state(grid: Grid, params: MaterialParams, data):
    """Initial nodal displacement and quadrature-point state at t = 0."""
    u0 = data.u0(0.0, grid.nodes)
    sigma0 = data.sigma0(0.0, grid.qp_coords.reshape(-1, grid.d))
    sigma0 = sigma0.reshape(grid.ncells, grid.nqp, grid.m)
    strain = grid.sym_gradient(u0)
    ep0 = strain - params.elastic.apply(sigma0)
    if params.model == constitutive.KINEMATIC:
        xi0 = np.zeros_like(sigma0)
    else:
        xi0 = np.zeros(sigma0.shape[:-1])
    return u0, ConstitutiveState(sigma=sigma0, xi=xi0, ep=ep0)


def initial_ep_trace_defect(grid: Grid, params: MaterialParams, data) -> float:
    _, state = initial_state(grid, params, data)
    return float(np.abs(tensors.tr(state.ep)).max())


class _Stepper:
    """Shared machinery for one Rothe step, with elastic-tangent caching."""

    def __init__(self, grid: Grid, params: MaterialParams, data,
                 solver_method: str = "auto"):
        self.grid = grid
        self.params = params
        self.data = data
        self.solver_method = solver_method
        self._elastic_solver = None

    def _elastic_solve(self):
        """Cached factorization of the (constant) elastic tangent."""
        if self._elastic_solver is None:
            grid, params = self.grid, self.params
            a_inv = np.linalg.inv(params.elastic.matrix)
            D = np.broadcast_to(a_inv, (grid.ncells, grid.nqp,
                                        grid.m, grid.m))
            K = grid.assemble_tangent(np.ascontiguousarray(D))
            self._elastic_solver = grid.make_solver(K, self.solver_method)
        return self._elastic_solver

    def step(self, u_n, state_n, t_n, dt, step_index=0):
        grid, params, data = self.grid, self.params, self.data
        t1 = t_n + dt
        u = u_n.copy()
        dir_nodes = grid.dirichlet_nodes
        u[dir_nodes] = data.u0(t1, grid.nodes[dir_nodes])
        strain_n = grid.sym_gradient(u_n)
        load = grid.load_vector(body_fn=data.body_force,
                                sigma0_fn=data.sigma0, t=t1)
        free = grid.free_dofs

        def residual_of(u_try):
            deps = grid.sym_gradient(u_try) - strain_n
            upd = local_update(state_n, deps, dt, params)
            r = grid.internal_force(upd.sigma) - load
            r[grid.dirichlet_dofs] = 0.0
            return r, deps, upd

        r, deps, upd = residual_of(u)
        fint_scale = np.linalg.norm((r + load)[free])
        scale = max(np.linalg.norm(load[free]), fint_scale, 1e-12)
        rnorm = np.linalg.norm(r[free])

        iters = 0
        while rnorm > NEWTON_RTOL * scale and iters < NEWTON_MAX_ITER:
            elastic_step = float(yield_excess(upd, params).max()) \
                <= constitutive.KINK_GUARD
            if elastic_step:
                solve = self._elastic_solve()
            else:
                D = consistent_tangent(state_n, deps, dt, params, updated=upd)
                solve = grid.make_solver(grid.assemble_tangent(D),
                                         self.solver_method)
            du = solve(-r).reshape(grid.nnodes, grid.d)
            alpha = 1.0
            while True:
                r_try, deps_try, upd_try = residual_of(u + alpha * du)
                rn_try = np.linalg.norm(r_try[free])
                if rn_try <= rnorm * (1.0 - 1e-4 * alpha) \
                        or rn_try <= NEWTON_RTOL * scale or alpha < 1e-3:
                    break
                alpha *= 0.5
            u = u + alpha * du
            r, deps, upd = r_try, deps_try, upd_try
            rnorm = rn_try
            iters += 1

        if rnorm > NEWTON_RTOL * scale:
            raise GlobalSolverError(
                f"Newton stalled at step {step_index} (t={t1:g}): "
                f"residual {rnorm:.3e} vs scale {scale:.3e}; "
                "consider a smaller dt or a larger mu",
                step_index=step_index, iterations=iters, residual=rnorm)
        return u, upd, iters, rnorm / scale


def _accumulate_energy(acc, grid, params, state, state_prev=None, u=None,
                       u_prev=None, dt=None):
    excess = yield_excess(state, params)
    acc["e_pen"].append(grid.integrate_qp(excess**2) / params.mu)
    acc["overshoot_linf"].append(float(excess.max()) if excess.size else 0.0)
    acc["overshoot_l2"].append(np.sqrt(grid.integrate_qp(excess**2)))
    if state_prev is None:
        return
    sigdot = (state.sigma - state_prev.sigma) / dt
    xidot = (state.xi - state_prev.xi) / dt
    acc["sigdot_l2"].append(np.sqrt(grid.integrate_qp(
        tensors.inner(sigdot, sigdot))))
    if params.model == constitutive.KINEMATIC:
        xidot_sq = tensors.inner(xidot, xidot)
    else:
        xidot_sq = xidot**2
    acc["xidot_l2"].append(np.sqrt(grid.integrate_qp(xidot_sq)))
    udot = (u - u_prev) / dt
    grad = grid.gradient(udot)
    vals = grid.shape_values
    udot_qp = np.einsum("qa,cai->cqi", vals, udot[grid.cell_nodes],
                        optimize=True)
    h1 = grid.integrate_qp((udot_qp**2).sum(axis=-1)
                           + (grad**2).sum(axis=(-1, -2)))
    acc["udot_h1"].append(np.sqrt(h1))
    prev = acc["dissipation_cum"][-1] if acc["dissipation_cum"] else 0.0
    acc["dissipation_cum"].append(
        prev + dt * (acc["sigdot_l2"][-1] ** 2 + acc["xidot_l2"][-1] ** 2))


def _energy_report(acc, times) -> EnergyReport:
    return EnergyReport(
        times=np.asarray(times),
        e_pen=np.asarray(acc["e_pen"]),
        overshoot_linf=np.asarray(acc["overshoot_linf"]),
        overshoot_l2=np.asarray(acc["overshoot_l2"]),
        sigdot_l2=np.asarray(acc["sigdot_l2"]),
        xidot_l2=np.asarray(acc["xidot_l2"]),
        udot_h1=np.asarray(acc["udot_h1"]),
        dissipation_cum=np.asarray(acc["dissipation_cum"]))


def run(grid: Grid, params: MaterialParams, data, T: float, N: int,
        solver_method: str = "auto", keep_history: bool = True):
    """Execute N backward-Euler steps; returns (history | None, EnergyReport).

    keep_history=False drops the per-step fields (sweeps only need the
    streamed diagnostics and the final state, which is returned inside
    the report dict in that case).
    """
    dt = T / N
    times = np.linspace(0.0, T, N + 1)
    stepper = _Stepper(grid, params, data, solver_method)
    u, state = initial_state(grid, params, data)

    acc = {k: [] for k in ("e_pen", "overshoot_linf", "overshoot_l2",
                           "sigdot_l2", "xidot_l2", "udot_h1",
                           "dissipation_cum")}
    _accumulate_energy(acc, grid, params, state)

    history = None
    if keep_history:
        m = grid.m
        shp = (N + 1, grid.ncells, grid.nqp)
        history = FieldHistory(
            times=times, u=np.empty((N + 1, grid.nnodes, grid.d)),
            sigma=np.empty(shp + (m,)),
            xi=np.empty(shp + ((m,) if params.model == constitutive.KINEMATIC
                               else ())),
            ep=np.empty(shp + (m,)), grid=grid, params=params)
        history.u[0] = u
        history.sigma[0] = state.sigma
        history.xi[0] = state.xi
        history.ep[0] = state.ep

    newton_iters, residual_rel = [], []
    for k in range(N):
        u_new, state_new, iters, rel = stepper.step(
            u, state, times[k], dt, step_index=k)
        _accumulate_energy(acc, grid, params, state_new, state, u_new, u, dt)
        newton_iters.append(iters)
        residual_rel.append(rel)
        if keep_history:
            history.u[k + 1] = u_new
            history.sigma[k + 1] = state_new.sigma
            history.xi[k + 1] = state_new.xi
            history.ep[k + 1] = state_new.ep
        u, state = u_new, state_new

    report = _energy_report(acc, times)
    if keep_history:
        history.newton_iters = newton_iters
        history.residual_rel = residual_rel
        return history, report
    return None, report


def energy_diagnostics(history: FieldHistory) -> EnergyReport:
    """Recompute the streamed diagnostics from a stored history."""
    grid, params = history.grid, history.params
    acc = {k: [] for k in ("e_pen", "overshoot_linf", "overshoot_l2",
                           "sigdot_l2", "xidot_l2", "udot_h1",
                           "dissipation_cum")}
    _accumulate_energy(acc, grid, params, history.state_at(0))
    dt = history.dt
    for k in range(1, len(history.times)):
        _accumulate_energy(acc, grid, params, history.state_at(k),
                           history.state_at(k - 1), history.u[k],
                           history.u[k - 1], dt)
    return _energy_report(acc, history.times)


@dataclass
class SafetyReport:
    passed: bool
    margin: float
    sup_gap_kinematic: float
    sup_gap_isotropic: float
    kappa: float


def safety_load_check(grid: Grid, params: MaterialParams, data,
                      times) -> SafetyReport:
    """Initial strict feasibility and the translated-pair feasibility gaps.

    The translated hardening data is xi0(t) = sigma0(t) - sigma0(0)
    (kinematic) resp. |dev sigma0(t)| - |dev sigma0(0)| (isotropic); for
    both, the gap reduces to the initial deviator magnitude, which is
    computed honestly on the full (t, quadrature point) grid.
    """
    x = grid.qp_coords.reshape(-1, grid.d)
    s0 = data.sigma0(0.0, x)
    dev0 = tensors.norm(tensors.dev(s0))
    margin = params.kappa - float(dev0.max())
    gap_k = 0.0
    gap_i = 0.0
    for t in np.asarray(times):
        st = data.sigma0(float(t), x)
        beta = tensors.dev(st) - tensors.dev(st - s0)
        gap_k = max(gap_k, float(tensors.norm(beta).max()))
        mag_t = tensors.norm(tensors.dev(st))
        xi0 = mag_t - dev0
        gap_i = max(gap_i, float((mag_t - xi0).max()))
    return SafetyReport(passed=margin > 0.0, margin=margin,
                        sup_gap_kinematic=gap_k, sup_gap_isotropic=gap_i,
                        kappa=params.kappa)


def weak_divergence_defect(grid: Grid, params: MaterialParams, data,
                           t: float = 0.0) -> float:
    """Relative free-dof residual of sigma0 against f: checks div sigma0."""
    sigma0 = data.sigma0(t, grid.qp_coords.reshape(-1, grid.d))
    sigma0 = sigma0.reshape(grid.ncells, grid.nqp, grid.m)
    r = grid.assemble_residual(sigma0, body_fn=data.body_force,
                               sigma0_fn=data.sigma0, t=t)
    load = grid.load_vector(body_fn=data.body_force, sigma0_fn=data.sigma0, t=t)
    scale = max(np.linalg.norm(load[grid.free_dofs]),
                np.linalg.norm(grid.internal_force(sigma0)[grid.free_dofs]),
                1e-12)
    return float(np.linalg.norm(r[grid.free_dofs]) / scale)
