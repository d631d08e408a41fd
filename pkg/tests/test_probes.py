"""Difference quotients, seminorm closed forms, exponent fits, targets."""

import numpy as np
import pytest
from scipy.integrate import quad

from plastprobe import evolution, probes, tensors
from plastprobe.evolution import FieldHistory
from plastprobe.fem import Geometry, build_grid, make_cutoff
from plastprobe.probes import (SeminormTable, beta_lambda,
                               diff_quotient, fit_exponent, interpolation_check,
                               mu_sweep, seminorm_table, strip_gradient_norm,
                               target_exponents)
from plastprobe.scenario import load_benchmark


def _grid_and_cutoff(n=4, mode="mixed"):
    grid = build_grid(Geometry(d=2, mode=mode), n)
    cutoff = make_cutoff(grid, eps0=0.15, h0=0.1, side="neumann")
    return grid, cutoff


def _history(grid, sigma, times, xi=None, u=None, ep=None):
    shape = sigma.shape
    if xi is None:
        xi = np.zeros(shape)
    if ep is None:
        ep = np.zeros(shape)
    if u is None:
        u = np.zeros((shape[0], grid.nnodes, grid.d))
    return FieldHistory(times=times, u=u, sigma=sigma, xi=xi, ep=ep,
                        grid=grid, params=None)


def test_diff_quotient_constant_field_zero():
    grid, _ = _grid_and_cutoff()
    arr = np.ones((5, grid.ncells, grid.nqp, 3))
    for axis in ("time", "tangential-1", "normal"):
        out = diff_quotient(arr, axis, 1, grid)
        assert np.abs(out).max() == 0.0


def test_diff_quotient_linear_time_field():
    grid, _ = _grid_and_cutoff()
    times = np.linspace(0, 1, 9)
    arr = np.broadcast_to(times[:, None, None, None],
                          (9, grid.ncells, grid.nqp, 1)).copy()
    out = diff_quotient(arr, "time", 2, grid)
    np.testing.assert_allclose(out, 2 / 8, atol=1e-15)


def test_diff_quotient_linear_normal_field():
    grid, _ = _grid_and_cutoff(n=4)
    slope = 3.0
    vals = slope * grid.qp_coords[..., 1]
    arr = vals[None, ..., None]
    out = diff_quotient(arr, "normal", 2, grid)
    np.testing.assert_allclose(out, slope * 2 / 4, atol=1e-13)


def test_diff_quotient_telescoping():
    # Delta^{2h} = shift(Delta^h, h) + Delta^h, exactly on stored fields
    rng = np.random.default_rng(40)
    grid, _ = _grid_and_cutoff()
    arr = rng.standard_normal((6, grid.ncells, grid.nqp, 3))
    d1 = diff_quotient(arr, "time", 1, grid)
    d2 = diff_quotient(arr, "time", 2, grid)
    np.testing.assert_allclose(d2, d1[1:] + d1[:-1], atol=1e-12)
    for axis in ("tangential-1", "normal"):
        ax = 1 + probes._space_axis(axis, 2)
        d1 = np.moveaxis(diff_quotient(arr, axis, 1, grid), ax, 1)
        d2 = np.moveaxis(diff_quotient(arr, axis, 2, grid), ax, 1)
        np.testing.assert_allclose(d2, d1[:, 1:] + d1[:, :-1], atol=1e-12)


def test_diff_quotient_shift_too_large():
    grid, _ = _grid_and_cutoff()
    arr = np.zeros((4, grid.ncells, grid.nqp, 1))
    with pytest.raises(ValueError):
        diff_quotient(arr, "normal", grid.n, grid)
    with pytest.raises(ValueError):
        diff_quotient(arr, "time", 4, grid)


def test_seminorm_step_in_time_closed_form():
    # S(h) = m * h exactly for a jump at t = T/2 (integral mode)
    grid, cutoff = _grid_and_cutoff(n=4)
    N, T = 16, 1.0
    times = np.linspace(0, T, N + 1)
    V = np.array([0.7, -0.7, 0.3])
    sigma = np.zeros((N + 1, grid.ncells, grid.nqp, 3))
    sigma[times >= T / 2] = V
    hist = _history(grid, sigma, times)
    table = seminorm_table(hist, "time", "sigma", cutoff, "integral")
    m = grid.integrate_qp(cutoff.qp_values**2) * float(V @ V)
    for h, s in table.rows():
        if h <= T / 4:
            assert s == pytest.approx(m * h, rel=1e-12)


def test_seminorm_linear_in_time_closed_form():
    # S(h) = h^2 (T - h) m for f(t) = t
    grid, cutoff = _grid_and_cutoff(n=4)
    N, T = 16, 1.0
    times = np.linspace(0, T, N + 1)
    V = np.array([1.0, 0.5, -0.25])
    sigma = times[:, None, None, None] * V
    sigma = np.broadcast_to(sigma, (N + 1, grid.ncells, grid.nqp, 3)).copy()
    hist = _history(grid, sigma, times)
    table = seminorm_table(hist, "time", "sigma", cutoff, "integral")
    m = grid.integrate_qp(cutoff.qp_values**2) * float(V @ V)
    for h, s in table.rows():
        assert s == pytest.approx(h**2 * (T - h) * m, rel=1e-12)


def test_seminorm_constant_field_all_zero():
    grid, cutoff = _grid_and_cutoff()
    sigma = np.ones((9, grid.ncells, grid.nqp, 3))
    hist = _history(grid, sigma, np.linspace(0, 1, 9))
    for axis in ("time", "tangential-1", "normal"):
        table = seminorm_table(hist, axis, "sigma", cutoff, "integral")
        assert np.all(table.values == 0.0)
        fit = fit_exponent(table)
        assert fit.identically_regular


def test_seminorm_tangential_of_normal_only_field_zero():
    # shift consistency: tangential differences of an x_d-only field vanish
    grid, cutoff = _grid_and_cutoff(n=8)
    vals = np.sin(3.0 * grid.qp_coords[..., 1])
    sigma = np.broadcast_to(vals[None, ..., None],
                            (5, grid.ncells, grid.nqp, 1)).copy()
    hist = _history(grid, sigma.repeat(3, axis=-1), np.linspace(0, 1, 5))
    table = seminorm_table(hist, "tangential-1", "sigma", cutoff, "sup")
    assert np.all(table.values == 0.0)


def test_seminorm_nesting_integral_below_sup():
    rng = np.random.default_rng(41)
    grid, cutoff = _grid_and_cutoff()
    sigma = rng.standard_normal((9, grid.ncells, grid.nqp, 3))
    hist = _history(grid, sigma, np.linspace(0, 1, 9))
    T = 1.0
    for axis in ("time", "normal", "tangential-1"):
        ti = seminorm_table(hist, axis, "sigma", cutoff, "integral")
        ts = seminorm_table(hist, axis, "sigma", cutoff, "sup")
        assert np.all(ti.values <= T * ts.values + 1e-15)


def test_fit_exponent_power_law_self_test():
    h = np.array([1 / 64, 1 / 32, 1 / 16, 1 / 8, 1 / 4])
    for s in (0.2, 0.5, 0.6, 1.0):
        table = SeminormTable(axis="normal", field="sigma", mode="sup",
                              h=h, values=3.7 * h ** (2 * s), base=1 / 64,
                              cap=1 / 4)
        fit = fit_exponent(table, window=(1 / 64, 1 / 4))
        assert fit.s_hat == pytest.approx(s, abs=0.02)
        assert fit.r2 >= 0.999


def test_fit_excludes_zero_rows():
    h = np.array([1 / 16, 1 / 8, 1 / 4, 1 / 2])
    vals = np.array([0.0, 1e-3, 4e-3, 1.6e-2])
    table = SeminormTable(axis="normal", field="sigma", mode="sup", h=h,
                          values=vals, base=1 / 16, cap=1 / 2)
    fit = fit_exponent(table, window=(1 / 16, 1 / 2))
    assert fit.zero_rows == [1 / 16]
    assert fit.s_hat == pytest.approx(1.0, abs=0.02)


def test_target_exponents_kinematic():
    t = target_exponents(2, "kinematic", "mixed")
    assert (t.sigma_normal, t.sigdot_time, t.sigdot_tangential,
            t.sigdot_normal) == (0.6, 0.5, 0.5, 0.2)


def test_target_exponents_isotropic_neumann_d2():
    t = target_exponents(2, "isotropic", "neumann")
    expected = (-3 + np.sqrt(57)) / 8
    assert t.sigma_normal == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.56873, abs=1e-5)
    assert t.sigdot_normal == pytest.approx(expected / 3, abs=1e-12)


def test_target_exponents_isotropic_neumann_d3():
    t = target_exponents(3, "isotropic", "neumann")
    expected = (-1 + np.sqrt(97)) / 16
    assert t.sigma_normal == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.55306, abs=1e-5)
    beta, lam, degenerate = beta_lambda(3.0, 3)
    assert beta == pytest.approx(0.5)
    assert lam == pytest.approx(1 / 3)
    assert not degenerate


def test_target_exponents_isotropic_dirichlet_matches_kinematic():
    ti = target_exponents(2, "isotropic", "dirichlet")
    tk = target_exponents(2, "kinematic", "dirichlet")
    assert (ti.sigma_normal, ti.sigdot_normal) == (tk.sigma_normal,
                                                   tk.sigdot_normal)


def test_alpha_consistency_normal_rate_is_third():
    for d in (2, 3):
        t = target_exponents(d, "isotropic", "neumann")
        assert t.sigdot_normal == pytest.approx(t.alpha / 3, abs=1e-14)


def test_beta_lambda_validation():
    with pytest.raises(ValueError):
        beta_lambda(2.0, 3)
    with pytest.raises(ValueError):
        beta_lambda(4.0, 3)
    beta, lam, degenerate = beta_lambda(6.0, 2)
    assert degenerate
    assert beta == pytest.approx(1.0)
    assert lam == pytest.approx(1 / 3)


def test_strip_gradient_rigid_motion_zero():
    grid = build_grid(Geometry(d=2, mode="mixed"), 8)
    cutoff = make_cutoff(grid, eps0=0.15, h0=0.2)
    times = np.linspace(0, 1, 3)
    u = np.empty((3, grid.nnodes, 2))
    W = np.array([[0.0, 1.0], [-1.0, 0.0]])
    for k, t in enumerate(times):
        u[k] = t * (grid.nodes @ W.T) + t * np.array([0.3, -0.2])
    hist = _history(grid, np.zeros((3, grid.ncells, grid.nqp, 3)), times, u=u)
    rep = strip_gradient_norm(hist, h=1 / 8, cutoff=cutoff)
    assert np.abs(rep.sym_grad_strip).max() <= 1e-26


def test_strip_gradient_linear_closed_form():
    grid, cutoff = _grid_and_cutoff(n=16)
    c = 1.7
    times = np.linspace(0, 1, 3)
    u = np.empty((3, grid.nnodes, 2))
    for k, t in enumerate(times):
        u[k] = 0.0
        u[k][:, 0] = t * c * grid.nodes[:, 1]      # D_d udot = (c, 0)
    hist = _history(grid, np.zeros((3, grid.ncells, grid.nqp, 3)), times, u=u)
    h = 1 / 16
    rep = strip_gradient_norm(hist, h=h, cutoff=cutoff)
    # independent 1d quadrature of the phi^2 cross-section
    area, _ = quad(lambda x1: cutoff(np.array([x1, h / 2]))**2, -1, 1,
                   limit=200)
    expected = c**2 * h * area
    np.testing.assert_allclose(rep.normal_grad_strip, expected, rtol=2e-3)


def test_strip_gradient_validation():
    grid, cutoff = _grid_and_cutoff(n=8)
    hist = _history(grid, np.zeros((3, grid.ncells, grid.nqp, 3)),
                    np.linspace(0, 1, 3))
    with pytest.raises(ValueError):
        strip_gradient_norm(hist, h=0.25, cutoff=cutoff)  # above h0
    with pytest.raises(ValueError):
        strip_gradient_norm(hist, h=0.05, cutoff=cutoff)  # not a multiple


def test_interpolation_check_elastic_history_flagged():
    grid, cutoff = _grid_and_cutoff(n=4)
    N = 12
    sigma = np.ones((N + 1, grid.ncells, grid.nqp, 3))
    hist = _history(grid, sigma, np.linspace(0, 1, N + 1))
    rep = interpolation_check(hist, cutoff, delta=0.05)
    assert rep.degenerate
    assert rep.spread is None


def test_interpolation_check_requires_enough_steps():
    grid, cutoff = _grid_and_cutoff(n=4)
    sigma = np.ones((4, grid.ncells, grid.nqp, 3))
    hist = _history(grid, sigma, np.linspace(0, 1, 4))
    with pytest.raises(ValueError):
        interpolation_check(hist, cutoff, delta=0.05)


def test_mu_sweep_elastic_spreads_exactly_one():
    scn = load_benchmark("elastic-only", n=6, N=4)
    rep = mu_sweep(scn, keep_probe_fields=False)
    assert rep.failures == []
    for key, spread in rep.spreads.items():
        assert spread == pytest.approx(1.0, abs=1e-9), key
    assert rep.overshoot_l2_slope is None


def test_uniform_bound_spread_small_benchmark():
    # discrete (vztha7) analogue: bound varies < 50% over a mu decade
    scn = load_benchmark("mixed-boundary-kinematic", n=6, N=200,
                         mu=[1e-2, 1e-3], T=1.0)
    rep = mu_sweep(scn, keep_probe_fields=False)
    assert rep.failures == []
    assert rep.spreads["uniform_bound_lhs"] <= 1.5


def test_run_probes_smoke_with_targets():
    scn = load_benchmark("mixed-boundary-kinematic", n=8, N=40, mu=0.05,
                         allow_coarse_dt=True)
    grid = scn.grid()
    hist, _ = evolution.run(grid, scn.material(), scn.data, scn.T, scn.N)
    report = probes.run_probes(scn, hist)
    assert len(report.rows) == len(scn.probes)
    summary = report.summary()
    for row in summary:
        if row["field"] in ("sigma", "xi") or row["axis"] != "time":
            assert row["target"] is not None
    assert report.interpolation is not None


def test_strip_gradient_doubles_with_h_on_smooth_run():
    # smooth elastic velocity field: strip energy scales like h (within 20%)
    scn = load_benchmark("elastic-only", n=16, N=4)
    grid = scn.grid()
    hist, _ = evolution.run(grid, scn.material(), scn.data, scn.T, scn.N)
    cutoff = make_cutoff(grid, eps0=0.15, h0=0.25)
    v1 = strip_gradient_norm(hist, 1 / 16, cutoff).normal_grad_time_integral
    v2 = strip_gradient_norm(hist, 2 / 16, cutoff).normal_grad_time_integral
    assert v2 / v1 == pytest.approx(2.0, rel=0.2)


def test_interpolation_ratio_stable_under_time_refinement():
    # halving dt leaves R(h) within 2x per ladder rung
    reps = []
    for N in (50, 100):
        scn = load_benchmark("mixed-boundary-kinematic", n=8, N=N, mu=0.05,
                             allow_coarse_dt=True)
        hist, _ = evolution.run(scn.grid(), scn.material(), scn.data,
                                scn.T, scn.N)
        reps.append(interpolation_check(hist, scn.cutoff(), delta=0.05))
    for r1, r2 in zip(reps[0].ratio, reps[1].ratio):
        if np.isfinite(r1) and np.isfinite(r2) and r1 > 0:
            assert 0.5 <= r2 / r1 <= 2.0


def test_mu_sweep_partial_report_on_failure(monkeypatch):
    scn = load_benchmark("elastic-only", n=4, N=2)
    real_run = evolution.run

    def failing_run(grid, params, data, T, N, **kw):
        if params.mu < 0.01:
            raise evolution.GlobalSolverError("forced failure", step_index=0)
        return real_run(grid, params, data, T, N, **kw)

    monkeypatch.setattr(evolution, "run", failing_run)
    rep = mu_sweep(scn, mus=[0.1, 0.001], keep_probe_fields=False)
    assert len(rep.failures) == 1
    assert rep.failures[0]["mu"] == 0.001
    oks = [e for e in rep.entries if e.failure is None]
    assert len(oks) == 1 and oks[0].mu == 0.1


def test_seminorm_axes_3d_smoke():
    grid = build_grid(Geometry(d=3, mode="mixed"), 4)
    cutoff = make_cutoff(grid, eps0=0.15, h0=0.1)
    rng = np.random.default_rng(42)
    sigma = rng.standard_normal((5, grid.ncells, grid.nqp, 6))
    hist = _history(grid, sigma, np.linspace(0, 1, 5))
    for axis in ("tangential-1", "tangential-2", "normal", "time"):
        table = seminorm_table(hist, axis, "sigma", cutoff, "sup")
        assert np.all(table.values >= 0)
        assert table.h[0] == pytest.approx(
            0.25 if axis != "time" else 0.25)
    with pytest.raises(ValueError):
        seminorm_table(hist, "tangential-3", "sigma", cutoff, "sup")
