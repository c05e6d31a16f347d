import numpy as np
import pytest

from dividend_hjb import ModelParams, SolverConfig, solve
from dividend_hjb.errors import ConcavityViolation, DomainError, PastingMismatch, ViolatedAssumption
from dividend_hjb.solution import evaluate, hjb_expression, hjb_residual

Q_PROBE = 0.596290658353606044326
C_PROBE = 0.408619675822216418108
V_PROBE = 981.005769295047113281


def test_thresholds(noncheap_sol, cheap_sol):
    assert noncheap_sol.x_star == pytest.approx(11.2578, abs=5e-4)
    assert cheap_sol.x_star == pytest.approx(20.625, abs=1e-6)


def test_reinsurance_stops_above_threshold(noncheap_sol):
    assert noncheap_sol.evaluate(30.0)[3] == 0.0


def test_evaluate_at_free_boundary(sol):
    V, Vp, Vpp, q, c = sol.evaluate(sol.x_star)
    assert q == 0.0
    _, c_inner = sol.inner.policy(sol.x_star)
    assert c == pytest.approx(c_inner, rel=1e-15)
    c_outer = sol.grid.interpolate(sol.x_star)[1] ** (-1 / (1 - sol.params.p))
    assert c_outer == pytest.approx(c, rel=1e-5)


def test_value_vanishes_at_zero(noncheap_sol):
    assert noncheap_sol.evaluate(1e-15)[0] == 0.0
    assert noncheap_sol.evaluate(1e-10)[0] < 1e-6


def test_cheap_value_vanishes_like_power(cheap_sol):
    # M x^p / p with p = 0.01 reaches zero only in the limit
    M, p = cheap_sol.consts.M, cheap_sol.params.p
    x = np.geomspace(1e-150, 1.0, 50)
    V = cheap_sol.evaluate(x)[0]
    np.testing.assert_allclose(V, M * x**p / p, rtol=1e-13)
    assert np.all(np.diff(V) > 0) and V[0] < 0.04 * V[-1]


def test_probe_point(noncheap_sol):
    V, _, _, q, c = evaluate(noncheap_sol, 5.0)
    assert 0 < q < 1
    assert q == pytest.approx(Q_PROBE, rel=1e-11)
    assert c == pytest.approx(C_PROBE, rel=1e-11)
    assert V == pytest.approx(V_PROBE, rel=1e-12)


def test_global_concavity(sol):
    x = np.geomspace(1e-6 * sol.x_star, sol.grid.x_end, 10_000)
    _, Vp, Vpp, _, _ = sol.evaluate(x)
    assert np.all(Vp > 0) and np.all(Vpp < 0)


def test_policy_monotone_and_admissible(sol):
    x = np.geomspace(1e-6 * sol.x_star, sol.grid.x_end, 10_000)
    _, _, _, q, c = sol.evaluate(x)
    assert np.all((q >= 0) & (q <= 1)) and np.all(c >= 0)
    assert np.all(np.diff(q) <= 0) and np.all(np.diff(c) >= 0)
    assert np.all(q[x > sol.x_star] == 0)


def test_residual_inner_and_outer(sol):
    x = np.geomspace(1e-6 * sol.x_star, sol.grid.x_end, 2000)
    rel = sol.relative_hjb_residual(x)
    inner = x <= sol.x_star
    assert np.all(rel[inner] <= 1e-8)
    assert np.all(rel[~inner] <= 1e-6)
    assert hjb_residual(sol, 2 * sol.x_star) == pytest.approx(sol.hjb_residual(2 * sol.x_star))


def test_corrupted_value_has_large_residual(sol):
    pr = sol.params
    x = np.geomspace(0.01 * sol.x_star, 100 * sol.x_star, 200)
    V, Vp, Vpp = sol.derivatives(x)
    res = hjb_expression(pr, 2 * V, Vp, Vpp)
    assert np.all(res < 0)
    assert np.all(np.abs(res) >= pr.beta * V * (1 - 1e-6))


def test_residual_needs_concavity(noncheap_params):
    with pytest.raises(ConcavityViolation):
        hjb_expression(noncheap_params, 1.0, 1.0, 0.0)


def test_unclipped_maximiser_inside_reinsurance_region(sol):
    x = np.geomspace(1e-6 * sol.x_star, sol.x_star, 2000)
    qu = sol.unclipped_q(x)
    assert np.all((qu >= -1e-12) & (qu <= 1))


def test_unclipped_maximiser_negative_away_from_threshold(sol):
    x = np.geomspace(1.01 * sol.x_star, sol.grid.x_end, 2000)
    assert np.all(sol.unclipped_q(x) < 0)


def test_asymptote_ratios(sol):
    dv, dc = sol.asymptote_ratios(1000 * sol.x_star)
    assert abs(dv) <= 1e-2 and abs(dc) <= 2e-2


def test_evaluate_domain(sol):
    for bad in (0.0, -1.0, np.array([1.0, -2.0])):
        with pytest.raises(DomainError):
            sol.evaluate(bad)


def test_evaluate_is_repeatable(sol):
    x = np.linspace(0.1, 60.0, 777)
    first = sol.evaluate(x)
    x_copy = x.copy()
    second = sol.evaluate(x)
    np.testing.assert_array_equal(x, x_copy)
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a, b)


def test_scalar_and_vector_agree(sol):
    x = np.array([0.5, sol.x_star, 3 * sol.x_star])
    vec = sol.evaluate(x)
    for i, xi in enumerate(x):
        sc = sol.evaluate(float(xi))
        for a, b in zip(sc, vec):
            assert a == b[i]


def test_policy_object(sol):
    pol = sol.policy()
    x = np.array([0.0, 1.0, sol.x_star, 100.0])
    q, c = pol.q(x), pol.c(x)
    assert np.all((q >= 0) & (q <= 1)) and np.all(c > 0)
    assert q[-1] == 0.0
    assert sol.regime.value in pol.descriptor


def test_pasting_report(sol):
    report = sol.pasting()
    assert set(report) == {"v", "v'", "v''"}
    assert report["v"][2] == 0.0
    for inner, outer, gap in report.values():
        assert gap <= SolverConfig().pasting_rtol


def test_pasting_mismatch_raised_under_tight_bound(noncheap_params):
    with pytest.raises(PastingMismatch) as info:
        solve(noncheap_params, SolverConfig(pasting_rtol=1e-8))
    assert info.value.args


def test_solve_propagates_validation():
    with pytest.raises(ViolatedAssumption):
        solve(ModelParams(a=1, b=1, theta=0.4, eta=0.8, beta=0.001, p=0.9))


def test_solve_is_deterministic(noncheap_params, noncheap_sol):
    again = solve(noncheap_params)
    x = np.linspace(0.1, 200.0, 500)
    for a, b in zip(again.evaluate(x), noncheap_sol.evaluate(x)):
        np.testing.assert_array_equal(a, b)
