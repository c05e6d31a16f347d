"""Property tests over randomised admissible parameters."""

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from dividend_hjb import ModelParams, Policy, ViolatedAssumption, alpha, derived_constants, utility, validate
from dividend_hjb.inner import InnerCheap, InnerNonCheap
from dividend_hjb.montecarlo import PERTURBATIONS, perturb_policy
from dividend_hjb.rng import INV_2_32, philox4x32, ppnd16
from dividend_hjb.solution import hjb_expression

SETTINGS = settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.filter_too_much])

floats = dict(allow_nan=False, allow_infinity=False)


@st.composite
def raw_params(draw, cheap=False):
    theta = draw(st.floats(0.05, 1.0, **floats))
    eta = theta if cheap else theta * (1.0 + draw(st.floats(0.01, 2.0, **floats)))
    return ModelParams(
        a=draw(st.floats(0.01, 1.0, **floats)),
        b=draw(st.floats(0.1, 2.0, **floats)),
        theta=theta,
        eta=eta,
        beta=draw(st.floats(0.01, 0.5, **floats)),
        p=draw(st.floats(0.01, 0.9, **floats)),
    )


def _valid(params):
    try:
        validate(params)
    except ViolatedAssumption:
        return False
    return True


@SETTINGS
@given(raw_params())
def test_noncheap_constant_signs(params):
    assume(_valid(params))
    c = derived_constants(params)
    al, p = c.alpha, params.p
    assert c.B > 0 and c.D > 0 and 1 - al + al * p < 0
    assert c.xi0 < c.xiStar and c.xStar > 0


@SETTINGS
@given(raw_params())
def test_reinsurance_fraction_at_zero_is_below_one(params):
    assume(_valid(params))
    c = derived_constants(params)
    al, p, eta, theta = c.alpha, params.p, params.eta, params.theta
    slope = (c.B * np.exp(c.xi0 / (1 - p)) + c.D) * eta * params.a / params.b**2
    identity = 2 * (eta - theta) / (al * eta * (1 - p))
    assert slope == pytest.approx(identity, rel=1e-9)
    assert identity < 1


@SETTINGS
@given(raw_params(cheap=True))
def test_cheap_scale_constant_equivalence(params):
    a, b, theta, beta, p = params.a, params.b, params.theta, params.beta, params.p
    base = beta / (1 - p) - theta**2 * a**2 / (2 * b**2) * p / (1 - p) ** 2
    by_beta = beta > theta**2 * a**2 * p / (2 * b**2 * (1 - p))
    by_alpha = alpha(params) * (1 - p) > 1
    # equality cases differ only by rounding; skip the razor's edge
    assume(abs(alpha(params) * (1 - p) - 1) > 1e-9)
    assert (base > 0) == by_beta == by_alpha
    if by_alpha:
        assert derived_constants(params).M > 0


@SETTINGS
@given(raw_params(), st.floats(1e-6, 1.0, **floats))
def test_g_round_trip(params, frac):
    assume(_valid(params))
    c = derived_constants(params)
    br = InnerNonCheap(params, c)
    x = frac * c.xStar
    assert abs(br.g(br.g_inverse(x)) - x) <= 1e-10 * max(1.0, x)


@SETTINGS
@given(st.one_of(raw_params(), raw_params(cheap=True)), st.floats(1e-4, 1.0, **floats))
def test_inner_branch_solves_hjb(params, frac):
    assume(_valid(params))
    c = derived_constants(params)
    br = InnerCheap(params, c) if params.eta == params.theta else InnerNonCheap(params, c)
    v, vp, vpp = br.value(frac * c.xStar)
    assert vp > 0 and vpp < 0
    q, cons = br.policy(frac * c.xStar)
    assert 0 <= q <= 1 and cons > 0
    res = hjb_expression(params, v, vp, vpp)
    assert abs(res) <= 1e-8 * max(1.0, params.beta * v, abs((1 - params.p) / params.p * vp ** (-params.p / (1 - params.p))))


@SETTINGS
@given(raw_params())
def test_validate_is_deterministic(params):
    try:
        first = validate(params)
    except ViolatedAssumption as exc:
        with pytest.raises(ViolatedAssumption) as again:
            validate(params)
        assert str(again.value) == str(exc)
        return
    assert validate(params) == first


@given(st.floats(1e-100, 1e6, **floats), st.floats(0.01, 0.99, **floats), st.floats(1e-100, 100.0, **floats))
def test_utility_homogeneous(c, p, lam):
    assert utility(lam * c, p) == pytest.approx(lam**p * utility(c, p), rel=1e-12, abs=1e-300)


@given(st.lists(st.integers(0, 2**32 - 1), min_size=2, max_size=50, unique=True))
def test_ppnd16_strictly_monotone(words):
    w = np.sort(np.array(words, dtype=np.int64))
    z = ppnd16((w + 0.5) * INV_2_32)
    assert np.all(np.diff(z) > 0)


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1), st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_philox_is_injective_on_counters(c_a, c_b, k0, k1):
    if c_a == c_b:
        return
    M = 0xFFFFFFFF

    def block(c):
        return tuple(int(w) for w in philox4x32(
            np.uint64(c & M), np.uint64(c >> 32), np.uint64(7), np.uint64(0), np.uint64(k0), np.uint64(k1)))

    assert block(c_a) != block(c_b)


@given(st.sampled_from(PERTURBATIONS), st.floats(-1.0, 3.0, **floats))
def test_perturbed_policies_stay_admissible(kind, magnitude):
    if kind == "freeze_q":
        magnitude = min(max(magnitude, 0.0), 1.0)
    base = Policy(q=lambda x: np.clip(1 - np.asarray(x) / 10, 0, 1), c=lambda x: 0.1 * np.asarray(x))
    pol = perturb_policy(base, kind, magnitude)
    x = np.linspace(0.0, 30.0, 61)
    q, c = pol.q(x), pol.c(x)
    assert np.all((q >= 0) & (q <= 1)) and np.all(c >= 0)
