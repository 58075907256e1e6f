import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from pld import metrics, qbounds
from pld._gauss import inverse_mills, q_function
from pld.errors import DomainError
from pld.metrics import CodeAllocation


def test_coeffs_at_zero():
    c = qbounds.bound_coeffs(0.0)
    assert_allclose(c.a, math.sqrt(2 / math.pi), rtol=1e-15)
    assert_allclose(c.b, 0.5, rtol=1e-15)
    assert abs(c.c) < 1e-16
    assert qbounds.q_upper_bound(0.0, c) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("w", [-8.0, -2.0, 0.0, 1.0, 3.5, 7.0, 25.0])
def test_coeffs_definitional_identity(w):
    c = qbounds.bound_coeffs(w)
    assert c.a > 0 and c.b > 0
    assert c.c == q_function(w) - math.exp(c.log_b - c.a * w)
    assert_allclose(c.scale, c.b * math.exp(-c.a * w), rtol=1e-12)


def test_slope_two_ways_at_one():
    a = qbounds.bound_coeffs(1.0).a
    assert_allclose(a, inverse_mills(1.0, method="log"), rtol=1e-10)
    assert_allclose(a, math.exp(-0.5) / math.sqrt(2 * math.pi) / q_function(1.0), rtol=1e-10)


def test_coeffs_reject_deep_lower_tail():
    with pytest.raises(DomainError):
        qbounds.bound_coeffs(-60.0)
    with pytest.raises(DomainError):
        qbounds.bound_coeffs(math.nan)


@pytest.mark.parametrize("w", [-4.0, -1.0, 0.0, 0.7, 2.0, 6.5, 11.0])
def test_bounds_touch(w):
    upper = qbounds.q_upper_bound(w, qbounds.bound_coeffs(w))
    lower = qbounds.q_lower_bound(w, qbounds.lower_bound_coeffs(w))
    assert abs(upper - q_function(w)) <= 1e-9
    assert abs(lower - q_function(w)) <= 1e-9


@pytest.mark.parametrize("w", [-3.0, 0.0, 1.3, 4.0])
@pytest.mark.parametrize("shift", [-0.5, 0.5])
def test_bounds_near_anchor(w, shift):
    x = w + shift
    assert qbounds.q_upper_bound(x, qbounds.bound_coeffs(w)) >= q_function(x) - 1e-12
    assert qbounds.q_lower_bound(x, qbounds.lower_bound_coeffs(w)) <= q_function(x) + 1e-12


@given(st.floats(-8, 8), st.floats(-2, 2))
def test_sandwich_property(w, delta):
    x = w + delta
    lo = qbounds.q_lower_bound(x, qbounds.lower_bound_coeffs(w))
    hi = qbounds.q_upper_bound(x, qbounds.bound_coeffs(w))
    q = q_function(x)
    assert lo <= q + 1e-12
    assert q <= hi + 1e-12


@pytest.mark.parametrize("w", [-2.0, 0.0, 3.0])
def test_lower_bound_far_above_stays_below_one(w):
    assert qbounds.q_lower_bound(50.0, qbounds.lower_bound_coeffs(w)) <= 1.0


def test_lower_bound_overflow_is_minus_inf():
    assert qbounds.q_lower_bound(300.0, qbounds.lower_bound_coeffs(-3.0)) == -math.inf


def test_epsilon_hat_touches_and_minorizes(surface_link):
    g = surface_link.gamma_bob
    n_hat, d = 20.0, 16
    coeffs = qbounds.lower_bound_coeffs(metrics.omega(n_hat, d, g))
    assert_allclose(qbounds.epsilon_hat(n_hat, d, g, coeffs), metrics.erasure_prob(n_hat, d, g), atol=1e-9)
    for n in np.linspace(8, 60, 105):
        assert qbounds.epsilon_hat(n, d, g, coeffs) <= metrics.erasure_prob(n, d, g) + 1e-12


def test_epsilon_hat_decreases_with_n(surface_link):
    g = surface_link.gamma_eve
    coeffs = qbounds.lower_bound_coeffs(metrics.omega(20.0, 16, g))
    vals = [qbounds.epsilon_hat(n, 16, g, coeffs) for n in np.linspace(10, 40, 61)]
    assert np.all(np.diff(vals) < 0)


def test_epsilon_hat_concave_in_feasible_n(surface_link):
    # Bob's message term over n_m >= the Eve-M boundary (about 27.35 uses).
    g, d = surface_link.gamma_bob, 16
    h = 0.25
    for n_hat in (30.0, 64.0, 120.0):
        coeffs = qbounds.lower_bound_coeffs(metrics.omega(n_hat, d, g))
        for n in np.linspace(28, 128, 101):
            second = (qbounds.epsilon_hat(n + h, d, g, coeffs) - 2 * qbounds.epsilon_hat(n, d, g, coeffs)
                      + qbounds.epsilon_hat(n - h, d, g, coeffs))
            assert second <= 1e-9


def test_rd_surrogate_touch_and_dominance(surface_link):
    anchor = qbounds.make_anchor(surface_link, 16, 16, 64.0, 20.0)
    at = CodeAllocation(16, 16, 64.0, 20.0)
    true = metrics.evaluate(surface_link, at).r_d
    assert abs(qbounds.rd_surrogate(at, surface_link, anchor) - true) <= 1e-9
    for n_m in np.linspace(30, 128, 20):
        for n_k in np.linspace(16, 40, 20):
            alloc = CodeAllocation(16, 16, n_m, n_k)
            assert (qbounds.rd_surrogate(alloc, surface_link, anchor)
                    <= metrics.evaluate(surface_link, alloc).r_d + 1e-12)


def test_surrogate_factors_clamped(surface_link):
    anchor = qbounds.make_anchor(surface_link, 16, 16, 40.0, 16.0)
    a, b = qbounds.surrogate_factors(40.0, 400.0, surface_link, anchor)
    assert 0 <= a <= 1 and b >= 0


def test_anchor_requires_key(surface_link):
    with pytest.raises(DomainError):
        qbounds.make_anchor(surface_link, 16, 0, 40.0, 16.0)
    anchor = qbounds.make_anchor(surface_link, 16, 16, 40.0, 16.0)
    with pytest.raises(DomainError):
        qbounds.rd_surrogate(CodeAllocation(24, 16, 40, 16), surface_link, anchor)
