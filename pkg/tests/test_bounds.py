import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qewlab.bounds import (OptimizerConfig, asymptotic_gap_check, beta_tilde_180,
                           beta_tilde_generic, gamma, maximize_over_mu, p, positivity_threshold,
                           tail_integral, v_bound, w_bound, wbar)
from qewlab.errors import DivergenceError, DomainError


def dense_sup(lam, drive, beta, hi=200.0, n=400_001):
    """Independent brute-force supremum over a dense mu grid."""
    mu = lam + np.geomspace(1e-7, hi, n)
    pv = 1 / (1 - np.exp(-lam)) + 1 / (1 - np.exp(lam - mu))
    return max(float(np.max((lam * drive - np.log(pv) - math.log(beta)) / mu)), 0.0)


# --- p and gamma -------------------------------------------------------------


def test_p_values():
    assert p(1, 2) == pytest.approx(2 / (1 - math.exp(-1)), abs=1e-12)
    assert p(1, 2) == pytest.approx(3.163953414, abs=1e-9)
    assert p(1, 1e6) == pytest.approx(1 / (1 - math.exp(-1)) + 1, abs=1e-9)
    assert p(1, 1e6) == pytest.approx(2.581976707, abs=1e-9)


@given(st.floats(1e-3, 20), st.floats(1e-6, 50))
def test_p_exceeds_two(l, gap):
    assert p(l, l + gap) > 2


def test_p_domain():
    with pytest.raises(DomainError):
        p(1, 1)
    with pytest.raises(DomainError):
        p(0, 1)
    with pytest.raises(DomainError):
        gamma(1, 2, 0.5, 1)


def test_gamma_values():
    assert gamma(1, 2, 1, 3) == pytest.approx(math.exp(-3) * 3.163953414, rel=1e-9)
    assert gamma(1, 2, 1, 3) == pytest.approx(0.157524, abs=1e-6)
    assert gamma(0.7, 3, 1, 0) == p(0.7, 3) > 2


@given(st.floats(0.1, 5), st.floats(0.01, 10), st.floats(1, 10), st.floats(0, 20), st.floats(0.01, 5))
def test_gamma_decreasing_in_F(lam, gap, beta, F, dF):
    assert gamma(lam, lam + gap, beta, F + dF) < gamma(lam, lam + gap, beta, F)


# --- rate suprema --------------------------------------------------------------


def test_wbar_hand_value():
    r = wbar(3, 1, 1)
    at_two = (3 - math.log(p(1, 2))) / 2
    assert r.value >= at_two
    assert r.value >= 0.924066
    assert r.value >= r.grid_max
    assert abs(r.value - dense_sup(1, 3, 1)) < 1e-6


def test_wbar_zero_force():
    r = wbar(0, 1, 1)
    assert r.value == 0.0 and r.mu is None and r.raw < 0


@given(st.floats(0.2, 3), st.floats(1, 5), st.floats(0, 60))
@settings(max_examples=30, deadline=None)
def test_wbar_dominates_dense_scan(lam, beta, F):
    r = wbar(F, lam, beta)
    oracle = dense_sup(lam, F, beta, n=20_001)
    assert r.value >= oracle - 1e-9
    assert r.value <= max(oracle, 0) + 1e-4 * max(1.0, oracle)


def test_wbar_gamma_identity():
    rng = np.random.default_rng(1)
    for _ in range(20):
        lam, beta, F = rng.uniform(0.2, 3), rng.uniform(1, 5), rng.uniform(0, 40)
        direct = wbar(F, lam, beta).value
        via_gamma = maximize_over_mu(lambda mu: -math.log(gamma(lam, mu, beta, F)) / mu, lam).value
        assert abs(direct - via_gamma) <= 1e-12 * max(1.0, abs(direct))


def test_w_is_shifted_wbar():
    assert w_bound(5, 1, 1).value == wbar(3, 1, 1).value
    for F in [0, 1, 2]:
        assert w_bound(F, 1, 1).value == 0.0
    grid = [w_bound(F, 0.5, 2).value for F in np.linspace(0, 40, 41)]
    assert all(b >= a for a, b in zip(grid, grid[1:]))


def test_wbar_nonincreasing_in_beta():
    vals = [wbar(20, 1, b).value for b in [1, 1.5, 2, 4, 8]]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_v_identity_and_hand_value():
    # (1 - 2 delta) F - 2 = 10 at delta = 1/4 needs F = 24
    v = v_bound(24, 1, math.e, 0.25)
    assert v.value >= (10 - math.log(p(1, 2)) - 1) / 2 / 5
    assert v.value >= 0.784813
    rng = np.random.default_rng(2)
    for _ in range(20):
        lt, bt, d, F = rng.uniform(0.2, 3), rng.uniform(1, 5), rng.uniform(0.01, 0.49), rng.uniform(0, 80)
        lhs = v_bound(F, lt, bt, d).value * 4 * (1 + d)
        rhs = wbar((1 - 2 * d) * F - 2, lt, bt).value
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, rhs)


def test_v_zero_below_drive():
    assert v_bound(4, 1, 1, 0.25).value == 0.0  # (1 - 2 delta) F = 2


def test_v_nonincreasing_in_delta():
    vals = [v_bound(40, 1, 2, d).value for d in [0.05, 0.1, 0.2, 0.3, 0.4]]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


# --- positivity threshold --------------------------------------------------------


def test_threshold_closed_form():
    assert positivity_threshold(1, 1) == pytest.approx(math.log(1 + 1 / (1 - math.exp(-1))), abs=1e-15)
    assert positivity_threshold(1, 1) == pytest.approx(0.9485553, abs=1e-7)
    assert positivity_threshold(2, 3) - positivity_threshold(2, 1) == pytest.approx(math.log(3) / 2)


@pytest.mark.parametrize("lam", [0.3, 1.0, 2.5])
@pytest.mark.parametrize("beta", [1.0, 2.0, 7.0])
def test_threshold_separates_zero_and_positive(lam, beta):
    Fs = positivity_threshold(lam, beta)
    assert wbar(Fs + 0.1, lam, beta).value > 0
    assert wbar(Fs - 0.1, lam, beta).value == 0.0


# --- beta tilde --------------------------------------------------------------------


@pytest.mark.parametrize("c", [1.01, 1.2, 1.5, 3.0, 10.0, 100.0])
def test_tail_integral_exponent_two(c):
    val, err = tail_integral(c, 2.0, 1.0, tol=1e-10)
    assert abs(val - 0.5 * math.log((c + 1) / (c - 1))) < 1e-8
    assert err < 1e-8


def test_tail_integral_series_region():
    # c already past the cut: pure series, compare with quadrature of the raw integrand
    from scipy import integrate
    a, beta, c = 3.5, 2.0, 5.0
    ref, _ = integrate.quad(lambda x: beta * x**-a / (1 - beta * x**-a), c, np.inf, epsabs=1e-13)
    assert tail_integral(c, a, beta)[0] == pytest.approx(ref, abs=1e-10)


def test_beta_tilde_180_closed_form():
    # a = 2, beta = 1: inf_c c + log((c+1)/(c-1))/2 sits at c = sqrt 2
    bt = beta_tilde_180(360, 1, 1)
    exact = math.e * (math.sqrt(2) + math.asinh(1))
    assert abs(bt.value - exact) < 1e-8
    assert bt.c_star == pytest.approx(math.sqrt(2), rel=1e-5)
    assert bt.value >= math.e * bt.threshold


def test_beta_tilde_180_guard():
    with pytest.raises(DivergenceError, match="lam/180"):
        beta_tilde_180(1.0, 2.0, 1.0 / 100)
    with pytest.raises(DivergenceError):
        beta_tilde_180(1.0, 2.0, 1.0 / 180)
    beta_tilde_180(1.0, 2.0, 1.0 / 181)


def test_beta_tilde_generic_basic():
    bt = beta_tilde_generic(1.0, 1.0, 0.5)
    assert bt.value > 1.0 and math.isfinite(bt.value)
    # degenerate law: E exp(lam_tilde a) with beta = exp(lam a)
    a = 2.0
    assert beta_tilde_generic(0.5, math.exp(0.5 * a), 0.25).value >= math.exp(0.25 * a)
    with pytest.raises(DivergenceError):
        beta_tilde_generic(1.0, 2.0, 1.0)


def test_beta_tilde_grid_refinement():
    coarse = beta_tilde_generic(1, 2, 0.4, OptimizerConfig(c_points=51, c_refine=False)).value
    fine = beta_tilde_generic(1, 2, 0.4, OptimizerConfig(c_points=101, c_refine=False)).value
    refined = beta_tilde_generic(1, 2, 0.4).value
    assert fine <= coarse + 1e-12
    assert refined <= fine + 1e-12


def test_beta_tilde_matches_scan():
    a, beta = 2.5, 2.0
    cs = beta ** (1 / a) * np.geomspace(1 + 1e-4, 50, 4000)
    scan = min(c + tail_integral(c, a, beta)[0] for c in cs)
    bt = beta_tilde_generic(a, beta, 1.0).value
    assert bt <= scan + 1e-10
    assert bt >= scan - 1e-4


# --- large F ---------------------------------------------------------------------


def test_asymptotic_gap():
    rows, flagged = asymptotic_gap_check(1, 2, [1e2, 1e3, 1e4])
    ratios = [r.ratio for r in rows]
    assert not flagged
    assert all(b <= a for a, b in zip(ratios, ratios[1:]))
    assert all(0 <= r.gap for r in rows)
    assert all(r.wbar <= r.F for r in rows)
    assert all(r.wbar >= r.wbar_at_hint - 1e-9 for r in rows)
    rows1, _ = asymptotic_gap_check(1, 1, [1e2, 1e3, 1e4])
    assert all(a.gap < b.gap for a, b in zip(rows1, rows))
    with pytest.raises(DomainError):
        asymptotic_gap_check(1, 2, [10, 5])
