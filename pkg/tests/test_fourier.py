import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import erfc

from sigvol.explicit import heston_charfun
from sigvol.fourier import (
    PricingRequest,
    asian_bs_charfun,
    asian_price,
    black_price,
    bs_charfun,
    bs_price,
    bs_vega,
    choose_sigma_bs,
    gauss_laguerre,
    implied_vol,
    lewis_price,
    qvol_swap_strike,
    smile,
    solve_for_pricing,
    variance_swap_strike,
)
from sigvol.models import OUParams, VolatilitySpec, flat_spec, heston_spec, ou_rep, stein_stein_spec
from sigvol.montecarlo import asian_payoff, mc_price, simulate_sigvol


def test_bs_edge_cases():
    assert bs_price(1.2, 1.0, 1.0, 0.0) == pytest.approx(0.2)
    assert bs_price(0.8, 1.0, 1.0, 0.0) == 0.0
    assert bs_charfun(0.0, 1.0, 0.3) == 1.0


def test_bs_against_erfc_oracle():
    # S=K=1, T=1, σ=0.2: d1 = 0.1, d2 = -0.1
    ref = 0.5 * erfc(-0.1 / math.sqrt(2)) - 0.5 * erfc(0.1 / math.sqrt(2))
    assert abs(bs_price(1.0, 1.0, 1.0, 0.2) - ref) < 1e-12


def test_put_call_parity():
    K = np.array([0.8, 1.0, 1.3])
    c = bs_price(1.0, K, 0.5, 0.3)
    p = bs_price(1.0, K, 0.5, 0.3, "put")
    np.testing.assert_allclose(c - p, 1.0 - K, atol=1e-14)


def test_implied_vol_examples():
    assert implied_vol(0.0797, 1.0, 1.0, 1.0) == pytest.approx(0.20, abs=2e-4)
    with pytest.raises(ValueError):
        implied_vol(1.5, 1.0, 1.0, 1.0)
    assert np.isnan(implied_vol(np.array([1.5]), 1.0, 1.0, 1.0, errors="nan")[0])


@given(st.floats(0.05, 1.5), st.floats(0.6, 1.6), st.floats(0.05, 3.0), st.sampled_from(["call", "put"]))
def test_implied_vol_round_trip(sigma, K, T, kind):
    p = bs_price(1.0, K, T, sigma, kind)
    intrinsic = max(1 - K, 0) if kind == "call" else max(K - 1, 0)
    if p - intrinsic < 1e-12:
        return
    iv = implied_vol(p, 1.0, K, T, kind)
    assert abs(bs_price(1.0, K, T, iv, kind) - p) < 1e-9
    if bs_vega(1.0, K, T, sigma) > 1e-3:
        assert abs(iv - sigma) < 1e-8


def test_flat_spec_gives_black_scholes():
    T, sig = 0.5, 0.2
    sol, rule = solve_for_pricing(flat_spec(sig, -0.5, 0), T, L=64, J=100, order=0)
    K = np.linspace(0.7, 1.3, 13)
    price = lewis_price(sol, PricingRequest(K, T, sigma_bs=sig), rule)
    np.testing.assert_allclose(price, bs_price(1.0, K, T, sig), atol=1e-10)
    assert choose_sigma_bs(flat_spec(0.25), 1.0) == pytest.approx(0.25, abs=1e-6)


def test_flat_smile_is_flat():
    iv = smile(flat_spec(0.3, 0.0, 1), 0.25, np.linspace(0.8, 1.2, 9), L=32, J=20)
    np.testing.assert_allclose(iv, 0.3, atol=1e-8)


def test_lewis_matches_heston_closed_form_prices():
    # feed explicit φ into the pricer: checks quadrature and control variate alone
    k, th, eta, rho, T = 2.0, 0.0625, 0.7, -0.7, 0.5
    rule = gauss_laguerre(64)
    ut = rule.nodes - 0.5j
    phi = heston_charfun(ut, T, k, th, eta, rho)
    K = np.array([0.9, 1.0, 1.1])
    p = lewis_price(None, PricingRequest(K, T, sigma_bs=0.25), rule, phi=phi)
    # independent check by direct integration of the Lewis formula without control variate
    from scipy.integrate import quad

    for Ki, pi in zip(K, p):
        kk = math.log(1 / Ki)
        f = lambda u: (np.exp(1j * (u - 0.5j) * kk) * heston_charfun(u - 0.5j, T, k, th, eta, rho)).real / (u * u + 0.25)
        ref = 1 - Ki / math.pi * quad(f, 0, 200, limit=400)[0]
        assert abs(pi - ref) < 1e-7


def test_deep_itm_limit():
    sol, rule = solve_for_pricing(stein_stein_spec(1, 0.25, 0.5, -0.5, 2), 0.5, L=64, J=50)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        K = np.array([1e-2, 1e-3, 1e-4])
        p = lewis_price(sol, PricingRequest(K, 0.5, sigma_bs=0.3), rule)
    assert np.all(np.diff(p) > 0)
    assert abs(p[-1] - 1.0) < 2e-4


def test_non_finite_phi_rejected():
    rule = gauss_laguerre(8)
    phi = np.ones(8, complex)
    phi[3] = np.nan
    with pytest.raises(FloatingPointError):
        lewis_price(None, PricingRequest(1.0, 1.0, sigma_bs=0.2), rule, phi=phi)


def test_request_validation():
    with pytest.raises(ValueError):
        PricingRequest(1.0, 1.0, "digital")
    with pytest.raises(ValueError):
        PricingRequest(-1.0, 1.0)
    with pytest.raises(ValueError):
        PricingRequest(1.0, 1.0, t=1.0)


def test_choose_sigma_bs_stein_stein_short_maturity():
    spec = stein_stein_spec(1.0, 0.25, 1.2, -0.5, 4)
    for T in (1 / 52, 1 / 12, 0.25):
        s = choose_sigma_bs(spec, T)
        ref = math.sqrt(variance_swap_strike(spec, T))
        assert abs(s / ref - 1) < 0.10


def test_variance_swap_closed_forms():
    assert variance_swap_strike(flat_spec(0.3, 0, 2), 2.0) == pytest.approx(0.09, abs=1e-14)
    k, th, x, T = 0.5, 0.25, 0.6, 0.8
    spec = VolatilitySpec(ou_rep(OUParams(k, th, 0.0, x), 5), 0.0, 5)
    a = x - th
    ref = (th**2 * T + 2 * th * a * (1 - math.exp(-k * T)) / k + a * a * (1 - math.exp(-2 * k * T)) / (2 * k)) / T
    assert abs(variance_swap_strike(spec, T) - ref) < 1e-6


def test_variance_swap_time_dependent():
    spec = stein_stein_spec(1.0, 0.25, 0.5, -0.5, 4, time_dependent=True, T=1.0, n_grid=201)
    const = variance_swap_strike(stein_stein_spec(1.0, 0.25, 0.5, -0.5, 4), 1.0)
    assert abs(variance_swap_strike(spec, 1.0) - const) < 2e-3


def test_qvol_swap_flat_and_limits():
    spec = flat_spec(0.3, 0.0, 1)
    assert qvol_swap_strike(spec, 1.0, 0.5) == pytest.approx(0.3, abs=1e-9)
    assert qvol_swap_strike(spec, 1.0, 0.25) == pytest.approx(0.3**0.5, abs=1e-9)
    with pytest.raises(ValueError):
        qvol_swap_strike(spec, 1.0, 1.0)
    ss = stein_stein_spec(1.0, 0.25, 0.6, -0.5, 3)
    near_one = qvol_swap_strike(ss, 0.5, 0.98)
    assert abs(near_one - variance_swap_strike(ss, 0.5) ** 0.98) < 0.01


def test_asian_flat_exact():
    T, sig = 0.75, 0.25
    sol, rule = solve_for_pricing(flat_spec(sig, 0.3, 0), T, "asian", L=32, J=50, order=0)
    K = np.array([0.9, 1.0, 1.1])
    p = asian_price(sol, PricingRequest(K, T, "asian_call", sigma_bs=sig), rule)
    F = math.exp(-(sig**2) * T / 12)
    ref = black_price(F, K, sig**2 * T / 3)
    np.testing.assert_allclose(p, ref, atol=1e-12)
    # a mismatched control variate leaves only quadrature error
    off = asian_price(sol, PricingRequest(K, T, "asian_call", sigma_bs=0.4), rule)
    np.testing.assert_allclose(off, ref, atol=1e-6)
    put = asian_price(sol, PricingRequest(K, T, "asian_put", sigma_bs=sig), rule)
    np.testing.assert_allclose(p - put, F - K, atol=1e-12)


def test_asian_bs_charfun_consistency():
    sig, T = 0.3, 1.0
    # forward of the geometric average in BS
    assert asian_bs_charfun(-1j, T, 0.0, sig) == pytest.approx(math.exp(-(sig**2) * T / 12))


def test_asian_stein_stein_against_mc():
    spec = stein_stein_spec(1.0, 0.25, 1.2, -0.9, 4)
    T = 1 / 52
    sol, rule = solve_for_pricing(spec, T, "asian", L=64, J=100)
    p = asian_price(sol, PricingRequest(1.0, T, "asian_call"), rule)
    mc, se = mc_price(simulate_sigvol(spec, T, 50, 40_000, seed=2), asian_payoff(1.0))
    assert abs(p - mc) < 3 * se + 1e-4


def test_smile_marks_unpriceable_strikes_nan():
    spec = heston_spec(2.0, 0.0625, 0.7, -0.7, 4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        iv = smile(spec, 7 / 365, [1.0, 1.18], sigma_bs=choose_sigma_bs(spec, 7 / 365))
    assert np.isfinite(iv[0]) and 0.1 < iv[0] < 0.4
    assert np.isnan(iv[1]) or 0.1 < iv[1] < 1.0
