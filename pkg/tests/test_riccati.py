import time

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sigvol.explicit import heston_charfun, stein_stein_charfun
from sigvol.fourier import bs_charfun, gauss_laguerre, lewis_nodes
from sigvol.models import VolatilitySpec, flat_spec, heston_spec, stein_stein_spec
from sigvol.riccati import (
    PayoffTransform,
    RiccatiBlowUp,
    char_functional_along_path,
    riccati_rhs,
    solve,
    solve_many,
)
from sigvol.signature import signature_of_path
from sigvol.tensor_algebra import TensorElement, tensor_dim

from conftest import random_element


def test_transform_coefficients():
    T = 2.0
    u = np.array([0.5, 1.0 - 0.5j])
    f0, f1, g0 = PayoffTransform.european(T).coefficients(u)
    np.testing.assert_allclose(f0, 1j * u)
    assert np.all(f1 == 0) and np.all(g0 == 0)
    f0, f1, g0 = PayoffTransform.asian(T).coefficients(u)
    np.testing.assert_allclose(f0 + f1 * T, 0)
    f0, f1, g0 = PayoffTransform.laplace(T).coefficients(u)
    np.testing.assert_allclose(g0, -u / T)
    with pytest.raises(ValueError):
        PayoffTransform("bad", 1.0).coefficients(u)


def test_flat_spec_matches_black_scholes():
    sig, T = 0.2, 0.75
    u = lewis_nodes(gauss_laguerre(64))
    sol = solve(flat_spec(sig, -0.4, 0), PayoffTransform.european(T), T, u, J=100, order=0)
    np.testing.assert_allclose(sol.phi0(), bs_charfun(u, T, sig), rtol=0, atol=1e-9)


def test_flat_laplace():
    sig, T = 0.3, 1.5
    u = np.array([0.1, 1.0, 4.0])
    sol = solve(flat_spec(sig, 0.0, 0), PayoffTransform.laplace(T), T, u, J=20, order=0)
    np.testing.assert_allclose(sol.phi0(), np.exp(-u * sig**2), rtol=1e-12)


@pytest.mark.parametrize("kind", ["european", "asian", "laplace"])
def test_kernel_matches_reference_rhs(kind):
    # one Euler step of the kernel equals the reference right-hand side
    rng = np.random.default_rng(4)
    spec = stein_stein_spec(1.0, 0.25, 1.2, -0.5, 2)
    tr = getattr(PayoffTransform, kind)(1.0)
    u = 0.7 - 0.5j
    sol = solve(spec, tr, 1e-6, [u], J=1, order=4)
    F = riccati_rhs(1e-6, TensorElement.zero(4), u, spec, tr)
    psi0 = sol.psi[0, 0]
    np.testing.assert_allclose(psi0 / 1e-6, F.coeffs, rtol=1e-4, atol=1e-8)


def test_reference_rhs_shape_error():
    spec = stein_stein_spec(1.0, 0.25, 1.2, -0.5, 3)
    with pytest.raises(ValueError):
        riccati_rhs(0.0, TensorElement.zero(2), 1.0, spec, PayoffTransform.european(1.0))


@pytest.mark.parametrize("T", [1 / 12, 0.5])
def test_stein_stein_charfun(T):
    k, th, eta, rho = 1.0, 0.25, 1.2, -0.5
    u = np.array([0.3, 1.0, 3.0, 6.0]) - 0.5j
    sol = solve(stein_stein_spec(k, th, eta, rho, 4), PayoffTransform.european(T), T, u, J=100)
    ref = stein_stein_charfun(k, th, eta, rho, T, u, PayoffTransform.european(T))
    np.testing.assert_allclose(sol.phi0(), ref, atol=5e-4)


def test_stein_stein_asian_charfun():
    k, th, eta, rho, T = 1.0, 0.25, 1.2, -0.9, 0.5
    u = np.array([0.5, 2.0]) - 0.5j
    tr = PayoffTransform.asian(T)
    sol = solve(stein_stein_spec(k, th, eta, rho, 4), tr, T, u, J=100)
    ref = stein_stein_charfun(k, th, eta, rho, T, u, tr)
    np.testing.assert_allclose(sol.phi0(), ref, atol=1e-4)


def test_heston_charfun_via_square_root_representation():
    k, th, eta, rho, T = 2.0, 0.0625, 0.7, -0.7, 0.25
    u = np.array([0.5, 2.0, 5.0]) - 0.5j
    sol = solve(heston_spec(k, th, eta, rho, 4), PayoffTransform.european(T), T, u, J=100)
    np.testing.assert_allclose(sol.phi0(), heston_charfun(u, T, k, th, eta, rho), atol=5e-3)


def test_oracles_agree_for_centred_ou():
    # X OU with θ=0 makes V = X² a Heston variance with (2κ, η²/(2κ), 2η)
    k, eta, rho, T, x0 = 1.5, 0.4, -0.6, 0.7, 0.3
    u = np.array([0.5, 2.0, 5.0])
    ss = stein_stein_charfun(k, 0.0, eta, rho, T, u, PayoffTransform.european(T), x0=x0)
    he = heston_charfun(u, T, 2 * k, eta**2 / (2 * k), 2 * eta, rho, v0=x0**2)
    np.testing.assert_allclose(ss, he, rtol=1e-8)


def test_charfun_at_zero_and_martingale_point():
    spec = stein_stein_spec(1.0, 0.25, 0.8, -0.5, 3)
    sol = solve(spec, PayoffTransform.european(1.0), 1.0, [0.0, -1j], J=50)
    np.testing.assert_allclose(sol.phi0(), [1.0, 1.0], atol=1e-10)


def test_solve_many_matches_solve():
    a = stein_stein_spec(1.0, 0.25, 1.2, -0.5, 2)
    b = stein_stein_spec(2.0, 0.2, 0.5, 0.3, 2)
    u = [0.5, 2.0]
    tr = PayoffTransform.european(0.5)
    many = solve_many([a, b], tr, 0.5, u, J=40)
    for s, m in zip((a, b), many):
        np.testing.assert_allclose(solve(s, tr, 0.5, u, J=40).psi, m.psi, rtol=1e-14)


def test_time_dependent_spec():
    spec = stein_stein_spec(1.0, 0.25, 1.2, -0.5, 3, time_dependent=True, T=0.5, n_grid=51)
    ref = stein_stein_charfun(1.0, 0.25, 1.2, -0.5, 0.5, [1.0], PayoffTransform.european(0.5))
    sol = solve(spec, PayoffTransform.european(0.5), 0.5, [1.0], J=100)
    assert abs(sol.phi0()[0] - ref[0]) < 5e-3


def test_blow_up_detection():
    spec = VolatilitySpec(TensorElement.from_words({"e": 1.0, "2": 3.0}, 1), 0.9, 1)
    tr = PayoffTransform.laplace(1.0)
    with pytest.raises(RiccatiBlowUp):
        solve(spec, tr, 5.0, [-50.0], J=10, max_retries=1)
    sol = solve(spec, tr, 5.0, [-50.0, 0.1], J=10, max_retries=1, raise_on_failure=False)
    assert sol.meta["failed_nodes"] == [0]
    assert np.isfinite(sol.phi0()[1])


def test_input_validation():
    spec = flat_spec(0.2)
    with pytest.raises(ValueError):
        solve(spec, PayoffTransform.european(1.0), 1.0, [1.0], J=0)
    with pytest.raises(ValueError):
        solve(spec, PayoffTransform.european(1.0), -1.0, [1.0])
    with pytest.raises(ValueError):
        solve(stein_stein_spec(1, 0.25, 1, 0, 3), PayoffTransform.european(1.0), 1.0, [1.0], order=2)


def test_psi_terminal_zero_and_interp():
    sol = solve(stein_stein_spec(1, 0.25, 1, -0.3, 2), PayoffTransform.european(1.0), 1.0, [1.0, 2.0], J=10)
    assert np.all(sol.psi[:, -1] == 0)
    mid = sol.psi_at(0.05)
    np.testing.assert_allclose(mid, 0.5 * (sol.psi[:, 0] + sol.psi[:, 1]))
    with pytest.raises(ValueError):
        sol.psi_at(1.5)


def test_char_functional_along_path_is_martingale():
    # E[M_t] = M_0 for the European exponent on simulated signature paths
    from sigvol.montecarlo import simulate_sigvol

    spec = stein_stein_spec(1.0, 0.25, 0.6, -0.5, 2)
    T = 0.5
    sol = solve(spec, PayoffTransform.european(T), T, [0.8], J=100)
    bundle = simulate_sigvol(spec, T, 50, 20_000, seed=5)
    sp = signature_of_path(bundle.times, bundle.W, 4)
    Mt = char_functional_along_path(sol, sp, np.log(bundle.S))
    assert abs(Mt[0, 0, 0] - sol.phi0()[0]) < 1e-12
    mean_T = Mt[0, :, -1].mean()
    se = Mt[0, :, -1].std() / np.sqrt(Mt.shape[1])
    assert abs(mean_T - sol.phi0()[0]) < 4 * se + 2e-3


def test_performance_envelope():
    spec = stein_stein_spec(1.0, 0.25, 1.2, -0.5, 3)
    tr = PayoffTransform.european(1.0)
    solve(spec, tr, 1.0, [1.0], J=100, order=3)
    t0 = time.perf_counter()
    for _ in range(5):
        solve(spec, tr, 1.0, [1.0], J=100, order=3)
    assert (time.perf_counter() - t0) / 5 < 0.05
