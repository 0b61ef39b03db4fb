"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they are
produced (they are also repeated in the terminal summary), or directly with
``python3 tests/test_acceptance.py``.  The whole suite takes roughly half an
hour on one core.
"""
import os
import sys
import time

import numpy as np
import pytest

os.environ.setdefault("SIGVOL_THREADS", "1")

from sigvol.calibration import CalibrationConfig, calibrate_slice, synthetic_slices
from sigvol.cli import resolve_model_path
from sigvol.explicit import heston_charfun, stein_stein_charfun
from sigvol.fourier import (
    PricingRequest,
    bs_charfun,
    bs_price,
    choose_sigma_bs,
    gauss_laguerre,
    implied_vol,
    lewis_price,
    qvol_swap_strike,
    smile,
    solve_for_pricing,
    variance_swap_strike,
)
from sigvol.hedging import simulate_hedge
from sigvol.models import (
    OUParams,
    VolatilitySpec,
    flat_spec,
    heston_spec,
    load_model_config,
    mgbm_spec,
    spec_from_config,
    stein_stein_spec,
)
from sigvol.montecarlo import mc_prices_extrapolated, qvol_payoff, representation_mse, vanilla_payoff
from sigvol.riccati import PayoffTransform, solve
from sigvol.signature import signature_of_path
from sigvol.tensor_algebra import (
    TensorElement,
    Word,
    bracket,
    concat,
    project,
    resolvent,
    shuffle,
    shuffle_exp,
    tensor_dim,
)

RESULTS = {}
MATURITIES = {"1w": 7 / 365, "1m": 1 / 12, "3m": 0.25, "6m": 0.5, "1y": 1.0}


def report(n: int, ok: bool, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {detail}"
    RESULTS[n] = line
    print(line, flush=True)
    assert ok, line


def _rel(lhs: TensorElement, rhs: TensorElement) -> float:
    a, b = lhs.coeffs, rhs.coeffs
    n = max(a.size, b.size)
    a = np.pad(a, (0, n - a.size))
    b = np.pad(b, (0, n - b.size))
    return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(a))))


def _letter(i: int) -> TensorElement:
    return TensorElement.word(Word((i,)), 1)


def _random(rng, M, scalar=True):
    c = rng.standard_normal(tensor_dim(M)) + 1j * rng.standard_normal(tensor_dim(M))
    if not scalar:
        c[0] = 0.0
    return TensorElement(c, M)


# 1. algebra identities

def test_criterion_01_algebra_identities():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    n_elements = 0
    for trial in range(1000):
        M = 1 + trial % 6
        a, b, c = (_random(rng, M) for _ in range(3))
        n_elements += 3
        one = TensorElement.unit(M)
        errs = [
            _rel(shuffle(one, a, M), a),
            _rel(concat(one, a, M), a),
            _rel(concat(a, one, M), a),
            _rel(shuffle(a, b, M), shuffle(b, a, M)),
            _rel(shuffle(shuffle(a, b, M), c, M), shuffle(a, shuffle(b, c, M), M)),
            _rel(concat(concat(a, b, M), c, M), concat(a, concat(b, c, M), M)),
        ]
        # l = l^e e + sum_i (l|i) i
        rebuilt = TensorElement.unit(M, scale=a.scalar)
        for i in (1, 2):
            rebuilt = rebuilt + concat(project(a, Word((i,))), _letter(i), M)
        errs.append(_rel(rebuilt, a))
        # resolvent of a letters-only element equals its shuffle exponential
        lb = TensorElement.from_words({"1": rng.uniform(-2, 2), "2": rng.uniform(-2, 2)}, 1)
        errs.append(_rel(resolvent(lb, M), shuffle_exp(lb, M)))
        # l i ⊗ e(b) == e(b) ⧢ ((e(-b) ⧢ l) i)
        i = 1 + trial % 2
        eb, emb = shuffle_exp(lb, M), shuffle_exp(-lb, M)
        lhs = concat(concat(a, _letter(i), M), eb, M)
        rhs = shuffle(eb, concat(shuffle(emb, a, M), _letter(i), M), M)
        errs.append(_rel(lhs, rhs))
        worst = max(worst, max(errs))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 10.0
    report(1, ok, f"{n_elements} random elements, M<=6: max rel err {worst:.2e} (tol 1e-12), "
                  f"{elapsed:.1f}s (limit 10s)")


# 2. shuffle property on paths

def test_criterion_02_shuffle_property():
    rng = np.random.default_rng(2)
    M = 6
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 15))
        times = np.unique(np.concatenate([[0.0], np.sort(rng.uniform(0, 1, n - 1))]))
        w = np.concatenate([[0.0], np.cumsum(rng.standard_normal(times.size - 1) * 0.5)])
        sig = signature_of_path(times, w, M).value(-1)
        for _ in range(5):
            la = int(rng.integers(0, M + 1))
            lb = int(rng.integers(0, M - la + 1))
            a = TensorElement.word(Word(tuple(rng.integers(1, 3, la))), la)
            b = TensorElement.word(Word(tuple(rng.integers(1, 3, lb))), lb)
            lhs = bracket(a, sig) * bracket(b, sig)
            rhs = bracket(shuffle(a, b, M), sig)
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
    report(2, worst <= 1e-10, f"100 paths x 5 word pairs, M=6: max rel err {worst:.2e} (tol 1e-10)")


# 3. representation fidelity

@pytest.mark.slow
def test_criterion_03_representation_fidelity():
    t0 = time.perf_counter()
    tab = representation_mse(OUParams(4.0, 0.25, 2.0), orders=(2, 4, 6), horizons=(0.25, 0.5, 1.0),
                             n_paths=100_000, beta1=0.0, beta2=0.0, seed=0)
    elapsed = time.perf_counter() - t0
    ex, rg = tab["exact"], tab["regression"]
    for M in (2, 4, 6):
        print(f"    M={M} exact " + " ".join(f"{v:.3e}" for v in ex[M])
              + " | regression " + " ".join(f"{v:.3e}" for v in rg[M]))
    m4 = ex[4][0]
    order_ok = {}
    for M in (2, 4, 6):
        order_ok[M] = (ex[M][0] < rg[M][0], ex[M][1] < rg[M][1], rg[M][2] < ex[M][2])
    bad = [f"M={M}:{h}" for M, flags in order_ok.items() for h, f in zip(("3m", "6m", "1y"), flags) if not f]
    ok = m4 < 1e-4 and not bad and elapsed < 300
    report(3, ok, f"OU M=4 3m exact MSE {m4:.3e} (tol 1e-4, reference 1.736e-05); ordering "
                  f"{'reproduced' if not bad else 'violated at ' + ','.join(bad)}; {elapsed:.0f}s (limit 300s)")


# 4. Black-Scholes degeneration

def test_criterion_04_black_scholes_degeneration():
    spec = flat_spec(0.2, rho=-0.3, order=2)
    worst_phi = worst_price = 0.0
    for T in (1 / 12, 0.5, 1.0, 2.0):
        sol, rule = solve_for_pricing(spec, T, "european", 64, 100)
        ut = sol.u_nodes
        worst_phi = max(worst_phi, float(np.max(np.abs(sol.phi0() - bs_charfun(ut, T, 0.2)))))
        K = np.linspace(0.6, 1.5, 19)
        for kind in ("european_call", "european_put"):
            p = lewis_price(sol, PricingRequest(K, T, kind, sigma_bs=0.2), rule)
            ref = bs_price(1.0, K, T, 0.2, "put" if kind.endswith("put") else "call")
            worst_price = max(worst_price, float(np.max(np.abs(p - ref))))
    ok = worst_phi <= 1e-9 and worst_price <= 1e-10
    report(4, ok, f"flat 0.2: max |phi - phi_BS| {worst_phi:.1e} over 64 nodes (tol 1e-9), "
                  f"max |price - BS| {worst_price:.1e} (tol 1e-10)")


# 5/6. oracles

def _oracle_smile(phi, T, K, sigma_bs, rule):
    req = PricingRequest(K, T, "european_call", sigma_bs=sigma_bs)
    price = lewis_price(None, req, rule, phi=phi)
    return implied_vol(price, 1.0, K, T)


def test_criterion_05_stein_stein_oracle():
    kappa, theta, eta, rho = 1.0, 0.25, 1.2, -0.5
    spec = stein_stein_spec(kappa, theta, eta, rho, 4)
    K = np.linspace(0.8, 1.2, 21)
    t0 = time.perf_counter()
    worst = 0.0
    for name, T in MATURITIES.items():
        sbs = choose_sigma_bs(spec, T)
        iv, res = smile(spec, T, K, L=64, J=100, order=8, sigma_bs=sbs, return_prices=True)
        rule = gauss_laguerre(64)
        phi = stein_stein_charfun(kappa, theta, eta, rho, T, rule.nodes - 0.5j, PayoffTransform.european(T))
        iv_ref = _oracle_smile(phi, T, K, sbs, rule)
        err = float(np.max(np.abs(iv - iv_ref)))
        print(f"    {name}: max |IV - IV_oracle| {err:.2e}")
        worst = max(worst, err)
    elapsed = time.perf_counter() - t0
    ok = worst <= 5e-3 and elapsed < 60
    report(5, ok, f"Stein-Stein M=4, tilde M=8, J=100: max IV error {worst:.2e} over 5 maturities "
                  f"x strikes 0.8-1.2 (tol 5e-3); {elapsed:.1f}s (limit 60s)")


def test_criterion_06_heston_oracle():
    kappa, theta, eta, rho = 2.0, 0.0625, 0.7, -0.7
    spec = heston_spec(kappa, theta, eta, rho, 4)
    K = np.linspace(0.8, 1.2, 21)
    worst = 0.0
    for name, T in MATURITIES.items():
        if T < 1 / 12:
            continue
        sbs = choose_sigma_bs(spec, T)
        iv = smile(spec, T, K, L=64, J=100, order=8, sigma_bs=sbs)
        rule = gauss_laguerre(64)
        phi = heston_charfun(rule.nodes - 0.5j, T, kappa, theta, eta, rho)
        iv_ref = _oracle_smile(phi, T, K, sbs, rule)
        err = float(np.max(np.abs(iv - iv_ref)))
        print(f"    {name}: max |IV - IV_Heston| {err:.2e}")
        worst = max(worst, err)
    report(6, worst <= 1e-2, f"Heston via square-root representation, M=4 (Feller violated): max IV "
                             f"error {worst:.2e} for T >= 1m (tol 1e-2)")


# 7. non-affine and non-Markov smiles against Monte Carlo

@pytest.mark.slow
def test_criterion_07_fourier_vs_monte_carlo():
    t0 = time.perf_counter()
    worst = {}
    for name in ("hull_white", "ler"):
        spec = spec_from_config(load_model_config(resolve_model_path(name)))
        worst[name] = 0.0
        for i, (label, T) in enumerate(MATURITIES.items()):
            K = np.exp(np.linspace(-2, 2, 9) * 0.25 * np.sqrt(T))
            payoffs = {k: vanilla_payoff(k, "put" if k < 1 else "call") for k in K}
            mc = mc_prices_extrapolated(spec, T, 64, 1_000_000, payoffs, seed=100 + i)
            _, res = smile(spec, T, K, order=2 * spec.order, return_prices=True)
            price = np.where(K < 1, res.price - (1 - K), res.price)
            z = np.array([(price[j] - mc[k][0]) / mc[k][1] for j, k in enumerate(K)])
            print(f"    {name} {label}: (Fourier - MC)/SE " + " ".join(f"{v:+.2f}" for v in z))
            worst[name] = max(worst[name], float(np.max(np.abs(z))))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 3.0 and elapsed < 600
    report(7, ok, f"Hull-White max {worst['hull_white']:.2f} SE, LER max {worst['ler']:.2f} SE over 5 maturities "
                  f"x 9 strikes, 1e6 paths (tol 3 SE); {elapsed:.0f}s (limit 600s)")


# 8. swaps

@pytest.mark.slow
def test_criterion_08_swaps():
    spec = stein_stein_spec(1.0, 0.25, 1.2, -0.7, 4)
    lines = []
    worst = 0.0
    for i, T in enumerate((0.25, 1.0)):
        var_k = variance_swap_strike(spec, T)
        vol_k = qvol_swap_strike(spec, T, 0.5)
        mc = mc_prices_extrapolated(spec, T, 200, 200_000, {1.0: qvol_payoff(1.0), 0.5: qvol_payoff(0.5)},
                                    seed=200 + i)
        z_var = (var_k - mc[1.0][0]) / mc[1.0][1]
        z_vol = (vol_k - mc[0.5][0]) / mc[0.5][1]
        worst = max(worst, abs(z_var), abs(z_vol))
        lines.append(f"T={T:g}: var {var_k:.4f} vs {mc[1.0][0]:.4f}+-{mc[1.0][1]:.4f} ({z_var:+.2f} SE), "
                     f"vol {vol_k:.4f} vs {mc[0.5][0]:.4f}+-{mc[0.5][1]:.4f} ({z_vol:+.2f} SE)")
    for s in lines:
        print("    " + s)
    report(8, worst <= 3.0, f"swap strikes vs MC, Stein-Stein (1, .25, 1.2, -.7): max {worst:.2f} SE (tol 3)")


# 9. truncation order sweep

def test_criterion_09_truncation_rule():
    T = 0.5
    grid_L = (4, 8, 16, 32, 64, 128)
    tol = 1e-6
    flat_ok, notes, ties = True, [], []
    for M in (2, 3):
        spec = stein_stein_spec(2.0, 0.25, 0.6, -0.7, M)
        sbs = choose_sigma_bs(spec, T)
        req = PricingRequest(1.0, T, "european_put", sigma_bs=sbs)
        price = {}
        for Mt in range(M, 2 * M + 3):
            for L in grid_L:
                sol, rule = solve_for_pricing(spec, T, "european", L, 100, Mt)
                with np.errstate(all="ignore"):
                    price[Mt, L, True] = lewis_price(sol, req, rule)
                    price[Mt, L, False] = lewis_price(sol, req, rule, control_variate=False)
        ref = price[2 * M + 2, grid_L[-1], True]
        trunc = {Mt: abs(price[Mt, grid_L[-1], True] - ref) for Mt in range(M, 2 * M + 3)}
        below = min(trunc[Mt] for Mt in range(M, 2 * M))
        above = max(trunc[Mt] for Mt in range(2 * M, 2 * M + 3))
        flat_ok &= above <= 1e-3 * below
        needed = {}
        for Mt in range(M, 2 * M + 3):
            conv = price[Mt, grid_L[-1], True]
            for cv in (True, False):
                hit = [L for L in grid_L if abs(price[Mt, L, cv] - conv) <= tol]
                needed[Mt, cv] = hit[0] if hit else np.inf
            if not needed[Mt, True] < needed[Mt, False]:
                ties.append(f"M={M},tilde M={Mt}")
        notes.append(f"M={M}: truncation err below/at-or-above 2M {below:.1e}/{above:.1e}; nodes cv/plain "
                     + " ".join(f"{Mt}:{needed[Mt, True]}/{needed[Mt, False]}" for Mt in range(M, 2 * M + 3)))
    for s in notes:
        print("    " + s)
    report(9, flat_ok and not ties, f"flattening at tilde M=2M {'yes' if flat_ok else 'no'}; control variate "
                                    f"needs fewer nodes to reach {tol:g} at every tilde M "
                                    f"{'yes' if not ties else 'no, not at ' + ', '.join(ties)}")


# 10. hedging

TABLE3_SIG = {("1m", 0.9): 8.578e-5, ("1m", 1.0): 2.067e-4, ("1m", 1.1): 4.997e-5,
              ("6m", 0.75): 1.489e-3, ("6m", 1.0): 3.115e-3, ("6m", 1.3): 1.900e-3}
TABLE4 = [("1m", 0.95), ("1m", 1.0), ("1m", 1.05), ("6m", 0.85), ("6m", 1.0), ("6m", 1.15)]


@pytest.mark.slow
def test_criterion_10_hedging():
    T_of = {"1m": 1 / 12, "6m": 0.5}
    n_paths, steps = 4000, 100
    ss = stein_stein_spec(1.0, 0.25, 1.2, -0.6, 4)
    rel_ok = mag_ok = True
    for (m, K), ref in TABLE3_SIG.items():
        req = PricingRequest(K, T_of[m], "european_put")
        sig = simulate_hedge(ss, req, steps, n_paths, seed=300, strategy="sigvol")
        ora = simulate_hedge(ss, req, steps, n_paths, seed=300, strategy="explicit_oracle")
        rel = abs(sig.J_hat - ora.J_hat) / ora.J_hat
        z = (sig.J_hat - ref) / sig.J_se
        rel_ok &= rel <= 0.15
        mag_ok &= abs(z) <= 3.0
        print(f"    put {m} K={K}: J sigvol {sig.J_hat:.3e}+-{sig.J_se:.1e}, oracle {ora.J_hat:.3e} "
              f"({100 * rel:.1f}%), reference {ref:.3e} ({z:+.1f} SE)")
    mg = mgbm_spec(1.0, 0.25, 1.2, 0.6, -0.6, 4)
    wins = 0
    for m, K in TABLE4:
        req = PricingRequest(K, T_of[m], "asian_put")
        sig = simulate_hedge(mg, req, steps, n_paths, seed=400, strategy="sigvol")
        bs = simulate_hedge(mg, req, steps, n_paths, seed=400, strategy="bs_delta", bs_sigma=0.25)
        gain = 1 - sig.J_hat / bs.J_hat
        wins += gain >= 0.10
        print(f"    asian put {m} K={K}: J sigvol {sig.J_hat:.3e}, BS delta {bs.J_hat:.3e} ({100 * gain:+.1f}%)")
    ok = rel_ok and mag_ok and wins >= 5
    report(10, ok, f"European grid: sigvol within 15% of oracle {'on all 6' if rel_ok else 'NOT on all 6'}, "
                   f"within 3 SE of reference table {'on all 6' if mag_ok else 'NOT on all 6'}; Asian grid: "
                   f"sigvol beats BS delta by >=10% on {wins}/6 (need 5)")


# 11. performance

def _time_one_node(M, repeats=5):
    spec = stein_stein_spec(1.0, 0.25, 1.2, -0.5, M)
    u = np.array([1.0 - 0.5j])
    tr = PayoffTransform.european(1.0)
    solve(spec, tr, 1.0, u, J=100, order=2 * M)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        solve(spec, tr, 1.0, u, J=100, order=2 * M)
        best = min(best, time.perf_counter() - t0)
    return best


def test_criterion_11_performance():
    times = {M: _time_one_node(M, 5 if M < 5 else 2) for M in (2, 3, 4, 5)}
    growth = [times[M + 1] / times[M] for M in (2, 3, 4)]
    ok = times[3] < 0.05 and max(growth) <= 16
    report(11, ok, f"one node, J=100, tilde M=2M: M=3 {1e3 * times[3]:.2f} ms (limit 50 ms); growth M->M+1 "
                   + " ".join(f"x{g:.1f}" for g in growth) + " (limit x16)")


# 12. calibration round trip

@pytest.mark.slow
def test_criterion_12_calibration_round_trip():
    truth = VolatilitySpec(TensorElement.from_words({"e": 0.2, "2": 0.4, "21": -0.4}, 2), -0.6, 2, "synthetic")
    days = (7, 14, 35, 56)
    t0 = time.perf_counter()
    slices = [synthetic_slices(truth, [d], np.exp(np.linspace(-2, 2, 20) * 0.2 * np.sqrt(d / 365)), J=25)[0]
              for d in days]
    cfg = CalibrationConfig(M=2, sigma0=0.2, generations=60, stagnation=20, seed=0, J=25)
    results = [calibrate_slice(s, cfg) for s in slices]
    rmse = [r.rmse for r in results]
    rerun = calibrate_slice(slices[0], cfg)
    deterministic = np.array_equal(rerun.x, results[0].x) and rerun.loss == results[0].loss
    elapsed = time.perf_counter() - t0
    ok = max(rmse) < 1e-3 and deterministic and elapsed < 900
    report(12, ok, "synthetic 4-slice surface, M=2: IV RMSE " + " ".join(f"{r:.1e}" for r in rmse)
                   + f" (tol 1e-3), rerun {'identical' if deterministic else 'DIFFERS'}; {elapsed:.0f}s (limit 900s)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
