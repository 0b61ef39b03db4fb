"""Monte Carlo simulation of signature volatility models and classical oracles.

Randomness comes from counter-based Philox streams keyed by ``(seed, block)``
where a block is a fixed-size group of consecutive paths, so an ensemble is
identical whatever batch size or worker count is used to generate it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

import numpy as np

from .models import (
    CIRParams,
    DelayedParams,
    MGBMParams,
    OUParams,
    RegressionConfig,
    VolatilitySpec,
    elastic_net_gram,
    ou_rep,
)
from .signature import chen_step, initial_signature, linear_functional_paths
from .tensor_algebra import TensorElement, tensor_dim

__all__ = [
    "BLOCK",
    "block_normals",
    "PathBundle",
    "iter_sigvol",
    "simulate_sigvol",
    "simulate_explicit",
    "iter_explicit",
    "simulate_ou",
    "ou_pathwise",
    "simulate_cir",
    "simulate_delayed",
    "simulate_mgbm_explicit",
    "mc_price",
    "mc_prices",
    "mc_prices_extrapolated",
    "vanilla_payoff",
    "asian_payoff",
    "qvol_payoff",
    "representation_mse",
]

BLOCK = 4096


def block_normals(seed: int, block: int, n: int, steps: int, k: int = 2, antithetic: bool = False) -> np.ndarray:
    """Standard normals of shape ``(n, steps, k)`` for one path block."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, block], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    if not antithetic:
        return rng.standard_normal((n, steps, k))
    half = (n + 1) // 2
    z = rng.standard_normal((half, steps, k))
    return np.concatenate([z, -z], axis=0)[:n]


def _blocks(n_paths: int, block: int = BLOCK):
    b = 0
    done = 0
    while done < n_paths:
        n = min(block, n_paths - done)
        yield b, n
        b += 1
        done += n


@dataclass
class PathBundle:
    """A batch of simulated paths on a common grid (``S_0 = 1``)."""

    times: np.ndarray
    dW: np.ndarray
    dWp: np.ndarray
    rho: float
    Sigma: np.ndarray
    logS: np.ndarray
    Vbar: np.ndarray
    block: int = 0
    antithetic: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.dW.shape[0]

    @property
    def dB(self) -> np.ndarray:
        return self.rho * self.dW + math.sqrt(max(1.0 - self.rho**2, 0.0)) * self.dWp

    @property
    def W(self) -> np.ndarray:
        return np.concatenate([np.zeros((self.n_paths, 1)), np.cumsum(self.dW, axis=1)], axis=1)

    @property
    def S(self) -> np.ndarray:
        return np.exp(self.logS)


def _price_path(times, Sigma, dB):
    """Log-Euler price and trapezoidal integrated variance from a volatility path."""
    dt = np.diff(times)
    Sl = Sigma[:, :-1]
    dlog = -0.5 * Sl**2 * dt + Sl * dB
    n = Sigma.shape[0]
    logS = np.concatenate([np.zeros((n, 1)), np.cumsum(dlog, axis=1)], axis=1)
    s2 = Sigma**2
    dv = 0.5 * (s2[:, 1:] + s2[:, :-1]) * dt
    Vbar = np.concatenate([np.zeros((n, 1)), np.cumsum(dv, axis=1)], axis=1)
    return logS, Vbar


def _draws(seed, b, n, steps, dt, antithetic):
    z = block_normals(seed, b, n, steps, 2, antithetic)
    return z[..., 0] * math.sqrt(dt), z[..., 1] * math.sqrt(dt)


def iter_sigvol(
    spec: VolatilitySpec,
    T: float,
    steps: int,
    n_paths: int,
    seed: int = 0,
    antithetic: bool = False,
    keep_signature: bool = False,
) -> Iterator[PathBundle]:
    """Yield path blocks of the signature volatility model."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    times = np.linspace(0.0, T, steps + 1)
    dt = T / steps
    for b, n in _blocks(n_paths):
        dW, dWp = _draws(seed, b, n, steps, dt, antithetic)
        yield _sigvol_bundle(spec, times, dW, dWp, b, antithetic, keep_signature)


def _sigvol_bundle(spec, times, dW, dWp, block=0, antithetic=False, keep_signature=False) -> PathBundle:
    M = spec.order
    dt = times[1] - times[0]
    coeffs = spec.coefficient_array()
    idx = spec.sigma.locate(times)
    rho = spec.rho
    if keep_signature:
        n, steps = dW.shape
        s = initial_signature(M, n)
        Sigma = np.empty((n, steps + 1))
        Sigma[:, 0] = s @ coeffs[idx[0]]
        sigs = [s]
        for j in range(steps):
            s = chen_step(s, dt, dW[:, j], M)
            Sigma[:, j + 1] = s @ coeffs[idx[j + 1]]
            sigs.append(s)
    else:
        Sigma = linear_functional_paths(coeffs, idx, dt, dW, M)
    dB = rho * dW + math.sqrt(max(1 - rho**2, 0.0)) * dWp
    bundle = PathBundle(times, dW, dWp, rho, Sigma, *_price_path(times, Sigma, dB), block=block, antithetic=antithetic)
    if keep_signature:
        bundle.extra["signature"] = np.stack(sigs, axis=1)
    return bundle


def _concat_bundles(bundles: list) -> PathBundle:
    if len(bundles) == 1:
        return bundles[0]
    first = bundles[0]
    cat = lambda name: np.concatenate([getattr(b, name) for b in bundles], axis=0)
    out = PathBundle(
        first.times, cat("dW"), cat("dWp"), first.rho, cat("Sigma"), cat("logS"), cat("Vbar"),
        antithetic=first.antithetic,
    )
    out.extra["blocks"] = [(b.block, b.n_paths) for b in bundles]
    return out


def simulate_sigvol(spec, T, steps, n_paths, seed=0, antithetic=False) -> PathBundle:
    """Simulate ``dS/S = Sigma dB`` with ``Sigma_t = <sigma_t, W_hat_t>`` (log-Euler, left point)."""
    return _concat_bundles(list(iter_sigvol(spec, T, steps, n_paths, seed, antithetic)))


def iter_explicit(
    vol_path: Callable,
    rho: float,
    T: float,
    steps: int,
    n_paths: int,
    seed: int = 0,
    antithetic: bool = False,
) -> Iterator[PathBundle]:
    """Yield blocks of a model whose volatility is an explicit functional of ``W``.

    ``vol_path(times, dW)`` returns the volatility on the grid.  The Brownian
    draws coincide with :func:`iter_sigvol` for the same seed, which gives
    twin simulations with shared randomness.
    """
    times = np.linspace(0.0, T, steps + 1)
    dt = T / steps
    for b, n in _blocks(n_paths):
        dW, dWp = _draws(seed, b, n, steps, dt, antithetic)
        Sigma = np.asarray(vol_path(times, dW), dtype=float)
        dB = rho * dW + math.sqrt(max(1 - rho**2, 0.0)) * dWp
        yield PathBundle(times, dW, dWp, rho, Sigma, *_price_path(times, Sigma, dB), block=b, antithetic=antithetic)


def simulate_explicit(vol_path, rho, T, steps, n_paths, seed=0, antithetic=False) -> PathBundle:
    return _concat_bundles(list(iter_explicit(vol_path, rho, T, steps, n_paths, seed, antithetic)))


# classical processes

def ou_pathwise(p: OUParams, times, dW) -> np.ndarray:
    """OU driven by the piecewise-linear interpolation of ``W``, solved exactly per segment.

    This is the process that signature representations evaluate on sampled
    paths, and it converges to the Ito OU process as the grid is refined.
    """
    dt = np.diff(times)
    n, steps = dW.shape
    X = np.empty((n, steps + 1))
    X[:, 0] = p.x
    for j in range(steps):
        h = dt[j]
        if p.kappa == 0:
            X[:, j + 1] = X[:, j] + p.eta * dW[:, j]
            continue
        e = math.exp(-p.kappa * h)
        gain = (1 - e) / (p.kappa * h)
        X[:, j + 1] = p.theta + (X[:, j] - p.theta) * e + p.eta * dW[:, j] * gain
    return X


def simulate_ou(p: OUParams, T, steps, n_paths, seed=0, dW=None):
    """OU paths on a uniform grid.

    Without ``dW``, paths use exact Gaussian transitions; with ``dW`` the
    pathwise solution driven by those increments is returned.
    Returns ``(times, X)``.
    """
    times = np.linspace(0.0, T, steps + 1)
    if dW is not None:
        return times, ou_pathwise(p, times, dW)
    dt = T / steps
    z = block_normals(seed, 0, n_paths, steps, 1)[..., 0]
    e = math.exp(-p.kappa * dt)
    if p.kappa == 0:
        sd = p.eta * math.sqrt(dt)
    else:
        sd = p.eta * math.sqrt((1 - e * e) / (2 * p.kappa))
    X = np.empty((n_paths, steps + 1))
    X[:, 0] = p.x
    for j in range(steps):
        X[:, j + 1] = p.theta + (X[:, j] - p.theta) * e + sd * z[:, j]
    return times, X


def cir_path(p: CIRParams, times, dW) -> np.ndarray:
    """Full-truncation Euler scheme for the square-root process."""
    dt = np.diff(times)
    n, steps = dW.shape
    V = np.empty((n, steps + 1))
    V[:, 0] = p.v
    for j in range(steps):
        vp = np.maximum(V[:, j], 0.0)
        V[:, j + 1] = V[:, j] + p.kappa * (p.theta - vp) * dt[j] + p.eta * np.sqrt(vp) * dW[:, j]
    return V


def simulate_cir(p: CIRParams, T, steps, n_paths, seed=0, dW=None):
    times = np.linspace(0.0, T, steps + 1)
    if dW is None:
        dW = block_normals(seed, 0, n_paths, steps, 1)[..., 0] * math.sqrt(T / steps)
    return times, cir_path(p, times, dW)


def delayed_path(p: DelayedParams, times, dW) -> np.ndarray:
    """Euler scheme with the two exponential-kernel integrals carried as extra states."""
    dt = np.diff(times)
    n, steps = dW.shape
    U = np.empty((n, steps + 1))
    U[:, 0] = p.u
    I1 = np.zeros(n)
    I2 = np.zeros(n)
    for j in range(steps):
        h = dt[j]
        u = U[:, j]
        U[:, j + 1] = u + (p.a1 + p.b1 * u + p.c1 * I1) * h + (p.a2 + p.c2 * I2) * dW[:, j]
        I1 = I1 + (u + p.lam1 * I1) * h
        I2 = I2 + (u + p.lam2 * I2) * h
    return U


def simulate_delayed(p: DelayedParams, T, steps, n_paths, seed=0, dW=None):
    times = np.linspace(0.0, T, steps + 1)
    if dW is None:
        dW = block_normals(seed, 0, n_paths, steps, 1)[..., 0] * math.sqrt(T / steps)
    return times, delayed_path(p, times, dW)


def mgbm_path(p: MGBMParams, times, dW) -> np.ndarray:
    """Explicit mGBM solution with a trapezoidal inner time integral."""
    if p.alpha == 0:
        raise ValueError("alpha = 0 is an OU process; use ou_pathwise")
    n = dW.shape[0]
    W = np.concatenate([np.zeros((n, 1)), np.cumsum(dW, axis=1)], axis=1)
    lam = p.kappa + 0.5 * p.alpha**2
    c = p.eta / p.alpha
    expo = lam * times - p.alpha * W
    g = np.exp(expo)
    dt = np.diff(times)
    integral = np.concatenate(
        [np.zeros((n, 1)), np.cumsum(0.5 * (g[:, 1:] + g[:, :-1]) * dt, axis=1)], axis=1
    )
    return (p.y + c + p.kappa * (p.theta + c) * integral) * np.exp(-expo) - c


def simulate_mgbm_explicit(p: MGBMParams, T, steps, n_paths, seed=0, dW=None):
    times = np.linspace(0.0, T, steps + 1)
    if dW is None:
        dW = block_normals(seed, 0, n_paths, steps, 1)[..., 0] * math.sqrt(T / steps)
    return times, mgbm_path(p, times, dW)


# pricing

def vanilla_payoff(K: float, kind: str = "call") -> Callable:
    def f(b: PathBundle):
        ST = np.exp(b.logS[:, -1])
        return np.maximum(ST - K, 0.0) if kind == "call" else np.maximum(K - ST, 0.0)

    return f


def asian_payoff(K: float, kind: str = "call") -> Callable:
    """Geometric-average option, trapezoid rule on ``log S`` over the grid."""

    def f(b: PathBundle):
        T = b.times[-1] - b.times[0]
        dt = np.diff(b.times)
        avg = np.sum(0.5 * (b.logS[:, 1:] + b.logS[:, :-1]) * dt, axis=1) / T
        A = np.exp(avg)
        return np.maximum(A - K, 0.0) if kind == "call" else np.maximum(K - A, 0.0)

    return f


def qvol_payoff(q: float) -> Callable:
    def f(b: PathBundle):
        T = b.times[-1] - b.times[0]
        return np.maximum(b.Vbar[:, -1] / T, 0.0) ** q

    return f


def _pair_reduce(x: np.ndarray, antithetic: bool) -> np.ndarray:
    if not antithetic:
        return x
    half = len(x) // 2
    paired = 0.5 * (x[:half] + x[half : 2 * half])
    if len(x) % 2:
        paired = np.append(paired, x[-1])
    return paired


def mc_price(ensemble, payoff: Callable) -> tuple[float, float]:
    """Sample mean and standard error of ``payoff`` over a bundle or an iterable of bundles.

    Antithetic bundles are reduced to pair averages before the error estimate.
    """
    bundles = [ensemble] if isinstance(ensemble, PathBundle) else ensemble
    total = 0.0
    total_sq = 0.0
    count = 0
    for b in bundles:
        x = _pair_reduce(np.asarray(payoff(b), dtype=float), b.antithetic)
        total += math.fsum(x)
        total_sq += math.fsum(x * x)
        count += len(x)
    if count == 0:
        raise ValueError("empty ensemble")
    mean = total / count
    var = max(total_sq / count - mean * mean, 0.0) * count / max(count - 1, 1)
    return mean, math.sqrt(var / count)


def mc_prices_extrapolated(spec: VolatilitySpec, T: float, steps: int, n_paths: int, payoffs: dict,
                           seed: int = 0) -> dict:
    """Two-level Richardson estimate ``2 P(T/steps) - P(2T/steps)`` on shared Brownian paths.

    Cancels the first-order weak bias of the log-Euler scheme; the standard
    error is that of the per-path combination.  ``steps`` must be even.
    """
    if steps < 2 or steps % 2:
        raise ValueError("steps must be even and >= 2")
    fine = np.linspace(0.0, T, steps + 1)
    coarse = fine[::2]
    dt = T / steps
    acc = {k: [0.0, 0.0, 0] for k in payoffs}
    for b, n in _blocks(n_paths):
        dW, dWp = _draws(seed, b, n, steps, dt, False)
        bf = _sigvol_bundle(spec, fine, dW, dWp, b)
        bc = _sigvol_bundle(spec, coarse, dW[:, 0::2] + dW[:, 1::2], dWp[:, 0::2] + dWp[:, 1::2], b)
        for k, f in payoffs.items():
            x = 2.0 * np.asarray(f(bf), dtype=float) - np.asarray(f(bc), dtype=float)
            acc[k][0] += math.fsum(x)
            acc[k][1] += math.fsum(x * x)
            acc[k][2] += len(x)
    out = {}
    for k, (s1, s2, n) in acc.items():
        m = s1 / n
        var = max(s2 / n - m * m, 0.0) * n / max(n - 1, 1)
        out[k] = (m, math.sqrt(var / n))
    return out


def mc_prices(ensemble, payoffs: dict) -> dict:
    """Several payoffs over one pass of the ensemble; returns ``{name: (mean, se)}``."""
    acc = {k: [0.0, 0.0, 0] for k in payoffs}
    bundles = [ensemble] if isinstance(ensemble, PathBundle) else ensemble
    for b in bundles:
        for k, f in payoffs.items():
            x = _pair_reduce(np.asarray(f(b), dtype=float), b.antithetic)
            acc[k][0] += math.fsum(x)
            acc[k][1] += math.fsum(x * x)
            acc[k][2] += len(x)
    out = {}
    for k, (s, s2, n) in acc.items():
        if n == 0:
            raise ValueError("empty ensemble")
        m = s / n
        var = max(s2 / n - m * m, 0.0) * n / max(n - 1, 1)
        out[k] = (m, math.sqrt(var / n))
    return out


# representation accuracy study

def representation_mse(
    p: OUParams,
    orders=(2, 4, 6),
    horizons=(0.25, 0.5, 1.0, 2.0, 4.0),
    n_paths: int = 100_000,
    steps_per_year: int = 252,
    train_T: float = 1.0,
    n_train: int | None = None,
    seed: int = 0,
    beta1: float = 1e-6,
    beta2: float = 1e-8,
) -> dict:
    """Mean squared error of truncated OU representations against the simulated process.

    Compares the exact truncated representation and an Algorithm-1 regression
    trained on ``[0, train_T]``.  The error for a horizon ``h`` averages over
    paths and all grid times in ``(0, h]``.  Both use the same Brownian paths
    as the simulated OU process.
    """
    orders = tuple(sorted(orders))
    Mmax = orders[-1]
    nf = tensor_dim(Mmax)
    n_train = n_paths if n_train is None else n_train
    dt = 1.0 / steps_per_year

    # training pass: one Gram at the top order, nested blocks for lower orders
    train_steps = int(round(train_T * steps_per_year))
    G = np.zeros((nf, nf))
    r = np.zeros(nf)
    yy = 0.0
    cnt = 0
    times_tr = np.linspace(0.0, train_steps * dt, train_steps + 1)
    for b, n in _blocks(n_train):
        dW = block_normals(seed + 1, b, n, train_steps, 1)[..., 0] * math.sqrt(dt)
        X = ou_pathwise(p, times_tr, dW)
        s = initial_signature(Mmax, n)
        for j in range(train_steps):
            s = chen_step(s, dt, dW[:, j], Mmax)
            G += s.T @ s
            r += s.T @ X[:, j + 1]
            yy += float(X[:, j + 1] @ X[:, j + 1])
            cnt += n
    G /= cnt
    r /= cnt
    yy /= cnt
    reg = {}
    exact = {}
    for M in orders:
        k = tensor_dim(M)
        coef, _ = elastic_net_gram(G[:k, :k], r[:k], yy, beta1, beta2)
        reg[M] = coef
        exact[M] = ou_rep(p, M).coeffs.real

    # test pass
    horizons = tuple(sorted(horizons))
    test_steps = int(round(horizons[-1] * steps_per_year))
    times = np.linspace(0.0, test_steps * dt, test_steps + 1)
    se_exact = {M: np.zeros(test_steps) for M in orders}
    se_reg = {M: np.zeros(test_steps) for M in orders}
    total = 0
    for b, n in _blocks(n_paths):
        dW = block_normals(seed, b, n, test_steps, 1)[..., 0] * math.sqrt(dt)
        X = ou_pathwise(p, times, dW)
        s = initial_signature(Mmax, n)
        for j in range(test_steps):
            s = chen_step(s, dt, dW[:, j], Mmax)
            x = X[:, j + 1]
            for M in orders:
                k = tensor_dim(M)
                se_exact[M][j] += float(np.sum((s[:, :k] @ exact[M] - x) ** 2))
                se_reg[M][j] += float(np.sum((s[:, :k] @ reg[M] - x) ** 2))
        total += n
    table = {"exact": {}, "regression": {}, "horizons": list(horizons), "orders": list(orders)}
    for M in orders:
        table["exact"][M] = []
        table["regression"][M] = []
        for h in horizons:
            m = int(round(h * steps_per_year))
            table["exact"][M].append(float(se_exact[M][:m].sum() / (total * m)))
            table["regression"][M].append(float(se_reg[M][:m].sum() / (total * m)))
    table["regression_coefficients"] = {M: TensorElement(reg[M], M) for M in orders}
    return table
