"""Fourier pricing on top of the Riccati characteristic functional.

European and geometric-Asian options use the Lewis inversion along
``Im u = -1/2`` with a Black-Scholes control variate; q-volatility swaps use
Laplace inversion of the integrated variance.  Rates are zero and ``S_0 = 1``
unless stated otherwise.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma, ndtr, roots_jacobi, roots_laguerre

from .models import VolatilitySpec
from .riccati import PayoffTransform, RiccatiSolution, solve
from .signature import expected_signature
from .tensor_algebra import TensorElement, Word, bracket, concat, shuffle_pow

__all__ = [
    "QuadratureRule",
    "PricingRequest",
    "PriceResult",
    "gauss_laguerre",
    "bs_price",
    "bs_vega",
    "bs_charfun",
    "black_price",
    "implied_vol",
    "lewis_nodes",
    "solve_for_pricing",
    "lewis_price",
    "choose_sigma_bs",
    "variance_swap_strike",
    "qvol_swap_strike",
    "asian_bs_charfun",
    "asian_price",
    "smile",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for ``int_0^inf h(u) du`` with the Laguerre weight folded in."""

    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.nodes)


def gauss_laguerre(L: int = 64) -> QuadratureRule:
    if L < 1:
        raise ValueError("L must be positive")
    x, w = roots_laguerre(L)
    return QuadratureRule(x, w * np.exp(x))


@dataclass
class PricingRequest:
    K: float | np.ndarray
    T: float
    kind: str = "european_call"
    t: float = 0.0
    S: float = 1.0
    sigma_bs: float | None = None
    q: float | None = None
    # running integral of log S on [0, t], used by Asian options at t > 0
    log_integral: float = 0.0

    KINDS = ("european_call", "european_put", "asian_call", "asian_put", "qvol_swap", "variance_swap")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown product {self.kind!r}")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if not 0 <= self.t < self.T:
            raise ValueError("valuation time must lie in [0, T)")
        if np.any(np.asarray(self.K) <= 0):
            raise ValueError("strikes must be positive")

    @property
    def is_put(self) -> bool:
        return self.kind.endswith("put")


@dataclass
class PriceResult:
    price: np.ndarray
    clamped: np.ndarray
    info: dict = field(default_factory=dict)


# Black-Scholes


def black_price(F, K, v, kind="call"):
    """Undiscounted Black price with total variance ``v``."""
    F, K, v = np.broadcast_arrays(np.asarray(F, float), np.asarray(K, float), np.asarray(v, float))
    sv = np.sqrt(np.maximum(v, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(F / K) + 0.5 * v) / sv
        c = F * ndtr(d1) - K * ndtr(d1 - sv)
    c = np.where(sv > 0, c, np.maximum(F - K, 0.0))
    if kind == "put":
        c = c - (F - K)
    return c if c.ndim else float(c)


def bs_price(S, K, tau, sigma, kind="call"):
    return black_price(S, K, np.asarray(sigma, float) ** 2 * tau, kind)


def bs_vega(S, K, tau, sigma):
    sv = sigma * np.sqrt(tau)
    d1 = (np.log(S / K) + 0.5 * sv**2) / sv
    return S * np.sqrt(tau) * np.exp(-0.5 * d1**2) / np.sqrt(2 * np.pi)


def bs_charfun(u, tau, sigma):
    u = np.asarray(u, dtype=complex)
    return np.exp(-0.5 * sigma**2 * (u * u + 1j * u) * tau)


def implied_vol(price, S, K, T, kind="call", tol=1e-10, lo=1e-6, hi=5.0, errors="raise"):
    """Black-Scholes implied volatility by bracketed Newton iteration, vectorized.

    Prices outside the no-arbitrage band raise, or give NaN with ``errors="nan"``.
    """
    price, K, T = np.broadcast_arrays(np.asarray(price, float), np.asarray(K, float), np.asarray(T, float))
    scalar = price.ndim == 0
    price, K, T = (np.atleast_1d(z).astype(float) for z in (price, K, T))
    if kind == "put":
        price = price + S - K
    lower, upper = np.maximum(S - K, 0.0), S
    bad = ~((price > lower) & (price < upper))
    a = np.full(price.shape, lo)
    b = np.full(price.shape, hi)
    bad |= (bs_price(S, K, T, a) - price > 0) | (bs_price(S, K, T, b) - price < 0)
    if np.any(bad) and errors == "raise":
        i = np.flatnonzero(bad.ravel())[0]
        raise ValueError(f"price {price.ravel()[i]} outside the no-arbitrage band for K={K.ravel()[i]}")
    x = np.sqrt(2 * np.abs(np.log(S / K)) / T)
    x = np.clip(np.where(x > 0, x, 0.2), 0.05, hi)
    done = bad.copy()
    for _ in range(100):
        f = bs_price(S, K, T, x) - price
        done |= np.abs(f) < tol
        if np.all(done):
            break
        b = np.where(f > 0, x, b)
        a = np.where(f > 0, a, x)
        v = bs_vega(S, K, T, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - f / v
        xn = np.where((xn > a) & (xn < b), xn, 0.5 * (a + b))
        x = np.where(done, x, xn)
    x = np.where(bad, np.nan, x)
    return float(x[0]) if scalar else x


# Lewis inversion


def lewis_nodes(rule: QuadratureRule) -> np.ndarray:
    return rule.nodes - 0.5j


def solve_for_pricing(spec: VolatilitySpec, T: float, kind: str = "european", L: int = 64, J: int = 100,
                      order: int | None = None, rule: QuadratureRule | None = None):
    """One Riccati solve on the Lewis contour; Asian solves also carry the node ``u = -i``."""
    rule = gauss_laguerre(L) if rule is None else rule
    nodes = lewis_nodes(rule)
    if kind.startswith("asian"):
        tr = PayoffTransform.asian(T)
        nodes = np.append(nodes, -1j)
    else:
        tr = PayoffTransform.european(T)
    sol = solve(spec, tr, T, nodes, J=J, order=order)
    return sol, rule


def _clamp(price, lower, upper, label):
    low = price < lower
    high = price > upper
    clamped = low | high
    if np.any(clamped):
        warnings.warn(f"{label}: {int(np.sum(clamped))} price(s) clamped to arbitrage bounds", RuntimeWarning, stacklevel=3)
    return np.clip(price, lower, upper), clamped


def _check_finite(phi):
    if not np.all(np.isfinite(phi)):
        raise FloatingPointError("non-finite characteristic function at a quadrature node")


def lewis_price(sol: RiccatiSolution, req: PricingRequest, rule: QuadratureRule, phi=None,
                return_result: bool = False, control_variate: bool = True):
    """European call or put at time zero with the Black-Scholes control variate.

    ``phi`` overrides the node values of the characteristic function of
    ``log(S_T/S_0)``; by default they are read from ``sol`` at ``t = 0``.
    ``control_variate=False`` gives the plain Lewis formula.
    """
    L = len(rule)
    u = rule.nodes
    ut = u - 0.5j
    if phi is None:
        if not np.allclose(sol.u_nodes[:L], ut):
            raise ValueError("solution nodes do not match the quadrature rule")
        phi = sol.phi0()[:L]
    _check_finite(phi)
    T = req.T - req.t
    K = np.atleast_1d(np.asarray(req.K, dtype=float))
    S = req.S
    k = np.log(S / K)
    if control_variate:
        sbs = req.sigma_bs if req.sigma_bs is not None else choose_sigma_bs(sol.spec, req.T)
        diff = phi - bs_charfun(ut, T, sbs)
        base = bs_price(S, K, T, sbs)
    else:
        sbs, diff, base = None, phi, S
    integrand = np.real(np.exp(1j * np.outer(k, ut)) * diff) / (u**2 + 0.25)
    call = base - K / np.pi * (integrand @ rule.weights)
    call, clamped = _clamp(call, np.maximum(S - K, 0.0), S, "lewis_price")
    price = call - (S - K) if req.is_put else call
    price = price if np.ndim(req.K) else float(price[0])
    if return_result:
        return PriceResult(price, clamped, {"sigma_bs": sbs, "L": L})
    return price


def choose_sigma_bs(spec_or_sol, T: float, kind: str = "european", h: float = 1e-3, J: int = 100) -> float:
    """Control-variate volatility by matching the second cumulant at ``u = 0``.

    The cumulant is a central second difference of ``log phi``; non-positive
    values fall back to the square root of the variance-swap strike.
    """
    spec = spec_or_sol.spec if isinstance(spec_or_sol, RiccatiSolution) else spec_or_sol
    tr = PayoffTransform.asian(T) if kind.startswith("asian") else PayoffTransform.european(T)
    sol = solve(spec, tr, T, np.array([h, -h]), J=J, max_retries=1, raise_on_failure=False)
    lp = sol.psi[:, 0, 0]
    d2 = np.real(lp[0] + lp[1]) / h**2
    # BS: log phi = -s^2/2 (u^2 + iu) c T with c = 1 (European) or 1/3 (Asian)
    scale = 3.0 if tr.kind == "asian" else 1.0
    var = -scale * d2 / T
    if not np.isfinite(var) or var <= 0:
        var = variance_swap_strike(spec, T)
    return float(np.sqrt(var))


# swaps


def variance_swap_strike(spec: VolatilitySpec, T: float) -> float:
    """``(1/T) E[int_0^T Sigma_s^2 ds]`` via the expected signature of time-augmented BM."""
    if T <= 0:
        raise ValueError("T must be positive")
    M = spec.order
    one = TensorElement.word(Word((1,)), 1)
    total = 0.0
    grid = spec.sigma.grid
    edges = np.concatenate([[0.0], grid[(grid > 0) & (grid < T)], [T]])
    for a, b in zip(edges[:-1], edges[1:]):
        sig = spec.at(a)
        ell = concat(shuffle_pow(sig, 2, 2 * M), one, 2 * M + 1)
        total += (bracket(ell, expected_signature(b, 2 * M + 1)) - bracket(ell, expected_signature(a, 2 * M + 1))).real
    return float(total / T)


def qvol_swap_strike(spec: VolatilitySpec, T: float, q: float, n_jacobi: int = 32, n_laguerre: int = 32,
                     J: int = 100, order: int | None = None) -> float:
    """``E[(Vbar_T / T)^q]`` for ``q`` in ``(0, 1)`` by Laplace inversion.

    The variance is rescaled by the variance-swap strike ``c`` so the
    transform decays on a unit scale; ``[0, 1]`` uses Gauss-Jacobi for the
    ``u^{-q}`` endpoint and ``[1, inf)`` uses Gauss-Laguerre.
    """
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    c = variance_swap_strike(spec, T)
    if c <= 0:
        return 0.0
    xj, wj = roots_jacobi(n_jacobi, 0.0, -q)
    uj = 0.5 * (1 + xj)
    wj = wj * 0.5 ** (1 - q)
    xl, wl = roots_laguerre(n_laguerre)
    ul = 1.0 + xl
    nodes = np.concatenate([uj, ul]) / c
    sol = solve(spec, PayoffTransform.laplace(T), T, nodes, J=J, order=order, raise_on_failure=False)
    Lap = np.real(sol.phi0())
    bad = ~np.isfinite(Lap)
    if np.any(bad):
        warnings.warn(f"{int(bad.sum())} Laplace node(s) failed; treated as zero transform", RuntimeWarning, stacklevel=2)
        Lap = np.where(bad, 0.0, Lap)
    Lap = np.clip(Lap, 0.0, 1.0)
    head = np.sum(wj * (1 - Lap[:n_jacobi]) / uj)
    tail = 1.0 / q - np.sum(wl * np.exp(xl) * Lap[n_jacobi:] * ul ** (-q - 1))
    return float(c**q * q / gamma(1 - q) * (head + tail))


# geometric Asian


def asian_bs_charfun(u, T, t, sigma):
    """Black-Scholes transform of ``R = int_t^T (T-s)/T dlog S_s``."""
    u = np.asarray(u, dtype=complex)
    tau = T - t
    return np.exp(-0.5 * sigma**2 * (u * u * tau**3 / (3 * T**2) + 1j * u * tau**2 / (2 * T)))


def asian_price(sol: RiccatiSolution, req: PricingRequest, rule: QuadratureRule, phi=None, return_result=False):
    """Geometric-average Asian call or put.

    ``sol`` must come from :func:`solve_for_pricing` with an Asian kind so that
    its last node is ``u = -i``.  At ``t > 0`` pass the conditional transform
    through ``phi`` (``L + 1`` values) together with ``req.S`` and ``req.log_integral``.
    """
    L = len(rule)
    u = rule.nodes
    ut = u - 0.5j
    if phi is None:
        if sol.transform.kind != "asian" or not np.isclose(sol.u_nodes[-1], -1j):
            raise ValueError("solution was not prepared for Asian pricing")
        phi = sol.phi0()
        phi = np.concatenate([phi[:L], phi[-1:]])
    _check_finite(phi)
    T, t = req.T, req.t
    x = req.log_integral / T + (T - t) / T * np.log(req.S)
    sbs = req.sigma_bs if req.sigma_bs is not None else choose_sigma_bs(sol.spec, T, kind="asian")
    K = np.atleast_1d(np.asarray(req.K, dtype=float))
    cv = asian_bs_charfun(np.append(ut, -1j), T, t, sbs)
    fwd = np.exp(x) * np.real(phi[-1])
    fwd_bs = np.exp(x) * np.real(cv[-1])
    v = sbs**2 * (T - t) ** 3 / (3 * T**2)
    diff = phi[:L] - cv[:L]
    integrand = np.real(np.exp(1j * np.outer(x - np.log(K), ut)) * diff) / (u**2 + 0.25)
    call = black_price(fwd_bs, K, v) + (fwd - fwd_bs) - K / np.pi * (integrand @ rule.weights)
    call, clamped = _clamp(call, np.maximum(fwd - K, 0.0), fwd, "asian_price")
    price = call - (fwd - K) if req.is_put else call
    price = price if np.ndim(req.K) else float(price[0])
    if return_result:
        return PriceResult(price, clamped, {"sigma_bs": sbs, "forward": fwd, "L": L})
    return price


def smile(spec: VolatilitySpec, T: float, strikes, L: int = 64, J: int = 100, order: int | None = None,
          sigma_bs: float | None = None, return_prices: bool = False):
    """Implied volatilities across strikes from a single Riccati solve.

    Strikes whose price is not invertible (deep out of the money, where the
    Fourier price is below round-off) come back as NaN.
    """
    sol, rule = solve_for_pricing(spec, T, "european", L, J, order)
    sbs = choose_sigma_bs(spec, T, J=J) if sigma_bs is None else sigma_bs
    K = np.asarray(strikes, dtype=float)
    req = PricingRequest(K, T, "european_call", sigma_bs=sbs)
    res = lewis_price(sol, req, rule, return_result=True)
    iv = implied_vol(res.price, 1.0, K, T, errors="nan")
    if return_prices:
        return iv, res
    return iv
