"""Volatility specifications built from signature representations.

A :class:`VolatilitySpec` pairs a (possibly time-dependent) truncated tensor
``sigma_t`` with the spot/vol correlation ``rho``.  The volatility of the model
is ``Sigma_t = <sigma_t, W_hat_t>`` where ``W_hat`` is the signature of
``t -> (t, W_t)``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .signature import chen_step, initial_signature
from .tensor_algebra import (
    TensorElement,
    TimeDependentTensor,
    Word,
    concat,
    level_start,
    project,
    resolvent,
    shuffle,
    shuffle_exp,
    shuffle_pow,
    tensor_dim,
)

try:  # Python >= 3.11
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover
    import tomli as _toml

log = logging.getLogger(__name__)

__all__ = [
    "VolatilitySpec",
    "OUParams",
    "MGBMParams",
    "CIRParams",
    "DelayedParams",
    "ou_rep",
    "ou_rep_time_dep",
    "mgbm_rep",
    "mgbm_rep_time_dep",
    "cir_rep",
    "delayed_rep",
    "rl_fbm_rep",
    "analytic_composition",
    "bergomi_sigma",
    "quintic_sigma",
    "stein_stein_spec",
    "heston_spec",
    "mgbm_spec",
    "flat_spec",
    "ler_sigma",
    "RegressionConfig",
    "RegressionResult",
    "fit_regression",
    "elastic_net_gram",
    "leverage_diagnostic",
    "spec_from_config",
    "load_model_config",
]


@dataclass
class VolatilitySpec:
    """Model definition: ``sigma_t`` coefficients, correlation and truncation order."""

    sigma: TimeDependentTensor
    rho: float
    order: int | None = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.sigma, TensorElement):
            self.sigma = TimeDependentTensor.constant(self.sigma)
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")
        if self.order is None:
            self.order = self.sigma.order
        if self.order != self.sigma.order:
            self.sigma = self.sigma.map(lambda v: v.with_order(self.order))
        if self.sigma.dim != 2:
            raise ValueError("volatility specs use the two-letter alphabet")
        for v in self.sigma.values:
            if not v.is_real(1e-14):
                raise ValueError("sigma coefficients must be real")

    @property
    def time_dependent(self) -> bool:
        return not self.sigma.is_constant

    def at(self, t: float) -> TensorElement:
        return self.sigma.at(t)

    def with_rho(self, rho: float) -> "VolatilitySpec":
        return VolatilitySpec(self.sigma, rho, self.order, self.label, dict(self.meta))

    def coefficient_array(self) -> np.ndarray:
        """Real coefficients, shape ``(n_grid, N)``."""
        return self.sigma.stacked().real


def flat_spec(vol: float, rho: float = 0.0, order: int = 0) -> VolatilitySpec:
    return VolatilitySpec(TensorElement.unit(order, scale=vol), rho, order, f"flat {vol}")


# classical representations

@dataclass
class OUParams:
    kappa: float
    theta: float
    eta: float
    x: float | None = None

    def __post_init__(self):
        if self.x is None:
            self.x = self.theta


@dataclass
class MGBMParams:
    kappa: float
    theta: float
    eta: float
    alpha: float
    y: float | None = None
    lam: float | None = None

    def __post_init__(self):
        if self.y is None:
            self.y = self.theta
        if self.lam is None:
            self.lam = self.kappa + 0.5 * self.alpha**2


@dataclass
class CIRParams:
    kappa: float
    theta: float
    eta: float
    v: float | None = None

    def __post_init__(self):
        if self.v is None:
            self.v = self.theta
        if self.v <= 0:
            raise ValueError("CIR representation requires v > 0")


@dataclass
class DelayedParams:
    u: float
    a1: float
    b1: float
    c1: float
    lam1: float
    a2: float
    c2: float
    lam2: float


def _w(word: str, M: int, scale=1.0) -> TensorElement:
    return TensorElement.word(word, M, scale=scale)


def ou_rep(p: OUParams, M: int) -> TensorElement:
    """``(x ø + κθ 1 + η 2) ⊗ e^⧢(-κ 1)`` truncated at ``M``."""
    prefix = TensorElement.from_words({"e": p.x, "1": p.kappa * p.theta, "2": p.eta}, M)
    return concat(prefix, shuffle_exp(_w("1", M, -p.kappa), M), M)


def ou_rep_time_dep(t: float, p: OUParams, M: int) -> TensorElement:
    """``θ ø + e^{-κt}((x-θ) ø + η e^⧢(κ 1) ⊗ 2)``."""
    tail = concat(shuffle_exp(_w("1", M, p.kappa), M), _w("2", M), M)
    inner = TensorElement.unit(M, scale=p.x - p.theta) + p.eta * tail
    return TensorElement.unit(M, scale=p.theta) + math.exp(-p.kappa * t) * inner


def mgbm_rep(p: MGBMParams, M: int) -> TensorElement:
    """``(y ø + (κθ - αη/2) 1 + η 2) ⊗ e^⧢(-(κ + α²/2) 1 + α 2)``."""
    prefix = TensorElement.from_words(
        {"e": p.y, "1": p.kappa * p.theta - 0.5 * p.alpha * p.eta, "2": p.eta}, M
    )
    gen = TensorElement.from_words({"1": -(p.kappa + 0.5 * p.alpha**2), "2": p.alpha}, M)
    return concat(prefix, shuffle_exp(gen, M), M)


def mgbm_rep_time_dep(t: float, p: MGBMParams, M: int) -> TensorElement:
    """``θ ø + e^{-λt}((ℓ - θ ø) ⧢ e^⧢(λ 1))``."""
    centred = mgbm_rep(p, M) - TensorElement.unit(M, scale=p.theta)
    body = shuffle(centred, shuffle_exp(_w("1", M, p.lam), M), M)
    return TensorElement.unit(M, scale=p.theta) + math.exp(-p.lam * t) * body


def cir_rep(p: CIRParams, M: int) -> tuple[TensorElement, TensorElement]:
    """Solve ``σ⧢σ = v ø + ((κθ - η²/4) ø - κ σ⧢σ) ⊗ 1 + η σ ⊗ 2`` level by level.

    Returns ``(sigma_half, ell)`` with ``ell = σ⧢σ`` so that ``<ell, W_hat>``
    approximates the CIR process and ``<sigma_half, W_hat>`` its square root.
    """
    root = math.sqrt(p.v)
    drift = p.kappa * p.theta - 0.25 * p.eta**2
    N = tensor_dim(M)
    sig = np.zeros(N, dtype=complex)
    sig[0] = root
    one = _w("1", M)
    two = _w("2", M)
    for n in range(M):
        s = TensorElement(sig, M)
        ell = shuffle(s, s, M)
        rhs = (
            TensorElement.unit(M, scale=p.v)
            + concat(TensorElement.unit(M, scale=drift) - p.kappa * ell, one, M)
            + p.eta * concat(s, two, M)
        )
        lo, hi = level_start(n + 1), level_start(n + 2)
        # ell currently lacks the 2 σ^ø σ_{n+1} cross term
        sig[lo:hi] = (rhs.coeffs[lo:hi] - ell.coeffs[lo:hi]) / (2.0 * root)
    s = TensorElement(sig.real, M)
    return s, shuffle(s, s, M)


def delayed_rep(p: DelayedParams, M: int) -> TensorElement:
    """``(u ø + a₁ 1 + a₂ 2) ⊗ resolvent(b₁ 1 + 1 ⊗ (c₁ e^⧢(λ₁1) ⊗ 1 + c₂ e^⧢(λ₂1) ⊗ 2))``."""
    k1 = concat(shuffle_exp(_w("1", M, p.lam1), M), _w("1", M), M)
    k2 = concat(shuffle_exp(_w("1", M, p.lam2), M), _w("2", M), M)
    gen = p.b1 * _w("1", M) + concat(_w("1", M), p.c1 * k1 + p.c2 * k2, M)
    prefix = TensorElement.from_words({"e": p.u, "1": p.a1, "2": p.a2}, M)
    return concat(prefix, resolvent(gen, M), M)


def _falling(h: float, n: int) -> float:
    out = 1.0
    for k in range(n):
        out *= h - k
    return out


def rl_fbm_rep(t: float, H: float, M: int) -> TensorElement:
    """Time-dependent representation of ``∫_0^t (t-s)^{H-1/2} dW_s``.

    Uses the binomial series of ``(1 - s/t)^{H-1/2}``, whose ``n``-th term
    carries the falling factorial ``(H-1/2)(H-3/2)...`` and the sign ``(-1)^n``.
    """
    if not 0 < H < 1:
        raise ValueError("H must lie in (0, 1)")
    if t < 0:
        raise ValueError("t must be positive")
    t = max(t, 1e-8)
    h = H - 0.5
    terms = {}
    for n in range(M):
        coeff = t ** (h - n) * (-1) ** n * _falling(h, n)
        terms[Word((1,) * n + (2,))] = coeff
    return TensorElement.from_words(terms, M)


def analytic_composition(
    base,
    alpha: Sequence,
    M: int,
    grid=None,
) -> TimeDependentTensor:
    """``sum_k alpha_k(t) base_t^⧢k`` truncated at ``M``.

    ``alpha`` entries may be scalars or callables of ``t``; ``base`` may be a
    TensorElement or TimeDependentTensor.  A grid is needed whenever anything
    depends on time.
    """
    td = isinstance(base, TimeDependentTensor) or any(callable(a) for a in alpha)
    if td:
        if grid is None:
            grid = base.grid if isinstance(base, TimeDependentTensor) else None
        if grid is None:
            raise ValueError("time-dependent composition needs a grid")
    else:
        grid = [0.0]

    def at(t):
        b = base.at(t) if isinstance(base, TimeDependentTensor) else base
        b = b.with_order(M)
        out = TensorElement.zero(M)
        power = TensorElement.unit(M)
        for k, a in enumerate(alpha):
            if k > 0:
                power = shuffle(power, b, M)
            a_t = a(t) if callable(a) else a
            if a_t != 0:
                out = out + a_t * power
        return out

    return TimeDependentTensor.from_function(at, grid)


def bergomi_sigma(xi0, eta: float, M: int, grid=None) -> TimeDependentTensor:
    """``xi0(t) e^⧢(η 2)``; ``xi0`` is a scalar or a callable."""
    e = shuffle_exp(_w("2", M, eta), M)
    if callable(xi0):
        if grid is None:
            raise ValueError("callable xi0 needs a grid")
        return TimeDependentTensor.from_function(lambda t: xi0(t) * e, grid)
    return TimeDependentTensor.constant(xi0 * e)


def quintic_sigma(alphas: Sequence[float], M: int, base: TensorElement | None = None, xi0=1.0):
    """Polynomial ``xi0 (a0 + a1 X + a3 X^3 + a5 X^5)`` of ``X = <base, W_hat>``.

    ``alphas`` is ``(a0, a1, a3, a5)``; ``base`` defaults to Brownian motion (word 2).
    """
    a0, a1, a3, a5 = alphas
    base = _w("2", M) if base is None else base
    coeffs = [a0, a1, 0.0, a3, 0.0, a5]
    return analytic_composition(base, [xi0 * c for c in coeffs], M)


def ler_sigma() -> TensorElement:
    """The bundled random draw satisfying the leverage sign condition (order 3)."""
    return TensorElement.from_words(
        {
            "e": 0.25,
            "1": 0.102763,
            "2": 0.274407,
            "11": 0.044883,
            "12": 0.0,
            "21": -0.076345,
            "22": 0.0,
            "111": 0.145894,
            "112": 0.0,
            "211": 0.391773,
            "212": 0.0,
            "121": -0.062413,
            "122": 0.0,
            "221": 0.463663,
            "222": 0.357595,
        },
        3,
    )


def stein_stein_spec(kappa, theta, eta, rho, M, x=None, time_dependent=False, T=None, n_grid=101):
    p = OUParams(kappa, theta, eta, x)
    if time_dependent:
        grid = np.linspace(0.0, T, n_grid)
        sig = TimeDependentTensor.from_function(lambda t: ou_rep_time_dep(t, p, M), grid)
    else:
        sig = ou_rep(p, M)
    return VolatilitySpec(sig, rho, M, "ou", {"family": "ou", "params": vars(p)})


def mgbm_spec(kappa, theta, eta, alpha, rho, M, y=None):
    p = MGBMParams(kappa, theta, eta, alpha, y)
    return VolatilitySpec(mgbm_rep(p, M), rho, M, "mgbm", {"family": "mgbm", "params": vars(p)})


def heston_spec(kappa, theta, eta, rho, M, v=None):
    p = CIRParams(kappa, theta, eta, v)
    half, _ = cir_rep(p, M)
    return VolatilitySpec(half, rho, M, "cir", {"family": "cir", "params": vars(p)})


# regression against truncated signatures (Algorithm 1)

@dataclass
class RegressionConfig:
    J: int = 252
    N: int = 10_000
    M: int = 4
    T: float = 1.0
    beta1: float = 1e-6
    beta2: float = 1e-8
    seed: int = 0
    batch: int = 2048
    max_sweeps: int = 10_000
    tol: float = 1e-8


@dataclass
class RegressionResult:
    coefficients: TensorElement
    train_mse: float
    sweeps: int
    config: RegressionConfig


def elastic_net_gram(G, r, yy, beta1=0.0, beta2=0.0, max_sweeps=10_000, tol=1e-8):
    """Minimise ``b'Gb - 2r'b + yy + beta1 |b|_1 + beta2 |b|^2`` by coordinate descent.

    ``G`` and ``r`` are second moments of the raw features (already divided by
    the sample count).  Features are rescaled to unit RMS internally and the
    penalties rescaled with them, so the returned ``b`` minimises the stated
    objective on the raw scale.
    """
    G = np.asarray(G, dtype=float)
    r = np.asarray(r, dtype=float)
    n = len(r)
    if beta1 == 0 and beta2 == 0:
        b, *_ = np.linalg.lstsq(G, r, rcond=None)
        return b, 0
    scale = np.sqrt(np.maximum(np.diag(G), 1e-300))
    Gs = G / np.outer(scale, scale)
    rs = r / scale
    l1 = beta1 / scale
    l2 = beta2 / scale**2
    # ridge warm start; plain CD crawls on the ill-conditioned signature Gram
    c = np.linalg.lstsq(Gs + np.diag(l2 + 1e-14), rs, rcond=None)[0]
    grad = rs - Gs @ c
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        max_delta = 0.0
        for k in range(n):
            rho_k = grad[k] + Gs[k, k] * c[k]
            new = np.sign(rho_k) * max(abs(rho_k) - 0.5 * l1[k], 0.0) / (Gs[k, k] + l2[k])
            delta = new - c[k]
            if delta != 0.0:
                grad -= Gs[:, k] * delta
                c[k] = new
                max_delta = max(max_delta, abs(delta))
        if max_delta < tol:
            break
    return c / scale, sweeps


def _brownian_block(seed: int, block: int, n: int, steps: int, dt: float) -> np.ndarray:
    from .montecarlo import block_normals

    return block_normals(seed, block, n, steps, 1)[..., 0] * math.sqrt(dt)


def fit_regression(target_fn: Callable, config: RegressionConfig | None = None) -> RegressionResult:
    """Regress a path functional on truncated signatures of ``(t, W_t)``.

    ``target_fn(times, W)`` receives the time grid and a batch of Brownian
    paths of shape ``(n, J+1)`` and returns the target values on the grid.
    The loss averages squared errors over all paths and the ``J`` grid times
    after the origin.
    """
    cfg = config or RegressionConfig()
    times = np.linspace(0.0, cfg.T, cfg.J + 1)
    dt = cfg.T / cfg.J
    nf = tensor_dim(cfg.M)
    G = np.zeros((nf, nf))
    r = np.zeros(nf)
    yy = 0.0
    count = 0
    done = 0
    block = 0
    while done < cfg.N:
        n = min(cfg.batch, cfg.N - done)
        dW = _brownian_block(cfg.seed, block, n, cfg.J, dt)
        W = np.concatenate([np.zeros((n, 1)), np.cumsum(dW, axis=1)], axis=1)
        y = np.asarray(target_fn(times, W), dtype=float)
        s = initial_signature(cfg.M, n)
        for j in range(cfg.J):
            s = chen_step(s, dt, dW[:, j], cfg.M)
            yj = y[:, j + 1]
            G += s.T @ s
            r += s.T @ yj
            yy += float(yj @ yj)
            count += n
        done += n
        block += 1
    G /= count
    r /= count
    yy /= count
    b, sweeps = elastic_net_gram(G, r, yy, cfg.beta1, cfg.beta2, cfg.max_sweeps, cfg.tol)
    mse = float(b @ G @ b - 2 * r @ b + yy)
    return RegressionResult(TensorElement(b, cfg.M), mse, sweeps, cfg)


def leverage_diagnostic(spec: VolatilitySpec, t_grid, n_paths: int = 10_000, seed: int = 0) -> dict:
    """Monte Carlo check of ``<sigma_t proj 2, W_hat_t> >= 0`` on a time grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] != 0.0:
        t_grid = np.concatenate([[0.0], t_grid])
    M = spec.order
    from .montecarlo import block_normals

    z = block_normals(seed, 0, n_paths, len(t_grid) - 1, 1)[..., 0]
    s = initial_signature(M, n_paths)
    vals = []
    p2 = project(spec.at(0.0), "2")
    vals.append(np.full(n_paths, p2.scalar.real))
    for j in range(1, len(t_grid)):
        dt = t_grid[j] - t_grid[j - 1]
        s = chen_step(s, dt, z[:, j - 1] * math.sqrt(dt), M)
        p2 = project(spec.at(t_grid[j]), "2")
        vals.append((s[:, : p2.coeffs.size] @ p2.coeffs.real))
    vals = np.array(vals)
    return {
        "min": float(vals.min()),
        "violation_fraction": float(np.mean(vals < 0)),
        "n_samples": int(vals.size),
    }


# configuration files

FAMILIES = ("ou", "stein_stein", "mgbm", "hull_white", "cir", "heston", "delayed", "rlfbm", "bergomi", "quintic", "raw", "flat")


def spec_from_config(cfg: dict, T: float | None = None) -> VolatilitySpec:
    """Build a spec from a parsed config mapping.

    Keys: ``family``, ``params``, ``M``, ``rho`` and optionally ``time_dependent``
    and ``grid_points`` for families with time-dependent coefficients.
    """
    family = str(cfg.get("family", "")).lower()
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    params = dict(cfg.get("params", {}))
    M = int(cfg.get("M", 4))
    rho = float(cfg.get("rho", 0.0))
    horizon = float(cfg.get("T", T if T is not None else 1.0))
    n_grid = int(cfg.get("grid_points", 101))
    grid = np.linspace(0.0, horizon, n_grid)
    td = bool(cfg.get("time_dependent", False))
    if family in ("ou", "stein_stein"):
        p = OUParams(**params)
        if td:
            sig = TimeDependentTensor.from_function(lambda t: ou_rep_time_dep(t, p, M), grid)
        else:
            sig = ou_rep(p, M)
    elif family in ("mgbm", "hull_white"):
        p = MGBMParams(**params)
        if td:
            sig = TimeDependentTensor.from_function(lambda t: mgbm_rep_time_dep(t, p, M), grid)
        else:
            sig = mgbm_rep(p, M)
    elif family in ("cir", "heston"):
        sig, _ = cir_rep(CIRParams(**params), M)
    elif family == "delayed":
        sig = delayed_rep(DelayedParams(**params), M)
    elif family == "rlfbm":
        H = float(params["H"])
        scale = float(params.get("scale", 1.0))
        base = float(params.get("base", 0.0))
        sig = TimeDependentTensor.from_function(
            lambda t: TensorElement.unit(M, scale=base) + scale * rl_fbm_rep(t, H, M), grid
        )
    elif family == "bergomi":
        sig = bergomi_sigma(float(params["xi0"]), float(params["eta"]), M)
    elif family == "quintic":
        alphas = [float(params.get(k, 0.0)) for k in ("a0", "a1", "a3", "a5")]
        sig = quintic_sigma(alphas, M, xi0=float(params.get("xi0", 1.0)))
    elif family == "flat":
        sig = TensorElement.unit(M, scale=float(params["vol"]))
    else:
        terms = cfg.get("coefficients", params.get("coefficients"))
        if terms is None:
            raise ValueError("raw family needs a 'coefficients' list")
        if isinstance(terms, dict):
            terms = [{"word": k, "re": v} for k, v in terms.items()]
        sig = TensorElement.from_records(terms, M)
    spec = VolatilitySpec(sig, rho, M, family, {"family": family, "params": params})
    return spec


def load_model_config(path) -> dict:
    """Read a JSON or TOML model config file into a dict."""
    path = Path(path)
    text = path.read_bytes()
    if path.suffix.lower() == ".toml":
        return _toml.loads(text.decode())
    return json.loads(text)
