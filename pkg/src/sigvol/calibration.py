"""Per-maturity calibration of signature volatility specs to implied volatilities.

Each slice is fitted independently: a seeded DE/rand/1/bin search over the
free coefficients and ``rho``, followed by a bounded quasi-Newton polish.  A
whole DE generation is priced with a single batched Riccati solve.
"""
from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .fourier import bs_charfun, gauss_laguerre, implied_vol, lewis_price, PricingRequest, variance_swap_strike
from .models import VolatilitySpec
from .riccati import PayoffTransform, solve_many
from .tensor_algebra import TensorElement, Word, basis_words, tensor_dim

__all__ = [
    "DAYS_PER_YEAR",
    "MarketSlice",
    "CalibrationConfig",
    "CalibrationResult",
    "load_slices",
    "write_slices",
    "synthetic_slices",
    "model_smiles",
    "slice_loss",
    "differential_evolution",
    "calibrate_slice",
    "calibrate_surface",
]

log = logging.getLogger(__name__)

DAYS_PER_YEAR = 365.0
REQUIRED = ("maturity_days", "strike", "implied_vol", "spot")


@dataclass
class MarketSlice:
    maturity_days: float
    strikes: np.ndarray
    implied_vols: np.ndarray
    spot: float = 1.0
    asof: str | None = None

    def __post_init__(self):
        self.strikes = np.asarray(self.strikes, dtype=float)
        self.implied_vols = np.asarray(self.implied_vols, dtype=float)
        if self.strikes.shape != self.implied_vols.shape:
            raise ValueError("strikes and implied vols differ in length")
        if np.any(self.strikes <= 0) or np.any(np.diff(self.strikes) <= 0):
            raise ValueError("strikes must be positive and increasing")
        if np.any(self.implied_vols <= 0):
            raise ValueError("implied vols must be positive")

    @property
    def T(self) -> float:
        return self.maturity_days / DAYS_PER_YEAR

    @property
    def moneyness(self) -> np.ndarray:
        # models are normalised to S_0 = 1
        return self.strikes / self.spot


def load_slices(path) -> list:
    """Read ``maturity_days,strike,implied_vol,spot`` rows and group them by maturity.

    Non-numeric rows raise with their line numbers; a repeated
    ``(maturity, strike)`` keeps the last row and warns.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        missing = [c for c in REQUIRED if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"missing column(s): {', '.join(missing)}")
        rows, bad = {}, []
        spots = {}
        for line, rec in enumerate(reader, start=2):
            try:
                T, K, iv, S = (float(rec[c]) for c in REQUIRED)
            except (TypeError, ValueError):
                bad.append(line)
                continue
            if not (T > 0 and K > 0 and iv > 0 and S > 0):
                bad.append(line)
                continue
            if (T, K) in rows:
                warnings.warn(f"duplicate row for maturity {T} strike {K} at line {line}; keeping the last", stacklevel=2)
            rows[(T, K)] = iv
            spots[T] = S
    if bad:
        raise ValueError(f"invalid row(s) at line(s) {bad}")
    out = []
    for T in sorted(spots):
        ks = sorted(k for (t, k) in rows if t == T)
        out.append(MarketSlice(T, np.array(ks), np.array([rows[(T, k)] for k in ks]), spots[T]))
    return out


def write_slices(slices, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REQUIRED)
        for s in slices:
            for k, iv in zip(s.strikes, s.implied_vols):
                w.writerow([s.maturity_days, repr(float(k)), repr(float(iv)), s.spot])


@dataclass
class CalibrationConfig:
    """``free_words`` defaults to every non-empty word up to order ``M``."""

    M: int = 2
    free_words: list | None = None
    sigma0: float = 0.1204
    base: dict = field(default_factory=dict)
    coef_bounds: tuple = (-1.0, 1.0)
    word_bounds: dict = field(default_factory=dict)
    rho_bounds: tuple = (-0.999, 0.999)
    fit_rho: bool = True
    rho: float = 0.0
    popsize_factor: int = 15
    F: float = 0.8
    CR: float = 0.9
    generations: int = 1000
    stagnation: int = 50
    seed: int = 0
    polish: bool = True
    L: int = 64
    J: int = 25
    order: int | None = None

    def __post_init__(self):
        if self.free_words is None:
            self.free_words = [str(w) for w in basis_words(self.M)[1:]]
        self.free_words = [str(Word.parse(w) if isinstance(w, str) else w) for w in self.free_words]
        if any(len(Word.parse(w)) > self.M or len(Word.parse(w)) == 0 for w in self.free_words):
            raise ValueError("free words must be non-empty and of length at most M")
        if self.popsize_factor * max(self.dim, 1) < 4:
            raise ValueError("population must have at least 4 members")

    @property
    def dim(self) -> int:
        return len(self.free_words) + int(self.fit_rho)

    def bounds(self) -> np.ndarray:
        b = [self.word_bounds.get(w, self.coef_bounds) for w in self.free_words]
        if self.fit_rho:
            b.append(self.rho_bounds)
        b = np.array(b, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(b)) or np.any(b[:, 0] >= b[:, 1]):
            raise ValueError("bounds must be finite and non-empty")
        return b

    def base_coefficients(self) -> np.ndarray:
        c = np.zeros(tensor_dim(self.M))
        for w, v in self.base.items():
            c[Word.parse(w).index()] = v
        c[0] = self.sigma0
        return c

    def build(self, x) -> VolatilitySpec:
        c = self.base_coefficients()
        x = np.asarray(x, dtype=float)
        for w, v in zip(self.free_words, x):
            c[Word.parse(w).index()] = v
        rho = float(x[-1]) if self.fit_rho else self.rho
        return VolatilitySpec(TensorElement(c, self.M), rho, self.M, "calibrated")


@dataclass
class CalibrationResult:
    slice: MarketSlice
    spec: VolatilitySpec
    rho: float
    loss: float
    trace: dict
    x: np.ndarray

    @property
    def rmse(self) -> float:
        return float(np.sqrt(self.loss))

    def to_dict(self) -> dict:
        sig = self.spec.sigma.values[0]
        return {
            "maturity_days": float(self.slice.maturity_days),
            "rho": self.rho,
            "coefficients": [{"word": str(w), "value": float(np.real(v))} for w, v in sig.items(tol=0.0)],
            "loss": self.loss,
            "evaluations": self.trace.get("evaluations", 0),
            "seed": self.trace.get("seed"),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


# batched smile evaluation


_FD_H = 1e-3


def model_smiles(specs, T: float, strikes, L: int = 64, J: int = 100, order: int | None = None) -> np.ndarray:
    """Implied vols ``(n_specs, n_strikes)`` from one batched Riccati solve; NaN marks failures."""
    specs = list(specs)
    rule = gauss_laguerre(L)
    nodes = np.concatenate([rule.nodes - 0.5j, [_FD_H, -_FD_H]])
    sols = solve_many(specs, PayoffTransform.european(T), T, nodes, J=J, order=order, max_retries=1,
                      raise_on_failure=False)
    K = np.asarray(strikes, dtype=float)
    out = np.full((len(specs), K.size), np.nan)
    for g, sol in enumerate(sols):
        lp = sol.psi[:, 0, 0]
        if not np.all(np.isfinite(lp)):
            continue
        var = -np.real(lp[L] + lp[L + 1]) / _FD_H**2 / T
        if not var > 0:
            var = variance_swap_strike(specs[g], T)
        sbs = float(np.sqrt(max(var, 1e-12)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p = lewis_price(sol, PricingRequest(K, T, sigma_bs=sbs), rule, phi=np.exp(lp[:L]))
        out[g] = implied_vol(p, 1.0, K, T, errors="nan")
    return out


def _losses(iv_model, iv_market):
    err = (iv_model - iv_market[None, :]) ** 2
    # unpriceable strikes count as a unit penalty each
    err = np.where(np.isfinite(err), err, 1.0)
    return err.mean(axis=1)


def slice_loss(spec: VolatilitySpec, sl: MarketSlice, L: int = 64, J: int = 100, order: int | None = None) -> float:
    """Mean squared implied-vol error over the slice's strikes."""
    iv = model_smiles([spec], sl.T, sl.moneyness, L, J, order)
    return float(_losses(iv, sl.implied_vols)[0])


def synthetic_slices(spec: VolatilitySpec, maturities_days, strikes, L: int = 64, J: int = 25, order=None) -> list:
    out = []
    for d in maturities_days:
        iv = model_smiles([spec], d / DAYS_PER_YEAR, strikes, L, J, order)[0]
        if not np.all(np.isfinite(iv)):
            raise FloatingPointError(f"synthetic smile failed at {d} days")
        out.append(MarketSlice(float(d), np.asarray(strikes, float), iv))
    return out


# optimizer


def differential_evolution(objective, bounds, popsize: int | None = None, F: float = 0.8, CR: float = 0.9,
                           generations: int = 1000, stagnation: int = 50, seed: int = 0,
                           vectorized: bool = False, tol: float = 0.0):
    """DE/rand/1/bin with greedy elitist selection.

    ``objective`` maps a point (or, if ``vectorized``, an ``(n, dim)`` batch)
    to a loss.  Stops after ``stagnation`` generations without an improvement
    of the best loss larger than ``tol``.  Returns ``(argmin, trace)``.
    """
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    lo, hi = bounds[:, 0], bounds[:, 1]
    dim = len(bounds)
    NP = max(popsize or 15 * dim, 4)
    rng = np.random.default_rng(seed)
    evaluate = (lambda P: np.asarray(objective(P), float)) if vectorized else (
        lambda P: np.array([objective(p) for p in P], dtype=float))
    pop = lo + rng.random((NP, dim)) * (hi - lo)
    fit = evaluate(pop)
    fit = np.where(np.isfinite(fit), fit, np.inf)
    n_eval = NP
    best_hist = [float(fit.min())]
    stagnant = 0
    gen = 0
    for gen in range(1, generations + 1):
        picks = np.empty((NP, 3), dtype=int)
        for i in range(NP):
            r = rng.choice(NP - 1, 3, replace=False)
            picks[i] = r + (r >= i)
        mutant = pop[picks[:, 0]] + F * (pop[picks[:, 1]] - pop[picks[:, 2]])
        mutant = np.clip(mutant, lo, hi)
        cross = rng.random((NP, dim)) < CR
        cross[np.arange(NP), rng.integers(dim, size=NP)] = True
        trial = np.where(cross, mutant, pop)
        ft = evaluate(trial)
        ft = np.where(np.isfinite(ft), ft, np.inf)
        n_eval += NP
        better = ft <= fit
        pop[better] = trial[better]
        fit[better] = ft[better]
        best = float(fit.min())
        stagnant = 0 if best < best_hist[-1] - tol else stagnant + 1
        best_hist.append(best)
        if stagnant >= stagnation:
            break
    i = int(np.argmin(fit))
    trace = {"best": best_hist, "fun": float(fit[i]), "evaluations": n_eval, "generations": gen,
             "population": NP, "seed": seed, "initial_best": best_hist[0]}
    return pop[i].copy(), trace


def calibrate_slice(sl: MarketSlice, config: CalibrationConfig | None = None) -> CalibrationResult:
    """Fit the free coefficients (and ``rho``) of one slice."""
    cfg = config or CalibrationConfig()
    K, T, iv = sl.moneyness, sl.T, sl.implied_vols

    def batch(P):
        specs = [cfg.build(p) for p in np.atleast_2d(P)]
        return _losses(model_smiles(specs, T, K, cfg.L, cfg.J, cfg.order), iv)

    if cfg.dim == 0:
        spec = cfg.build(np.zeros(0))
        loss = float(batch(np.zeros((1, 0)))[0])
        return CalibrationResult(sl, spec, spec.rho, loss, {"evaluations": 1, "seed": cfg.seed}, np.zeros(0))
    bounds = cfg.bounds()
    x, trace = differential_evolution(batch, bounds, cfg.popsize_factor * cfg.dim, cfg.F, cfg.CR,
                                      cfg.generations, cfg.stagnation, cfg.seed, vectorized=True)
    loss = trace["fun"]
    if cfg.polish:
        n0 = trace["evaluations"]
        counter = {"n": 0}

        def single(p):
            counter["n"] += 1
            return float(batch(p[None, :])[0])

        res = minimize(single, x, method="L-BFGS-B", bounds=bounds, options={"maxiter": 200, "ftol": 1e-16, "gtol": 1e-12})
        trace["evaluations"] = n0 + counter["n"]
        if res.fun < loss:
            trace["polish_gain"] = loss - float(res.fun)
            x, loss = res.x, float(res.fun)
    spec = cfg.build(x)
    return CalibrationResult(sl, spec, spec.rho, float(loss), trace, x)


def calibrate_surface(slices, config: CalibrationConfig | None = None) -> list:
    return [calibrate_slice(s, config) for s in slices]
