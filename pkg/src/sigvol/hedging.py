"""Quadratic hedging of European and geometric-Asian options.

The conditional price is written through the martingales
``N_t(u) = E[exp(i u Y) | F_t]`` (``Y`` the log terminal price or log
geometric average) evaluated on the Lewis contour.  Their Ito expansion gives
the loadings of the price on ``dB`` and ``dW``, which in turn give the
martingale-representation weights ``Z, Z_perp`` and the variance-optimal
position ``alpha* = rho Z + sqrt(1 - rho^2) Z_perp`` in ``dB``.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .explicit import stein_stein_coefficients
from .fourier import (
    PricingRequest,
    QuadratureRule,
    asian_bs_charfun,
    asian_price,
    black_price,
    bs_charfun,
    bs_price,
    choose_sigma_bs,
    gauss_laguerre,
    lewis_nodes,
    lewis_price,
    solve_for_pricing,
)
from .models import OUParams, VolatilitySpec
from .montecarlo import _blocks, _draws, ou_pathwise
from .riccati import PayoffTransform, RiccatiSolution
from .signature import chen_step, initial_signature
from .tensor_algebra import level_start

__all__ = [
    "HedgeState",
    "HedgeReport",
    "hedge_weights_european",
    "hedge_weights_asian",
    "simulate_hedge",
    "optimal_value_estimate",
]

log = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-8


@dataclass
class HedgeState:
    """Market state at time ``t`` for a batch of paths (arrays share the leading axis)."""

    t: float
    S: np.ndarray
    sig: np.ndarray
    Sigma: np.ndarray
    log_integral: np.ndarray | float = 0.0


@dataclass
class HedgeReport:
    X0: float
    pnl: np.ndarray
    J_hat: float
    J_se: float
    strategy: str
    shares: np.ndarray | None = None
    alpha: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {"strategy": self.strategy, "X0": self.X0, "J_hat": self.J_hat, "J_se": self.J_se,
               "n_paths": int(self.pnl.size), "mean_pnl": float(np.mean(self.pnl))}
        out.update({k: v for k, v in self.meta.items() if np.isscalar(v) or isinstance(v, (str, list, dict))})
        return out

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, default=float)

    def write_pnl_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "pnl"])
            for i, v in enumerate(self.pnl):
                w.writerow([i, repr(float(v))])


class _Loadings:
    """Price loadings on ``dB`` and ``dW`` from node values of ``N`` and its ``dW`` sensitivity."""

    def __init__(self, rule: QuadratureRule, K: float, T: float, sigma_bs: float, asian: bool, put: bool):
        self.u = rule.nodes
        self.ut = rule.nodes - 0.5j
        self.c = rule.weights / (rule.nodes**2 + 0.25)
        self.K, self.T, self.sbs = K, T, sigma_bs
        self.asian, self.put = asian, put
        self.kphase = np.exp(-1j * self.ut * math.log(K))

    def __call__(self, t, y, Sigma, N, P2, Nfwd, P2fwd):
        """``y``: log price (European) or Asian state ``x``; ``N, P2``: ``(n_paths, L)``.

        ``Nfwd`` is the conditional forward of the underlying payoff variable and
        ``P2fwd`` its ``dW`` loading divided by ``Nfwd``.
        """
        K, T, sbs = self.K, self.T, self.sbs
        tau = T - t
        if self.asian:
            a = tau / T
            cv = asian_bs_charfun(self.ut, T, t, sbs)
            fbs = np.exp(y) * float(np.real(asian_bs_charfun(-1j, T, t, sbs)))
            v = sbs**2 * tau**3 / (3 * T**2)
        else:
            a = 1.0
            cv = bs_charfun(self.ut, tau, sbs)
            fbs = np.exp(y)
            v = sbs**2 * tau
        sv = math.sqrt(max(v, 0.0))
        if sv > 0:
            dx_bs = fbs * ndtr((np.log(fbs / K) + 0.5 * v) / sv)
        else:
            dx_bs = np.where(fbs > K, fbs, 0.0)
        base = np.exp(1j * np.outer(y, self.ut)) * cv
        term_b = np.real(self.kphase * 1j * self.ut * (N - base)) @ self.c
        bcoef = a * Sigma * (dx_bs + (Nfwd - fbs) - K / np.pi * term_b)
        wcoef = Nfwd * P2fwd - K / np.pi * (np.real(self.kphase * N * P2) @ self.c)
        if self.put:
            bcoef = bcoef - a * Sigma * Nfwd
            wcoef = wcoef - Nfwd * P2fwd
        return bcoef, wcoef


class _SigvolWeights:
    def __init__(self, sol: RiccatiSolution, rule: QuadratureRule, K, T, sigma_bs, asian, put):
        self.sol, self.L = sol, len(rule)
        self.asian = asian
        self.load = _Loadings(rule, K, T, sigma_bs, asian, put)
        n2 = level_start(sol.order)
        self.n2 = n2
        self.p2_src = 2 * np.arange(n2) + 2

    def __call__(self, st: HedgeState):
        sol, L = self.sol, self.L
        psi = sol.psi_at(st.t)  # (U, N)
        n = min(psi.shape[-1], st.sig.shape[-1])
        sig = st.sig[:, :n]
        br = sig @ psi[:, :n].real.T + 1j * (sig @ psi[:, :n].imag.T)
        p2 = psi[:, self.p2_src]
        m = min(self.n2, n)
        pb = sig[:, :m] @ p2[:, :m].real.T + 1j * (sig[:, :m] @ p2[:, :m].imag.T)
        logS = np.log(st.S)
        if self.asian:
            y = st.log_integral / sol.T + (sol.T - st.t) / sol.T * logS
            ut = np.append(self.load.ut, -1j)
        else:
            y = logS
            ut = self.load.ut
        Nall = np.exp(1j * np.outer(y, ut) + br)
        if self.asian:
            Nfwd = np.real(Nall[:, -1])
            P2fwd = np.real(pb[:, -1])
            N, P2 = Nall[:, :L], pb[:, :L]
        else:
            Nfwd, P2fwd = st.S, 0.0
            N, P2 = Nall, pb
        return self.load(st.t, y, st.Sigma, N, P2, Nfwd, P2fwd)


def _zz(bcoef, wcoef, rho):
    r = math.sqrt(max(1 - rho**2, 0.0))
    return rho * bcoef + wcoef, r * bcoef


def hedge_weights_european(sol: RiccatiSolution, state: HedgeState, req: PricingRequest,
                           rule: QuadratureRule | None = None):
    """``(Z_t, Z_perp_t)`` per path for a European call or put."""
    rule = rule or gauss_laguerre(len(sol.u_nodes))
    sbs = req.sigma_bs if req.sigma_bs is not None else choose_sigma_bs(sol.spec, req.T)
    w = _SigvolWeights(sol, rule, float(req.K), req.T, sbs, False, req.is_put)
    return _zz(*w(state), sol.spec.rho)


def hedge_weights_asian(sol: RiccatiSolution, state: HedgeState, req: PricingRequest,
                        rule: QuadratureRule | None = None):
    """``(Z_t, Z_perp_t)`` per path for a geometric-Asian call or put."""
    rule = rule or gauss_laguerre(len(sol.u_nodes) - 1)
    sbs = req.sigma_bs if req.sigma_bs is not None else choose_sigma_bs(sol.spec, req.T, kind="asian")
    w = _SigvolWeights(sol, rule, float(req.K), req.T, sbs, True, req.is_put)
    return _zz(*w(state), sol.spec.rho)


def _payoff(kind, K, logS, times):
    if kind.startswith("asian"):
        T = times[-1] - times[0]
        avg = np.sum(0.5 * (logS[:, 1:] + logS[:, :-1]) * np.diff(times), axis=1) / T
        X = np.exp(avg)
    else:
        X = np.exp(logS[:, -1])
    return np.maximum(X - K, 0.0) if kind.endswith("call") else np.maximum(K - X, 0.0)


def _ou_from_spec(spec: VolatilitySpec) -> OUParams:
    if spec.meta.get("family") != "ou":
        raise ValueError("the explicit oracle needs a Stein-Stein (OU) spec")
    return OUParams(**spec.meta["params"])


def simulate_hedge(spec: VolatilitySpec, req: PricingRequest, rebalance_steps: int | None = None,
                   n_paths: int = 10_000, seed: int = 0, strategy: str = "sigvol", L: int = 64,
                   J: int = 100, order: int | None = None, bs_sigma: float | None = None,
                   keep_paths: bool = False) -> HedgeReport:
    """Discretely rebalanced self-financing hedge; ``J_hat = mean((X_T - payoff)^2)``.

    Strategies: ``sigvol`` (Fourier weights of the signature model),
    ``bs_delta`` (Black-Scholes delta at ``bs_sigma`` with its own initial
    price) and ``explicit_oracle`` (Stein-Stein weights from the scalar
    Riccati ODEs, on the explicit Stein-Stein dynamics driven by the same draws).
    """
    T, K, kind = req.T, float(req.K), req.kind
    asian = kind.startswith("asian")
    if rebalance_steps is None:
        rebalance_steps = max(1, int(round(252 * T)))
    steps = rebalance_steps
    times = np.linspace(0.0, T, steps + 1)
    dt = T / steps
    rho = spec.rho
    rr = math.sqrt(max(1 - rho**2, 0.0))
    sbs = req.sigma_bs if req.sigma_bs is not None else choose_sigma_bs(spec, T, kind="asian" if asian else "european")
    preq = PricingRequest(K, T, kind, sigma_bs=sbs)
    rule = gauss_laguerre(L)
    meta = {"rebalance_steps": steps, "seed": seed, "L": L, "J": J, "sigma_bs": sbs, "kind": kind, "K": K, "T": T}

    if strategy == "sigvol":
        sol, _ = solve_for_pricing(spec, T, kind, L, J, order, rule)
        X0 = asian_price(sol, preq, rule) if asian else lewis_price(sol, preq, rule)
        weights = _SigvolWeights(sol, rule, K, T, sbs, asian, req.is_put)
        sig_order = sol.order
        meta.update(M=spec.order, M_tilde=sol.order)
    elif strategy == "explicit_oracle":
        p = _ou_from_spec(spec)
        tr = PayoffTransform.asian(T) if asian else PayoffTransform.european(T)
        nodes = lewis_nodes(rule)
        if asian:
            nodes = np.append(nodes, -1j)
        co = stein_stein_coefficients(p.kappa, p.theta, p.eta, rho, T, nodes, tr, np.linspace(0, T, 4 * steps + 1))
        phi = np.exp(co.log_phi0(p.x))
        holder = type("_Holder", (), {"spec": spec})
        X0 = asian_price(holder, preq, rule, phi=phi) if asian else lewis_price(holder, preq, rule, phi=phi[:L])
        load = _Loadings(rule, K, T, sbs, asian, req.is_put)
        sig_order = 0
    elif strategy == "bs_delta":
        s = bs_sigma if bs_sigma is not None else sbs
        meta["bs_sigma"] = s
        if asian:
            X0 = float(black_price(float(np.real(asian_bs_charfun(-1j, T, 0.0, s))), K, s**2 * T / 3,
                                   "put" if req.is_put else "call"))
        else:
            X0 = float(bs_price(1.0, K, T, s, "put" if req.is_put else "call"))
        sig_order = 0
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    coeffs = spec.coefficient_array()
    nM = coeffs.shape[1]
    idx = spec.sigma.locate(times)
    pnl_all, jstar_all = [], []
    shares_keep, alpha_keep = [], []
    n_skipped = 0
    for b, n in _blocks(n_paths):
        dW, dWp = _draws(seed, b, n, steps, dt, False)
        dB = rho * dW + rr * dWp
        if strategy == "explicit_oracle":
            Xvol = ou_pathwise(p, times, dW)
        else:
            so = max(sig_order, spec.order)
            sig = initial_signature(so, n)
        logS = np.zeros((n, steps + 1))
        logint = np.zeros(n)
        wealth = np.full(n, X0)
        pos = np.zeros(n)
        jstar = np.zeros(n)
        sh_rec = np.zeros((n, steps)) if keep_paths else None
        al_rec = np.zeros((n, steps)) if keep_paths else None
        for j in range(steps):
            t = times[j]
            S = np.exp(logS[:, j])
            if strategy == "explicit_oracle":
                Sigma = Xvol[:, j]
            else:
                Sigma = sig[:, :nM] @ coeffs[idx[j]]
            if strategy == "sigvol":
                bcoef, wcoef = weights(HedgeState(t, S, sig, Sigma, logint))
            elif strategy == "explicit_oracle":
                A, Bc, Cc = co.at(t)
                y = logint / T + (T - t) / T * logS[:, j] if asian else logS[:, j]
                X = Sigma[:, None]
                Nall = np.exp(1j * np.outer(y, nodes) + A + Bc * X + Cc * X * X)
                P2all = p.eta * (Bc + 2 * Cc * X)
                if asian:
                    Nfwd, P2fwd = np.real(Nall[:, -1]), np.real(P2all[:, -1])
                    bcoef, wcoef = load(t, y, Sigma, Nall[:, :L], P2all[:, :L], Nfwd, P2fwd)
                else:
                    bcoef, wcoef = load(t, y, Sigma, Nall, P2all, S, 0.0)
            if strategy in ("sigvol", "explicit_oracle"):
                alpha = bcoef + rho * wcoef
                Z, Zp = rho * bcoef + wcoef, rr * bcoef
                jstar += (Z**2 + Zp**2 - alpha**2) * dt
                ok = np.abs(Sigma) >= SIGMA_FLOOR
                n_skipped += int(np.sum(~ok))
                pos = np.where(ok, alpha / np.where(ok, S * Sigma, 1.0), pos)
            else:
                s = meta["bs_sigma"]
                tau = T - t
                if asian:
                    a = tau / T
                    x = logint / T + a * logS[:, j]
                    F = np.exp(x) * float(np.real(asian_bs_charfun(-1j, T, t, s)))
                    v = s**2 * tau**3 / (3 * T**2)
                    d1 = (np.log(F / K) + 0.5 * v) / math.sqrt(v)
                    dx = F * ndtr(d1) - (F if req.is_put else 0.0)
                    pos = dx * a / S
                    alpha = pos * S * Sigma
                else:
                    d1 = (np.log(S / K) + 0.5 * s**2 * tau) / (s * math.sqrt(tau))
                    pos = ndtr(d1) - (1.0 if req.is_put else 0.0)
                    alpha = pos * S * Sigma
            if keep_paths:
                sh_rec[:, j] = pos
                al_rec[:, j] = alpha
            # advance the market
            dlog = -0.5 * Sigma**2 * dt + Sigma * dB[:, j]
            logS[:, j + 1] = logS[:, j] + dlog
            logint = logint + 0.5 * (logS[:, j] + logS[:, j + 1]) * dt
            wealth = wealth + pos * (np.exp(logS[:, j + 1]) - S)
            if strategy != "explicit_oracle":
                sig = chen_step(sig, dt, dW[:, j], so)
        pnl_all.append(wealth - _payoff(kind, K, logS, times))
        jstar_all.append(jstar)
        if keep_paths:
            shares_keep.append(sh_rec)
            alpha_keep.append(al_rec)
    pnl = np.concatenate(pnl_all)
    sq = pnl**2
    J_hat = float(np.mean(sq))
    J_se = float(np.std(sq, ddof=1) / math.sqrt(len(sq))) if len(sq) > 1 else 0.0
    if strategy != "bs_delta":
        js = np.concatenate(jstar_all)
        meta["J_star"] = float(np.mean(js))
        meta["J_star_se"] = float(np.std(js, ddof=1) / math.sqrt(len(js))) if len(js) > 1 else 0.0
    if n_skipped:
        log.info("skipped %d rebalances with |Sigma| < %g", n_skipped, SIGMA_FLOOR)
    meta["skipped_rebalances"] = n_skipped
    return HedgeReport(float(X0), pnl, J_hat, J_se, strategy,
                       np.concatenate(shares_keep) if keep_paths else None,
                       np.concatenate(alpha_keep) if keep_paths else None, meta)


def optimal_value_estimate(spec: VolatilitySpec, req: PricingRequest, n_paths: int = 10_000,
                           rebalance_steps: int | None = None, seed: int = 0, **kw) -> tuple[float, float]:
    """MC estimate of ``E int (Z^2 + Z_perp^2 - alpha*^2) dt`` with its standard error."""
    rep = simulate_hedge(spec, req, rebalance_steps, n_paths, seed, "sigvol", **kw)
    return rep.meta["J_star"], rep.meta["J_star_se"]
