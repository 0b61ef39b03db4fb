"""Backward tensor Riccati equation and the joint characteristic functional.

The unknown ``psi_t`` lives in the truncated tensor algebra of order ``M~``.
With ``tau = T - t`` it solves ``d psi / d tau = F(t, psi)`` where

    F = (psi|2) ⧢ (psi|2 / 2 + f rho sigma_t) + psi|22 / 2 + psi|1
        + ((f^2 - f)/2 + g) sigma_t^⧢2

and ``|u`` denotes suffix projection.  All shuffles are truncated at ``M~``.
The RK4 loop runs inside a numba kernel; each (spec, node) row is independent.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .models import VolatilitySpec
from .signature import SignaturePath
from .tensor_algebra import (
    TensorElement,
    Word,
    level_start,
    project,
    shuffle,
    shuffle_table,
    shuffle_arrays,
    tensor_dim,
    _resize,
)

__all__ = [
    "PayoffTransform",
    "RiccatiSolution",
    "RiccatiBlowUp",
    "riccati_rhs",
    "solve",
    "solve_many",
    "char_functional_at_zero",
    "char_functional_along_path",
]

log = logging.getLogger(__name__)

BLOWUP = 1e12


class RiccatiBlowUp(FloatingPointError):
    def __init__(self, node, t, u):
        super().__init__(f"Riccati solution blew up at node {node} (u={u}) near t={t:.6g}")
        self.node, self.t, self.u = node, t, u


@dataclass(frozen=True)
class PayoffTransform:
    """Affine-in-time exponents ``f(t,u) = u_f (a + b t)``, ``g(t,u) = u_g c``.

    Use the named constructors rather than the raw fields.
    """

    kind: str
    T: float

    @classmethod
    def european(cls, T):
        return cls("european", float(T))

    @classmethod
    def asian(cls, T):
        return cls("asian", float(T))

    @classmethod
    def laplace(cls, T):
        return cls("laplace", float(T))

    def coefficients(self, u):
        """``(f0, f1, g0)`` with ``f(t) = f0 + f1 t`` and ``g = g0``."""
        u = np.asarray(u, dtype=complex)
        z = np.zeros_like(u)
        if self.kind == "european":
            return 1j * u, z, z
        if self.kind == "asian":
            return 1j * u, -1j * u / self.T, z
        if self.kind == "laplace":
            return z, z, -u / self.T
        raise ValueError(f"unknown transform {self.kind!r}")

    def f(self, t, u):
        f0, f1, _ = self.coefficients(u)
        return f0 + f1 * np.asarray(t)

    def g(self, t, u):
        return self.coefficients(u)[2] + 0.0 * np.asarray(t)


def riccati_rhs(t: float, psi: TensorElement, u, spec: VolatilitySpec, transform: PayoffTransform) -> TensorElement:
    """Reference evaluation of ``F`` with plain tensor operations (slow, exact)."""
    Mt = psi.order
    sig = spec.at(t).with_order(Mt)
    if spec.order > Mt:
        raise ValueError("psi order must be at least the spec order")
    f = complex(transform.f(t, complex(u)))
    g = complex(transform.g(t, complex(u)))
    p2 = project(psi, Word((2,))).with_order(Mt)
    p1 = project(psi, Word((1,))).with_order(Mt)
    p22 = project(psi, Word((2, 2))).with_order(Mt)
    out = shuffle(p2, p2 * 0.5 + sig * (f * spec.rho), Mt)
    out = out + p22 * 0.5 + p1
    out = out + shuffle(sig, sig, Mt) * ((f * f - f) / 2 + g)
    return out


# numba kernel


@numba.njit(cache=True, nogil=True)
def _rhs(psi, a, b, out, sg, sg2, rho, f, g, ti, tj, tk, tc, n_p2, n_p22):
    N = psi.shape[0]
    for k in range(N):
        a[k] = 0.0
        out[k] = 0.0
    for k in range(n_p2):
        a[k] = psi[2 * k + 2]
    fr = f * rho
    for k in range(N):
        b[k] = 0.5 * a[k] + fr * sg[k]
    for m in range(ti.shape[0]):
        out[tk[m]] += tc[m] * a[ti[m]] * b[tj[m]]
    for k in range(n_p22):
        out[k] += 0.5 * psi[4 * k + 6]
    for k in range(n_p2):
        out[k] += psi[2 * k + 1]
    c = 0.5 * (f * f - f) + g
    for k in range(N):
        out[k] += c * sg2[k]


@numba.njit(cache=True, nogil=True)
def _locate(grid, t):
    # nearest grid point on the left, clipped
    lo = 0
    hi = grid.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if grid[mid] <= t:
            lo = mid + 1
        else:
            hi = mid
    idx = lo - 1
    if idx < 0:
        idx = 0
    return idx


@numba.njit(cache=True, nogil=True)
def _rk4_rows(rows, sig_grid, sig_tab, sig2_tab, row_group, rho, fcoef, gcoef,
              t_grid, n_sub, ti, tj, tk, tc, n_p2, n_p22, out, status):
    N = out.shape[2]
    J = t_grid.shape[0] - 1
    psi = np.zeros(N, np.complex128)
    tmp = np.zeros(N, np.complex128)
    k1 = np.zeros(N, np.complex128)
    k2 = np.zeros(N, np.complex128)
    k3 = np.zeros(N, np.complex128)
    k4 = np.zeros(N, np.complex128)
    a = np.zeros(N, np.complex128)
    b = np.zeros(N, np.complex128)
    for r in rows:
        grp = row_group[r]
        rh = rho[grp]
        f0 = fcoef[r, 0]
        f1 = fcoef[r, 1]
        g0 = gcoef[r]
        for k in range(N):
            psi[k] = 0.0
            out[r, J, k] = 0.0
        status[r] = -1
        for j in range(J - 1, -1, -1):
            h = (t_grid[j + 1] - t_grid[j]) / n_sub
            for s in range(n_sub):
                t0 = t_grid[j + 1] - s * h
                tm = t0 - 0.5 * h
                t1 = t0 - h
                i0 = _locate(sig_grid, t0)
                im = _locate(sig_grid, tm)
                i1 = _locate(sig_grid, t1)
                _rhs(psi, a, b, k1, sig_tab[grp, i0], sig2_tab[grp, i0], rh, f0 + f1 * t0, g0,
                     ti, tj, tk, tc, n_p2, n_p22)
                for k in range(N):
                    tmp[k] = psi[k] + 0.5 * h * k1[k]
                _rhs(tmp, a, b, k2, sig_tab[grp, im], sig2_tab[grp, im], rh, f0 + f1 * tm, g0,
                     ti, tj, tk, tc, n_p2, n_p22)
                for k in range(N):
                    tmp[k] = psi[k] + 0.5 * h * k2[k]
                _rhs(tmp, a, b, k3, sig_tab[grp, im], sig2_tab[grp, im], rh, f0 + f1 * tm, g0,
                     ti, tj, tk, tc, n_p2, n_p22)
                for k in range(N):
                    tmp[k] = psi[k] + h * k3[k]
                _rhs(tmp, a, b, k4, sig_tab[grp, i1], sig2_tab[grp, i1], rh, f0 + f1 * t1, g0,
                     ti, tj, tk, tc, n_p2, n_p22)
                for k in range(N):
                    psi[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])
            bad = False
            for k in range(N):
                v = psi[k]
                if not (abs(v) <= 1e12):
                    bad = True
                out[r, j, k] = v
            if bad:
                status[r] = j
                for jj in range(j, -1, -1):
                    for k in range(N):
                        out[r, jj, k] = np.nan
                break


@dataclass
class _Kernel:
    order: int
    ti: np.ndarray
    tj: np.ndarray
    tk: np.ndarray
    tc: np.ndarray
    n_p2: int
    n_p22: int


_KERNELS: dict = {}


def _kernel_tables(order: int) -> _Kernel:
    if order not in _KERNELS:
        tab = shuffle_table(2, order)
        # the left factor is psi|2, which has no top-level words
        keep = tab.i < level_start(order)
        _KERNELS[order] = _Kernel(
            order,
            np.ascontiguousarray(tab.i[keep]),
            np.ascontiguousarray(tab.j[keep]),
            np.ascontiguousarray(tab.k[keep]),
            np.ascontiguousarray(tab.count[keep]),
            level_start(order) if order >= 1 else 0,
            level_start(order - 1) if order >= 2 else 0,
        )
    return _KERNELS[order]


def _n_threads() -> int:
    try:
        return max(1, int(os.environ.get("SIGVOL_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class RiccatiSolution:
    """``psi`` has shape ``(n_nodes, J+1, N)``; index ``j`` is time ``t_grid[j]``."""

    u_nodes: np.ndarray
    t_grid: np.ndarray
    psi: np.ndarray
    order: int
    spec: VolatilitySpec
    transform: PayoffTransform
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> float:
        return float(self.t_grid[-1])

    def psi_at(self, t, node=None) -> np.ndarray:
        """Linear interpolation of ``psi`` in time, shape ``(n_nodes, N)`` or ``(N,)``."""
        t = float(t)
        if t < self.t_grid[0] - 1e-12 or t > self.t_grid[-1] + 1e-12:
            raise ValueError("t outside the solution grid")
        j = int(np.clip(np.searchsorted(self.t_grid, t, side="right") - 1, 0, len(self.t_grid) - 2))
        w = (t - self.t_grid[j]) / (self.t_grid[j + 1] - self.t_grid[j])
        p = self.psi if node is None else self.psi[node]
        return (1 - w) * p[..., j, :] + w * p[..., j + 1, :]

    def element(self, node: int, j: int) -> TensorElement:
        return TensorElement(self.psi[node, j], self.order)

    def phi0(self) -> np.ndarray:
        return np.exp(self.psi[:, 0, 0])


def _spec_tables(spec: VolatilitySpec, order: int):
    sig = _resize(spec.coefficient_array().astype(complex), tensor_dim(order))
    tab = shuffle_table(2, order)
    sig2 = shuffle_arrays(sig, sig, tab)
    return spec.sigma.grid.astype(float), sig, sig2


def solve_many(specs, transform: PayoffTransform, T: float, u_nodes, J: int = 100,
               order: int | None = None, max_retries: int = 3, raise_on_failure: bool = True):
    """Solve for several specs sharing nodes and transform; returns one solution per spec.

    Specs must either all be time-independent or share one sigma grid.
    Rows that blow up are retried with twice as many RK4 substeps per stored step.
    """
    specs = list(specs)
    if J < 1:
        raise ValueError("J must be at least 1")
    if T <= 0:
        raise ValueError("T must be positive")
    u_nodes = np.atleast_1d(np.asarray(u_nodes, dtype=complex))
    if order is None:
        order = 2 * max(s.order for s in specs)
    if any(s.order > order for s in specs):
        raise ValueError("working order below the spec order")
    grids = [s.sigma.grid for s in specs]
    if any(len(g) != len(grids[0]) or np.any(g != grids[0]) for g in grids):
        return [solve_many([s], transform, T, u_nodes, J, order, max_retries, raise_on_failure)[0] for s in specs]
    kern = _kernel_tables(order)
    N = tensor_dim(order)
    tabs = [_spec_tables(s, order) for s in specs]
    sig_grid = tabs[0][0]
    sig_tab = np.ascontiguousarray(np.stack([t[1] for t in tabs]))
    sig2_tab = np.ascontiguousarray(np.stack([t[2] for t in tabs]))
    rho = np.array([s.rho for s in specs], dtype=float)
    G, U = len(specs), len(u_nodes)
    row_group = np.repeat(np.arange(G), U).astype(np.int64)
    coefs = np.stack(transform.coefficients(u_nodes), axis=1)
    fcoef = np.ascontiguousarray(np.tile(coefs[:, :2], (G, 1)))
    gcoef = np.ascontiguousarray(np.tile(coefs[:, 2], G))
    t_grid = np.linspace(0.0, T, J + 1)
    R = G * U
    out = np.zeros((R, J + 1, N), dtype=complex)
    status = np.full(R, -1, dtype=np.int64)

    def run(rows, n_sub):
        rows = np.asarray(rows, dtype=np.int64)
        nt = min(_n_threads(), len(rows))
        args = (sig_grid, sig_tab, sig2_tab, row_group, rho, fcoef, gcoef, t_grid, n_sub,
                kern.ti, kern.tj, kern.tk, kern.tc, kern.n_p2, kern.n_p22, out, status)
        if nt <= 1:
            _rk4_rows(rows, *args)
        else:
            with ThreadPoolExecutor(nt) as ex:
                list(ex.map(lambda c: _rk4_rows(c, *args), np.array_split(rows, nt)))

    run(np.arange(R), 1)
    n_sub = 1
    for _ in range(max_retries):
        failed = np.flatnonzero(status >= 0)
        if failed.size == 0:
            break
        n_sub *= 2
        log.info("retrying %d Riccati rows with %d substeps", failed.size, n_sub)
        run(failed, n_sub)
    failed = np.flatnonzero(status >= 0)
    if failed.size and raise_on_failure:
        r = int(failed[0])
        raise RiccatiBlowUp(r % U, float(t_grid[status[r]]), u_nodes[r % U])
    out = out.reshape(G, U, J + 1, N)
    meta = {"J": J, "substeps": n_sub, "failed_nodes": [int(r % U) for r in failed]}
    return [RiccatiSolution(u_nodes, t_grid, out[g], order, specs[g], transform, dict(meta)) for g in range(G)]


def solve(spec: VolatilitySpec, transform: PayoffTransform, T: float, u_nodes, J: int = 100,
          order: int | None = None, max_retries: int = 3, raise_on_failure: bool = True) -> RiccatiSolution:
    """RK4 solve backward from ``psi_T = 0`` on ``J`` uniform steps at working order ``order`` (default ``2M``)."""
    return solve_many([spec], transform, T, u_nodes, J, order, max_retries, raise_on_failure)[0]


def char_functional_at_zero(sol: RiccatiSolution, node_index: int) -> complex:
    return complex(np.exp(sol.psi[node_index, 0, 0]))


def char_functional_along_path(sol: RiccatiSolution, sig_path: SignaturePath, logS_path,
                               Vbar_path=None, u_index=None) -> np.ndarray:
    """``M_t(u)`` on the signature grid for each node.

    ``logS_path`` (and ``Vbar_path`` when ``g`` is non-zero) match the grid of
    ``sig_path``, with a leading path axis if the signature is batched.  The
    stochastic integrals use left-point sums.  Returns shape
    ``(n_nodes, [n_paths,] n_times)``.
    """
    times = np.asarray(sig_path.grid, dtype=float)
    if times[0] < -1e-12 or times[-1] > sol.T + 1e-12:
        raise ValueError("signature grid is not contained in the solution grid")
    nodes = np.arange(len(sol.u_nodes)) if u_index is None else np.atleast_1d(u_index)
    logS = np.asarray(logS_path, dtype=float)
    coeffs = sig_path.coeffs
    n = min(coeffs.shape[-1], sol.psi.shape[-1])
    batch = coeffs.ndim == 3
    out = []
    for i in nodes:
        u = sol.u_nodes[i]
        psis = np.stack([sol.psi_at(t, i)[:n] for t in times])  # (n_times, n)
        if batch:
            br = np.einsum("ptn,tn->pt", coeffs[..., :n], psis)
        else:
            br = np.einsum("tn,tn->t", coeffs[..., :n], psis)
        f = sol.transform.f(times[:-1], u)
        g = sol.transform.g(times[:-1], u)
        dl = np.diff(logS, axis=-1)
        integ = np.concatenate([np.zeros(logS.shape[:-1] + (1,)), np.cumsum(f * dl, axis=-1)], axis=-1)
        if np.any(g != 0):
            if Vbar_path is None:
                raise ValueError("Vbar_path is required when g is non-zero")
            dv = np.diff(np.asarray(Vbar_path, dtype=float), axis=-1)
            integ = integ + np.concatenate([np.zeros(logS.shape[:-1] + (1,)), np.cumsum(g * dv, axis=-1)], axis=-1)
        out.append(np.exp(br + integ))
    return np.stack(out)
