"""Truncated signatures of time-augmented piecewise-linear paths.

Signatures are kept as dense real arrays over the two-letter alphabet,
letter 1 being time and letter 2 the driving path.  All routines accept a
leading batch axis so that many paths advance together.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .tensor_algebra import TensorElement, concat_arrays, level_start, tensor_dim

__all__ = [
    "SignaturePath",
    "segment_signature",
    "chen_extend",
    "chen_step",
    "signature_of_path",
    "expected_signature",
    "initial_signature",
    "linear_functional_paths",
]


def initial_signature(order: int, n_paths: int | None = None) -> np.ndarray:
    shape = (tensor_dim(order),) if n_paths is None else (n_paths, tensor_dim(order))
    s = np.zeros(shape)
    s[..., 0] = 1.0
    return s


def _increment(dt, dw):
    dw = np.asarray(dw, dtype=float)
    dt = np.broadcast_to(np.asarray(dt, dtype=float), dw.shape)
    return np.stack([dt, dw], axis=-1)


def chen_step(sig: np.ndarray, dt, dw, order: int) -> np.ndarray:
    """Return ``sig ⊗ exp(dt·1 + dw·2)`` for dense arrays with a leading batch axis.

    Each output level ``m`` is ``sum_k sig_{m-k} Δ^{⊗k}/k!`` evaluated in Horner
    form, so only right-multiplications by the single increment are needed.
    """
    delta = _increment(dt, dw)
    lead = delta.shape[:-1]
    out = np.empty(lead + (tensor_dim(order),), dtype=np.result_type(sig, float))
    out[..., 0] = sig[..., 0]
    st = [level_start(m) for m in range(order + 2)]
    for m in range(1, order + 1):
        t = sig[..., 0:1] * (1.0 / m)
        for j in range(1, m + 1):
            t = (t[..., :, None] * delta[..., None, :]).reshape(lead + (2**j,))
            t = sig[..., st[j] : st[j + 1]] + t
            if j < m:
                t = t / (m - j)
        out[..., st[m] : st[m + 1]] = t
    return out


@numba.njit(cache=True, nogil=True)
def _functional_kernel(coeffs, idx, dt, dW, order, out):
    n, steps = dW.shape
    dim = 2 ** (order + 1) - 1
    buf = np.empty((2, 2**order))
    inv = np.ones(order + 1)
    for k in range(1, order + 1):
        inv[k] = 1.0 / k
    s = np.empty(dim)
    for p in range(n):
        s[:] = 0.0
        s[0] = 1.0
        c = coeffs[idx[0]]
        acc = 0.0
        for a in range(dim):
            acc += s[a] * c[a]
        out[p, 0] = acc
        for j in range(steps):
            d1 = dW[p, j]
            # levels top-down so lower levels still hold the old signature
            for m in range(order, 0, -1):
                cur = 0
                buf[0, 0] = s[0] * inv[m]
                size = 1
                for k in range(1, m + 1):
                    st = size * 2 - 1
                    scale = inv[m - k] if k < m else 1.0
                    src = buf[cur]
                    dst = buf[1 - cur]
                    for a in range(size):
                        ta = src[a]
                        dst[2 * a] = (s[st + 2 * a] + ta * dt) * scale
                        dst[2 * a + 1] = (s[st + 2 * a + 1] + ta * d1) * scale
                    size *= 2
                    cur = 1 - cur
                src = buf[cur]
                st = size - 1
                for a in range(size):
                    s[st + a] = src[a]
            c = coeffs[idx[j + 1]]
            acc = 0.0
            for a in range(dim):
                acc += s[a] * c[a]
            out[p, j + 1] = acc


def linear_functional_paths(coeffs, idx, dt: float, dW, order: int) -> np.ndarray:
    """``<l_{t_j}, S(W_hat)_{0,t_j}>`` along many paths without storing signatures.

    ``coeffs`` has shape ``(n_grid, tensor_dim(order))`` and ``idx[j]`` selects
    the row used at grid time ``j``; ``dW`` has shape ``(n_paths, steps)``.
    Same arithmetic as repeated :func:`chen_step`, compiled.
    """
    dW = np.ascontiguousarray(dW, dtype=float)
    coeffs = np.ascontiguousarray(np.asarray(coeffs, dtype=float).reshape(-1, tensor_dim(order)))
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if idx.shape[0] != dW.shape[1] + 1:
        raise ValueError("idx needs one entry per grid time")
    out = np.empty((dW.shape[0], dW.shape[1] + 1))
    _functional_kernel(coeffs, idx, float(dt), dW, int(order), out)
    return out


def segment_signature(dt: float, dw, order: int) -> TensorElement:
    """Signature of the straight segment with increment ``(dt, dw)``."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    s = chen_step(initial_signature(order), dt, dw, order)
    return TensorElement(s, order)


def chen_extend(s: TensorElement, dt: float, dw: float) -> TensorElement:
    if s.dim != 2:
        raise ValueError("path signatures use the two-letter alphabet")
    return TensorElement(chen_step(s.coeffs, dt, dw, s.order), s.order)


@dataclass
class SignaturePath:
    """Running signature ``W_hat_t`` on a time grid.

    ``coeffs`` has shape ``(len(grid), N)`` for a single path or
    ``(n_paths, len(grid), N)`` for a batch.
    """

    grid: np.ndarray
    coeffs: np.ndarray
    order: int

    def __len__(self):
        return len(self.grid)

    def value(self, j: int, path: int | None = None) -> TensorElement:
        c = self.coeffs[j] if self.coeffs.ndim == 2 else self.coeffs[path, j]
        return TensorElement(c, self.order)

    @property
    def values(self) -> list:
        return [self.value(j) for j in range(len(self.grid))]

    def bracket(self, l: TensorElement) -> np.ndarray:
        """``<l, W_hat_t>`` at every grid time (and path)."""
        n = min(l.coeffs.size, self.coeffs.shape[-1])
        out = self.coeffs[..., :n] @ l.coeffs[:n]
        return out.real if np.all(l.coeffs.imag == 0) else out


def signature_of_path(times, w_values, order: int) -> SignaturePath:
    """Signatures of ``t -> (t, w_t)`` along the piecewise-linear interpolation.

    ``w_values`` may be one path of shape ``(J+1,)`` or a batch ``(P, J+1)``.
    The path is shifted so the signature starts at the identity.
    """
    times = np.asarray(times, dtype=float)
    w = np.asarray(w_values, dtype=float)
    if w.shape[-1] != times.size:
        raise ValueError("times and w_values must have matching length")
    if np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be strictly increasing")
    batch = w.ndim == 2
    w2 = w if batch else w[None, :]
    P = w2.shape[0]
    out = np.empty((P, times.size, tensor_dim(order)))
    s = initial_signature(order, P)
    out[:, 0] = s
    dts = np.diff(times)
    dws = np.diff(w2, axis=1)
    for j in range(times.size - 1):
        s = chen_step(s, dts[j], dws[:, j], order)
        out[:, j + 1] = s
    return SignaturePath(times, out if batch else out[0], order)


def expected_signature(t: float, order: int) -> TensorElement:
    """Expected signature of time-augmented Brownian motion, ``exp⊗(t(1 + ½·22))``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    gen = np.zeros(tensor_dim(order))
    if order >= 1:
        gen[1] = t
    if order >= 2:
        gen[6] = 0.5 * t  # word 22
    total = np.zeros(tensor_dim(order))
    total[0] = 1.0
    term = total.copy()
    for n in range(1, order + 1):
        term = concat_arrays(term, gen, order) / n
        total = total + term
    return TensorElement(total, order)
