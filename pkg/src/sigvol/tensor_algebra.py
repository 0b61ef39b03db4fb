"""Truncated tensor algebra over the alphabet {1, ..., d}.

Elements are stored densely: the coefficient of a word ``w`` lives at its
canonical index, with ``index(empty) = 0`` and ``index(w i) = d index(w) + i``.
Every level is therefore a contiguous, lexicographically ordered block, which
turns concatenation into outer products and projection into a strided gather.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import factorial
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Word",
    "TensorElement",
    "TimeDependentTensor",
    "word_index",
    "level_start",
    "tensor_dim",
    "shuffle_table",
    "shuffle",
    "concat",
    "project",
    "resolvent",
    "shuffle_exp",
    "shuffle_pow",
    "bracket",
]


def level_start(n: int, d: int = 2) -> int:
    """Index of the first word of length ``n``."""
    if d == 1:
        return n
    return (d**n - 1) // (d - 1)


def tensor_dim(order: int, d: int = 2) -> int:
    """Number of words of length at most ``order``."""
    return level_start(order + 1, d)


def word_index(letters: Sequence[int], d: int = 2) -> int:
    idx = 0
    for a in letters:
        if not 1 <= a <= d:
            raise ValueError(f"letter {a} outside alphabet 1..{d}")
        idx = d * idx + a
    return idx


def _level_of_index(idx: int, d: int) -> int:
    n = 0
    while level_start(n + 1, d) <= idx:
        n += 1
    return n


@dataclass(frozen=True, order=True)
class Word:
    """A finite word over the alphabet {1, ..., d}."""

    letters: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "letters", tuple(int(a) for a in self.letters))
        if any(a < 1 for a in self.letters):
            raise ValueError("letters must be positive integers")

    @classmethod
    def parse(cls, text: str) -> "Word":
        text = text.strip()
        if text in ("e", "", "ø"):
            return cls(())
        if not text.isdigit():
            raise ValueError(f"cannot parse word {text!r}")
        return cls(tuple(int(c) for c in text))

    @classmethod
    def from_index(cls, idx: int, d: int = 2) -> "Word":
        if idx < 0:
            raise ValueError("negative index")
        letters = []
        while idx > 0:
            a = idx % d
            if a == 0:
                a = d
            letters.append(a)
            idx = (idx - a) // d
        return cls(tuple(reversed(letters)))

    def index(self, d: int = 2) -> int:
        return word_index(self.letters, d)

    def __len__(self):
        return len(self.letters)

    def __add__(self, other: "Word") -> "Word":
        return Word(self.letters + other.letters)

    def __str__(self):
        if not self.letters:
            return "e"
        if any(a > 9 for a in self.letters):
            raise ValueError("text format supports letters 1..9 only")
        return "".join(str(a) for a in self.letters)

    def __repr__(self):
        return f"Word('{self}')"


def _as_word(w) -> Word:
    if isinstance(w, Word):
        return w
    if isinstance(w, str):
        return Word.parse(w)
    if isinstance(w, (int, np.integer)):
        return Word((int(w),))
    return Word(tuple(w))


class TensorElement:
    """Immutable truncated tensor with complex coefficients.

    Parameters
    ----------
    coeffs : array_like
        Dense coefficients of length ``tensor_dim(order, dim)``.
    order : int
        Truncation level ``M``.
    dim : int
        Alphabet size ``d``.
    """

    __slots__ = ("coeffs", "order", "dim")
    __array_priority__ = 20

    def __init__(self, coeffs, order: int, dim: int = 2):
        c = np.array(coeffs, dtype=complex).reshape(-1)
        if c.size != tensor_dim(order, dim):
            raise ValueError(
                f"expected {tensor_dim(order, dim)} coefficients for order {order}, got {c.size}"
            )
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "order", int(order))
        object.__setattr__(self, "dim", int(dim))

    def __setattr__(self, name, value):
        raise AttributeError("TensorElement is immutable")

    # construction
    @classmethod
    def zero(cls, order: int, dim: int = 2) -> "TensorElement":
        return cls(np.zeros(tensor_dim(order, dim)), order, dim)

    @classmethod
    def unit(cls, order: int, dim: int = 2, scale: complex = 1.0) -> "TensorElement":
        c = np.zeros(tensor_dim(order, dim), dtype=complex)
        c[0] = scale
        return cls(c, order, dim)

    @classmethod
    def from_words(cls, terms: Mapping, order: int, dim: int = 2) -> "TensorElement":
        """Build from a ``{word: coefficient}`` mapping; words longer than ``order`` are dropped."""
        c = np.zeros(tensor_dim(order, dim), dtype=complex)
        for w, v in terms.items():
            w = _as_word(w)
            if len(w) <= order:
                c[w.index(dim)] += v
        return cls(c, order, dim)

    @classmethod
    def word(cls, w, order: int, dim: int = 2, scale: complex = 1.0) -> "TensorElement":
        return cls.from_words({_as_word(w): scale}, order, dim)

    # access
    def __getitem__(self, w) -> complex:
        w = _as_word(w)
        if len(w) > self.order:
            return 0j
        return complex(self.coeffs[w.index(self.dim)])

    def level(self, n: int) -> np.ndarray:
        if n > self.order:
            return np.zeros(self.dim**n, dtype=complex)
        return self.coeffs[level_start(n, self.dim) : level_start(n + 1, self.dim)]

    @property
    def scalar(self) -> complex:
        return complex(self.coeffs[0])

    @property
    def real(self) -> np.ndarray:
        return self.coeffs.real

    def items(self, tol: float = 0.0):
        """Yield ``(Word, coefficient)`` for coefficients with modulus above ``tol``."""
        for idx in np.flatnonzero(np.abs(self.coeffs) > tol):
            yield Word.from_index(int(idx), self.dim), complex(self.coeffs[idx])

    def with_order(self, order: int) -> "TensorElement":
        """Truncate or zero-pad to a new order."""
        return TensorElement(_resize(self.coeffs, tensor_dim(order, self.dim)), order, self.dim)

    def is_real(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.coeffs.imag) <= tol))

    def allclose(self, other: "TensorElement", rtol=1e-12, atol=1e-12) -> bool:
        n = max(self.order, other.order)
        a, b = self.with_order(n).coeffs, other.with_order(n).coeffs
        return bool(np.allclose(a, b, rtol=rtol, atol=atol))

    # vector space structure
    def _coerce(self, other):
        if isinstance(other, TensorElement):
            if other.dim != self.dim:
                raise ValueError("alphabet mismatch")
            n = max(self.order, other.order)
            return self.with_order(n).coeffs, other.with_order(n).coeffs, n
        return None

    def __add__(self, other):
        if np.isscalar(other):
            c = self.coeffs.copy()
            c[0] += other
            return TensorElement(c, self.order, self.dim)
        co = self._coerce(other)
        if co is None:
            return NotImplemented
        return TensorElement(co[0] + co[1], co[2], self.dim)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return TensorElement(-self.coeffs, self.order, self.dim)

    def __mul__(self, s):
        if isinstance(s, TensorElement) or not np.isscalar(s):
            return NotImplemented
        return TensorElement(self.coeffs * s, self.order, self.dim)

    __rmul__ = __mul__

    def __truediv__(self, s):
        return TensorElement(self.coeffs / s, self.order, self.dim)

    def __eq__(self, other):
        if not isinstance(other, TensorElement):
            return NotImplemented
        return self.dim == other.dim and self.allclose(other, rtol=0, atol=0)

    __hash__ = None

    def __repr__(self):
        terms = [f"{_fmt(v)}*{w}" for w, v in self.items()]
        body = " + ".join(terms[:12]) + (" + ..." if len(terms) > 12 else "")
        return f"TensorElement(M={self.order}, d={self.dim}: {body or '0'})"

    # serialization
    def to_records(self, tol: float = 0.0) -> list:
        return [{"word": str(w), "re": v.real, "im": v.imag} for w, v in self.items(tol)]

    def to_json(self) -> str:
        return json.dumps(self.to_records())

    @classmethod
    def from_records(cls, records: Iterable, order: int | None = None, dim: int = 2):
        terms = {}
        for r in records:
            w = Word.parse(str(r["word"]))
            terms[w] = terms.get(w, 0) + complex(r.get("re", 0.0), r.get("im", 0.0))
        if order is None:
            order = max((len(w) for w in terms), default=0)
        return cls.from_words(terms, order, dim)

    @classmethod
    def from_json(cls, text: str, order: int | None = None, dim: int = 2):
        return cls.from_records(json.loads(text), order, dim)


def _fmt(v: complex) -> str:
    if v.imag == 0:
        return f"{v.real:.6g}"
    return f"({v.real:.6g}{v.imag:+.6g}j)"


def _resize(c: np.ndarray, n: int) -> np.ndarray:
    if c.shape[-1] >= n:
        return c[..., :n]
    out = np.zeros(c.shape[:-1] + (n,), dtype=c.dtype)
    out[..., : c.shape[-1]] = c
    return out


class TimeDependentTensor:
    """Piecewise-constant path of tensors, evaluated at the nearest grid point on the left."""

    def __init__(self, grid, values: Sequence[TensorElement]):
        grid = np.asarray(grid, dtype=float).reshape(-1)
        if len(grid) != len(values) or len(grid) == 0:
            raise ValueError("grid and values must have the same non-zero length")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        orders = {v.order for v in values}
        dims = {v.dim for v in values}
        if len(orders) != 1 or len(dims) != 1:
            raise ValueError("all values must share order and alphabet")
        self.grid = grid
        self.values = list(values)
        self.order = orders.pop()
        self.dim = dims.pop()

    @classmethod
    def constant(cls, value: TensorElement) -> "TimeDependentTensor":
        return cls([0.0], [value])

    @classmethod
    def from_function(cls, fn, grid) -> "TimeDependentTensor":
        grid = np.asarray(grid, dtype=float)
        return cls(grid, [fn(t) for t in grid])

    @property
    def is_constant(self) -> bool:
        return len(self.values) == 1

    def locate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.clip(np.searchsorted(self.grid, t, side="right") - 1, 0, len(self.grid) - 1)

    def at(self, t: float) -> TensorElement:
        return self.values[int(self.locate(t))]

    def stacked(self) -> np.ndarray:
        return np.stack([v.coeffs for v in self.values])

    def map(self, fn) -> "TimeDependentTensor":
        return TimeDependentTensor(self.grid, [fn(v) for v in self.values])


# shuffle tables

@dataclass(frozen=True)
class ShuffleTable:
    """Sparse bilinear map ``out[k] += count * a[i] * b[j]``, sorted by ``k``."""

    dim: int
    order: int
    i: np.ndarray
    j: np.ndarray
    k: np.ndarray
    count: np.ndarray
    starts: np.ndarray
    targets: np.ndarray


def _word_digits(n: int, d: int) -> np.ndarray:
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices((d,) * n).reshape(n, -1).T
    return grids.astype(np.int64) + 1


def _indices_from_digits(digits: np.ndarray, d: int) -> np.ndarray:
    idx = np.zeros(digits.shape[0], dtype=np.int64)
    for col in range(digits.shape[1]):
        idx = d * idx + digits[:, col]
    return idx


@lru_cache(maxsize=None)
def shuffle_table(dim: int, order: int) -> ShuffleTable:
    """Shuffle structure constants for words with combined length at most ``order``.

    Every interleaving of a word of length ``n`` into positions ``S`` and its
    complement yields one triple; duplicates are merged into counts.
    """
    n_words = tensor_dim(order, dim)
    keys = []
    for n in range(order + 1):
        digits = _word_digits(n, dim)
        w_idx = _indices_from_digits(digits, dim)
        for k in range(n + 1):
            for pos in combinations(range(n), k):
                rest = [p for p in range(n) if p not in pos]
                u_idx = _indices_from_digits(digits[:, list(pos)], dim)
                v_idx = _indices_from_digits(digits[:, rest], dim)
                keys.append((u_idx * n_words + v_idx) * n_words + w_idx)
    keys = np.concatenate(keys)
    uniq, counts = np.unique(keys, return_counts=True)
    i, rem = np.divmod(uniq, n_words * n_words)
    j, k = np.divmod(rem, n_words)
    perm = np.lexsort((j, i, k))
    i, j, k, counts = i[perm], j[perm], k[perm], counts[perm].astype(float)
    targets, starts = np.unique(k, return_index=True)
    for arr in (i, j, k, counts, starts, targets):
        arr.flags.writeable = False
    return ShuffleTable(dim, order, i, j, k, counts, starts, targets)


def shuffle_arrays(a: np.ndarray, b: np.ndarray, table: ShuffleTable) -> np.ndarray:
    """Apply a shuffle table to dense coefficient arrays along the last axis.

    ``a`` and ``b`` must already be sized ``tensor_dim(table.order, table.dim)``.
    Leading axes broadcast.
    """
    prod = table.count * a[..., table.i] * b[..., table.j]
    sums = np.add.reduceat(prod, table.starts, axis=-1)
    shape = np.broadcast_shapes(a.shape[:-1], b.shape[:-1]) + (tensor_dim(table.order, table.dim),)
    out = np.zeros(shape, dtype=np.result_type(a, b))
    out[..., table.targets] = sums
    return out


def _check_pair(a: TensorElement, b: TensorElement):
    if a.dim != b.dim:
        raise ValueError("alphabet mismatch")


def shuffle(a: TensorElement, b: TensorElement, out_order: int | None = None) -> TensorElement:
    """Shuffle product ``a ⧢ b`` truncated at ``out_order`` (default: a.order + b.order)."""
    _check_pair(a, b)
    if out_order is None:
        out_order = a.order + b.order
    n = tensor_dim(out_order, a.dim)
    table = shuffle_table(a.dim, out_order)
    c = shuffle_arrays(_resize(a.coeffs, n), _resize(b.coeffs, n), table)
    return TensorElement(c, out_order, a.dim)


def concat_arrays(a: np.ndarray, b: np.ndarray, order: int, d: int = 2) -> np.ndarray:
    """Graded concatenation of dense arrays along the last axis, truncated at ``order``."""
    n = tensor_dim(order, d)
    a, b = _resize(a, n), _resize(b, n)
    lead = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
    out = np.zeros(lead + (n,), dtype=np.result_type(a, b))
    starts = [level_start(m, d) for m in range(order + 2)]
    for m in range(order + 1):
        acc = out[..., starts[m] : starts[m + 1]]
        for k in range(m + 1):
            x = a[..., starts[k] : starts[k + 1]]
            y = b[..., starts[m - k] : starts[m - k + 1]]
            acc += (x[..., :, None] * y[..., None, :]).reshape(lead + (d**m,))
    return out


def concat(a: TensorElement, b: TensorElement, out_order: int | None = None) -> TensorElement:
    """Concatenation (tensor) product ``a ⊗ b`` truncated at ``out_order``."""
    _check_pair(a, b)
    if out_order is None:
        out_order = a.order + b.order
    return TensorElement(concat_arrays(a.coeffs, b.coeffs, out_order, a.dim), out_order, a.dim)


def project_arrays(x: np.ndarray, u: Word, order: int, d: int = 2) -> np.ndarray:
    """Suffix projection on dense arrays of order ``order``; result keeps the same length."""
    n_out = tensor_dim(order - len(u), d) if len(u) <= order else 0
    out = np.zeros_like(x)
    if n_out:
        src = d ** len(u) * np.arange(n_out) + u.index(d)
        out[..., :n_out] = x[..., src]
    return out


def project(l: TensorElement, u) -> TensorElement:
    """``l proj u``: coefficients of words ending in ``u`` with that suffix removed."""
    u = _as_word(u)
    new_order = max(l.order - len(u), 0)
    c = project_arrays(l.coeffs, u, l.order, l.dim)[: tensor_dim(new_order, l.dim)]
    if len(u) > l.order:
        c = np.zeros(1)
    return TensorElement(c, new_order, l.dim)


def _require_no_scalar(l: TensorElement, name: str):
    if l.coeffs[0] != 0:
        raise ValueError(f"{name} requires a zero scalar coefficient")


def resolvent(l: TensorElement, out_order: int | None = None) -> TensorElement:
    """``sum_n l^{⊗n}``, i.e. the inverse of ``ø - l`` for concatenation."""
    _require_no_scalar(l, "resolvent")
    out_order = l.order if out_order is None else out_order
    lc = _resize(l.coeffs, tensor_dim(out_order, l.dim))
    r = np.zeros_like(lc)
    r[0] = 1.0
    # each pass fixes one more level of r = ø + r ⊗ l
    for _ in range(out_order):
        r = concat_arrays(r, lc, out_order, l.dim)
        r[0] += 1.0
    return TensorElement(r, out_order, l.dim)


def shuffle_pow(l: TensorElement, k: int, out_order: int | None = None) -> TensorElement:
    if k < 0:
        raise ValueError("k must be non-negative")
    out_order = l.order * max(k, 1) if out_order is None else out_order
    res = TensorElement.unit(out_order, l.dim)
    base = l.with_order(out_order)
    for _ in range(k):
        res = shuffle(res, base, out_order)
    return res


def shuffle_exp(l: TensorElement, out_order: int | None = None) -> TensorElement:
    """``sum_n l^{⧢n} / n!`` truncated at ``out_order``."""
    _require_no_scalar(l, "shuffle_exp")
    out_order = l.order if out_order is None else out_order
    base = l.with_order(out_order)
    term = TensorElement.unit(out_order, l.dim)
    total = term
    for n in range(1, out_order + 1):
        term = shuffle(term, base, out_order) / n
        total = total + term
    return total


def bracket(l: TensorElement, s) -> complex | np.ndarray:
    """Pairing ``<l, s>`` truncated at the smaller of the two orders.

    ``s`` may be a TensorElement or a dense array whose last axis holds
    signature coefficients (real or complex); batched arrays give batched output.
    """
    if isinstance(s, TensorElement):
        if s.dim != l.dim:
            raise ValueError("alphabet mismatch")
        n = min(l.coeffs.size, s.coeffs.size)
        return complex(np.dot(l.coeffs[:n], s.coeffs[:n]))
    s = np.asarray(s)
    n = min(l.coeffs.size, s.shape[-1])
    return s[..., :n] @ l.coeffs[:n]


def letters_only(l: TensorElement) -> bool:
    """True when ``l`` is supported on single letters."""
    mask = np.ones(l.coeffs.size, dtype=bool)
    mask[1 : 1 + l.dim] = False
    return bool(np.all(l.coeffs[mask] == 0))


def basis_words(order: int, d: int = 2) -> list:
    return [Word.from_index(i, d) for i in range(tensor_dim(order, d))]


def factorial_weights(order: int) -> np.ndarray:
    return np.array([1.0 / factorial(n) for n in range(order + 1)])
