"""Numeric substrate: index spaces, matrix-exponential action and
constrained solves on the sum-zero subspace.

Vectors over a configuration set are plain 1-D ``numpy`` arrays and
operators are 2-D arrays indexed ``[destination, source]``, so a generator
column ``G[:, w]`` holds the rates out of ``w``.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from .exceptions import DomainError, InvalidSpaceError, ShapeError, SingularSolveError

#: Hard cap on the number of configurations handled densely.
MAX_STATES = 4096

#: Below this size ``expm_apply`` uses scaling-and-squaring on the full matrix.
DENSE_EXPM_LIMIT = 64

NORMALIZATION_TOL = 1e-10
SOLVE_RESIDUAL_TOL = 1e-10
RANK_TOL = 1e-9


class IndexSpace:
    """Mixed-radix codec between digit tuples and flat indices.

    The first factor varies slowest, matching C order in ``numpy``.

    Parameters
    ----------
    factor_sizes : sequence of int
        Size of every factor; each must be at least 1.
    """

    __slots__ = ("factor_sizes", "total", "strides")

    def __init__(self, factor_sizes):
        sizes = tuple(int(s) for s in factor_sizes)
        for s, raw in zip(sizes, factor_sizes):
            if s != raw or s < 1:
                raise InvalidSpaceError(f"factor sizes must be positive integers, got {list(factor_sizes)}")
        self.factor_sizes = sizes
        self.total = math.prod(sizes)
        strides = []
        acc = 1
        for s in reversed(sizes):
            strides.append(acc)
            acc *= s
        self.strides = tuple(reversed(strides))

    def __len__(self):
        return self.total

    def __eq__(self, other):
        return isinstance(other, IndexSpace) and other.factor_sizes == self.factor_sizes

    def __hash__(self):
        return hash(self.factor_sizes)

    def __repr__(self):
        return f"IndexSpace({list(self.factor_sizes)})"

    def encode(self, digits) -> int:
        digits = tuple(digits)
        if len(digits) != len(self.factor_sizes):
            raise ShapeError(f"expected {len(self.factor_sizes)} digits, got {len(digits)}")
        idx = 0
        for d, s, stride in zip(digits, self.factor_sizes, self.strides):
            if not 0 <= d < s:
                raise InvalidSpaceError(f"digit {d} out of range for factor of size {s}")
            idx += int(d) * stride
        return idx

    def decode(self, index) -> tuple:
        index = int(index)
        if not 0 <= index < self.total:
            raise InvalidSpaceError(f"index {index} out of range [0, {self.total})")
        return tuple((index // stride) % s for s, stride in zip(self.factor_sizes, self.strides))

    def all_digits(self) -> np.ndarray:
        """Digits of every index, shape ``(total, n_factors)``."""
        if not self.factor_sizes:
            return np.zeros((1, 0), dtype=np.int64)
        grids = np.unravel_index(np.arange(self.total), self.factor_sizes)
        return np.stack(grids, axis=1).astype(np.int64)

    def encode_many(self, digits: np.ndarray) -> np.ndarray:
        digits = np.asarray(digits, dtype=np.int64)
        return digits @ np.asarray(self.strides, dtype=np.int64)


def make_index_space(factor_sizes) -> IndexSpace:
    return IndexSpace(factor_sizes)


def is_normalized(v, tol=NORMALIZATION_TOL) -> bool:
    v = np.asarray(v, dtype=float)
    return bool(np.all(v >= -tol) and abs(v.sum() - 1.0) <= tol)


def is_delta(v, tol=NORMALIZATION_TOL) -> bool:
    """True if ``v`` lies in the sum-zero subspace (scaled by its size)."""
    v = np.asarray(v, dtype=float)
    scale = max(1.0, float(np.abs(v).sum()))
    return abs(math.fsum(v)) <= tol * scale


def basis_delta(n: int) -> np.ndarray:
    """Basis ``e_{i+1} - e_0`` of the sum-zero subspace as columns, shape ``(n, n-1)``."""
    B = np.zeros((n, max(n - 1, 0)))
    for i in range(n - 1):
        B[0, i] = -1.0
        B[i + 1, i] = 1.0
    return B


def _check_square(G, n=None):
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ShapeError(f"operator must be square, got shape {G.shape}")
    if n is not None and G.shape[0] != n:
        raise ShapeError(f"operator of size {G.shape[0]} applied to vector of size {n}")
    if G.shape[0] > MAX_STATES:
        raise InvalidSpaceError(f"|Omega| = {G.shape[0]} exceeds the dense cap of {MAX_STATES}")
    return G


def expm_apply(G, v, t: float, method: str = "auto") -> np.ndarray:
    """Return ``exp(G t) v``.

    Uses ``scipy.linalg.expm`` for small operators and uniformization
    (a Poisson-weighted power series in ``P = I + G/K``) otherwise, which is
    stable and preserves the probability simplex for generators.
    ``v`` may be a vector or a stack of column vectors.
    """
    v = np.asarray(v, dtype=float)
    G = _check_square(G, v.shape[0])
    t = float(t)
    if t < 0 or not math.isfinite(t):
        raise DomainError(f"time must be a finite nonnegative number, got {t}")
    if t == 0.0:
        return v.copy()
    if method == "auto":
        method = "dense" if G.shape[0] <= DENSE_EXPM_LIMIT else "uniformization"
    if method == "dense":
        return scipy.linalg.expm(G * t) @ v
    if method == "uniformization":
        return _uniformization(G, v, t)
    raise ValueError(f"unknown method {method!r}")


def _uniformization(G, v, t, max_lambda=25.0, tail=1e-16):
    K = float(np.max(-np.diag(G))) if G.size else 0.0
    if K <= 0.0:
        # no diagonal mass: either the zero generator or not a generator at all
        if not np.any(G):
            return v.copy()
        return scipy.linalg.expm(G * t) @ v
    P = np.eye(G.shape[0]) + G / K
    total = K * t
    n_steps = max(1, math.ceil(total / max_lambda))
    lam = total / n_steps
    kmax = int(lam + 12.0 * math.sqrt(lam) + 40)
    out = v.copy()
    for _ in range(n_steps):
        w = math.exp(-lam)
        term = out
        acc = w * term
        cum = w
        for k in range(1, kmax + 1):
            term = P @ term
            w *= lam / k
            acc = acc + w * term
            cum += w
            if 1.0 - cum <= tail and k > lam:
                break
        out = acc
    return out


def series_expm_apply(G, v, t, n_terms=30) -> np.ndarray:
    """Truncated Taylor series of ``exp(G t) v``; a test oracle for small ``|G t|``."""
    G = np.asarray(G, dtype=float)
    term = np.asarray(v, dtype=float).copy()
    acc = term.copy()
    for k in range(1, n_terms + 1):
        term = (G @ term) * (t / k)
        acc += term
    return acc


def null_space_dim(G, tol: float = RANK_TOL) -> int:
    """Number of singular values below ``tol`` times the largest one."""
    G = _check_square(G)
    if G.shape[0] == 0:
        return 0
    s = scipy.linalg.svdvals(G)
    smax = float(s.max())
    if smax == 0.0:
        return G.shape[0]
    return int(np.sum(s <= tol * smax))


def solve_on_delta(G, rhs, tol: float = SOLVE_RESIDUAL_TOL, check_rank: bool = True) -> np.ndarray:
    """Solve ``G z = -rhs`` with ``sum(z) == 0``.

    For an ergodic generator the solution exists and is unique whenever
    ``rhs`` is sum-zero; it equals ``int_0^inf exp(G t) rhs dt``.

    Raises
    ------
    DomainError
        If ``rhs`` does not sum to zero.
    SingularSolveError
        If ``G`` has a null space of dimension other than one.
    """
    rhs = np.asarray(rhs, dtype=float)
    G = _check_square(G, rhs.shape[0])
    cols = rhs if rhs.ndim == 2 else rhs[:, None]
    for j in range(cols.shape[1]):
        if not is_delta(cols[:, j], tol=1e-9):
            raise DomainError("right-hand side must lie in the sum-zero subspace")
    if check_rank:
        k = null_space_dim(G)
        if k != 1:
            raise SingularSolveError(f"generator null space has dimension {k}; ergodicity required")
    n = G.shape[0]
    # G + 1/n * 1 1^T is nonsingular iff dim ker G == 1; sum-zero solutions are preserved
    A = G + np.full((n, n), 1.0 / n)
    z = scipy.linalg.solve(A, -rhs)
    resid = float(np.max(np.abs(G @ z + rhs), initial=0.0))
    if resid > tol * float(np.max(np.abs(rhs), initial=0.0)):
        raise SingularSolveError(f"solve residual {resid:.3e} exceeds tolerance")
    return z
