"""Objective operators: linear functionals on the lifted space that assign
a signal to every jump, plus the long-run objective value.

An :class:`ObjectiveOperator` is stored as a sparse list of jump signals
together with an optional *potential* ``h``.  The potential contributes
``h[w'] - h[w]`` to the signal of jump ``w -> w'``; this is exactly the
shape of the correction terms that propagators add, so effective
objective operators stay compact instead of turning into dense
``N x N`` tables.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.integrate

from .algebra import expm_apply
from .dynamics import as_chain
from .exceptions import ConstraintError, PreconditionError, ShapeError
from .topology import FieldTopology


class ObjectiveOperator:
    """Zero-diagonal functional ``Gamma`` on ``H(Omega x Omega)``.

    Parameters
    ----------
    n_states : int
    dest, src, values : array-like
        Sparse jump signals ``gamma[dest, src]``; duplicates are summed.
    potential : array-like, optional
        Row vector ``h`` adding ``h[dest] - h[src]`` to every jump.
    """

    def __init__(self, n_states, dest=(), src=(), values=(), potential=None):
        self.n = int(n_states)
        dest = np.asarray(dest, dtype=np.int64).ravel()
        src = np.asarray(src, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=float).ravel()
        if not (dest.shape == src.shape == values.shape):
            raise ShapeError("dest, src and values must have equal length")
        if dest.size and (dest.min() < 0 or src.min() < 0 or max(dest.max(), src.max()) >= self.n):
            raise ShapeError(f"configuration index out of range [0, {self.n})")
        if np.any(dest == src):
            w = int(src[np.argmax(dest == src)])
            raise ConstraintError(f"objective signal on the diagonal pair ({w}, {w}) is not allowed")
        keys = dest * self.n + src
        uniq, inv = np.unique(keys, return_inverse=True)
        vals = np.zeros(uniq.size)
        np.add.at(vals, inv, values)
        self.dest, self.src = np.divmod(uniq, self.n)
        self.values = vals
        if potential is not None:
            potential = np.asarray(potential, dtype=float)
            if potential.shape != (self.n,):
                raise ShapeError(f"potential has shape {potential.shape}, expected ({self.n},)")
            if not np.any(potential):
                potential = None
        self.potential = potential

    def __repr__(self):
        pot = "" if self.potential is None else ", with potential"
        return f"ObjectiveOperator(n={self.n}, nnz={self.values.size}{pot})"

    # -- queries ---------------------------------------------------------
    def entry(self, dest, src) -> float:
        """``Gamma |dest src>``."""
        if dest == src:
            return 0.0
        key = dest * self.n + src
        keys = self.dest * self.n + self.src
        i = np.searchsorted(keys, key)
        val = float(self.values[i]) if i < keys.size and keys[i] == key else 0.0
        if self.potential is not None:
            val += float(self.potential[dest] - self.potential[src])
        return val

    def dense(self) -> np.ndarray:
        """Full ``gamma[dest, src]`` table with zero diagonal."""
        M = np.zeros((self.n, self.n))
        M[self.dest, self.src] = self.values
        if self.potential is not None:
            M += self.potential[:, None] - self.potential[None, :]
        return M

    def row_vector(self) -> np.ndarray:
        """``Gamma`` as a length ``N*N`` row over the flattened lifted basis."""
        return self.dense().ravel()

    def flux_row(self, G) -> np.ndarray:
        """``Gamma G~`` as a row vector on ``H``: component ``w`` is the mean signal rate out of ``w``."""
        G = np.asarray(G, dtype=float)
        if G.shape != (self.n, self.n):
            raise ShapeError(f"generator of size {G.shape[0]} does not match objective of size {self.n}")
        r = np.zeros(self.n)
        np.add.at(r, self.src, self.values * G[self.dest, self.src])
        if self.potential is not None:
            # sum_w' (h_w' - h_w) G[w', w] = (h G)_w  since columns of G sum to zero
            r += self.potential @ G
        return r

    def apply_lifted(self, X) -> float:
        """``Gamma X`` for a lifted vector stored as ``X[dest, src]``."""
        X = np.asarray(X, dtype=float).reshape(self.n, self.n)
        val = math.fsum(self.values * X[self.dest, self.src])
        if self.potential is not None:
            val += float(self.potential @ (X.sum(axis=1) - X.sum(axis=0)))
        return val

    def entries(self):
        """Nonzero sparse signals as ``(dest, src, value)`` triples (potential excluded)."""
        return [(int(d), int(s), float(v)) for d, s, v in zip(self.dest, self.src, self.values) if v != 0.0]

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.dense() >= 0))

    # -- algebra ---------------------------------------------------------
    def scaled(self, c):
        pot = None if self.potential is None else c * self.potential
        return ObjectiveOperator(self.n, self.dest, self.src, c * self.values, pot)

    def __add__(self, other):
        if not isinstance(other, ObjectiveOperator) or other.n != self.n:
            return NotImplemented
        pot = _add_opt(self.potential, other.potential)
        return ObjectiveOperator(self.n, np.concatenate([self.dest, other.dest]),
                                 np.concatenate([self.src, other.src]),
                                 np.concatenate([self.values, other.values]), pot)

    def with_potential(self, h):
        """Return ``Gamma + Pot(h)``."""
        return ObjectiveOperator(self.n, self.dest, self.src, self.values, _add_opt(self.potential, np.asarray(h, float)))


def _add_opt(a, b):
    if a is None:
        return None if b is None else np.array(b, dtype=float)
    if b is None:
        return np.array(a, dtype=float)
    return a + b


def zero_objective(n_states) -> ObjectiveOperator:
    return ObjectiveOperator(n_states)


def build_objective(entries, n_states=None) -> ObjectiveOperator:
    """Build ``Gamma`` from ``(w', w, value)`` triples over flat configuration indices.

    ``n_states`` defaults to one more than the largest index mentioned.
    """
    entries = list(entries)
    for d, s, _ in entries:
        if d == s:
            raise ConstraintError(f"objective signal on the diagonal pair ({s}, {s}) is not allowed")
    if n_states is None:
        n_states = 1 + max((max(d, s) for d, s, _ in entries), default=0)
    if not entries:
        return ObjectiveOperator(n_states)
    d, s, v = zip(*entries)
    return ObjectiveOperator(n_states, d, s, v)


def objective_from_dense(M) -> ObjectiveOperator:
    M = np.asarray(M, dtype=float)
    off = M.copy()
    np.fill_diagonal(off, 0.0)
    d, s = np.nonzero(off)
    return ObjectiveOperator(M.shape[0], d, s, off[d, s])


def check_locality(topology: FieldTopology, node, gamma: ObjectiveOperator) -> bool:
    """True iff every nonzero signal belongs to a jump that changes ``U_x``."""
    u_of = topology.observed_region(node).index_of_state
    M = gamma.dense()
    d, s = np.nonzero(M)
    return bool(np.all(u_of[d] != u_of[s]))


def objective_value(gamma: ObjectiveOperator, G, phi0=None) -> float:
    """``gamma_bar = Gamma G~ phi_bar`` with ``phi_bar`` the long-run state from ``phi0``."""
    ch = as_chain(G)
    phi_bar = ch.stationary(phi0).stationary
    return float(gamma.flux_row(ch.G) @ phi_bar)


def signal_rate(gamma: ObjectiveOperator, G, phi) -> float:
    """Instantaneous expected signal rate ``Gamma G~ phi``."""
    return float(gamma.flux_row(G) @ np.asarray(phi, dtype=float))


def expected_signal_quadrature(gamma: ObjectiveOperator, G, start: int, T: float,
                               epsabs=1e-10, epsrel=1e-10) -> float:
    """``int_0^T Gamma G~ exp(G t) |start> dt`` by adaptive Gauss-Kronrod quadrature."""
    G = as_chain(G).G
    T = float(T)
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    if T == 0.0:
        return 0.0
    r = gamma.flux_row(G)
    e = np.zeros(G.shape[0])
    e[start] = 1.0

    def f(t):
        return float(r @ expm_apply(G, e, t))

    # split long horizons so the transient near t=0 is resolved
    edges = [0.0]
    while edges[-1] < T:
        edges.append(min(T, max(1.0, 2 * edges[-1])))
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = scipy.integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=200)
        total += val
    return total


def expected_signal_closed_form(gamma: ObjectiveOperator, G, start: int, T: float) -> float:
    """Same integral as :func:`expected_signal_quadrature` via ``T Phi + (1 - exp(G T)) D``."""
    from .dynamics import integrated_expm

    ch = as_chain(G)
    r = gamma.flux_row(ch.G)
    return float(r @ integrated_expm(ch, T)[:, start])


def require_nonnegative(gamma: ObjectiveOperator):
    if not gamma.is_nonnegative():
        raise PreconditionError("objective signals must be nonnegative here")
