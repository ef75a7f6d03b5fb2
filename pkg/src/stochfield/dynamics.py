"""Master-equation dynamics: evolution, stationary states, the limit
operator ``Phi = lim exp(G t)`` and the deviation operator ``S``.

A :class:`Chain` wraps a generator and caches the expensive derived
objects so repeated queries (gradients, propagation) reuse them.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .algebra import _check_square, expm_apply, is_delta, null_space_dim, solve_on_delta
from .exceptions import DomainError, UnsupportedError

STATIONARY_RESIDUAL_TOL = 1e-10


@dataclass
class StationaryReport:
    stationary: np.ndarray
    ergodic: bool
    null_dim: int
    residual: float

    def to_dict(self):
        return {
            "stationary": self.stationary.tolist(),
            "ergodic": self.ergodic,
            "null_dim": self.null_dim,
            "residual": self.residual,
        }


def _solve_irreducible(G):
    """Stationary vector of an irreducible generator block."""
    n = G.shape[0]
    if n == 1:
        return np.ones(1)
    A = G + np.full((n, n), 1.0 / n)
    pi = scipy.linalg.solve(A, np.full(n, 1.0 / n))
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


class Chain:
    """A generator together with lazily computed, cached derived operators.

    Caches are filled under a lock, so concurrent readers never observe a
    partially built value.
    """

    def __init__(self, G):
        self.G = _check_square(G).copy()
        self.G.setflags(write=False)
        self.n = self.G.shape[0]
        self._lock = threading.RLock()
        self._cache = {}

    def _cached(self, key, build):
        val = self._cache.get(key)
        if val is None:
            with self._lock:
                val = self._cache.get(key)
                if val is None:
                    val = build()
                    self._cache[key] = val
        return val

    # -- structure -------------------------------------------------------
    @property
    def null_dim(self) -> int:
        return self._cached("null_dim", lambda: null_space_dim(self.G))

    @property
    def ergodic(self) -> bool:
        return self.null_dim == 1

    def _classes(self):
        """Closed communicating classes and absorption probabilities into them."""
        def build():
            G = self.G
            n = self.n
            dest, src = np.nonzero((G > 0) & ~np.eye(n, dtype=bool))
            graph = csr_matrix((np.ones(dest.size), (src, dest)), shape=(n, n))
            k, labels = connected_components(graph, directed=True, connection="strong")
            leaves = np.ones(k, dtype=bool)
            leaves[np.unique(labels[src[labels[src] != labels[dest]]])] = False
            closed = [np.nonzero(labels == c)[0] for c in range(k) if leaves[c]]
            pis = [_solve_irreducible(G[np.ix_(c, c)]) for c in closed]
            in_closed = np.zeros(n, dtype=bool)
            for c in closed:
                in_closed[c] = True
            transient = np.nonzero(~in_closed)[0]
            absorb = np.zeros((len(closed), n))
            for j, c in enumerate(closed):
                absorb[j, c] = 1.0
            if transient.size:
                # backward equation on transient states: G_TT^T h_T = -G_cT^T 1
                A = G[np.ix_(transient, transient)].T
                B = np.stack([G[np.ix_(c, transient)].sum(axis=0) for c in closed], axis=1)
                H = scipy.linalg.solve(A, -B)
                absorb[:, transient] = H.T
            return closed, pis, absorb
        return self._cached("classes", build)

    # -- stationary states -------------------------------------------------
    @property
    def phi(self) -> np.ndarray:
        """``Phi``: column ``w`` is the long-run distribution started at ``w``."""
        def build():
            closed, pis, absorb = self._classes()
            P = np.zeros((self.n, self.n))
            for c, pi, a in zip(closed, pis, absorb):
                P[np.ix_(c, np.arange(self.n))] += np.outer(pi, a)
            P.setflags(write=False)
            return P
        return self._cached("phi", build)

    @property
    def stationary_vector(self) -> np.ndarray:
        """``phi_bar`` for an ergodic chain."""
        if not self.ergodic:
            raise UnsupportedError(f"chain is not ergodic (null space dimension {self.null_dim})")
        return self.phi[:, 0]

    def stationary(self, phi0=None) -> StationaryReport:
        if phi0 is None:
            phi0 = np.zeros(self.n)
            phi0[0] = 1.0
        phi0 = np.asarray(phi0, dtype=float)
        if phi0.shape != (self.n,):
            raise DomainError(f"initial state has shape {phi0.shape}, expected ({self.n},)")
        s = self.phi @ phi0
        s = s / s.sum()
        resid = float(np.max(np.abs(self.G @ s)))
        return StationaryReport(s, self.ergodic, self.null_dim, resid)

    # -- deviation ---------------------------------------------------------
    @property
    def deviation(self) -> np.ndarray:
        """``D = int_0^inf (exp(G t) - Phi) dt``; ``S`` is ``D`` restricted to sum-zero vectors."""
        def build():
            if not self.ergodic:
                raise UnsupportedError("the deviation operator requires an ergodic chain")
            Phi = self.phi
            D = scipy.linalg.inv(Phi - self.G) - Phi
            D.setflags(write=False)
            return D
        return self._cached("deviation", build)

    def apply_S(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if not self.ergodic:
            raise UnsupportedError(f"S is unbounded on a non-ergodic chain (null space dimension {self.null_dim})")
        if not is_delta(y, tol=1e-9):
            raise DomainError("S is only defined on sum-zero vectors")
        return solve_on_delta(self.G, y, check_rank=False)


def as_chain(G) -> Chain:
    return G if isinstance(G, Chain) else Chain(G)


def evolve(G, phi0, t) -> np.ndarray:
    """``exp(G t) phi0``."""
    G = G.G if isinstance(G, Chain) else G
    return expm_apply(G, phi0, t)


def stationary(G, phi0=None) -> StationaryReport:
    return as_chain(G).stationary(phi0)


def phi_operator(G) -> np.ndarray:
    return np.array(as_chain(G).phi)


def apply_S(G, y) -> np.ndarray:
    return as_chain(G).apply_S(y)


def averaged_state(G, phi0=None) -> np.ndarray:
    """Long-run time average of the state started at ``phi0``."""
    return as_chain(G).stationary(phi0).stationary


def time_averaged_state(G, phi0, T, epsabs=1e-13, epsrel=1e-12) -> np.ndarray:
    """``(1/T) int_0^T exp(G t) phi0 dt`` by adaptive vector quadrature."""
    G = as_chain(G).G
    phi0 = np.asarray(phi0, dtype=float)
    T = float(T)
    if T <= 0:
        raise DomainError("averaging horizon must be positive")
    edges = [0.0]
    while edges[-1] < T:
        edges.append(min(T, max(1.0, 2 * edges[-1])))
    acc = np.zeros_like(phi0)
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = scipy.integrate.quad_vec(lambda t: expm_apply(G, phi0, t), a, b, epsabs=epsabs, epsrel=epsrel)
        acc += val
    return acc / T


def integrated_expm(G, T) -> np.ndarray:
    """``int_0^T exp(G t) dt = T Phi + (1 - exp(G T)) D`` for ergodic ``G``."""
    ch = as_chain(G)
    return T * ch.phi + (np.eye(ch.n) - scipy.linalg.expm(ch.G * T)) @ ch.deviation
