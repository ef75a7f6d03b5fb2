"""Local generators, their embedding into the global space, and the lifted
operators that resolve dynamics at the level of individual jumps.

Elements of the lifted space ``H(Omega x Omega)`` are stored as ``(N, N)``
arrays ``X[dest, src]``; basis vector ``|w' w>`` has flat index
``w' * N + w``.  Lifted operators ``H -> H~`` are ``scipy.sparse`` matrices
of shape ``(N*N, N)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import ConstraintError, ShapeError, TopologyError
from .topology import FieldTopology

COLUMN_SUM_TOL = 1e-12


@dataclass
class LocalGeneratorTable:
    """Rates of one node: ``rates[o', u]`` from observed ``u`` to local ``o'``.

    The entry at ``o' == u|Omega_x`` is the (nonpositive) diagonal.
    """

    node: int
    rates: np.ndarray

    def copy(self):
        return LocalGeneratorTable(self.node, self.rates.copy())

    def off_diagonal_keys(self, topology):
        """All ``(o', u)`` pairs with ``o' != u|Omega_x``, in ``(o', u)`` order."""
        proj = local_projection(topology, self.node)
        n_loc, n_obs = self.rates.shape
        return [(o, u) for o in range(n_loc) for u in range(n_obs) if o != proj[u]]


def local_projection(topology: FieldTopology, node) -> np.ndarray:
    """For each ``u`` in ``U_x``, the index of ``u|Omega_x``."""
    i = topology.index(node)
    obs = topology.observed_region(i)
    loc = topology.local_region(i)
    positions = [obs.factors.index(f) for f in loc.factors]
    digits = obs.space.all_digits()[:, positions]
    return loc.space.encode_many(digits)


def _coerce_local(space, value):
    if isinstance(value, (int, np.integer)):
        if not 0 <= value < space.total:
            raise ShapeError(f"local index {value} out of range [0, {space.total})")
        return int(value)
    return space.encode(value)


def derive_diagonal(rates: np.ndarray, proj: np.ndarray) -> np.ndarray:
    """Overwrite the diagonal entries with the compensated negative column sum."""
    rates = rates.copy()
    for u in range(rates.shape[1]):
        rates[proj[u], u] = 0.0
        rates[proj[u], u] = -math.fsum(rates[:, u])
    return rates


def table_from_triples(topology: FieldTopology, node, triples) -> LocalGeneratorTable:
    """Build a table from ``(u, o', rate)`` triples; the diagonal is derived.

    ``u`` and ``o'`` are digit tuples in region order or flat local indices.
    Repeated keys are rejected.
    """
    i = topology.index(node)
    obs = topology.observed_region(i)
    loc = topology.local_region(i)
    proj = local_projection(topology, i)
    rates = np.zeros((loc.space.total, obs.space.total))
    seen = set()
    for u, o, rate in triples:
        ui = _coerce_local(obs.space, u)
        oi = _coerce_local(loc.space, o)
        if oi == proj[ui]:
            raise ConstraintError(f"node {topology.nodes[i].name!r}: diagonal rate for u={u} must not be supplied")
        if (ui, oi) in seen:
            raise ConstraintError(f"node {topology.nodes[i].name!r}: duplicate rate for u={u}, o'={o}")
        rate = float(rate)
        if not rate >= 0 or not math.isfinite(rate):
            raise ConstraintError(f"node {topology.nodes[i].name!r}: negative or non-finite rate {rate} at u={u}")
        seen.add((ui, oi))
        rates[oi, ui] = rate
    return LocalGeneratorTable(i, derive_diagonal(rates, proj))


def zero_table(topology: FieldTopology, node) -> LocalGeneratorTable:
    i = topology.index(node)
    return LocalGeneratorTable(i, np.zeros((len(topology.local_region(i)), len(topology.observed_region(i)))))


def validate_local(topology: FieldTopology, table: LocalGeneratorTable) -> None:
    """Raise ``ConstraintError`` naming the first offending ``u``."""
    i = table.node
    obs = topology.observed_region(i)
    loc = topology.local_region(i)
    if table.rates.shape != (loc.space.total, obs.space.total):
        raise ShapeError(f"table for {topology.nodes[i].name!r} has shape {table.rates.shape}, "
                         f"expected {(loc.space.total, obs.space.total)}")
    proj = local_projection(topology, i)
    for u in range(obs.space.total):
        col = table.rates[:, u]
        off = np.delete(col, proj[u])
        if np.any(off < 0) or not np.all(np.isfinite(col)):
            raise ConstraintError(f"node {topology.nodes[i].name!r}: negative off-diagonal rate at u={obs.space.decode(u)}")
        s = math.fsum(col)
        if abs(s) > COLUMN_SUM_TOL * max(1.0, float(off.sum())):
            raise ConstraintError(f"node {topology.nodes[i].name!r}: column sum {s:.3e} != 0 at u={obs.space.decode(u)}")


def validate_generator(G, tol=COLUMN_SUM_TOL) -> None:
    G = np.asarray(G, dtype=float)
    off = G - np.diag(np.diag(G))
    if np.any(off < 0):
        raise ConstraintError("generator has a negative off-diagonal rate")
    sums = G.sum(axis=0)
    if np.any(np.abs(sums) > tol * np.maximum(1.0, off.sum(axis=0))):
        raise ConstraintError(f"generator column sums deviate from zero by {np.max(np.abs(sums)):.3e}")


def embed_local(topology: FieldTopology, table: LocalGeneratorTable) -> np.ndarray:
    """Embed ``G(x): H(U_x) -> H(Omega_x)`` into ``B(H, H)``.

    Column ``w`` of the result moves only the ``Omega_x`` digits of ``w``,
    at rates read from ``table`` at ``u = w|U_x``.
    """
    i = table.node
    obs = topology.observed_region(i)
    loc = topology.local_region(i)
    if table.rates.shape != (len(loc), len(obs)):
        raise ShapeError(f"table/node mismatch for {topology.nodes[i].name!r}")
    N = topology.n_states
    states = np.arange(N)
    u_of = obs.index_of_state
    o_of = loc.index_of_state
    G = np.zeros((N, N))
    for o in range(len(loc)):
        dest = topology.replace_local(i, states, o)
        moving = dest != states
        G[dest[moving], states[moving]] = table.rates[o, u_of[moving]]
    G[states, states] = table.rates[o_of, u_of]
    return G


def assemble_system(topology: FieldTopology, tables) -> np.ndarray:
    """``G = sum_x G(x)`` with the diagonal re-derived by compensated summation.

    ``tables`` maps node names or indices to ``LocalGeneratorTable``.
    """
    by_index = {}
    for key, table in dict(tables).items():
        by_index[topology.index(key)] = table
    N = topology.n_states
    G = np.zeros((N, N))
    for i in range(len(topology.nodes)):
        if i not in by_index:
            raise TopologyError(f"missing local generator for node {topology.nodes[i].name!r}")
        if by_index[i].node != i:
            raise TopologyError(f"table for node {by_index[i].node} supplied under {topology.nodes[i].name!r}")
        G += embed_local(topology, by_index[i])
    diag = np.arange(N)
    G[diag, diag] = 0.0
    for w in range(N):
        G[w, w] = -math.fsum(G[:, w])
    return G


def commutator_norm(topology: FieldTopology, x, y, tables) -> float:
    """Max-abs entry of ``[G(x), G(y)]`` for the embedded generators."""
    tables = {topology.index(k): v for k, v in dict(tables).items()}
    i, j = topology.index(x), topology.index(y)
    if i == j:
        return 0.0
    A = embed_local(topology, tables[i])
    B = embed_local(topology, tables[j])
    return float(np.max(np.abs(A @ B - B @ A)))


# -- lifted space ---------------------------------------------------------

def lift(G) -> sp.csr_matrix:
    """``G~ |w> = sum_w' G[w', w] |w' w>`` as an ``(N*N, N)`` sparse matrix."""
    G = np.asarray(G, dtype=float)
    N = G.shape[0]
    dest, src = np.nonzero(G)
    return sp.csr_matrix((G[dest, src], (dest * N + src, src)), shape=(N * N, N))


def lift_apply(G, phi) -> np.ndarray:
    """``G~ phi`` as an ``(N, N)`` array; equals ``G * phi[None, :]``."""
    return np.asarray(G, dtype=float) * np.asarray(phi, dtype=float)[None, :]


def pi_matrix(N: int) -> sp.csr_matrix:
    """``Pi |w' w> = |w'> - |w>`` as an ``(N, N*N)`` sparse matrix."""
    dest, src = np.divmod(np.arange(N * N), N)
    off = dest != src
    cols = np.arange(N * N)[off]
    rows = np.concatenate([dest[off], src[off]])
    vals = np.concatenate([np.ones(off.sum()), -np.ones(off.sum())])
    return sp.csr_matrix((vals, (rows, np.concatenate([cols, cols]))), shape=(N, N * N))


def project_pi(v):
    """Apply ``Pi`` to a lifted vector ``(N, N)`` or a lifted operator ``(N*N, M)``."""
    if sp.issparse(v):
        N = int(round(math.sqrt(v.shape[0])))
        if N * N != v.shape[0]:
            raise ShapeError(f"lifted operator has {v.shape[0]} rows, not a square number")
        return np.asarray((pi_matrix(N) @ v).todense())
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        N = int(round(math.sqrt(v.size)))
        if N * N != v.size:
            raise ShapeError(f"lifted vector has {v.size} entries, not a square number")
        v = v.reshape(N, N)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ShapeError(f"lifted vector must be square, got shape {v.shape}")
    return v.sum(axis=1) - v.sum(axis=0)


def system_action_operator(N: int, source: int, dest: int) -> sp.csr_matrix:
    """``A~^w_{w'}``: maps ``|w>`` to ``|w' w>`` and every other basis vector to 0."""
    if not (0 <= source < N and 0 <= dest < N):
        raise ShapeError(f"configuration index out of range [0, {N})")
    return sp.csr_matrix(([1.0], ([dest * N + source], [source])), shape=(N * N, N))


def action_operator(topology: FieldTopology, node, u, o) -> sp.csr_matrix:
    """Field action operator ``A~(x)^u_{o'}``.

    Sends ``|w''>`` to ``|w+ w''>`` when ``w''`` agrees with ``u`` on
    ``U_x``, where ``w+`` is ``w''`` with its ``Omega_x`` digits set to ``o'``.
    """
    i = topology.index(node)
    obs = topology.observed_region(i)
    loc = topology.local_region(i)
    ui = _coerce_local(obs.space, u)
    oi = _coerce_local(loc.space, o)
    N = topology.n_states
    src = np.nonzero(obs.index_of_state == ui)[0]
    dest = topology.replace_local(i, src, oi)
    return sp.csr_matrix((np.ones(src.size), (dest * N + src, src)), shape=(N * N, N))


def action_pairs(topology: FieldTopology, node, u, o):
    """Global ``(dest, src)`` index arrays covered by ``A~(x)^u_{o'}``."""
    i = topology.index(node)
    src = np.nonzero(topology.observed_region(i).index_of_state == int(u))[0]
    return topology.replace_local(i, src, int(o)), src
