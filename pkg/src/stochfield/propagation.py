"""Objective propagation between entities.

Acting nodes build their (effective) objective operators from weighted,
propagator-transformed signals of their in-neighbors; environmental nodes
supply fixed boundary signals.  The fixed point

    Gamma_x = sum_x' Lambda[x' -> x] Gamma_x' P_x'x

is linear in the functionals and is solved exactly.

Propagators of the family ``P[Q] = 1 + G~ S Q Pi`` act on a functional by
right-composition; ``Gamma P[Q]`` equals ``Gamma`` plus the potential
``(Gamma G~) D Q``, which keeps effective operators in the compact
sparse-plus-potential form of :class:`ObjectiveOperator`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .algebra import basis_delta
from .dynamics import Chain, as_chain
from .exceptions import (ConstraintError, ShapeError, SingularSolveError, TopologyError,
                         UnsupportedError)
from .generators import lift, pi_matrix
from .gradient import GradientTable, grad_local
from .objective import ObjectiveOperator
from .topology import ACTING, ENVIRONMENTAL, FieldTopology, is_strongly_connected

IDENTITY = "identity"
PQ = "pq"
EXPLICIT = "explicit"
WEIGHT_TOL = 1e-12
DELTA_CLOSURE_TOL = 1e-10
FIXED_POINT_TOL = 1e-10
DENSE_ROUTE_LIMIT = 64


# -- Q operators --------------------------------------------------------------

def check_delta_closed(Q, tol=DELTA_CLOSURE_TOL) -> None:
    """Raise unless ``Q`` maps every basis vector of the sum-zero subspace to a sum-zero vector."""
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ShapeError(f"Q must be square, got shape {Q.shape}")
    img = Q @ basis_delta(Q.shape[0])
    worst = float(np.max(np.abs(img.sum(axis=0)), initial=0.0))
    if worst > tol * max(1.0, float(np.abs(Q).max(initial=0.0))):
        raise ConstraintError(f"Q does not preserve the sum-zero subspace (column-sum defect {worst:.3e})")


def compose_q(Q, Qp) -> np.ndarray:
    """Bilinear composition ``(Q, Q') = Q + Q' - Q Q'``."""
    Q = np.asarray(Q, dtype=float)
    Qp = np.asarray(Qp, dtype=float)
    if Q.shape != Qp.shape:
        raise ShapeError(f"cannot compose Q of shapes {Q.shape} and {Qp.shape}")
    return Q + Qp - Q @ Qp


# -- propagators --------------------------------------------------------------

@dataclass
class Propagator:
    """How a functional is transformed on its way along an acting edge.

    ``identity`` passes it unchanged, ``pq`` applies ``P[Q]`` for the
    current dynamics, ``explicit`` right-multiplies by a fixed
    ``(N*N, N*N)`` matrix over the lifted basis.
    """

    form: str = IDENTITY
    Q: np.ndarray | None = None
    table: np.ndarray | None = None
    source: int | None = None
    target: int | None = None

    def __post_init__(self):
        if self.form == PQ:
            if self.Q is None:
                raise ConstraintError("pq propagator needs a Q operator")
            self.Q = np.asarray(self.Q, dtype=float)
            check_delta_closed(self.Q)
        elif self.form == EXPLICIT:
            if self.table is None:
                raise ConstraintError("explicit propagator needs a table")
            self.table = np.asarray(self.table, dtype=float)
        elif self.form != IDENTITY:
            raise ConstraintError(f"unknown propagator form {self.form!r}")

    def effective_q(self, n):
        """``Q`` such that this propagator equals ``P[Q]`` (identity is ``P[0]``)."""
        if self.form == IDENTITY:
            return np.zeros((n, n))
        if self.form == PQ:
            return self.Q
        raise UnsupportedError("explicit propagators are not of the P[Q] family")

    def apply(self, gamma: ObjectiveOperator, G) -> ObjectiveOperator:
        """``Gamma P`` for the dynamics ``G``."""
        if self.form == IDENTITY:
            return gamma
        ch = as_chain(G)
        if self.form == PQ:
            w = gamma.flux_row(ch.G) @ ch.deviation @ self.Q
            return gamma.with_potential(w)
        row = gamma.row_vector() @ self.table
        M = row.reshape(gamma.n, gamma.n)
        from .objective import objective_from_dense
        return objective_from_dense(M - np.diag(np.diag(M)))

    def matrix(self, G) -> np.ndarray:
        """Dense ``(N*N, N*N)`` matrix of the propagator for the dynamics ``G``."""
        ch = as_chain(G)
        n = ch.n
        if self.form == EXPLICIT:
            return self.table
        return pq_matrix(ch, self.effective_q(n))


def make_pq(G, Q) -> Propagator:
    """``P[Q]``; ``Q`` must be closed on the sum-zero subspace and ``G`` ergodic."""
    ch = as_chain(G)
    if not ch.ergodic:
        raise UnsupportedError("P[Q] requires an ergodic chain")
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (ch.n, ch.n):
        raise ShapeError(f"Q has shape {Q.shape}, expected {(ch.n, ch.n)}")
    return Propagator(PQ, Q=Q)


def pq_matrix(G, Q) -> np.ndarray:
    """``P[Q] = 1 + G~ S Q Pi`` as a dense matrix on the flattened lifted space."""
    ch = as_chain(G)
    n = ch.n
    if n > DENSE_ROUTE_LIMIT:
        raise UnsupportedError(f"dense lifted operators are limited to |Omega| <= {DENSE_ROUTE_LIMIT}")
    L = lift(ch.G).toarray()
    Pi = pi_matrix(n).toarray()
    return np.eye(n * n) + L @ (ch.deviation @ np.asarray(Q, dtype=float) @ Pi)


def p_matrix(G) -> np.ndarray:
    """``P = P[1] = 1 + G~ S Pi``."""
    return pq_matrix(G, np.eye(as_chain(G).n))


def check_explicit_locality(topology: FieldTopology, prop: Propagator) -> bool:
    """True iff the explicit table annihilates every pair that leaves ``U_source`` unchanged."""
    u_of = topology.observed_region(prop.source).index_of_state
    n = topology.n_states
    dest, src = np.divmod(np.arange(n * n), n)
    silent = u_of[dest] == u_of[src]
    # P |w' w> is column (w' w) of the table
    return bool(not np.any(prop.table[:, silent]))


# -- network ---------------------------------------------------------------------

@dataclass
class AdjacencyWeights:
    """``Lambda[(source, target)]``: weight with which ``target`` listens to ``source``."""

    weights: dict

    def get(self, source, target) -> float:
        return float(self.weights.get((source, target), 0.0))

    def incoming(self, target):
        return {s: w for (s, t), w in self.weights.items() if t == target}


@dataclass
class PropagationNetwork:
    topology: FieldTopology
    weights: AdjacencyWeights
    env_signals: dict  # (env source, acting target) -> ObjectiveOperator
    propagators: dict  # (acting source, acting target) -> Propagator
    strongly_connected: bool = False
    notes: list = field(default_factory=list)

    @property
    def acting(self):
        return self.topology.acting()

    def all_pq(self) -> bool:
        return all(p.form in (IDENTITY, PQ) for p in self.propagators.values())


def build_network(topology: FieldTopology, weights, env_signals=None, propagators=None) -> PropagationNetwork:
    """Validate and assemble a propagation network.

    ``weights`` maps ``(source, target)`` node keys (names or indices) to
    ``Lambda``.  Every acting node's incoming weights must sum to one, and
    every positively weighted edge needs a signal (environmental source)
    or a propagator (acting source; identity if omitted).
    """
    T = topology
    W = {}
    for (s, t), w in dict(weights).items():
        si, ti = T.index(s), T.index(t)
        w = float(w)
        if not 0.0 <= w <= 1.0:
            raise ConstraintError(f"weight {w} on {T.nodes[si].name}->{T.nodes[ti].name} must lie in [0, 1]")
        if w != 0.0 and not T.points_to(si, ti):
            raise TopologyError(f"weight on {T.nodes[si].name}->{T.nodes[ti].name}, which is not an edge")
        W[(si, ti)] = w
    weights = AdjacencyWeights(W)
    for x in T.acting():
        total = sum(weights.incoming(x).values())
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ConstraintError(f"incoming weights of acting node {T.nodes[x].name!r} sum to {total:g}, not 1")

    signals = {}
    for (s, t), g in dict(env_signals or {}).items():
        si, ti = T.index(s), T.index(t)
        if T.kind(si) != ENVIRONMENTAL:
            raise TopologyError(f"signal source {T.nodes[si].name!r} is not environmental")
        if not T.points_to(si, ti):
            raise TopologyError(f"signal on {T.nodes[si].name}->{T.nodes[ti].name}, which is not an edge")
        if g.n != T.n_states:
            raise ShapeError("signal size does not match the configuration space")
        signals[(si, ti)] = g

    props = {}
    for (s, t), p in dict(propagators or {}).items():
        si, ti = T.index(s), T.index(t)
        if T.kind(si) == ENVIRONMENTAL:
            raise TopologyError(f"environmental node {T.nodes[si].name!r} cannot carry a propagator")
        if T.kind(ti) != ACTING:
            raise TopologyError(f"propagator target {T.nodes[ti].name!r} is not acting")
        if not T.points_to(si, ti):
            raise TopologyError(f"propagator on {T.nodes[si].name}->{T.nodes[ti].name}, which is not an edge")
        p.source, p.target = si, ti
        if p.form == EXPLICIT:
            n2 = T.n_states ** 2
            if p.table.shape != (n2, n2):
                raise ShapeError(f"explicit propagator table must be {(n2, n2)}")
            if not check_explicit_locality(T, p):
                raise ConstraintError(f"explicit propagator {T.nodes[si].name}->{T.nodes[ti].name} "
                                      f"is not local to its source")
        elif p.form == PQ and p.Q.shape != (T.n_states, T.n_states):
            raise ShapeError("Q size does not match the configuration space")
        props[(si, ti)] = p

    for (s, t), w in W.items():
        if w == 0.0:
            continue
        if T.kind(s) == ENVIRONMENTAL and (s, t) not in signals:
            raise ConstraintError(f"weighted edge {T.nodes[s].name}->{T.nodes[t].name} has no environmental signal")
        if T.kind(s) == ACTING and (s, t) not in props:
            props[(s, t)] = Propagator(IDENTITY, source=s, target=t)

    acting = T.acting()
    pos = {x: k for k, x in enumerate(acting)}
    arcs = [(pos[s], pos[t]) for (s, t) in props if s in pos and t in pos]
    strong = is_strongly_connected(len(acting), arcs) if acting else True
    net = PropagationNetwork(T, weights, signals, props, strong)
    if acting and not any(w > 0 for (s, t), w in W.items() if T.kind(s) == ENVIRONMENTAL):
        net.notes.append("no positive environmental weight; the propagation system may be singular")
    return net


@dataclass
class PropagationSolution:
    objectives: dict  # acting node index -> ObjectiveOperator
    residual: float
    route: str
    theta: np.ndarray | None = None


def theta_matrix(network: PropagationNetwork) -> np.ndarray:
    """``Theta[i, j] = delta_ij - Lambda[x_j -> x_i]`` over acting nodes."""
    acting = network.acting
    n = len(acting)
    Th = np.eye(n)
    for a, xi in enumerate(acting):
        for b, xj in enumerate(acting):
            Th[a, b] -= network.weights.get(xj, xi)
    return Th


def _solve_structured(network: PropagationNetwork, ch: Chain) -> PropagationSolution:
    """Exact fixed point in the sparse-plus-potential representation."""
    acting = network.acting
    pos = {x: k for k, x in enumerate(acting)}
    n_a = len(acting)
    N = ch.n
    env_keys = sorted(network.env_signals)
    n_e = len(env_keys)

    # coefficients of the environmental signals: Theta beta = env weights
    Th = theta_matrix(network)
    Benv = np.zeros((n_a, n_e))
    for k, (s, t) in enumerate(env_keys):
        if t in pos:
            Benv[pos[t], k] = network.weights.get(s, t)
    try:
        beta = np.linalg.solve(Th, Benv) if n_a else np.zeros((0, n_e))
    except np.linalg.LinAlgError:
        raise SingularSolveError("propagation matrix Theta is singular; acting nodes need a path to "
                                 f"some environmental signal (det Theta = {np.linalg.det(Th):.3e})") from None
    if n_a and np.linalg.cond(Th) > 1e12:
        raise SingularSolveError(f"propagation matrix Theta is numerically singular (cond {np.linalg.cond(Th):.3e})")

    if any(network.propagators[k].form == PQ for k in network.propagators):
        D = ch.deviation
        Phi = ch.phi
    f_rows = np.stack([network.env_signals[k].flux_row(ch.G) for k in env_keys]) if n_e else np.zeros((0, N))
    sparse_rows = beta @ f_rows  # (n_a, N): sparse part of Gamma_i G~

    # potentials: h_i - sum_j L_ji h_j M_ji = sum_j L_ji (beta_j f) D Q_ji, M = 1 - Q + Phi Q
    A = np.eye(n_a * N)
    rhs = np.zeros(n_a * N)
    for (s, t), p in network.propagators.items():
        lam = network.weights.get(s, t)
        if lam == 0.0 or s not in pos or t not in pos:
            continue
        i, j = pos[t], pos[s]
        if p.form == IDENTITY:
            M = np.eye(N)
        else:
            M = np.eye(N) - p.Q + Phi @ p.Q
            rhs[i * N:(i + 1) * N] += lam * (sparse_rows[j] @ D @ p.Q)
        # row-vector equation h_i = ... + lam h_j M  ->  column form uses M^T
        A[i * N:(i + 1) * N, j * N:(j + 1) * N] -= lam * M.T
    if n_a and np.any(rhs):
        try:
            lu = scipy.linalg.lu_factor(A)
            h = scipy.linalg.lu_solve(lu, rhs)
        except (np.linalg.LinAlgError, ValueError):
            raise SingularSolveError("potential block of the propagation system is singular") from None
        if not np.all(np.isfinite(h)):
            raise SingularSolveError("potential block of the propagation system is singular")
    else:
        h = np.zeros(n_a * N)

    objectives = {}
    for x in acting:
        i = pos[x]
        g = ObjectiveOperator(N)
        for k, key in enumerate(env_keys):
            if beta[i, k] != 0.0:
                g = g + network.env_signals[key].scaled(beta[i, k])
        objectives[x] = g.with_potential(h[i * N:(i + 1) * N])
    return PropagationSolution(objectives, 0.0, "structured", Th)


def _solve_dense(network: PropagationNetwork, ch: Chain) -> PropagationSolution:
    """Fixed point over full ``N*N`` row vectors; handles explicit propagators."""
    from .objective import objective_from_dense

    acting = network.acting
    pos = {x: k for k, x in enumerate(acting)}
    n_a = len(acting)
    N = ch.n
    if N > DENSE_ROUTE_LIMIT:
        raise UnsupportedError(f"dense propagation route is limited to |Omega| <= {DENSE_ROUTE_LIMIT}")
    m = N * N
    b = np.zeros((n_a, m))
    for (s, t), g in network.env_signals.items():
        if t in pos:
            b[pos[t]] += network.weights.get(s, t) * g.row_vector()
    A = np.eye(n_a * m)
    for (s, t), p in network.propagators.items():
        lam = network.weights.get(s, t)
        if lam == 0.0 or s not in pos or t not in pos:
            continue
        i, j = pos[t], pos[s]
        # row-vector equation gamma_i = b_i + lam gamma_j P  ->  column form uses P^T
        A[i * m:(i + 1) * m, j * m:(j + 1) * m] -= lam * p.matrix(ch).T
    try:
        sol = scipy.linalg.solve(A, b.ravel())
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
        raise SingularSolveError("dense propagation system is singular") from None
    objectives = {}
    for x in acting:
        row = sol[pos[x] * m:(pos[x] + 1) * m].reshape(N, N)
        objectives[x] = objective_from_dense(row - np.diag(np.diag(row)))
    return PropagationSolution(objectives, 0.0, "dense", theta_matrix(network))


def fixed_point_residual(network: PropagationNetwork, G, objectives) -> float:
    """Max-abs violation of the propagation equation, evaluated on every jump."""
    ch = as_chain(G)
    worst = 0.0
    for x in network.acting:
        rhs = np.zeros((ch.n, ch.n))
        for (s, t), g in network.env_signals.items():
            if t == x:
                rhs += network.weights.get(s, t) * g.dense()
        for (s, t), p in network.propagators.items():
            if t == x and network.weights.get(s, t) != 0.0:
                rhs += network.weights.get(s, t) * p.apply(objectives[s], ch).dense()
        worst = max(worst, float(np.max(np.abs(objectives[x].dense() - rhs), initial=0.0)))
    return worst


def solve_effective_objectives(network: PropagationNetwork, G, route="auto", check_residual=True) -> PropagationSolution:
    """Effective objective operator ``Gamma_x`` for every acting node.

    ``route`` is ``"structured"`` (``P[Q]`` family only), ``"dense"`` (any
    propagator, small spaces) or ``"auto"``.
    """
    ch = as_chain(G)
    if ch.n != network.topology.n_states:
        raise ShapeError("generator does not match the network topology")
    if route == "auto":
        route = "structured" if network.all_pq() else "dense"
    if route == "structured":
        if not network.all_pq():
            raise UnsupportedError("structured route needs identity or P[Q] propagators")
        sol = _solve_structured(network, ch)
    elif route == "dense":
        sol = _solve_dense(network, ch)
    else:
        raise ValueError(f"unknown route {route!r}")
    if check_residual:
        sol.residual = fixed_point_residual(network, ch, sol.objectives)
        scale = max([1.0] + [float(np.abs(g.dense()).max(initial=0.0))
                             for g in list(network.env_signals.values()) + list(sol.objectives.values())])
        if sol.residual > FIXED_POINT_TOL * scale:
            raise SingularSolveError(f"propagation fixed point residual {sol.residual:.3e} exceeds tolerance")
    return sol


@dataclass
class UniformValueReport:
    values: dict  # acting node -> gamma_bar(x)
    env_values: dict  # (env, acting) -> Gamma_x'x G~ phi_bar
    spread: float

    def to_dict(self, topology=None):
        name = (lambda i: topology.nodes[i].name) if topology else str
        return {
            "values": {name(k): v for k, v in self.values.items()},
            "env_values": {f"{name(s)}->{name(t)}": v for (s, t), v in self.env_values.items()},
            "spread": self.spread,
        }


def check_uniform_value(network: PropagationNetwork, G, solution: PropagationSolution | None = None) -> UniformValueReport:
    """Objective value of every acting node and their spread (including environmental values)."""
    ch = as_chain(G)
    if not network.acting:
        return UniformValueReport({}, {}, 0.0)
    if solution is None:
        solution = solve_effective_objectives(network, ch)
    phi = ch.stationary_vector
    vals = {x: float(g.flux_row(ch.G) @ phi) for x, g in solution.objectives.items()}
    env = {k: float(g.flux_row(ch.G) @ phi) for k, g in network.env_signals.items()}
    allv = list(vals.values()) + list(env.values())
    return UniformValueReport(vals, env, float(max(allv) - min(allv)))


def propagated_local_gradient(network: PropagationNetwork, tables, node, G=None) -> GradientTable:
    """Local gradient of ``gamma_bar(x)`` with the effective ``Gamma_x`` held fixed.

    With ``P[Q]`` propagators the variation of ``Gamma_x`` does not change
    the value to first order, so this is the full gradient.
    """
    from .generators import assemble_system

    if not network.all_pq():
        raise UnsupportedError("local gradients under propagation need identity or P[Q] propagators")
    if not network.strongly_connected:
        raise UnsupportedError("acting nodes must be strongly connected")
    T = network.topology
    i = T.index(node)
    if T.kind(i) != ACTING:
        raise TopologyError(f"node {T.nodes[i].name!r} is not acting")
    ch = as_chain(G if G is not None else assemble_system(T, tables))
    sol = solve_effective_objectives(network, ch)
    return grad_local(sol.objectives[i], T, tables, i, G=ch)


def propagated_value(network: PropagationNetwork, G, node) -> float:
    """``gamma_bar(x) = Gamma_x G~ phi_bar`` after re-solving the propagation."""
    ch = as_chain(G)
    sol = solve_effective_objectives(network, ch)
    x = network.topology.index(node)
    return float(sol.objectives[x].flux_row(ch.G) @ ch.stationary_vector)


def apply_lifted_operator(P, X) -> np.ndarray:
    """``P X`` for a dense lifted operator on a lifted vector ``X[dest, src]``."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    return (P @ X.ravel()).reshape(n, n)


def lifted_stationary_flux(G) -> np.ndarray:
    """``G~ phi_bar`` as a lifted vector."""
    ch = as_chain(G)
    return ch.G * ch.stationary_vector[None, :]

