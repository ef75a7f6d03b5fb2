"""Random and canonical test instances: generators, fields, objectives and
propagation networks.  Everything is driven by an explicit
``numpy.random.Generator`` so instances are reproducible from a seed."""

from __future__ import annotations

import numpy as np

from .generators import LocalGeneratorTable, assemble_system, derive_diagonal, local_projection
from .objective import ObjectiveOperator, build_objective
from .propagation import Propagator, build_network
from .topology import ACTING, ENVIRONMENTAL, build_topology


def two_state_generator(a=1.0, b=2.0) -> np.ndarray:
    """Rate ``a`` for 0 -> 1 and ``b`` for 1 -> 0."""
    return np.array([[-a, b], [a, -b]], dtype=float)


def two_state_signal() -> ObjectiveOperator:
    """Unit signal on the jump 0 -> 1."""
    return build_objective([(1, 0, 1.0)], n_states=2)


def random_generator(rng, n, low=0.2, high=2.0, density=1.0) -> np.ndarray:
    """Random generator; the cycle ``0 -> 1 -> ... -> 0`` is always present so it is ergodic."""
    R = rng.uniform(low, high, size=(n, n))
    if density < 1.0:
        R *= rng.random((n, n)) < density
        for w in range(n):
            R[(w + 1) % n, w] = max(R[(w + 1) % n, w], low)
    np.fill_diagonal(R, 0.0)
    return R - np.diag(R.sum(axis=0))


def constant_frequency_generator(rng, n, K=1.0) -> np.ndarray:
    """Random generator with every exit rate equal to ``K``."""
    R = rng.uniform(0.1, 1.0, size=(n, n))
    np.fill_diagonal(R, 0.0)
    R *= K / R.sum(axis=0)[None, :]
    return R - np.diag(R.sum(axis=0))


def cycle_generator(n, K=1.0) -> np.ndarray:
    """Deterministic cycle ``w -> w+1`` at rate ``K``."""
    G = -K * np.eye(n)
    for w in range(n):
        G[(w + 1) % n, w] += K
    return G


def random_local_tables(rng, topology, low=0.2, high=2.0, density=1.0):
    tables = {}
    for i in range(len(topology.nodes)):
        n_loc = len(topology.local_region(i))
        n_obs = len(topology.observed_region(i))
        rates = rng.uniform(low, high, size=(n_loc, n_obs))
        if density < 1.0:
            rates *= rng.random(rates.shape) < density
        tables[i] = LocalGeneratorTable(i, derive_diagonal(rates, local_projection(topology, i)))
    return tables


def random_topology(rng, n_nodes, max_states=256, private=(1, 2, 3), channels=(1, 2), edge_prob=0.5, kinds=None):
    """Random digraph on ``n_nodes`` nodes with ``|Omega| <= max_states`` (resampled until it fits)."""
    for _ in range(1000):
        sizes = [int(rng.choice(private)) for _ in range(n_nodes)]
        edges = []
        for a in range(n_nodes):
            for b in range(n_nodes):
                if a != b and rng.random() < edge_prob:
                    edges.append((f"x{a}", f"x{b}", int(rng.choice(channels))))
        total = int(np.prod(sizes)) * int(np.prod([c for _, _, c in edges] or [1]))
        if 2 <= total <= max_states:
            ks = kinds or [ACTING] * n_nodes
            nodes = [(f"x{i}", sizes[i], ks[i]) for i in range(n_nodes)]
            return build_topology(nodes, edges, max_states=max_states)
    raise RuntimeError("could not draw a topology within the state cap")


def random_field(rng, n_nodes=None, max_states=256):
    """Topology plus dense random local generators."""
    if n_nodes is None:
        n_nodes = int(rng.integers(2, 5))
    T = random_topology(rng, n_nodes, max_states=max_states)
    return T, random_local_tables(rng, T)


def jump_pairs(topology):
    """All ``(w', w)`` pairs that a single node can realize in one jump."""
    N = topology.n_states
    states = np.arange(N)
    out = set()
    for i in range(len(topology.nodes)):
        for o in range(len(topology.local_region(i))):
            dest = topology.replace_local(i, states, o)
            for d, s in zip(dest.tolist(), states.tolist()):
                if d != s:
                    out.add((d, s))
    return sorted(out)


def random_objective(rng, n, pairs=None, density=0.5, low=-1.0, high=1.0) -> ObjectiveOperator:
    """Random sparse signals on ``pairs`` (default: every off-diagonal pair)."""
    if pairs is None:
        pairs = [(d, s) for d in range(n) for s in range(n) if d != s]
    entries = [(d, s, float(rng.uniform(low, high))) for d, s in pairs if rng.random() < density]
    if not entries:
        d, s = pairs[int(rng.integers(len(pairs)))]
        entries = [(d, s, 1.0)]
    return build_objective(entries, n_states=n)


def random_delta_closed(rng, n, scale=0.5) -> np.ndarray:
    """Random ``Q`` with constant column sums, hence closed on the sum-zero subspace."""
    A = rng.normal(scale=scale, size=(n, n))
    c = float(rng.uniform(-1.0, 1.0))
    return A - (A.sum(axis=0, keepdims=True) - c) / n


def random_network(rng, n_acting=2, max_states=16, pq=True, q_scale=0.5):
    """Environmental node ``e`` feeding a strongly connected ring of acting nodes.

    Returns ``(topology, tables, network)``.  All environmental edges carry
    the same signal, which lives on jumps of the environment and of the
    acting nodes alike.
    """
    for _ in range(1000):
        names = ["e"] + [f"a{k}" for k in range(n_acting)]
        priv = [2] + [2] * n_acting
        edges = []
        targets = [f"a{k}" for k in range(n_acting) if k == 0 or rng.random() < 0.5]
        for t in targets:
            edges.append(("e", t, 1))
        for k in range(n_acting):
            nxt = (k + 1) % n_acting
            if n_acting > 1:
                edges.append((f"a{k}", f"a{nxt}", int(rng.choice([1, 2]))))
                if n_acting > 2 and rng.random() < 0.5:
                    edges.append((f"a{nxt}", f"a{k}", int(rng.choice([1, 2]))))
            if rng.random() < 0.5:
                edges.append((f"a{k}", "e", 1))
        edges = list({(a, b): (a, b, c) for a, b, c in edges}.values())
        total = int(np.prod(priv)) * int(np.prod([c for _, _, c in edges]))
        if total <= max_states:
            break
    else:
        raise RuntimeError("could not draw a network within the state cap")
    kinds = [ENVIRONMENTAL] + [ACTING] * n_acting
    T = build_topology([(n, p, k) for n, p, k in zip(names, priv, kinds)], edges, max_states=max_states)
    tables = random_local_tables(rng, T)
    gamma = random_objective(rng, T.n_states, pairs=jump_pairs(T), density=0.4)
    weights, signals, props = {}, {}, {}
    for x in T.acting():
        inc = [s for s, _ in T.in_edges[x]]
        w = rng.dirichlet(np.ones(len(inc)))
        for s, wt in zip(inc, w):
            weights[(s, x)] = float(wt)
            if T.kind(s) == ENVIRONMENTAL:
                signals[(s, x)] = gamma
            else:
                Q = random_delta_closed(rng, T.n_states, q_scale) if pq else None
                props[(s, x)] = Propagator("pq", Q=Q) if pq else Propagator("identity")
    # normalize weights exactly
    for x in T.acting():
        inc = [k for k in weights if k[1] == x]
        tot = sum(weights[k] for k in inc)
        for k in inc:
            weights[k] /= tot
    net = build_network(T, weights, signals, props)
    return T, tables, net


def system_of(topology, tables) -> np.ndarray:
    return assemble_system(topology, tables)
