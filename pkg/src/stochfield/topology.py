"""Ground space of a field: a finite digraph of entities.

Each node ``x`` owns a private factor ``M(x)`` and one channel factor
``A(x, x')`` per outgoing edge.  The global configuration space is the
product of all factors, flattened in node order with every node's private
factor first, followed by its outgoing channels ordered by target node.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .algebra import MAX_STATES, IndexSpace
from .exceptions import InvalidSpaceError, TopologyError

ENVIRONMENTAL = "environmental"
ACTING = "acting"
NODE_KINDS = (ENVIRONMENTAL, ACTING)


@dataclass(frozen=True)
class Node:
    name: str
    private_size: int
    kind: str = ACTING


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    channel_size: int


@dataclass(frozen=True)
class Factor:
    """One digit of a global configuration."""

    owner: int  # index of the node that writes this digit
    size: int
    channel_to: int | None = None  # target node for channel factors

    @property
    def is_channel(self):
        return self.channel_to is not None


class Region:
    """Ordered subset of the global factors, kept in global order."""

    def __init__(self, topology, factors, name=""):
        self.topology = topology
        self.factors = tuple(sorted(factors))
        self.space = IndexSpace([topology.factors[f].size for f in self.factors])
        self.name = name

    def __len__(self):
        return self.space.total

    def __repr__(self):
        return f"Region({self.name or list(self.factors)}, size={self.space.total})"

    @cached_property
    def index_of_state(self) -> np.ndarray:
        """Local index of every global configuration's restriction."""
        digits = self.topology.omega.all_digits()[:, list(self.factors)]
        return self.space.encode_many(digits)


class FieldTopology:
    """Validated digraph with all derived configuration spaces.

    Parameters
    ----------
    nodes : list of Node
    edges : list of Edge
    max_states : int
        Cap on ``|Omega|``.
    """

    def __init__(self, nodes, edges, max_states=MAX_STATES):
        self.nodes = tuple(nodes)
        self.edges = tuple(edges)
        names = [n.name for n in self.nodes]
        if not names:
            raise TopologyError("a field needs at least one node")
        if len(set(names)) != len(names):
            raise TopologyError(f"duplicate node names in {names}")
        self._index = {n: i for i, n in enumerate(names)}
        for n in self.nodes:
            if not isinstance(n.private_size, int) or n.private_size < 1:
                raise InvalidSpaceError(f"node {n.name!r}: private_size must be a positive integer")
            if n.kind not in NODE_KINDS:
                raise TopologyError(f"node {n.name!r}: kind must be one of {NODE_KINDS}")
        seen = set()
        for e in self.edges:
            if e.source not in self._index or e.target not in self._index:
                raise TopologyError(f"edge {e.source}->{e.target} references an unknown node")
            if e.source == e.target:
                raise TopologyError(f"self-loop on {e.source!r} is not allowed")
            if (e.source, e.target) in seen:
                raise TopologyError(f"parallel edge {e.source}->{e.target}")
            if not isinstance(e.channel_size, int) or e.channel_size < 1:
                raise InvalidSpaceError(f"edge {e.source}->{e.target}: channel_size must be a positive integer")
            seen.add((e.source, e.target))

        self.out_edges = {i: [] for i in range(len(self.nodes))}
        self.in_edges = {i: [] for i in range(len(self.nodes))}
        for e in self.edges:
            s, t = self._index[e.source], self._index[e.target]
            self.out_edges[s].append((t, e.channel_size))
            self.in_edges[t].append((s, e.channel_size))

        factors = []
        self._node_factors = []
        self._channel_factor = {}
        for i, n in enumerate(self.nodes):
            own = [len(factors)]
            factors.append(Factor(i, n.private_size))
            for t, size in sorted(self.out_edges[i]):
                self._channel_factor[(i, t)] = len(factors)
                own.append(len(factors))
                factors.append(Factor(i, size, channel_to=t))
            self._node_factors.append(tuple(own))
        self.factors = tuple(factors)

        total = 1
        for f in factors:
            total *= f.size
        if total > max_states:
            raise InvalidSpaceError(f"|Omega| = {total} exceeds the configured cap of {max_states}")
        self.omega = IndexSpace([f.size for f in factors])
        self.full = Region(self, range(len(factors)), name="Omega")
        self._local = [Region(self, fs, name=f"Omega_{self.nodes[i].name}") for i, fs in enumerate(self._node_factors)]
        self._observed = []
        for i, fs in enumerate(self._node_factors):
            incoming = [self._channel_factor[(s, i)] for s, _ in self.in_edges[i]]
            self._observed.append(Region(self, tuple(fs) + tuple(incoming), name=f"U_{self.nodes[i].name}"))

    # -- lookups ---------------------------------------------------------
    @property
    def n_states(self) -> int:
        return self.omega.total

    @property
    def names(self):
        return [n.name for n in self.nodes]

    def index(self, node) -> int:
        if isinstance(node, (int, np.integer)):
            if not 0 <= node < len(self.nodes):
                raise TopologyError(f"node index {node} out of range")
            return int(node)
        try:
            return self._index[node]
        except KeyError:
            raise TopologyError(f"unknown node {node!r}") from None

    def kind(self, node) -> str:
        return self.nodes[self.index(node)].kind

    def acting(self):
        return [i for i, n in enumerate(self.nodes) if n.kind == ACTING]

    def environmental(self):
        return [i for i, n in enumerate(self.nodes) if n.kind == ENVIRONMENTAL]

    def local_region(self, node) -> Region:
        """``Omega_x``: what ``x`` can write."""
        return self._local[self.index(node)]

    def observed_region(self, node) -> Region:
        """``U_x``: what ``x`` can read."""
        return self._observed[self.index(node)]

    def quotient_region(self, node) -> Region:
        """``Omega / Omega_x``: everything ``x`` cannot write."""
        own = set(self._node_factors[self.index(node)])
        return Region(self, [f for f in range(len(self.factors)) if f not in own],
                      name=f"Omega/Omega_{self.nodes[self.index(node)].name}")

    def channel_factor(self, source, target) -> int:
        return self._channel_factor[(self.index(source), self.index(target))]

    def points_to(self, a, b) -> bool:
        """``a -> b``."""
        return (self.index(a), self.index(b)) in self._channel_factor

    def are_neighbors(self, a, b) -> bool:
        """``a ~ b``: an edge in either direction."""
        return self.points_to(a, b) or self.points_to(b, a)

    def non_neighbor_pairs(self):
        n = len(self.nodes)
        return [(a, b) for a in range(n) for b in range(a + 1, n) if not self.are_neighbors(a, b)]

    @cached_property
    def local_block(self):
        """Per node, ``(stride, size)`` of its contiguous digit block in the flat index."""
        out = []
        for fs in self._node_factors:
            first, last = fs[0], fs[-1]
            size = int(np.prod([self.factors[f].size for f in fs]))
            out.append((self.omega.strides[last], size, first, last))
        return out

    def replace_local(self, node, states, new_local):
        """Flat index of ``states`` with node's ``Omega_x`` digits replaced by ``new_local``."""
        i = self.index(node)
        stride, size, _, _ = self.local_block[i]
        states = np.asarray(states, dtype=np.int64)
        cur = (states // stride) % size
        return states + (np.asarray(new_local, dtype=np.int64) - cur) * stride


def build_topology(nodes, edges, max_states=MAX_STATES) -> FieldTopology:
    """Build a topology from tuples or dicts.

    ``nodes`` entries are ``(name, private_size[, kind])`` or dicts with the
    same keys; ``edges`` entries are ``(source, target, channel_size)``.
    """
    ns = []
    for n in nodes:
        if isinstance(n, Node):
            ns.append(n)
        elif isinstance(n, dict):
            ns.append(Node(n["name"], n["private_size"], n.get("kind", ACTING)))
        else:
            ns.append(Node(*n))
    es = []
    for e in edges:
        if isinstance(e, Edge):
            es.append(e)
        elif isinstance(e, dict):
            es.append(Edge(e["from"], e["to"], e["channel_size"]))
        else:
            es.append(Edge(*e))
    return FieldTopology(ns, es, max_states=max_states)


def _as_digits(topology, cfg):
    if isinstance(cfg, (int, np.integer)):
        return topology.omega.decode(cfg)
    digits = tuple(int(d) for d in cfg)
    topology.omega.encode(digits)  # range check
    return digits


def restrict(topology: FieldTopology, cfg, region: Region) -> tuple:
    """Digits of ``cfg`` on ``region``, in region order."""
    if region.topology is not topology:
        raise TopologyError("region belongs to a different topology")
    digits = _as_digits(topology, cfg)
    return tuple(digits[f] for f in region.factors)


def agree_on(topology: FieldTopology, cfg1, cfg2, region: Region) -> bool:
    return restrict(topology, cfg1, region) == restrict(topology, cfg2, region)


def is_strongly_connected(n_nodes, arcs) -> bool:
    """Strong connectivity of a digraph on ``range(n_nodes)`` given ``(u, v)`` arcs."""
    if n_nodes <= 1:
        return True
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    arcs = list(arcs)
    if not arcs:
        return False
    r = [a for a, _ in arcs]
    c = [b for _, b in arcs]
    A = coo_matrix((np.ones(len(arcs)), (r, c)), shape=(n_nodes, n_nodes))
    k, _ = connected_components(A, directed=True, connection="strong")
    return k == 1
