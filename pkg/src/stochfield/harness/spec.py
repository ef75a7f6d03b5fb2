"""Field-spec files: a strict JSON schema for topologies, local generators,
objective signals and propagators.

Configurations inside a spec are written as digit lists: ``from_u`` in the
factor order of ``U_x``, ``to_omega`` in that of ``Omega_x``, and
``omega_from`` / ``omega_to`` over all of ``Omega``.  Factor order is node
order, each node's private factor first, then its outgoing channels by
target node; ``U_x`` interleaves incoming channels at their global position.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..algebra import MAX_STATES
from ..exceptions import FieldError, SpecError, SpecParseError
from ..generators import LocalGeneratorTable, assemble_system, table_from_triples, zero_table
from ..objective import ObjectiveOperator, build_objective
from ..propagation import PropagationNetwork, Propagator, build_network
from ..topology import ACTING, NODE_KINDS, FieldTopology, build_topology

SPEC_VERSION = 1
TOP_KEYS = {"version", "nodes", "edges", "local_generators", "objectives", "seed", "caps"}
TOP_REQUIRED = {"version", "nodes", "edges", "local_generators"}


@dataclass
class FieldSpec:
    version: int
    nodes: list
    edges: list
    local_generators: dict
    objectives: dict | None = None
    seed: int = 0
    caps: dict = field(default_factory=dict)
    # built objects
    topology: FieldTopology | None = field(default=None, repr=False, compare=False)
    tables: dict | None = field(default=None, repr=False, compare=False)
    network: PropagationNetwork | None = field(default=None, repr=False, compare=False)
    signal: ObjectiveOperator | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        out = {
            "version": self.version,
            "nodes": self.nodes,
            "edges": self.edges,
            "local_generators": self.local_generators,
        }
        if self.objectives is not None:
            out["objectives"] = self.objectives
        out["seed"] = self.seed
        if self.caps:
            out["caps"] = self.caps
        return json.loads(json.dumps(out))

    def generator(self) -> np.ndarray:
        return assemble_system(self.topology, self.tables)


def _err(msg, path):
    return SpecError(msg, path=path or "/")


def _keys(obj, allowed, required, path):
    if not isinstance(obj, dict):
        raise _err("expected an object", path)
    extra = set(obj) - set(allowed)
    if extra:
        raise _err(f"unknown key(s) {sorted(extra)}", path)
    missing = set(required) - set(obj)
    if missing:
        raise _err(f"missing key(s) {sorted(missing)}", path)


def _int(v, path, low=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise _err("expected an integer", path)
    if low is not None and v < low:
        raise _err(f"must be >= {low}", path)
    return v


def _num(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise _err("expected a number", path)
    return float(v)


def _digits(v, space, path):
    if not isinstance(v, list) or not all(isinstance(d, int) and not isinstance(d, bool) for d in v):
        raise _err("expected a list of integer digits", path)
    try:
        return space.encode(v)
    except FieldError as exc:
        raise _err(exc.message, path) from None


def _list(v, path):
    if not isinstance(v, list):
        raise _err("expected a list", path)
    return v


def parse_spec(doc) -> FieldSpec:
    """Validate a decoded spec document and build all runtime objects."""
    _keys(doc, TOP_KEYS, TOP_REQUIRED, "")
    if doc["version"] != SPEC_VERSION:
        raise _err(f"unsupported version {doc['version']!r}; expected {SPEC_VERSION}", "/version")
    caps = doc.get("caps", {})
    _keys(caps, {"max_states"}, set(), "/caps")
    max_states = _int(caps.get("max_states", MAX_STATES), "/caps/max_states", 1)
    seed = _int(doc.get("seed", 0), "/seed", 0)
    if seed >= 2 ** 64:
        raise _err("seed must fit in 64 bits", "/seed")

    nodes = []
    for k, n in enumerate(_list(doc["nodes"], "/nodes")):
        p = f"/nodes/{k}"
        _keys(n, {"name", "private_size", "kind"}, {"name", "private_size"}, p)
        if not isinstance(n["name"], str) or not n["name"]:
            raise _err("node name must be a nonempty string", p + "/name")
        _int(n["private_size"], p + "/private_size", 1)
        kind = n.get("kind", ACTING)
        if kind not in NODE_KINDS:
            raise _err(f"kind must be one of {list(NODE_KINDS)}", p + "/kind")
        nodes.append({"name": n["name"], "private_size": n["private_size"], "kind": kind})
    names = [n["name"] for n in nodes]
    if len(set(names)) != len(names):
        raise _err("duplicate node names", "/nodes")

    edges = []
    for k, e in enumerate(_list(doc["edges"], "/edges")):
        p = f"/edges/{k}"
        _keys(e, {"from", "to", "channel_size", "weight"}, {"from", "to", "channel_size"}, p)
        for end in ("from", "to"):
            if e[end] not in names:
                raise _err(f"unknown node {e[end]!r}", f"{p}/{end}")
        _int(e["channel_size"], p + "/channel_size", 1)
        item = {"from": e["from"], "to": e["to"], "channel_size": e["channel_size"]}
        if "weight" in e:
            item["weight"] = _num(e["weight"], p + "/weight")
        edges.append(item)

    try:
        topo = build_topology(nodes, edges, max_states=max_states)
    except FieldError as exc:
        raise _err(exc.message, "/edges" if "edge" in exc.message or "loop" in exc.message else "/nodes") from None

    lg = doc["local_generators"]
    _keys(lg, names, set(), "/local_generators")
    tables = {}
    norm_lg = {}
    for name in names:
        entries = lg.get(name, [])
        p = f"/local_generators/{name}"
        i = topo.index(name)
        obs = topo.observed_region(i).space
        loc = topo.local_region(i).space
        triples = []
        norm = []
        for k, ent in enumerate(_list(entries, p)):
            q = f"{p}/{k}"
            _keys(ent, {"from_u", "to_omega", "rate"}, {"from_u", "to_omega", "rate"}, q)
            u = _digits(ent["from_u"], obs, q + "/from_u")
            o = _digits(ent["to_omega"], loc, q + "/to_omega")
            r = _num(ent["rate"], q + "/rate")
            triples.append((u, o, r))
            norm.append({"from_u": list(ent["from_u"]), "to_omega": list(ent["to_omega"]), "rate": r})
        try:
            tables[i] = table_from_triples(topo, i, triples) if triples else zero_table(topo, i)
        except FieldError as exc:
            raise _err(exc.message, p) from None
        if name in lg:
            norm_lg[name] = norm

    spec = FieldSpec(SPEC_VERSION, nodes, edges, norm_lg, None, seed, dict(caps), topo, tables)

    weights = {(e["from"], e["to"]): e["weight"] for e in edges if "weight" in e}
    for x in topo.acting():
        inc = [w for (s, t), w in weights.items() if t == names[x]]
        if inc and abs(sum(inc) - 1.0) > 1e-12:
            raise _err(f"incoming weights of acting node {names[x]!r} sum to {sum(inc):g}, not 1", "/edges")

    if "objectives" in doc:
        spec.objectives, spec.network, spec.signal = _parse_objectives(doc["objectives"], topo, weights)
    return spec


def _entries(raw, topo, path):
    out, norm = [], []
    for k, ent in enumerate(_list(raw, path)):
        q = f"{path}/{k}"
        _keys(ent, {"omega_from", "omega_to", "value"}, {"omega_from", "omega_to", "value"}, q)
        s = _digits(ent["omega_from"], topo.omega, q + "/omega_from")
        d = _digits(ent["omega_to"], topo.omega, q + "/omega_to")
        if s == d:
            raise _err("objective signal on a diagonal pair", q)
        v = _num(ent["value"], q + "/value")
        out.append((d, s, v))
        norm.append({"omega_from": list(ent["omega_from"]), "omega_to": list(ent["omega_to"]), "value": v})
    return build_objective(out, n_states=topo.n_states), norm


def _parse_objectives(obj, topo, weights):
    _keys(obj, {"env_signals", "propagators", "signal"}, set(), "/objectives")
    names = topo.names
    norm = {}
    signal = None
    if "signal" in obj:
        signal, norm["signal"] = _entries(obj["signal"], topo, "/objectives/signal")
    signals = {}
    norm_env = []
    for k, s in enumerate(_list(obj.get("env_signals", []), "/objectives/env_signals")):
        p = f"/objectives/env_signals/{k}"
        _keys(s, {"from", "to", "entries"}, {"from", "to", "entries"}, p)
        for end in ("from", "to"):
            if s[end] not in names:
                raise _err(f"unknown node {s[end]!r}", f"{p}/{end}")
        g, ents = _entries(s["entries"], topo, p + "/entries")
        signals[(s["from"], s["to"])] = g
        norm_env.append({"from": s["from"], "to": s["to"], "entries": ents})
    props = {}
    norm_props = []
    for k, pr in enumerate(_list(obj.get("propagators", []), "/objectives/propagators")):
        p = f"/objectives/propagators/{k}"
        _keys(pr, {"from", "to", "form", "q"}, {"from", "to", "form"}, p)
        for end in ("from", "to"):
            if pr[end] not in names:
                raise _err(f"unknown node {pr[end]!r}", f"{p}/{end}")
        form = pr["form"]
        item = {"from": pr["from"], "to": pr["to"], "form": form}
        N = topo.n_states
        try:
            if form == "identity":
                if "q" in pr:
                    raise _err("identity propagators take no q", p + "/q")
                props[(pr["from"], pr["to"])] = Propagator("identity")
            elif form == "pq":
                q = pr.get("q", "identity")
                if q == "identity":
                    Q = np.eye(N)
                elif q == "zero":
                    Q = np.zeros((N, N))
                elif isinstance(q, list):
                    Q = np.asarray(q, dtype=float)
                    if Q.ndim == 1 and Q.size == N * N:
                        Q = Q.reshape(N, N)
                    if Q.shape != (N, N):
                        raise _err(f"q must be a {N}x{N} row-major table", p + "/q")
                    q = Q.tolist()
                else:
                    raise _err('q must be "identity", "zero" or a table', p + "/q")
                item["q"] = q
                props[(pr["from"], pr["to"])] = Propagator("pq", Q=Q)
            else:
                raise _err('form must be "identity" or "pq"', p + "/form")
        except SpecError:
            raise
        except FieldError as exc:
            raise _err(exc.message, p) from None
        norm_props.append(item)
    norm["env_signals"] = norm_env
    norm["propagators"] = norm_props
    network = None
    if signals or props:
        try:
            network = build_network(topo, weights, signals, props)
        except FieldError as exc:
            raise _err(exc.message, "/edges" if "weight" in exc.message else "/objectives") from None
    return norm, network, signal


def load_field_spec(path) -> FieldSpec:
    """Read and validate a spec file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise SpecError(f"cannot read spec file: {exc}") from None
    return loads_field_spec(text)


def loads_field_spec(text: str) -> FieldSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        err = SpecParseError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
        err.line, err.column = exc.lineno, exc.colno
        raise err from None
    return parse_spec(doc)


def dumps_field_spec(spec: FieldSpec) -> str:
    return json.dumps(spec.to_dict(), indent=2) + "\n"


def save_field_spec(spec: FieldSpec, path) -> None:
    from .report import atomic_write

    atomic_write(path, dumps_field_spec(spec))


def demo_spec_path(name: str) -> str:
    """Path of a spec shipped with the package (e.g. ``"two_state"``)."""
    from importlib.resources import files

    return str(files("stochfield").joinpath("data", f"{name}.json"))


def list_demo_specs():
    from importlib.resources import files

    return sorted(p.name[:-5] for p in files("stochfield").joinpath("data").iterdir() if p.name.endswith(".json"))


def spec_from_objects(topology, tables, network=None, signal=None, seed=0, max_states=None) -> FieldSpec:
    """Serialize in-memory objects into a validated :class:`FieldSpec`."""
    T = topology
    names = T.names
    doc = {
        "version": SPEC_VERSION,
        "nodes": [{"name": n.name, "private_size": n.private_size, "kind": n.kind} for n in T.nodes],
        "edges": [],
        "local_generators": {},
        "seed": int(seed),
    }
    weights = network.weights.weights if network is not None else {}
    for e in T.edges:
        item = {"from": e.source, "to": e.target, "channel_size": e.channel_size}
        key = (T.index(e.source), T.index(e.target))
        if key in weights:
            item["weight"] = weights[key]
        doc["edges"].append(item)
    tables = {T.index(k): v for k, v in dict(tables).items()}
    for i, name in enumerate(names):
        obs = T.observed_region(i).space
        loc = T.local_region(i).space
        rows = []
        for o, u in tables[i].off_diagonal_keys(T):
            r = float(tables[i].rates[o, u])
            if r != 0.0:
                rows.append({"from_u": list(obs.decode(u)), "to_omega": list(loc.decode(o)), "rate": r})
        doc["local_generators"][name] = rows

    def ents(g):
        return [{"omega_from": list(T.omega.decode(s)), "omega_to": list(T.omega.decode(d)), "value": float(v)}
                for d, s, v in g.entries() if v != 0.0]

    if network is not None or signal is not None:
        obj = {}
        if signal is not None:
            obj["signal"] = ents(signal)
        if network is not None:
            obj["env_signals"] = [{"from": names[s], "to": names[t], "entries": ents(g)}
                                  for (s, t), g in sorted(network.env_signals.items())]
            props = []
            for (s, t), p in sorted(network.propagators.items()):
                if p.form == "identity":
                    props.append({"from": names[s], "to": names[t], "form": "identity"})
                elif p.form == "pq":
                    n = p.Q.shape[0]
                    q = "identity" if np.array_equal(p.Q, np.eye(n)) else (
                        "zero" if not np.any(p.Q) else p.Q.tolist())
                    props.append({"from": names[s], "to": names[t], "form": "pq", "q": q})
                else:
                    raise SpecError("explicit propagators cannot be written to a spec file")
            obj["propagators"] = props
        doc["objectives"] = obj
    if max_states is not None:
        doc["caps"] = {"max_states": int(max_states)}
    return parse_spec(doc)
