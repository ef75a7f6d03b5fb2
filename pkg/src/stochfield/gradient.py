"""Exact gradients of the long-run objective value with respect to the
off-diagonal rates, at system level and per local generator.

For an ergodic chain write ``r = Gamma G~`` (the per-state signal rate)
and ``c = r D`` with ``D`` the deviation operator.  The partial derivative
with respect to the rate of ``w -> w'`` (diagonal re-derived) is

    phi_bar[w] * (gamma[w', w] + c[w'] - c[w])

which is ``Gamma (1 + G~ S Pi) A~ phi_bar`` written out; ``c[w'] - c[w]``
is ``r S (delta_w' - delta_w)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import Chain, as_chain
from .exceptions import StepError, UnsupportedError
from .generators import LocalGeneratorTable, assemble_system, derive_diagonal, local_projection
from .objective import ObjectiveOperator

DEFAULT_FD_STEP = 1e-5


@dataclass
class GradientTable:
    """Partial derivatives keyed by parameter.

    System tables use keys ``(w', w)``; local tables use ``(o', u)`` and set
    ``node``.  Keys are kept in canonical lexicographic order.
    """

    keys: list
    values: np.ndarray
    node: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        order = sorted(range(len(self.keys)), key=lambda i: self.keys[i])
        self.keys = [tuple(self.keys[i]) for i in order]
        self.values = np.asarray(self.values, dtype=float)[order] if len(order) else np.zeros(0)
        self._pos = {k: i for i, k in enumerate(self.keys)}

    def __len__(self):
        return len(self.keys)

    def __getitem__(self, key):
        return float(self.values[self._pos[tuple(key)]])

    def __contains__(self, key):
        return tuple(key) in self._pos

    def items(self):
        return zip(self.keys, self.values.tolist())

    def as_matrix(self, shape) -> np.ndarray:
        """Dense ``[dest, src]`` layout; unlisted (diagonal) entries are zero."""
        M = np.zeros(shape)
        for (a, b), v in self.items():
            M[a, b] = v
        return M

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values), initial=0.0))


def _require_ergodic(ch: Chain):
    if not ch.ergodic:
        raise UnsupportedError(f"gradient requires an ergodic chain (null space dimension {ch.null_dim})")


def _potential_c(gamma: ObjectiveOperator, ch: Chain):
    """``c = (Gamma G~) D`` with the normalization ``c phi_bar = 0``."""
    r = gamma.flux_row(ch.G)
    return r @ ch.deviation


def grad_system(gamma: ObjectiveOperator, G) -> GradientTable:
    """``d gamma_bar / d G[w', w]`` for every off-diagonal rate."""
    ch = as_chain(G)
    _require_ergodic(ch)
    phi = ch.stationary_vector
    c = _potential_c(gamma, ch)
    Gam = gamma.dense()
    M = phi[None, :] * (Gam + c[:, None] - c[None, :])
    n = ch.n
    dest, src = np.nonzero(~np.eye(n, dtype=bool))
    return GradientTable(list(zip(dest.tolist(), src.tolist())), M[dest, src])


def grad_system_direct(gamma: ObjectiveOperator, G) -> GradientTable:
    """Reference route: one ``S`` solve per distinct jump vector ``delta_w' - delta_w``.

    Slower than :func:`grad_system` but follows the operator expression
    literally, so the two serve as cross-checks.
    """
    ch = as_chain(G)
    _require_ergodic(ch)
    phi = ch.stationary_vector
    r = gamma.flux_row(ch.G)
    n = ch.n
    cache = {}
    keys, vals = [], []
    for w in range(n):
        for wp in range(n):
            if wp == w:
                continue
            if (wp, w) not in cache:
                y = np.zeros(n)
                y[wp] += 1.0
                y[w] -= 1.0
                cache[(wp, w)] = float(r @ ch.apply_S(y))
            keys.append((wp, w))
            vals.append(phi[w] * (gamma.entry(wp, w) + cache[(wp, w)]))
    return GradientTable(keys, vals)


def grad_local(gamma: ObjectiveOperator, topology, tables, node, G=None) -> GradientTable:
    """Gradient with respect to node ``x``'s local rates ``G(x)[o', u]``.

    Sums the system-level expression over every global configuration that
    agrees with ``u`` on ``U_x``, i.e. over the support of the field action
    operator.  ``G`` may carry a precomputed assembled generator or chain.
    """
    i = topology.index(node)
    ch = as_chain(G if G is not None else assemble_system(topology, tables))
    _require_ergodic(ch)
    phi = ch.stationary_vector
    c = _potential_c(gamma, ch)
    Gam = gamma.dense()
    obs = topology.observed_region(i)
    loc = topology.local_region(i)
    proj = local_projection(topology, i)
    u_of = obs.index_of_state
    states = np.arange(ch.n)
    keys, vals = [], []
    for o in range(len(loc)):
        dest = topology.replace_local(i, states, o)
        term = phi * (Gam[dest, states] + c[dest] - c)
        per_u = np.bincount(u_of, weights=term, minlength=len(obs))
        for u in range(len(obs)):
            if o != proj[u]:
                keys.append((o, u))
                vals.append(per_u[u])
    return GradientTable(keys, vals, node=i)


# -- finite differences -----------------------------------------------------

def central_difference(value_fn, rate, h=DEFAULT_FD_STEP, boundary="error"):
    """Difference quotient of ``value_fn`` around ``rate``.

    ``boundary`` controls stencils that would make the rate negative:
    ``"error"`` raises :class:`StepError`, ``"forward"`` switches to a
    one-sided forward difference.
    """
    if h <= 0:
        raise StepError("finite-difference step must be positive")
    if rate - h < 0:
        if boundary != "forward":
            raise StepError(f"step {h:g} would drive the rate {rate:g} negative")
        return (value_fn(rate + h) - value_fn(rate)) / h
    return (value_fn(rate + h) - value_fn(rate - h)) / (2 * h)


def _perturbed_system(G, key, value):
    wp, w = key
    G = np.array(G, dtype=float)
    G[wp, w] = value
    G[w, w] = 0.0
    G[w, w] = -(G[:, w].sum())
    return G


def fd_gradient_system(gamma: ObjectiveOperator, G, key, h=DEFAULT_FD_STEP, boundary="error") -> float:
    """Finite difference of ``gamma_bar`` in the rate ``G[w', w]``."""
    from .objective import objective_value

    G = np.asarray(G.G if isinstance(G, Chain) else G, dtype=float)
    wp, w = key
    if wp == w:
        raise UnsupportedError("diagonal rates are not free parameters")
    return central_difference(lambda v: objective_value(gamma, _perturbed_system(G, key, v)),
                              float(G[wp, w]), h, boundary)


def perturb_local(tables, node, key, value):
    """Copy of ``tables`` with ``G(x)[o', u]`` set to ``value`` and the diagonal re-derived."""
    out = dict(tables)
    t = tables[node]
    o, u = key
    rates = t.rates.copy()
    rates[o, u] = value
    out[node] = LocalGeneratorTable(t.node, rates)
    return out


def fd_gradient_local(gamma, topology, tables, node, key, h=DEFAULT_FD_STEP, boundary="error",
                      value_fn=None) -> float:
    """Finite difference of a value in the local rate ``G(x)[o', u]``.

    By default the value is ``Gamma G~ phi_bar`` with ``gamma`` held fixed.
    ``value_fn(tables) -> float`` replaces it, e.g. to re-solve objective
    propagation for each perturbed generator.
    """
    from .objective import objective_value

    tables = _keyed_by_index(topology, tables)
    i = topology.index(node)
    proj = local_projection(topology, i)
    o, u = key
    if o == proj[u]:
        raise UnsupportedError("diagonal rates are not free parameters")

    def f(v):
        tb = perturb_local(tables, i, key, v)
        tb[i] = LocalGeneratorTable(i, derive_diagonal(tb[i].rates, proj))
        if value_fn is not None:
            return value_fn(tb)
        return objective_value(gamma, assemble_system(topology, tb))

    return central_difference(f, float(tables[i].rates[o, u]), h, boundary)


def _keyed_by_index(topology, tables):
    return {topology.index(k): v for k, v in dict(tables).items()}


def fd_gradient(gamma, G=None, key=None, h=DEFAULT_FD_STEP, *, topology=None, tables=None, node=None,
                boundary="error") -> float:
    """Dispatch to the system or local finite-difference oracle."""
    if topology is not None:
        return fd_gradient_local(gamma, topology, tables, node, key, h, boundary)
    return fd_gradient_system(gamma, G, key, h, boundary)


def relative_error(a, b, floor=1e-8) -> float:
    """``|a - b| / max(|b|, floor)``; the floor keeps vanishing partials comparable."""
    return float(abs(a - b) / max(abs(b), floor))
