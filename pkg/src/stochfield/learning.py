"""Objective minimization: the label-switching random search and an
external projected gradient descent on local generators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Chain
from .exceptions import ConstraintError, PreconditionError, SingularSolveError, UnsupportedError
from .generators import LocalGeneratorTable, assemble_system, derive_diagonal, local_projection, validate_local
from .gradient import grad_local
from .objective import ObjectiveOperator
from .propagation import PropagationNetwork, propagated_local_gradient, solve_effective_objectives

BACKTRACK_TOL = 1e-12


@dataclass
class StrategySet:
    node: int
    strategies: list
    switch_rate: float = 0.5

    def __post_init__(self):
        if not self.strategies:
            raise ConstraintError("a strategy set needs at least one strategy")
        if not 0.0 < self.switch_rate < 1.0:
            raise ConstraintError("switch_rate must lie in (0, 1)")


@dataclass
class RandomSearchSystem:
    """Generator on ``Omega x [m]`` (label-major: index ``label * N + w``)."""

    G: np.ndarray
    objective: ObjectiveOperator
    n_labels: int
    n_base: int

    def value_from(self, label, base_state=None) -> float:
        """Long-run objective value from label ``label`` (uniform base state by default)."""
        phi0 = np.zeros(self.n_labels * self.n_base)
        if base_state is None:
            phi0[label * self.n_base:(label + 1) * self.n_base] = 1.0 / self.n_base
        else:
            phi0[label * self.n_base + base_state] = 1.0
        ch = Chain(self.G)
        phi = ch.stationary(phi0).stationary
        return float(self.objective.flux_row(self.G) @ phi)


def build_random_search(topology, node, strategies: StrategySet, gamma: ObjectiveOperator, env_tables) -> RandomSearchSystem:
    """Augment node ``x`` with a strategy label that is resampled on positive signals.

    Within label ``i`` the field runs with ``x`` following strategy ``i``.
    A jump of rate ``r`` that carries a positive signal keeps its label at
    rate ``r (1 - p)`` and moves to each of the ``m`` labels at rate
    ``r p / m``.
    """
    if not gamma.is_nonnegative():
        raise PreconditionError("random search requires nonnegative objective signals")
    i = topology.index(node)
    m = len(strategies.strategies)
    N = topology.n_states
    p = strategies.switch_rate
    Gam = gamma.dense()
    positive = Gam > 0
    blocks = []
    for strat in strategies.strategies:
        if strat.node != i:
            raise ConstraintError("strategy table belongs to a different node")
        validate_local(topology, strat)
        tables = {topology.index(k): v for k, v in dict(env_tables).items()}
        tables[i] = strat
        blocks.append(assemble_system(topology, tables))
    Gs = np.zeros((m * N, m * N))
    for a, Gi in enumerate(blocks):
        off = Gi.copy()
        np.fill_diagonal(off, 0.0)
        keep = np.where(positive, off * (1.0 - p), off)
        Gs[a * N:(a + 1) * N, a * N:(a + 1) * N] += keep
        switch = np.where(positive, off * (p / m), 0.0)
        for b in range(m):
            Gs[b * N:(b + 1) * N, a * N:(a + 1) * N] += switch
    idx = np.arange(m * N)
    Gs[idx, idx] = 0.0
    for w in range(m * N):
        Gs[w, w] = -math.fsum(Gs[:, w])
    GamS = np.tile(Gam, (m, m))
    np.fill_diagonal(GamS, 0.0)
    from .objective import objective_from_dense

    return RandomSearchSystem(Gs, objective_from_dense(GamS), m, N)


def project_to_generator(table: LocalGeneratorTable, topology, rate_floor=0.0) -> LocalGeneratorTable:
    """Clip off-diagonal rates at ``rate_floor`` and re-derive the diagonal."""
    if rate_floor < 0:
        raise ConstraintError("rate_floor must be nonnegative")
    proj = local_projection(topology, table.node)
    rates = table.rates.copy()
    diag = np.zeros(rates.shape, dtype=bool)
    diag[proj, np.arange(rates.shape[1])] = True
    rates = np.where(diag, 0.0, np.maximum(rates, rate_floor))
    return LocalGeneratorTable(table.node, derive_diagonal(rates, proj))


@dataclass
class TrainerConfig:
    learning_rate: float = 0.5
    n_steps: int = 100
    rate_floor: float = 1e-6
    projection: str = "clip"
    max_halvings: int = 40
    params: list | None = None  # optional [(node, (o', u))]; default: every off-diagonal rate

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConstraintError("learning_rate must be nonnegative")
        if self.rate_floor < 0:
            raise ConstraintError("rate_floor must be nonnegative")
        if self.projection != "clip":
            raise UnsupportedError(f"unknown projection mode {self.projection!r}")


@dataclass
class TrainingStep:
    step: int
    values: dict
    total: float
    grad_norm: float
    step_size: float


@dataclass
class TrainingTrace:
    steps: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    halted: str | None = None

    @property
    def totals(self):
        return [s.total for s in self.steps]

    def to_dict(self, topology=None):
        name = (lambda i: topology.nodes[i].name) if topology else str
        return {
            "steps": [{"step": s.step, "values": {name(k): v for k, v in s.values.items()}, "total": s.total,
                       "grad_norm": s.grad_norm, "step_size": s.step_size} for s in self.steps],
            "halted": self.halted,
        }


def _values(topology, tables, objective, nodes):
    G = assemble_system(topology, tables)
    ch = Chain(G)
    if not ch.ergodic:
        raise SingularSolveError(f"dynamics lost ergodicity (null space dimension {ch.null_dim})")
    phi = ch.stationary_vector
    if isinstance(objective, PropagationNetwork):
        sol = solve_effective_objectives(objective, ch)
        vals = {x: float(sol.objectives[x].flux_row(ch.G) @ phi) for x in nodes}
    else:
        v = float(objective.flux_row(ch.G) @ phi)
        vals = {x: v for x in nodes}
    return vals, ch


def _gradients(topology, tables, objective, nodes, ch):
    out = {}
    for x in nodes:
        if isinstance(objective, PropagationNetwork):
            out[x] = propagated_local_gradient(objective, tables, x, G=ch)
        else:
            out[x] = grad_local(objective, topology, tables, x, G=ch)
    return out


def train_gradient_descent(topology, tables, objective, nodes, config: TrainerConfig) -> TrainingTrace:
    """Projected gradient descent on the local rates of ``nodes``.

    Each step moves every trained rate against its gradient, clips to the
    rate floor and halves the step until the summed objective value of the
    trained nodes does not increase.  Ergodicity is re-checked each step;
    losing it stops the run and keeps the trace so far.
    """
    nodes = [topology.index(x) for x in nodes]
    tables = {topology.index(k): v.copy() for k, v in dict(tables).items()}
    if config.params is not None:
        allowed = {(topology.index(x), tuple(k)) for x, k in config.params}
    else:
        allowed = None
    trace = TrainingTrace(tables=tables)
    try:
        vals, ch = _values(topology, tables, objective, nodes)
    except SingularSolveError as exc:
        trace.halted = str(exc)
        return trace
    total = math.fsum(vals.values())
    trace.steps.append(TrainingStep(0, vals, total, 0.0, 0.0))
    for step in range(1, config.n_steps + 1):
        grads = _gradients(topology, tables, objective, nodes, ch)
        masks = {}
        gnorm = 0.0
        for x in nodes:
            Gx = np.zeros_like(tables[x].rates)
            for (o, u), v in grads[x].items():
                if allowed is None or (x, (o, u)) in allowed:
                    Gx[o, u] = v
            masks[x] = Gx
            gnorm = max(gnorm, float(np.abs(Gx).max(initial=0.0)))
        lr = config.learning_rate
        accepted = None
        for _ in range(config.max_halvings + 1):
            if lr == 0.0:
                break
            trial = dict(tables)
            for x in nodes:
                moved = LocalGeneratorTable(x, tables[x].rates - lr * masks[x])
                trial[x] = project_to_generator(moved, topology, config.rate_floor)
            try:
                tvals, tch = _values(topology, trial, objective, nodes)
            except SingularSolveError:
                lr *= 0.5
                continue
            ttotal = math.fsum(tvals.values())
            if ttotal <= total + BACKTRACK_TOL:
                accepted = (trial, tvals, tch, ttotal)
                break
            lr *= 0.5
        if accepted is None:
            trace.steps.append(TrainingStep(step, vals, total, gnorm, 0.0))
            continue
        tables, vals, ch, total = accepted
        trace.steps.append(TrainingStep(step, vals, total, gnorm, lr))
    trace.tables = tables
    return trace
