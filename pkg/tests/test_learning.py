import numpy as np
import pytest

from stochfield.dynamics import Chain
from stochfield.exceptions import ConstraintError, PreconditionError
from stochfield.generators import LocalGeneratorTable, assemble_system, derive_diagonal, local_projection, validate_local
from stochfield.harness.verify import id_case_instance, two_entity_training_instance
from stochfield.learning import (StrategySet, TrainerConfig, build_random_search, project_to_generator,
                                 train_gradient_descent)
from stochfield.objective import build_objective, objective_value
from stochfield.topology import build_topology


def test_single_strategy_reproduces_field():
    T, env, gamma, strategies = id_case_instance()
    rs = build_random_search(T, "alpha", StrategySet(1, strategies[:1]), gamma, env)
    G = assemble_system(T, {0: env[0], 1: strategies[0]})
    assert np.abs(rs.G - G).max() <= 1e-15
    assert abs(rs.value_from(0) - objective_value(gamma, G)) <= 1e-12


def test_id_case_reaches_zero():
    T, env, gamma, strategies = id_case_instance()
    singles = [objective_value(gamma, assemble_system(T, {0: env[0], 1: s})) for s in strategies]
    assert singles[0] > 0 and singles[1] == 0.0
    rs = build_random_search(T, "alpha", StrategySet(1, strategies), gamma, env)
    for lab in range(rs.n_labels):
        assert abs(rs.value_from(lab)) <= 1e-6
        for w in range(rs.n_base):
            assert abs(rs.value_from(lab, w)) <= 1e-6


def test_all_positive_strategies_stay_positive():
    T, env, gamma, strategies = id_case_instance()
    proj = local_projection(T, 1)
    other = LocalGeneratorTable(1, derive_diagonal(np.where(strategies[0].rates > 0, 2.0, 0.0), proj))
    rs = build_random_search(T, "alpha", StrategySet(1, [strategies[0], other]), gamma, env)
    assert rs.value_from(0) > 0


def test_random_search_preconditions():
    T, env, gamma, strategies = id_case_instance()
    with pytest.raises(PreconditionError):
        build_random_search(T, "alpha", StrategySet(1, strategies), gamma.scaled(-1.0), env)
    with pytest.raises(ConstraintError):
        StrategySet(1, [])
    with pytest.raises(ConstraintError):
        StrategySet(1, strategies, switch_rate=1.0)


def test_augmented_generator_is_valid():
    T, env, gamma, strategies = id_case_instance()
    rs = build_random_search(T, "alpha", StrategySet(1, strategies, 0.3), gamma, env)
    assert np.abs(rs.G.sum(axis=0)).max() <= 1e-14
    off = rs.G - np.diag(np.diag(rs.G))
    assert off.min() >= 0


def two_state_fixture(a=1.0, b=2.0):
    T = build_topology([("x", 2)], [])
    t = LocalGeneratorTable(0, derive_diagonal(np.array([[0.0, b], [a, 0.0]]), local_projection(T, 0)))
    return T, {0: t}, build_objective([(1, 0, 1.0)], 2)


def test_zero_learning_rate_is_flat():
    T, tables, gamma = two_state_fixture()
    tr = train_gradient_descent(T, tables, gamma, [0], TrainerConfig(learning_rate=0.0, n_steps=5))
    assert len(set(tr.totals)) == 1 and len(tr.totals) == 6


def test_two_state_descends_to_floor():
    T, tables, gamma = two_state_fixture()
    cfg = TrainerConfig(learning_rate=0.5, n_steps=50, rate_floor=1e-6, params=[(0, (1, 0))])
    tr = train_gradient_descent(T, tables, gamma, [0], cfg)
    assert all(b <= a for a, b in zip(tr.totals, tr.totals[1:]))
    assert tr.tables[0].rates[1, 0] == pytest.approx(1e-6, abs=1e-12)
    assert tr.tables[0].rates[0, 1] == 2.0


def test_network_training_monotone():
    T, tables, net = two_entity_training_instance(0)
    cfg = TrainerConfig(learning_rate=0.5, n_steps=30)
    tr = train_gradient_descent(T, tables, net, T.acting(), cfg)
    assert tr.halted is None
    assert all(b <= a + 1e-12 for a, b in zip(tr.totals, tr.totals[1:]))
    for x in T.acting():
        validate_local(T, tr.tables[x])
        proj = local_projection(T, x)
        R = tr.tables[x].rates.copy()
        R[proj, np.arange(R.shape[1])] = np.inf
        assert R.min() >= cfg.rate_floor


def test_projection_examples():
    T, tables, _ = two_state_fixture()
    same = project_to_generator(tables[0], T)
    assert np.array_equal(same.rates, tables[0].rates)
    R = np.array([[0.0, 1.0], [-0.3, 0.0]])
    out = project_to_generator(LocalGeneratorTable(0, R), T)
    assert out.rates[1, 0] == 0.0 and out.rates[0, 0] == 0.0
    out = project_to_generator(LocalGeneratorTable(0, np.zeros((2, 2))), T, rate_floor=1e-6)
    assert Chain(assemble_system(T, {0: out})).null_dim == 1
    with pytest.raises(ConstraintError):
        project_to_generator(tables[0], T, rate_floor=-1.0)


def test_trainer_config_validation():
    with pytest.raises(ConstraintError):
        TrainerConfig(learning_rate=-1.0)
