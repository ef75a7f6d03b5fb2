import math

import numpy as np
import pytest
import scipy.linalg

from stochfield.exceptions import PreconditionError
from stochfield.generators import assemble_system, table_from_triples
from stochfield.instances import (constant_frequency_generator, cycle_generator, random_generator, random_local_tables,
                                  two_state_generator)
from stochfield.objective import build_objective, zero_objective
from stochfield.topology import build_topology
from stochfield.trajectories import (InvalidPathError, Path, entropy_bound_check, field_lagrangian_terms,
                                     jump_entropies, mc_expected_signal, mc_transition_prob, mc_transition_row,
                                     path_log_weight, sample_path, simulate)


def test_zero_generator_no_jumps():
    p = sample_path(np.zeros((3, 3)), 1, 10.0, seed=0)
    assert p.n_jumps == 0 and p.final() == 1


def test_long_path_occupancy(G2):
    T = 1000.0
    p = sample_path(G2, 0, T, seed=1)
    occ = sum(t1 - t0 for w, t0, t1 in p.segments() if w == 0) / T
    # asymptotic variance of the occupation fraction: 2 pi0 pi1 / ((a+b) T)
    sigma = math.sqrt(2 * (2 / 9) / 3 / T)
    assert abs(occ - 2 / 3) <= 3 * sigma


def test_cycle_jump_count():
    n = 100_000
    res = simulate(cycle_generator(2, 1.0), 0, 10.0, n, seed=2)
    mean = res.n_jumps.mean()
    assert abs(mean - 10) <= 3 * math.sqrt(10 / n)


def test_no_jump_weight():
    G = two_state_generator(1.0, 2.0)
    assert path_log_weight(G, Path(1, [], 3.0)) == -2.0 * 3.0


def test_hand_weight(G2):
    assert math.isclose(path_log_weight(G2, Path(0, [(0.4, 1)], 1.0)), -1.6, abs_tol=1e-15)


def test_impossible_jump_is_minus_inf():
    G = np.zeros((2, 2))
    G[1, 0], G[0, 0] = 1.0, -1.0
    assert path_log_weight(G, Path(1, [(0.5, 0)], 1.0)) == -math.inf


def test_weight_matches_sampler_density(rng):
    G = random_generator(rng, 4)
    for s in range(50):
        p = sample_path(G, s % 4, 3.0, seed=s)
        assert abs(path_log_weight(G, p) - p.log_density) < 1e-10


@pytest.mark.parametrize("path", [
    Path(0, [(0.5, 1), (0.4, 0)], 1.0),
    Path(0, [(0.5, 0)], 1.0),
    Path(0, [(1.5, 1)], 1.0),
    Path(5, [], 1.0),
    Path(0, [], -1.0),
])
def test_invalid_paths(G2, path):
    with pytest.raises(InvalidPathError):
        path_log_weight(G2, path)


def two_isolated():
    T = build_topology([("x1", 2), ("x2", 2)], [])
    tables = {0: table_from_triples(T, 0, [(0, 1, 1.0), (1, 0, 2.0)]),
              1: table_from_triples(T, 1, [(0, 1, 3.0), (1, 0, 4.0)])}
    return T, tables


def test_lagrangian_terms_non_jumping_node():
    T, tables = two_isolated()
    # x1 is the leading digit, so flipping it moves by 2 in the flat index
    path = Path(0, [(0.3, 2), (0.7, 0)], 1.0)
    terms = field_lagrangian_terms(T, tables, path)
    assert math.isclose(terms[1], 3.0 * 1.0)  # survival in x2=0 at rate 3, no log terms
    assert math.isclose(sum(terms), -path_log_weight(assemble_system(T, tables), path))


def test_lagrangian_single_node(G2):
    T = build_topology([("x", 2)], [])
    tables = {0: table_from_triples(T, 0, [(0, 1, 1.0), (1, 0, 2.0)])}
    p = sample_path(G2, 0, 4.0, seed=3)
    assert math.isclose(field_lagrangian_terms(T, tables, p)[0], -path_log_weight(G2, p), abs_tol=1e-12)


def test_lagrangian_decomposition_random(rng):
    T = build_topology([("x1", 2), ("x2", 2)], [("x1", "x2", 2), ("x2", "x1", 1)])
    tables = random_local_tables(rng, T)
    G = assemble_system(T, tables)
    worst = 0.0
    for s in range(100):
        p = sample_path(G, s % T.n_states, 2.0, seed=s)
        worst = max(worst, abs(sum(field_lagrangian_terms(T, tables, p)) + path_log_weight(G, p)))
    assert worst < 1e-10


def test_lagrangian_rejects_double_move():
    T, tables = two_isolated()
    with pytest.raises(InvalidPathError):
        field_lagrangian_terms(T, tables, Path(0, [(0.5, 3)], 1.0))


def test_transition_prob_at_zero(rng):
    G = random_generator(rng, 3)
    for d in range(3):
        st = mc_transition_prob(G, 1, d, 0.0, 100, seed=0)
        assert st.estimate == (1.0 if d == 1 else 0.0)


def test_transition_prob_two_state(G2):
    st = mc_transition_prob(G2, 0, 0, 1.0, 100_000, seed=4)
    exact = 2 / 3 + math.exp(-3) / 3
    assert abs(st.estimate - exact) <= 3 * math.sqrt(exact * (1 - exact) / st.n_samples)


def test_transition_row_random(rng):
    G = random_generator(rng, 4)
    n = 100_000
    P = scipy.linalg.expm(G)
    for w in range(4):
        row = mc_transition_row(G, w, 1.0, n, seed=10 + w)
        for d, st in enumerate(row):
            p = P[d, w]
            assert abs(st.estimate - p) <= 3.5 * math.sqrt(p * (1 - p) / n)


def test_signal_zero(G2):
    st = mc_expected_signal(G2, zero_objective(2), 0, 1.0, 1000, seed=0)
    assert st.estimate == 0.0 and st.stderr == 0.0


def test_signal_two_state(G2, gamma2):
    st = mc_expected_signal(G2, gamma2, 0, 1.0, 100_000, seed=5)
    exact = 2 / 3 + (1 - math.exp(-3)) / 9
    assert abs(st.estimate - exact) <= 3 * st.stderr


def test_signal_long_horizon(G2, gamma2):
    T = 200.0
    st = mc_expected_signal(G2, gamma2, 0, T, 20_000, seed=6)
    assert abs(st.estimate / T - 2 / 3) <= 3 * st.stderr / T + 1e-3


def test_sampling_is_reproducible_and_block_stable(G2, gamma2):
    a = mc_expected_signal(G2, gamma2, 0, 1.0, 10_000, seed=7)
    b = mc_expected_signal(G2, gamma2, 0, 1.0, 10_000, seed=7)
    assert a == b
    # the first block's paths do not depend on how many blocks follow
    short = simulate(G2, 0, 1.0, 8192, seed=7).final
    long = simulate(G2, 0, 1.0, 8192 * 2, seed=7).final
    assert np.array_equal(short, long[:8192])


def test_entropy_deterministic_cycle():
    chk = entropy_bound_check(cycle_generator(2, 1.0), 5.0, 0, 2000, seed=0)
    assert chk.mc_mean == 5.0 and chk.bound == 5.0
    assert chk.entropies == [0.0, 0.0]


def test_entropy_symmetric_three_state():
    G = np.full((3, 3), 0.5)
    np.fill_diagonal(G, -1.0)
    chk = entropy_bound_check(G, 1.0, 0, 50_000, seed=1)
    assert chk.bound == 1.0
    assert np.allclose(jump_entropies(G), math.log(2))
    assert math.isclose(chk.analytic_mean, 1 + math.log(2), rel_tol=1e-12)
    assert abs(chk.mc_mean - (1 + math.log(2))) <= 3 * chk.stderr


def test_entropy_k2_cycle():
    chk = entropy_bound_check(cycle_generator(2, 2.0), 1.0, 0, 50_000, seed=2)
    target = 2 * (1 - math.log(2))
    assert math.isclose(chk.bound, target)
    assert abs(chk.mc_mean - target) <= 3 * chk.stderr


def test_entropy_bound_holds_on_random(rng):
    G = constant_frequency_generator(rng, 4, K=1.5)
    chk = entropy_bound_check(G, 2.0, 0, 20_000, seed=3)
    assert chk.mc_mean >= chk.bound - 3 * chk.stderr
    assert chk.analytic_mean >= chk.bound - 1e-12


def test_entropy_precondition(G2):
    with pytest.raises(PreconditionError):
        entropy_bound_check(G2, 1.0, 0, 100, seed=0)
