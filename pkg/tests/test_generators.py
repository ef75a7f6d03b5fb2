import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from stochfield.exceptions import ConstraintError, ShapeError, TopologyError
from stochfield.generators import (LocalGeneratorTable, action_operator, assemble_system, commutator_norm,
                                   derive_diagonal, embed_local, lift, local_projection, pi_matrix, project_pi,
                                   table_from_triples, validate_generator, validate_local, zero_table)
from stochfield.harness.verify import _oracle_system
from stochfield.instances import random_field, random_generator, random_local_tables, two_state_generator
from stochfield.topology import build_topology


def iso2(a=1.0, b=2.0):
    T = build_topology([("x", 2)], [])
    return T, {0: table_from_triples(T, 0, [(0, 1, a), (1, 0, b)])}


def test_validate_local_cases():
    T = build_topology([("x", 3)], [])
    validate_local(T, zero_table(T, 0))
    R = np.zeros((3, 3))
    R[1, 0], R[2, 0], R[0, 0] = 1.0, 2.0, -3.0
    validate_local(T, LocalGeneratorTable(0, R))
    R[0, 0] = -2.5
    with pytest.raises(ConstraintError, match=r"u=\(0,\)"):
        validate_local(T, LocalGeneratorTable(0, R))
    R[0, 0], R[1, 0] = -1.0, -1.0
    with pytest.raises(ConstraintError, match="negative"):
        validate_local(T, LocalGeneratorTable(0, R))


def test_triples_reject_bad_input():
    T = build_topology([("x", 2)], [])
    with pytest.raises(ConstraintError):
        table_from_triples(T, 0, [(0, 0, 1.0)])
    with pytest.raises(ConstraintError):
        table_from_triples(T, 0, [(0, 1, -1.0)])
    with pytest.raises(ConstraintError):
        table_from_triples(T, 0, [(0, 1, 1.0), (0, 1, 2.0)])


def test_embed_isolated_equals_raw():
    T, tb = iso2()
    assert np.array_equal(embed_local(T, tb[0]), two_state_generator())


def test_embed_two_isolated_nodes():
    T = build_topology([("x", 2), ("y", 2)], [])
    tx = table_from_triples(T, 0, [(0, 1, 1.0), (1, 0, 2.0)])
    E = embed_local(T, tx)
    assert np.allclose(E, np.kron(two_state_generator(), np.eye(2)))
    assert np.abs(E.sum(axis=0)).max() == 0.0


def test_embed_chain_sparsity(chain3, rng):
    tables = random_local_tables(rng, chain3)
    E = embed_local(chain3, tables[1])
    D = chain3.omega.all_digits()
    outside = [f for f in range(len(chain3.factors)) if f not in chain3.local_region(1).factors]
    for d in range(chain3.n_states):
        for s in range(chain3.n_states):
            if np.any(D[d, outside] != D[s, outside]):
                assert E[d, s] == 0.0
    validate_generator(E)


def test_embed_shape_mismatch():
    T, _ = iso2()
    with pytest.raises(ShapeError):
        embed_local(T, LocalGeneratorTable(0, np.zeros((3, 3))))


def test_assemble_zero_and_kronecker_sum():
    T = build_topology([("x", 2), ("y", 2)], [])
    assert not assemble_system(T, {0: zero_table(T, 0), 1: zero_table(T, 1)}).any()
    tx = table_from_triples(T, 0, [(0, 1, 1.0), (1, 0, 2.0)])
    ty = table_from_triples(T, 1, [(0, 1, 3.0), (1, 0, 4.0)])
    G = assemble_system(T, {"x": tx, "y": ty})
    K = np.kron(two_state_generator(1, 2), np.eye(2)) + np.kron(np.eye(2), two_state_generator(3, 4))
    assert np.abs(G - K).max() < 1e-14


def test_assemble_two_entity_matches_transition_oracle(rng):
    T = build_topology([("x", 2), ("y", 2)], [("x", "y", 2), ("y", "x", 2)])
    tables = random_local_tables(rng, T)
    G = assemble_system(T, tables)
    M, N = embed_local(T, tables[0]), embed_local(T, tables[1])
    assert np.abs(G - (M + N)).max() < 1e-14
    assert np.abs(G - _oracle_system(T, tables)).max() < 1e-14


def test_assemble_missing_node(chain3):
    with pytest.raises(TopologyError):
        assemble_system(chain3, {0: zero_table(chain3, 0)})


def test_commutators(chain3, rng):
    tables = random_local_tables(rng, chain3)
    assert commutator_norm(chain3, "x1", "x3", tables) <= 1e-13
    assert commutator_norm(chain3, "x2", "x2", tables) == 0.0
    assert commutator_norm(chain3, "x1", "x2", tables) > 1e-3


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=20, deadline=None)
def test_decomposition_property(seed):
    rng = np.random.default_rng(seed)
    T, tables = random_field(rng, max_states=64)
    G = assemble_system(T, tables)
    validate_generator(G)
    assert np.abs(G - sum(embed_local(T, tables[i]) for i in range(len(T.nodes)))).max() < 1e-13
    for a, b in T.non_neighbor_pairs():
        assert commutator_norm(T, a, b, tables) <= 1e-12


def test_lift_cases(G2, rng):
    assert lift(np.zeros((3, 3))).nnz == 0
    col = lift(G2) @ np.array([1.0, 0.0])
    # flat index dest * N + src: |00> -> 0, |10> -> 2
    assert col[0] == -1.0 and col[2] == 1.0 and col[1] == 0.0 and col[3] == 0.0
    G = random_generator(rng, 5)
    assert np.abs(project_pi(lift(G)) - G).max() < 1e-14


def test_action_operator_isolated():
    T, _ = iso2()
    A = action_operator(T, 0, 0, 1)
    assert np.array_equal(A @ np.array([1.0, 0.0]), np.array([0.0, 0.0, 1.0, 0.0]))
    assert not np.any(A @ np.array([0.0, 1.0]))


def test_action_operator_two_entity_leaves_other_digits():
    T = build_topology([("x", 2), ("y", 2)], [("x", "y", 2), ("y", "x", 2)])
    U = T.observed_region("x")
    N = T.n_states
    yfac = T.local_region("y").factors
    for u in range(len(U)):
        for o in range(len(T.local_region("x"))):
            A = action_operator(T, "x", u, o).tocoo()
            for r, c in zip(A.row, A.col):
                dest, src = divmod(int(r), N)
                assert src == c and U.index_of_state[src] == u
                dd, ds = T.omega.decode(dest), T.omega.decode(src)
                assert all(dd[f] == ds[f] for f in yfac)
                assert T.local_region("x").index_of_state[dest] == o


def test_project_pi_cases():
    N = 3
    X = np.zeros((N, N))
    X[1, 1] = 1.0
    assert not project_pi(X).any()
    X = np.zeros((2, 2))
    X[1, 0] = 1.0
    assert np.array_equal(project_pi(X), np.array([-1.0, 1.0]))
    v = np.random.default_rng(0).normal(size=(4, 4))
    assert abs(project_pi(v).sum()) < 1e-12
    assert np.allclose(pi_matrix(4) @ v.ravel(), project_pi(v))


def test_derive_diagonal_exact():
    T = build_topology([("x", 4)], [])
    R = np.full((4, 4), 0.1)
    out = derive_diagonal(R, local_projection(T, 0))
    assert np.all(out.sum(axis=0) == 0.0) or np.abs(out.sum(axis=0)).max() < 1e-15
