import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochfield.algebra import (basis_delta, expm_apply, is_delta, is_normalized, make_index_space, null_space_dim,
                                series_expm_apply, solve_on_delta)
from stochfield.exceptions import DomainError, InvalidSpaceError, ShapeError, SingularSolveError
from stochfield.instances import random_generator, two_state_generator


def test_index_space_mixed_radix():
    s = make_index_space([2, 3])
    assert s.total == 6
    assert s.encode((1, 2)) == 5
    assert s.decode(5) == (1, 2)


def test_degenerate_space():
    s = make_index_space([1])
    assert s.total == 1 and s.decode(0) == (0,)


def test_roundtrip_exhaustive():
    s = make_index_space([2, 2, 2])
    assert s.total == 8
    for t in itertools.product(range(2), repeat=3):
        assert s.decode(s.encode(t)) == t


@pytest.mark.parametrize("sizes", [[0], [2, -1], [2, 0, 3]])
def test_bad_sizes(sizes):
    with pytest.raises(InvalidSpaceError):
        make_index_space(sizes)


def test_encode_out_of_range():
    s = make_index_space([2, 3])
    with pytest.raises(InvalidSpaceError):
        s.encode((0, 3))


@given(st.lists(st.integers(1, 4), min_size=1, max_size=4), st.data())
@settings(max_examples=50, deadline=None)
def test_roundtrip_property(sizes, data):
    s = make_index_space(sizes)
    i = data.draw(st.integers(0, s.total - 1))
    assert s.encode(s.decode(i)) == i
    assert s.total == math.prod(sizes)


def test_expm_zero_generator():
    v = np.array([0.2, 0.3, 0.5])
    assert np.array_equal(expm_apply(np.zeros((3, 3)), v, 7.0), v)


def test_expm_two_state():
    out = expm_apply(two_state_generator(), np.array([1.0, 0.0]), 1.0)
    assert out[0] == pytest.approx(2 / 3 + math.exp(-3) / 3, abs=1e-12)
    assert out[0] == pytest.approx(0.683262, abs=1e-6)


def test_expm_matches_series(rng):
    G = random_generator(rng, 4)
    v = rng.dirichlet(np.ones(4))
    assert np.abs(expm_apply(G, v, 0.5) - series_expm_apply(G, v, 0.5, 30)).max() <= 1e-10


def test_expm_uniformization_matches_dense(rng):
    G = random_generator(rng, 6)
    v = rng.dirichlet(np.ones(6))
    a = expm_apply(G, v, 1.3, method="dense")
    b = expm_apply(G, v, 1.3, method="uniformization")
    assert np.abs(a - b).max() <= 1e-10


def test_expm_errors(G2):
    with pytest.raises(DomainError):
        expm_apply(G2, np.array([1.0, 0.0]), -1.0)
    with pytest.raises(ShapeError):
        expm_apply(G2, np.ones(3) / 3, 1.0)


@given(st.integers(2, 8), st.floats(0.0, 5.0), st.floats(0.0, 5.0), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_expm_invariants(n, s, t, seed):
    rng = np.random.default_rng(seed)
    G = random_generator(rng, n)
    v = rng.dirichlet(np.ones(n))
    out = expm_apply(G, v, t)
    assert is_normalized(out)
    y = v - np.roll(v, 1)
    assert is_delta(expm_apply(G, y, t))
    assert np.abs(expm_apply(G, expm_apply(G, v, s), t) - expm_apply(G, v, s + t)).max() <= 1e-9


def test_solve_zero_rhs(G2):
    assert np.array_equal(solve_on_delta(G2, np.zeros(2)), np.zeros(2))


def test_solve_two_state(G2):
    y = np.array([-1.0, 1.0])
    assert np.allclose(solve_on_delta(G2, y), y / 3, atol=1e-14)


def test_solve_matches_quadrature(rng):
    from scipy.integrate import quad_vec

    G = random_generator(rng, 5)
    y = rng.normal(size=5)
    y -= y.mean()
    z = solve_on_delta(G, y)
    # decay rate bounded below by the spectral gap; T* leaves a tail below 1e-12
    gap = -np.sort(np.linalg.eigvals(G).real)[-2]
    Tstar = math.log(1e14 * (1 + np.abs(y).sum())) / gap
    ref, _ = quad_vec(lambda t: expm_apply(G, y, t), 0.0, Tstar, epsabs=1e-13)
    assert np.abs(z - ref).max() <= 1e-8


def test_solve_errors(G2):
    with pytest.raises(DomainError):
        solve_on_delta(G2, np.array([1.0, 0.0]))
    block = np.zeros((4, 4))
    block[:2, :2] = G2
    block[2:, 2:] = G2
    with pytest.raises(SingularSolveError):
        solve_on_delta(block, np.array([1.0, -1.0, 0.0, 0.0]))


@given(st.integers(2, 8), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_solve_inverts_minus_G_on_delta(n, seed):
    rng = np.random.default_rng(seed)
    G = random_generator(rng, n)
    z = rng.normal(size=n)
    z -= z.mean()
    assert np.abs(solve_on_delta(G, -(G @ z)) - z).max() <= 1e-9


def test_null_space_dim(G2):
    assert null_space_dim(np.zeros((3, 3))) == 3
    assert null_space_dim(G2) == 1
    block = np.zeros((4, 4))
    block[:2, :2] = G2
    block[2:, 2:] = two_state_generator(3.0, 0.5)
    assert null_space_dim(block) == 2


def test_basis_delta_columns_sum_zero():
    B = basis_delta(5)
    assert B.shape == (5, 4) and np.allclose(B.sum(axis=0), 0)
    assert np.linalg.matrix_rank(B) == 4
