import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from stochfield.dynamics import (Chain, apply_S, averaged_state, evolve, integrated_expm, phi_operator, stationary,
                                 time_averaged_state)
from stochfield.exceptions import DomainError, UnsupportedError
from stochfield.instances import random_generator


def e(n, i):
    v = np.zeros(n)
    v[i] = 1.0
    return v


def test_evolve_at_zero(G2):
    assert np.array_equal(evolve(G2, [0.3, 0.7], 0.0), [0.3, 0.7])


def test_evolve_two_state(G2):
    p = 2 / 3 + math.exp(-3) / 3
    assert np.allclose(evolve(G2, e(2, 0), 1.0), [p, 1 - p], atol=1e-12)
    assert np.allclose(evolve(G2, [0.5, 0.5], 200.0), [2 / 3, 1 / 3], atol=1e-12)


def test_stationary_two_state(G2):
    rep = stationary(G2)
    assert rep.ergodic and rep.null_dim == 1
    assert np.allclose(rep.stationary, [2 / 3, 1 / 3], atol=1e-14)


def test_stationary_zero_generator():
    rep = stationary(np.zeros((3, 3)), e(3, 0))
    assert not rep.ergodic and rep.null_dim == 3
    assert np.array_equal(rep.stationary, e(3, 0))
    assert np.array_equal(phi_operator(np.zeros((3, 3))), np.eye(3))


def test_stationary_two_blocks(G2):
    G = scipy.linalg.block_diag(G2, G2)
    rep = stationary(G, e(4, 2))
    assert not rep.ergodic and rep.null_dim == 2
    assert np.allclose(rep.stationary, [0, 0, 2 / 3, 1 / 3], atol=1e-14)


def test_transient_absorption():
    # 0 -> 1 and 0 -> 2 at rates 1 and 3; 1 and 2 absorbing
    G = np.zeros((3, 3))
    G[1, 0], G[2, 0], G[0, 0] = 1.0, 3.0, -4.0
    assert np.allclose(stationary(G, e(3, 0)).stationary, [0, 0.25, 0.75])
    assert np.allclose(phi_operator(G) @ e(3, 0), evolve(G, e(3, 0), 100.0), atol=1e-12)


def test_phi_columns(G2, rng):
    assert np.allclose(phi_operator(G2), [[2 / 3, 2 / 3], [1 / 3, 1 / 3]])
    P = phi_operator(random_generator(rng, 6))
    assert np.abs(P @ P - P).max() < 1e-10


def test_apply_S(G2, rng):
    assert not apply_S(G2, np.zeros(2)).any()
    y = np.array([-1.0, 1.0])
    assert np.allclose(apply_S(G2, y), y / 3, atol=1e-14)
    G = random_generator(rng, 5)
    y = rng.normal(size=5)
    y -= y.mean()
    Sy = apply_S(G, y)
    assert np.abs(y + G @ Sy).max() < 1e-9
    assert np.abs(phi_operator(G) @ y).max() < 1e-9


def test_apply_S_errors(G2):
    with pytest.raises(DomainError):
        apply_S(G2, [1.0, 0.0])
    with pytest.raises(UnsupportedError):
        apply_S(np.zeros((2, 2)), [1.0, -1.0])


def test_averaged_state(G2):
    assert np.allclose(averaged_state(G2, e(2, 1)), [2 / 3, 1 / 3])
    assert np.array_equal(averaged_state(np.zeros((2, 2)), e(2, 0)), e(2, 0))


def test_time_average_quadrature_vs_closed_form(rng):
    G = random_generator(rng, 4)
    phi0 = e(4, 1)
    quad = time_averaged_state(G, phi0, 100.0)
    closed = integrated_expm(G, 100.0) @ phi0 / 100.0
    assert np.abs(quad - closed).max() <= 1e-6
    with pytest.raises(DomainError):
        time_averaged_state(G, phi0, 0.0)


def test_deviation_matches_integral(G2):
    # D = int (e^{Gt} - Phi) dt; for two-state this is (1/3) (1 - Phi)
    D = Chain(G2).deviation
    assert np.allclose(D, (np.eye(2) - phi_operator(G2)) / 3, atol=1e-14)


@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 7))
@settings(max_examples=30, deadline=None)
def test_stationary_invariants(seed, n):
    G = random_generator(np.random.default_rng(seed), n, density=0.7)
    rep = stationary(G)
    assert np.abs(G @ rep.stationary).max() <= 1e-10
    assert abs(rep.stationary.sum() - 1) <= 1e-12
    assert np.all(rep.stationary >= -1e-14)


def test_evolve_preserves_probability(rng):
    G = random_generator(rng, 5)
    phi0 = rng.dirichlet(np.ones(5))
    for t in (0.1, 1.0, 10.0):
        p = evolve(G, phi0, t)
        assert abs(p.sum() - 1) < 1e-12 and p.min() > -1e-14


def test_chain_is_read_only(G2):
    ch = Chain(G2)
    with pytest.raises(ValueError):
        ch.G[0, 0] = 5.0
    with pytest.raises(ValueError):
        ch.phi[0, 0] = 5.0
