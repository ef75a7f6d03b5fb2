import numpy as np
import pytest

from stochfield.exceptions import InvalidSpaceError, TopologyError
from stochfield.topology import agree_on, build_topology, restrict


def two_entity():
    return build_topology([("x", 2), ("y", 2)], [("x", "y", 2), ("y", "x", 2)])


def test_isolated_node():
    T = build_topology([("x", 2)], [])
    assert T.n_states == 2
    assert T.local_region("x").factors == T.observed_region("x").factors


def test_two_entity_size():
    assert two_entity().n_states == 16


def test_chain_neighbors(chain3):
    assert not chain3.are_neighbors("x1", "x3")
    assert chain3.are_neighbors("x1", "x2") and chain3.are_neighbors("x2", "x1")
    assert len(chain3.observed_region("x2")) == 8
    assert chain3.non_neighbor_pairs() == [(0, 2)]


@pytest.mark.parametrize("nodes, edges, err", [
    ([("x", 2), ("x", 3)], [], TopologyError),
    ([("x", 2)], [("x", "z", 2)], TopologyError),
    ([("x", 0)], [], InvalidSpaceError),
    ([("x", 2), ("y", 2)], [("x", "y", 0)], InvalidSpaceError),
    ([("x", 2)], [("x", "x", 2)], TopologyError),
    ([("x", 2), ("y", 2)], [("x", "y", 2), ("x", "y", 3)], TopologyError),
    ([], [], TopologyError),
])
def test_invalid(nodes, edges, err):
    with pytest.raises(err):
        build_topology(nodes, edges)


def test_state_cap():
    with pytest.raises(InvalidSpaceError):
        build_topology([("x", 64), ("y", 64)], [], max_states=4096 - 1)


def test_factor_partition(chain3):
    own = [set(chain3.local_region(i).factors) for i in range(3)]
    assert set().union(*own) == set(range(len(chain3.factors)))
    assert sum(len(o) for o in own) == len(chain3.factors)
    for i in range(3):
        assert own[i] <= set(chain3.observed_region(i).factors)
    c = chain3.channel_factor("x1", "x2")
    assert c in chain3.local_region("x1").factors and c in chain3.observed_region("x2").factors


def test_restrict_identity_and_two_entity():
    T = two_entity()
    for w in range(T.n_states):
        d = T.omega.decode(w)
        assert restrict(T, w, T.full) == d
    # factor order: x private, x->y channel, y private, y->x channel; U_x drops y's private digit
    w = T.omega.encode((1, 0, 1, 1))
    assert restrict(T, w, T.observed_region("x")) == (1, 0, 1)


def test_restrict_constant_on_fibers():
    T = two_entity()
    U = T.observed_region("x")
    fibers = {}
    for w in range(T.n_states):
        fibers.setdefault(restrict(T, w, U), []).append(w)
    assert len(fibers) == 8 and all(len(v) == 2 for v in fibers.values())


def test_restrict_matches_index_of_state(chain3):
    U = chain3.observed_region("x2")
    for w in range(chain3.n_states):
        assert U.space.encode(restrict(chain3, w, U)) == U.index_of_state[w]


def test_restrict_foreign_region(chain3):
    other = build_topology([("x", 2)], [])
    with pytest.raises(TopologyError):
        restrict(chain3, 0, other.full)


def test_agree_on(chain3):
    w = chain3.omega.encode((0, 0, 0, 0, 0))
    assert agree_on(chain3, w, w, chain3.full)
    # differ only in x3's private digit: invisible from x1
    d = list(chain3.omega.decode(w))
    d[chain3.local_region("x3").factors[0]] = 1
    w2 = chain3.omega.encode(d)
    assert agree_on(chain3, w, w2, chain3.observed_region("x1"))
    assert not agree_on(chain3, w, w2, chain3.full)
