import json

import numpy as np
import pytest

from conftest import random_graph
from hicom.graph import from_edges
from hicom.sampler import InvalidFanoutError, build_hierarchy


def figure_graph():
    # v0 - v1, v2; v1 has four more neighbors, v2 has only v0 and v6
    return from_edges(10, [(0, 1), (0, 2), (1, 3), (1, 4), (1, 8), (1, 9), (2, 6)])


def children_of(h, l, i):
    return sorted(h.levels[l - 1][h.parents[l - 1] == i].tolist())


def test_figure_topology():
    h = build_hierarchy(figure_graph(), [0], [3, 2], seed=0)
    assert sorted(h.levels[1].tolist()) == [1, 2]
    sizes = {int(v): len(children_of(h, 1, i)) for i, v in enumerate(h.levels[1])}
    assert sizes == {1: 3, 2: 2}


def test_isolated_target():
    g = from_edges(3, [(1, 2)])
    h = build_hierarchy(g, [0, 1], [2, 2], seed=0)
    assert (h.parents[1] == 1).all()
    roots = h.parents[1][h.parents[0]]
    assert (roots == 1).all()


def test_cycle_deterministic_and_adjacent():
    g = from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    a, b = (build_hierarchy(g, [0, 1, 2, 3], [1], seed=5) for _ in range(2))
    assert json.dumps(a.to_json()) == json.dumps(b.to_json())
    for child, p in zip(a.levels[0], a.parents[0]):
        assert child in g.neighbors(a.levels[1][p])


@pytest.mark.parametrize("seed", range(10))
def test_invariants_random(seed):
    g = random_graph(40, 0.15, seed)
    fanouts = [3, 2, 2]
    h = build_hierarchy(g, np.arange(0, 40, 3), fanouts, seed)
    for l in range(1, h.depth + 1):
        n = fanouts[l - 1]
        assert h.levels[l - 1].size <= h.levels[l].size * n
        for i, v in enumerate(h.levels[l]):
            sel = h.parents[l - 1] == i
            kids, slots = h.levels[l - 1][sel], h.slots[l - 1][sel]
            assert set(kids) <= set(g.neighbors(v).tolist())
            assert len(set(kids.tolist())) == kids.size
            assert sorted(slots.tolist()) == list(range(kids.size))
            assert kids.size == min(n, g.degrees()[v])


def test_batched_matches_single_target():
    g = random_graph(30, 0.2, 3)
    h = build_hierarchy(g, np.arange(30), [2, 2], seed=9)
    for t in range(30):
        s = build_hierarchy(g, [t], [2, 2], seed=9)
        sel1 = h.parents[1] == t
        assert h.levels[1][sel1].tolist() == s.levels[1].tolist()


def test_roughly_uniform():
    g = from_edges(5, [(0, i) for i in range(1, 5)])
    counts = np.zeros(5)
    for seed in range(2000):
        counts[build_hierarchy(g, [0], [1], seed).levels[0]] += 1
    assert np.all(np.abs(counts[1:] / 2000 - 0.25) < 0.04)


def test_zero_fanout_rejected():
    with pytest.raises(InvalidFanoutError):
        build_hierarchy(figure_graph(), [0], [2, 0], seed=0)
