import numpy as np
import pytest
import torch

from hicom.graph import from_edges

torch.set_num_threads(1)


def random_graph(n, p, seed, texts=None):
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    if texts is None:
        texts = [" ".join(f"w{x}" for x in rng.integers(0, 20, rng.integers(0, 7))) for _ in range(n)]
    return from_edges(n, np.stack([iu[keep], ju[keep]], axis=1), texts)


def peel(n, edges, k):
    """Delete nodes of degree < k until nothing changes."""
    adj = {v: set() for v in range(n)}
    for a, b in edges:
        if a != b:
            adj[a].add(b)
            adj[b].add(a)
    changed = True
    while changed:
        changed = False
        for v in [v for v in adj if len(adj[v]) < k]:
            for u in adj.pop(v):
                adj[u].discard(v)
            changed = True
    return sorted(adj)


@pytest.fixture
def rgraph():
    return random_graph
