"""Synthetic neighborhood-label benchmark.

Nodes belong to hidden communities joined mostly by intra-community edges.
A fraction of nodes are *carriers* whose text contains a few copies of a
community cue word (``topic3``); every other node carries only neutral
filler words. Carriers are unlabeled. A plain node's label is the cue with
the highest weighted count over its neighborhood: weight 2 for cues on
1-hop neighbors, 1 for cues on nodes exactly two hops away. Plain nodes
with no cue within two hops stay unlabeled.

A node's own text therefore says nothing about its label.
"""

from __future__ import annotations

import numpy as np

from .graph import TextGraph, from_edges


def cue_word(c: int) -> str:
    return f"topic{c}"


def neighborhood_labels(g: TextGraph, cue_counts: np.ndarray, is_carrier: np.ndarray) -> list[frozenset]:
    """Deterministic labels from cue counts on 1- and 2-hop neighbors."""
    labels = []
    for v in range(g.num_nodes):
        if is_carrier[v]:
            labels.append(frozenset())
            continue
        hop1 = set(g.neighbors(v).tolist())
        hop2 = set()
        for u in hop1:
            hop2.update(g.neighbors(u).tolist())
        hop2 -= hop1 | {v}
        score = 2 * cue_counts[list(hop1)].sum(axis=0) if hop1 else np.zeros(cue_counts.shape[1])
        if hop2:
            score = score + cue_counts[list(hop2)].sum(axis=0)
        labels.append(frozenset([int(np.argmax(score))]) if score.max() > 0 else frozenset())
    return labels


def make_synthetic_graph(num_nodes: int = 2000, num_classes: int = 8, avg_degree: float = 8.0,
                         carrier_frac: float = 0.12, p_in: float = 0.95, min_words: int = 16,
                         max_words: int = 16, cues_per_carrier: int = 6, filler_size: int = 40,
                         seed: int = 0) -> TextGraph:
    rng = np.random.default_rng(seed)
    community = rng.integers(0, num_classes, num_nodes)
    members = [np.nonzero(community == c)[0] for c in range(num_classes)]
    is_carrier = rng.random(num_nodes) < carrier_frac

    n_edges = int(round(num_nodes * avg_degree / 2))
    src = rng.integers(0, num_nodes, n_edges)
    dst = rng.integers(0, num_nodes, n_edges)
    local = rng.random(n_edges) < p_in
    for e in np.nonzero(local)[0]:
        pool = members[community[src[e]]]
        dst[e] = pool[rng.integers(pool.size)]
    g = from_edges(num_nodes, np.stack([src, dst], axis=1))

    filler = np.array([f"w{i}" for i in range(filler_size)])
    texts = []
    cue_counts = np.zeros((num_nodes, num_classes), dtype=np.int64)
    for v in range(num_nodes):
        words = list(filler[rng.integers(0, filler_size, rng.integers(min_words, max_words + 1))])
        if is_carrier[v]:
            for pos in rng.choice(len(words), size=min(cues_per_carrier, len(words)), replace=False):
                words[pos] = cue_word(community[v])
            cue_counts[v, community[v]] = min(cues_per_carrier, len(words))
        texts.append(" ".join(words))

    labels = neighborhood_labels(g, cue_counts, is_carrier)
    return TextGraph(g.indptr, g.indices, tuple(texts), tuple(labels), num_classes, g.dropped_self_loops)
