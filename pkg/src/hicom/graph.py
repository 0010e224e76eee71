"""Text-rich graph storage: ingest, k-core extraction, statistics and splits.

Graphs are undirected. Adjacency is kept in CSR form (``indptr``/``indices``)
with each neighbor list sorted and free of duplicates and self-loops.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """An input file line could not be parsed."""

    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


class UnknownNodeError(KeyError):
    """A record refers to a node id that the graph does not contain."""


class EmptyGraphError(ValueError):
    pass


class EmptySplitError(ValueError):
    pass


@dataclass(frozen=True)
class TextGraph:
    indptr: np.ndarray
    indices: np.ndarray
    texts: tuple[str, ...]
    labels: tuple[frozenset[int], ...]
    num_classes: int
    dropped_self_loops: int = field(default=0, compare=False)

    @property
    def num_nodes(self) -> int:
        return len(self.texts)

    @property
    def num_edges(self) -> int:
        """Undirected edge count."""
        return int(self.indices.size // 2)

    def neighbors(self, node: int) -> np.ndarray:
        return self.indices[self.indptr[node]:self.indptr[node + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edge_list(self) -> np.ndarray:
        """Each undirected edge once as an ``[E, 2]`` array with ``src < dst``."""
        src = np.repeat(np.arange(self.num_nodes), self.degrees())
        keep = src < self.indices
        return np.stack([src[keep], self.indices[keep]], axis=1)

    def labeled_nodes(self) -> np.ndarray:
        return np.array([i for i, ys in enumerate(self.labels) if ys], dtype=np.int64)

    def is_symmetric(self) -> bool:
        pairs = set(zip(np.repeat(np.arange(self.num_nodes), self.degrees()).tolist(),
                        self.indices.tolist()))
        return all((b, a) in pairs for a, b in pairs)


def from_edges(num_nodes: int, edges, texts: Sequence[str] | None = None,
               labels: Sequence[Iterable[int]] | None = None,
               num_classes: int | None = None) -> TextGraph:
    """Build a graph from an edge array, symmetrizing and dropping loops/duplicates."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
        raise UnknownNodeError(f"edge endpoint outside 0..{num_nodes - 1}")
    loops = edges[:, 0] == edges[:, 1]
    n_loops = int(loops.sum())
    edges = edges[~loops]
    both = np.concatenate([edges, edges[:, ::-1]])
    if both.size:
        both = np.unique(both, axis=0)  # lexicographic: sorts neighbor lists too
    counts = np.bincount(both[:, 0], minlength=num_nodes) if both.size else np.zeros(num_nodes, np.int64)
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = both[:, 1].copy() if both.size else np.zeros(0, dtype=np.int64)

    if texts is None:
        texts = [""] * num_nodes
    if labels is None:
        labels = [()] * num_nodes
    labels = tuple(frozenset(int(y) for y in ys) for ys in labels)
    if num_classes is None:
        num_classes = max((max(ys) + 1 for ys in labels if ys), default=0)
    return TextGraph(indptr, indices, tuple(texts), labels, int(num_classes), n_loops)


def _read_jsonl(path, required: tuple[str, ...]):
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise GraphFormatError(path, lineno, f"invalid JSON ({e.msg})") from None
            if not isinstance(rec, dict) or any(k not in rec for k in required):
                raise GraphFormatError(path, lineno, f"expected object with keys {required}")
            if not isinstance(rec["id"], int) or isinstance(rec["id"], bool):
                raise GraphFormatError(path, lineno, "id must be an integer")
            yield lineno, rec


def read_edges(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise GraphFormatError(path, lineno, "expected 'src<TAB>dst'")
            try:
                rows.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise GraphFormatError(path, lineno, "node ids must be integers") from None
    return np.array(rows, dtype=np.int64).reshape(-1, 2)


def ingest_graph(edge_path, text_path, label_path, num_classes: int | None = None) -> TextGraph:
    """Load a graph from an edge TSV plus JSON-lines text and label files.

    The node set is defined by the text file, whose ids must be exactly
    ``0..N-1``. Nodes without a label record get an empty label set.
    """
    texts: dict[int, str] = {}
    for lineno, rec in _read_jsonl(text_path, ("id", "text")):
        if not isinstance(rec["text"], str):
            raise GraphFormatError(text_path, lineno, "text must be a string")
        if rec["id"] in texts:
            raise GraphFormatError(text_path, lineno, f"duplicate node id {rec['id']}")
        texts[rec["id"]] = rec["text"]
    n = len(texts)
    if set(texts) != set(range(n)):
        raise GraphFormatError(text_path, 0, "node ids must be contiguous 0..N-1")

    labels: list[set[int]] = [set() for _ in range(n)]
    for lineno, rec in _read_jsonl(label_path, ("id", "labels")):
        if not 0 <= rec["id"] < n:
            raise UnknownNodeError(f"{label_path}:{lineno}: unknown node id {rec['id']}")
        ys = rec["labels"]
        if not isinstance(ys, list) or not all(isinstance(y, int) and y >= 0 for y in ys):
            raise GraphFormatError(label_path, lineno, "labels must be a list of non-negative ints")
        labels[rec["id"]].update(ys)

    edges = read_edges(edge_path)
    bad = (edges < 0) | (edges >= n)
    if bad.any():
        row = int(np.nonzero(bad.any(axis=1))[0][0])
        raise UnknownNodeError(f"{edge_path}: edge {tuple(edges[row])} refers to unknown node id")
    g = from_edges(n, edges, [texts[i] for i in range(n)], labels, num_classes)
    if g.dropped_self_loops:
        logger.warning("dropped %d self-loop(s) from %s", g.dropped_self_loops, edge_path)
    return g


def write_graph(g: TextGraph, edge_path, text_path, label_path) -> None:
    with open(edge_path, "w", encoding="utf-8") as f:
        for a, b in g.edge_list().tolist():
            f.write(f"{a}\t{b}\n")
    with open(text_path, "w", encoding="utf-8") as f:
        for i, text in enumerate(g.texts):
            f.write(json.dumps({"id": i, "text": text}) + "\n")
    with open(label_path, "w", encoding="utf-8") as f:
        for i, ys in enumerate(g.labels):
            f.write(json.dumps({"id": i, "labels": sorted(ys)}) + "\n")


def induced_subgraph(g: TextGraph, nodes: np.ndarray) -> TextGraph:
    nodes = np.asarray(nodes, dtype=np.int64)
    remap = np.full(g.num_nodes, -1, dtype=np.int64)
    remap[nodes] = np.arange(nodes.size)
    edges = g.edge_list()
    if edges.size:
        edges = remap[edges]
        edges = edges[(edges >= 0).all(axis=1)]
    return from_edges(nodes.size, edges,
                      [g.texts[i] for i in nodes], [g.labels[i] for i in nodes],
                      g.num_classes)


def k_core(g: TextGraph, k: int) -> tuple[TextGraph, np.ndarray]:
    """Maximal induced subgraph with minimum degree ``k``.

    Returns the re-indexed core and the ``new -> old`` id mapping.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    deg = g.degrees().copy()
    alive = np.ones(g.num_nodes, dtype=bool)
    queue = deque(np.nonzero(deg < k)[0].tolist())
    alive[list(queue)] = False
    while queue:
        v = queue.popleft()
        for u in g.neighbors(v):
            if alive[u]:
                deg[u] -= 1
                if deg[u] < k:
                    alive[u] = False
                    queue.append(int(u))
    keep = np.nonzero(alive)[0]
    return induced_subgraph(g, keep), keep


def write_id_mapping(mapping: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for new, old in enumerate(np.asarray(mapping).tolist()):
            f.write(json.dumps({"new": new, "old": old}) + "\n")


def degree_stats(g: TextGraph, count_tokens: Callable[[str], int] | None = None) -> dict:
    if g.num_nodes == 0:
        raise EmptyGraphError("statistics are undefined for an empty graph")
    if count_tokens is None:
        count_tokens = lambda s: len(s.split())  # noqa: E731
    return {
        "avg_degree": 2.0 * g.num_edges / g.num_nodes,
        "avg_tokens": float(np.mean([count_tokens(t) for t in g.texts])),
    }


@dataclass(frozen=True)
class DatasetSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int

    def sizes(self) -> dict:
        return {"train": int(self.train.size), "val": int(self.val.size), "test": int(self.test.size)}

    def to_json(self) -> dict:
        return {"train": self.train.tolist(), "val": self.val.tolist(),
                "test": self.test.tolist(), "seed": self.seed}

    @classmethod
    def from_json(cls, d: dict) -> "DatasetSplit":
        return cls(*(np.array(d[key], dtype=np.int64) for key in ("train", "val", "test")), int(d["seed"]))


def split_dataset(g: TextGraph, per_class: int = 20, val_size: int = 1000,
                  test_cap: int = 10000, seed: int = 0) -> DatasetSplit:
    """Per-class training quota, then uniform val/test draws from the rest."""
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    labeled = g.labeled_nodes()
    if labeled.size == 0:
        raise EmptySplitError("graph has no labeled nodes")
    rng = np.random.default_rng(seed)
    taken = np.zeros(g.num_nodes, dtype=bool)
    train = []
    for c in range(g.num_classes):
        pool = np.array([i for i in labeled if c in g.labels[i] and not taken[i]], dtype=np.int64)
        if pool.size == 0:
            continue
        pick = rng.choice(pool, size=min(per_class, pool.size), replace=False)
        taken[pick] = True
        train.extend(pick.tolist())
    rest = rng.permutation(labeled[~taken[labeled]])
    val = rest[:val_size]
    test = rest[val_size:val_size + test_cap]
    return DatasetSplit(np.array(train, dtype=np.int64), val, test, seed)
