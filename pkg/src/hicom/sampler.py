"""Fanout-bounded neighbor sampling that builds the compression hierarchy.

Level ``L`` holds the targets; level ``l-1`` holds up to ``fanouts[l-1]``
children for every occurrence in level ``l``. Randomness is counter-based:
each occurrence carries a 64-bit key derived from ``(seed, root id, slot
path)`` and a neighbor's priority is a hash of that key and the neighbor id.
Children are the lowest-priority neighbors, in priority order. Sampling a
target therefore does not depend on which other targets share its batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import TextGraph

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


class InvalidFanoutError(ValueError):
    pass


def _splitmix(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64) + _GOLDEN
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def _mix(a, b) -> np.ndarray:
    return _splitmix(np.asarray(a, dtype=np.uint64) ^ _splitmix(b))


def root_keys(seed: int, targets: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return _mix(_splitmix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)), np.asarray(targets, dtype=np.uint64))


@dataclass
class Hierarchy:
    fanouts: tuple[int, ...]
    levels: list[np.ndarray]      # levels[l]: node ids of occurrences at level l
    parents: list[np.ndarray]     # parents[l]: index into levels[l+1], for l < L
    slots: list[np.ndarray]       # slots[l]: slot under that parent, < fanouts[l]
    keys: list[np.ndarray]        # per-occurrence sampling keys

    @property
    def depth(self) -> int:
        return len(self.fanouts)

    @property
    def targets(self) -> np.ndarray:
        return self.levels[self.depth]

    def to_json(self) -> dict:
        return {
            "fanouts": list(self.fanouts),
            "levels": {str(l): nodes.tolist() for l, nodes in enumerate(self.levels)},
            "parent_slots": {str(l): [[int(p), int(s)] for p, s in zip(self.parents[l], self.slots[l])]
                             for l in range(self.depth)},
        }

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, indent=1)


def sample_children(g: TextGraph, nodes: np.ndarray, keys: np.ndarray, fanout: int):
    """Sample up to ``fanout`` distinct neighbors for each occurrence.

    Returns ``(children, parent_index, slot, child_keys)``.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    starts = g.indptr[nodes]
    deg = g.indptr[nodes + 1] - starts
    total = int(deg.sum())
    if total == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty, np.zeros(0, dtype=np.uint64)
    par = np.repeat(np.arange(nodes.size), deg)
    group_start = np.repeat(np.cumsum(deg) - deg, deg)
    offs = np.arange(total) - group_start
    nbr = g.indices[np.repeat(starts, deg) + offs]
    with np.errstate(over="ignore"):
        prio = _mix(keys[par], nbr.astype(np.uint64))
    order = np.lexsort((nbr, prio, par))  # nbr breaks hash ties deterministically
    keep = offs < fanout  # rank within each parent group after sorting
    children = nbr[order][keep]
    parent = par[order][keep]
    slot = offs[keep]
    with np.errstate(over="ignore"):
        child_keys = _mix(keys[parent], slot.astype(np.uint64) + np.uint64(1))
    return children, parent, slot, child_keys


def build_hierarchy(g: TextGraph, targets: Sequence[int], fanouts: Sequence[int], seed: int) -> Hierarchy:
    fanouts = tuple(int(n) for n in fanouts)
    if not fanouts:
        raise InvalidFanoutError("need at least one level")
    if any(n < 1 for n in fanouts):
        raise InvalidFanoutError(f"fanouts must be positive, got {list(fanouts)}")
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size == 0:
        raise ValueError("targets must be non-empty")
    depth = len(fanouts)
    levels: list = [None] * (depth + 1)
    parents: list = [None] * depth
    slots: list = [None] * depth
    keys: list = [None] * (depth + 1)
    levels[depth] = targets
    keys[depth] = root_keys(seed, targets)
    for l in range(depth, 0, -1):
        children, parent, slot, child_keys = sample_children(g, levels[l], keys[l], fanouts[l - 1])
        levels[l - 1], parents[l - 1], slots[l - 1], keys[l - 1] = children, parent, slot, child_keys
    return Hierarchy(fanouts, levels, parents, slots, keys)
