"""Placeholder packing, per-parent concatenation, and rearrange-and-trim.

Functions accept numpy arrays or torch tensors. Summary blocks are usually
tensors that carry gradients, so every write goes through indexing that
autograd can follow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
import torch

from .sampler import Hierarchy
from .tokenizer import PAD_ID, TokenTable


class SlotCollisionError(RuntimeError):
    pass


def _zeros(like, shape, dtype=None):
    if isinstance(like, torch.Tensor):
        return like.new_zeros(shape, dtype=dtype)
    return np.zeros(shape, dtype=dtype or like.dtype)


def _index(like, idx):
    if isinstance(like, torch.Tensor):
        return torch.as_tensor(idx, dtype=torch.long, device=like.device)
    return idx


@dataclass
class PackedLevel:
    token_block: np.ndarray      # [P, n, t]
    token_mask: np.ndarray       # [P, n, t]
    summary_block: Any           # [P, n, k, d]
    summary_mask: Any            # [P, n]


@dataclass
class CompactBatch:
    rows: Any                    # [P, W]
    masks: Any                   # [P, W]
    summary_prefix: Any          # [P, S, d]
    summary_valid: Any           # [P, S]

    def waste(self) -> float:
        """Fraction of dummy entries among token and summary slots."""
        total = int(np.prod(self.masks.shape)) + int(np.prod(self.summary_valid.shape))
        if total == 0:
            return 0.0
        valid = float(self.masks.sum()) + float(self.summary_valid.sum())
        return 1.0 - valid / total


def pack_level(h: Hierarchy, l: int, toks: TokenTable, child_summaries=None, k: int = 1, d: int = 1) -> PackedLevel:
    """Scatter level ``l-1`` occurrences into ``[|level l|, n_l, ...]`` placeholders.

    ``child_summaries`` is ``None`` for ``l == 1``; otherwise a ``[|level l-1|, k, d]``
    array aligned with ``h.levels[l-1]``. With no summaries, a zero block of
    shape ``[P, n_l, k, d]`` is produced and marked invalid.
    """
    if not 1 <= l <= h.depth:
        raise ValueError(f"level must be in 1..{h.depth}")
    if (child_summaries is None) != (l == 1):
        raise ValueError("child summaries are required exactly for levels above 1")
    n = h.fanouts[l - 1]
    n_parents = h.levels[l].size
    children = h.levels[l - 1]
    parent, slot = h.parents[l - 1], h.slots[l - 1]

    flat = parent * n + slot
    if np.unique(flat).size != flat.size or (slot >= n).any():
        raise SlotCollisionError(f"slot collision at level {l}")

    t = toks.t
    token_block = np.full((n_parents, n, t), PAD_ID, dtype=toks.ids.dtype)
    token_mask = np.zeros((n_parents, n, t), dtype=toks.mask.dtype)
    token_block[parent, slot] = toks.ids[children]
    token_mask[parent, slot] = toks.mask[children]

    if child_summaries is None:
        summary_block = np.zeros((n_parents, n, k, d), dtype=np.float32)
        summary_mask = np.zeros((n_parents, n), dtype=np.int64)
    else:
        k, d = child_summaries.shape[1:]
        summary_block = _zeros(child_summaries, (n_parents, n, k, d))
        summary_block[_index(summary_block, parent), _index(summary_block, slot)] = child_summaries
        summary_mask = np.zeros((n_parents, n), dtype=np.int64)
        summary_mask[parent, slot] = 1
    return PackedLevel(token_block, token_mask, summary_block, summary_mask)


def concat_rows(p: PackedLevel) -> CompactBatch:
    """One row per parent: slot token sequences joined in slot order; likewise summaries."""
    n_parents, n, t = p.token_block.shape
    k, d = p.summary_block.shape[2:]
    rows = p.token_block.reshape(n_parents, n * t)
    masks = p.token_mask.reshape(n_parents, n * t)
    prefix = p.summary_block.reshape(n_parents, n * k, d)
    valid = np.repeat(p.summary_mask, k, axis=1)
    return CompactBatch(rows, masks, prefix, valid)


def rearrange_and_trim(rows, masks):
    """Left-justify valid entries of each row and cut the width to the longest row.

    ``rows`` may have trailing feature dims (``[R, W, ...]``); ``masks`` is ``[R, W]``.
    Dummy entries become zeros.
    """
    is_torch = isinstance(masks, torch.Tensor)
    m = masks.detach().cpu().numpy() if is_torch else np.asarray(masks)
    m = m.astype(bool)
    counts = m.sum(axis=1)
    width = int(counts.max()) if counts.size else 0
    r_idx, w_idx = np.nonzero(m)
    dest = (np.cumsum(m, axis=1) - 1)[r_idx, w_idx]
    out_shape = (m.shape[0], width) + tuple(rows.shape[2:])
    out = _zeros(rows, out_shape)
    out_mask = _zeros(masks, (m.shape[0], width))
    if r_idx.size:
        out[_index(out, r_idx), _index(out, dest)] = rows[_index(rows, r_idx), _index(rows, w_idx)]
        out_mask[_index(out_mask, r_idx), _index(out_mask, dest)] = 1
    return out, out_mask


def compact(batch: CompactBatch) -> CompactBatch:
    """Rearrange-and-trim both the token rows and the summary prefix."""
    rows, masks = rearrange_and_trim(batch.rows, batch.masks)
    prefix, valid = rearrange_and_trim(batch.summary_prefix, batch.summary_valid)
    return CompactBatch(rows, masks, prefix, valid)
