"""Level-by-level hierarchical compression, batched and per-node.

``hicom_forward`` is the batched path: placeholders per level, per-parent
concatenation, optional rearrange-and-trim, one compressor call per level.
``hicom_single`` processes one target with plain Python lists and no padding;
it exists as the reference the batched path is checked against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .graph import TextGraph
from .packer import compact, concat_rows, pack_level, rearrange_and_trim
from .sampler import Hierarchy, build_hierarchy
from .tokenizer import TokenTable


@dataclass
class HiComOutput:
    summaries: torch.Tensor                 # [B, k, d], level-L summaries per target
    hierarchy: Hierarchy
    level_summaries: list = field(default_factory=list)  # level_summaries[l-1]: aligned with levels[l]
    waste: list = field(default_factory=list)            # (before, after) dummy ratio per level
    accumulated: torch.Tensor | None = None  # [B, A, d] lower-level summaries then s0
    accumulated_valid: torch.Tensor | None = None


def summary_accumulate(levels):
    """Row-wise concatenation of summary matrices, in the given order."""
    if not levels:
        raise ValueError("need at least one summary matrix")
    widths = {s.shape[-1] for s in levels}
    if len(widths) != 1:
        raise ValueError(f"summary widths differ: {sorted(widths)}")
    if isinstance(levels[0], torch.Tensor):
        return torch.cat(list(levels), dim=-2)
    return np.concatenate(levels, axis=-2)


def _as_prefix(model, block, valid):
    dtype = model.dtype
    if not isinstance(block, torch.Tensor):
        block = torch.as_tensor(block)
    if not isinstance(valid, torch.Tensor):
        valid = torch.as_tensor(valid, dtype=torch.long)
    return block.to(dtype), valid


def root_positions(h: Hierarchy, l: int) -> tuple[np.ndarray, np.ndarray]:
    """For each occurrence at level ``l``: its target index and a flat slot path.

    The slot path enumerates ``prod(fanouts[l:])`` positions per target in
    slot order, so positions are unique within a target.
    """
    pos = np.zeros(h.levels[l].size, dtype=np.int64)
    idx = np.arange(h.levels[l].size)
    stride = 1
    for m in range(l, h.depth):
        pos = pos + h.slots[m][idx] * stride
        stride *= h.fanouts[m]
        idx = h.parents[m][idx]
    return idx, pos


def accumulate_for_targets(h: Hierarchy, level_summaries, k: int, trim: bool = True):
    """Per target: summaries of levels ``1..L-1`` in slot order, then its own ``s0``."""
    B = h.targets.size
    top = level_summaries[-1]
    blocks, valids = [], []
    for l in range(1, h.depth):
        s = level_summaries[l - 1]
        width = int(np.prod(h.fanouts[l:]))
        root, pos = root_positions(h, l)
        block = top.new_zeros((B, width, k, top.shape[-1]))
        block[torch.as_tensor(root), torch.as_tensor(pos)] = s
        valid = np.zeros((B, width), dtype=np.int64)
        valid[root, pos] = 1
        blocks.append(block.reshape(B, width * k, -1))
        valids.append(np.repeat(valid, k, axis=1))
    blocks.append(top)
    valids.append(np.ones((B, k), dtype=np.int64))
    acc = summary_accumulate(blocks)
    valid = torch.as_tensor(np.concatenate(valids, axis=1))
    if trim:
        acc, valid = rearrange_and_trim(acc, valid)
    return acc, valid


def hicom_forward(g: TextGraph, targets, fanouts, toks: TokenTable, model, seed: int = 0,
                  accumulate: bool = False, trim: bool = True, hierarchy: Hierarchy | None = None) -> HiComOutput:
    h = hierarchy if hierarchy is not None else build_hierarchy(g, targets, fanouts, seed)
    k, d = model.k, model.d
    child = None
    out_levels, waste = [], []
    for l in range(1, h.depth + 1):
        batch = concat_rows(pack_level(h, l, toks, child, k=k, d=d))
        before = batch.waste()
        meter = getattr(model, "meter", None)
        if meter is not None:
            meter.record_packed(batch)
        prefix, valid = _as_prefix(model, batch.summary_prefix, batch.summary_valid)
        batch.summary_prefix, batch.summary_valid = prefix, valid
        if trim:
            batch = compact(batch)
        waste.append((before, batch.waste()))
        if h.levels[l].size == 0:
            s = prefix.new_zeros((0, k, d))
        else:
            s = model.compress(batch.summary_prefix, batch.summary_valid, batch.rows, batch.masks)
        out_levels.append(s)
        child = s
    out = HiComOutput(out_levels[-1], h, out_levels, waste)
    if accumulate:
        out.accumulated, out.accumulated_valid = accumulate_for_targets(h, out_levels, k, trim=trim)
    return out


def hicom_single(g: TextGraph, target: int, fanouts, toks: TokenTable, model, seed: int = 0):
    """One target, no placeholders: returns ``(s_target, accumulated)``.

    ``accumulated`` lists the lower-level summaries level by level in slot
    order followed by ``s_target``, each as a ``[k, d]`` tensor.
    """
    h = build_hierarchy(g, [target], fanouts, seed)
    summaries: list[list] = [[None] * h.levels[l].size for l in range(h.depth + 1)]
    for l in range(1, h.depth + 1):
        for i in range(h.levels[l].size):
            kids = [j for j in np.argsort(h.slots[l - 1], kind="stable") if h.parents[l - 1][j] == i]
            tokens = [toks.ids[h.levels[l - 1][j]][toks.mask[h.levels[l - 1][j]] == 1] for j in kids]
            ids = np.concatenate(tokens)[None] if tokens else np.zeros((1, 0), dtype=np.int64)
            prefix = prefix_valid = None
            if l > 1 and kids:
                prefix = torch.cat([summaries[l - 1][j] for j in kids])[None]
                prefix_valid = torch.ones(prefix.shape[:2], dtype=torch.long)
            summaries[l][i] = model.compress(prefix, prefix_valid, ids, np.ones_like(ids))[0]
    accumulated = []
    for l in range(1, h.depth):
        root, pos = root_positions(h, l)
        accumulated.extend(summaries[l][j] for j in np.argsort(pos, kind="stable"))
    accumulated.append(summaries[h.depth][0])
    return summaries[h.depth][0], accumulated
