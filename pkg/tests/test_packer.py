import numpy as np
import pytest
import torch

from hicom.graph import from_edges
from hicom.packer import CompactBatch, compact, concat_rows, pack_level, rearrange_and_trim
from hicom.sampler import build_hierarchy
from hicom.tokenizer import TokenTable


def table(lengths, t, seed=0):
    rng = np.random.default_rng(seed)
    ids = np.zeros((len(lengths), t), dtype=np.int64)
    mask = np.zeros_like(ids)
    for i, n in enumerate(lengths):
        ids[i, :n] = rng.integers(2, 50, n)
        mask[i, :n] = 1
    return TokenTable(ids, mask)


def stable_filter(row, mask):
    return [x for x, m in zip(row, mask) if m]


def test_pack_two_parents():
    # parent 0 -> {2,3,4}; parent 1 -> {5,6}
    g = from_edges(7, [(0, 2), (0, 3), (0, 4), (1, 5), (1, 6)])
    toks = table([4] * 7, 4)
    h = build_hierarchy(g, [0, 1], [3], seed=0)
    p = pack_level(h, 1, toks)
    assert p.token_block.shape == (2, 3, 4)
    assert p.token_mask[1, 2].sum() == 0 and (p.token_block[1, 2] == 0).all()
    for i in range(2):  # naive per-parent loop
        for c, pa, s in zip(h.levels[0], h.parents[0], h.slots[0]):
            if pa == i:
                assert np.array_equal(p.token_block[i, s], toks.ids[c])
    assert not p.summary_block.any() and not p.summary_mask.any()
    assert p.summary_block.shape == (2, 3, 1, 1)


def test_parent_without_children():
    g = from_edges(3, [(0, 1)])
    h = build_hierarchy(g, [0, 2], [2], seed=0)
    p = pack_level(h, 1, table([3, 3, 3], 3))
    assert not p.token_mask[1].any() and not p.token_block[1].any()


def test_summaries_scattered_by_slot():
    g = from_edges(5, [(0, 1), (0, 2), (1, 3), (2, 4)])
    h = build_hierarchy(g, [0], [1, 2], seed=0)
    child = torch.arange(h.levels[1].size * 2 * 3, dtype=torch.float32).reshape(-1, 2, 3)
    p = pack_level(h, 2, table([2] * 5, 2), child)
    for j, s in enumerate(h.slots[1]):
        assert torch.equal(p.summary_block[h.parents[1][j], s], child[j])
    assert p.summary_mask.sum() == h.levels[1].size


def test_concat_example():
    from hicom.packer import PackedLevel
    a, b, c = 7, 8, 9
    block = np.array([[[a, b, 0], [c, 0, 0]]])
    mask = np.array([[[1, 1, 0], [1, 0, 0]]])
    batch = concat_rows(PackedLevel(block, mask, np.zeros((1, 2, 1, 1)), np.zeros((1, 2))))
    assert batch.rows.tolist() == [[a, b, 0, c, 0, 0]] and batch.masks.tolist() == [[1, 1, 0, 1, 0, 0]]


def test_concat_single_slot_identity():
    from hicom.packer import PackedLevel
    block = np.arange(6).reshape(2, 1, 3)
    batch = concat_rows(PackedLevel(block, np.ones_like(block), np.zeros((2, 1, 1, 1)), np.zeros((2, 1))))
    assert np.array_equal(batch.rows, block[:, 0])


def test_concat_matches_loop():
    from hicom.packer import PackedLevel
    rng = np.random.default_rng(2)
    P, n, t, k, d = 10, 3, 4, 2, 5
    block = rng.integers(0, 9, (P, n, t))
    mask = rng.integers(0, 2, (P, n, t))
    summ = rng.normal(size=(P, n, k, d))
    smask = rng.integers(0, 2, (P, n))
    batch = concat_rows(PackedLevel(block, mask, summ, smask))
    for i in range(P):
        assert batch.rows[i].tolist() == sum((block[i, s].tolist() for s in range(n)), [])
        assert np.array_equal(batch.summary_prefix[i], np.concatenate([summ[i, s] for s in range(n)]))
        assert batch.summary_valid[i].tolist() == sum(([int(smask[i, s])] * k for s in range(n)), [])


def test_trim_two_by_nine():
    rows = np.arange(18).reshape(2, 9)
    masks = np.array([[1, 1, 1, 0, 1, 1, 1, 1, 0], [1, 1, 0, 0, 1, 1, 1, 1, 1]])
    out, m = rearrange_and_trim(rows, masks)
    assert out.shape == (2, 7) and m.all()
    assert out[0].tolist() == stable_filter(rows[0], masks[0])


def test_trim_identity_when_all_valid():
    rows = np.arange(12).reshape(3, 4)
    out, m = rearrange_and_trim(rows, np.ones_like(rows))
    assert np.array_equal(out, rows) and m.all()


def test_trim_uneven_rows():
    rng = np.random.default_rng(0)
    rows = rng.integers(1, 100, (2, 8))
    masks = np.zeros((2, 8), dtype=int)
    masks[0, [1, 4, 6]] = 1
    masks[1, [0, 2, 3, 5, 7]] = 1
    out, m = rearrange_and_trim(rows, masks)
    assert out.shape == (2, 5)
    for i in range(2):
        assert out[i, :m[i].sum()].tolist() == stable_filter(rows[i], masks[i])
        assert (out[i, m[i].sum():] == 0).all()


def test_trim_trailing_dims_and_grad():
    x = torch.randn(3, 5, 2, requires_grad=True)
    masks = torch.tensor([[1, 0, 1, 0, 0], [0, 0, 0, 0, 1], [1, 1, 1, 0, 1]])
    out, m = rearrange_and_trim(x, masks)
    assert out.shape == (3, 4, 2) and m.sum() == masks.sum()
    out.sum().backward()
    assert torch.equal(x.grad[..., 0], masks.float())


def test_all_masked_gives_zero_width():
    out, m = rearrange_and_trim(np.ones((2, 3)), np.zeros((2, 3)))
    assert out.shape == (2, 0)


def test_compact_waste():
    batch = CompactBatch(np.ones((2, 4)), np.array([[1, 1, 0, 0], [1, 0, 0, 0]]),
                         np.zeros((2, 2, 3)), np.array([[1, 0], [0, 0]]))
    assert batch.waste() == pytest.approx(1 - 4 / 12)
    c = compact(batch)
    assert c.rows.shape == (2, 2) and c.summary_prefix.shape == (2, 1, 3)
