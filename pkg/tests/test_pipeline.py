import numpy as np
import pytest
import torch

from conftest import random_graph
from hicom.graph import from_edges
from hicom.model import Compressor, MeanPoolCompressor, ModelConfig
from hicom.pipeline import hicom_forward, hicom_single, summary_accumulate
from hicom.tokenizer import TokenTable, build_vocab, pre_tokenize


def model(**kw):
    cfg = dict(vocab_size=40, d=16, layers=1, heads=2, k=2, max_len=256, dropout=0.0, seed=0)
    cfg.update(kw)
    m = Compressor(ModelConfig(**cfg))
    m.eval()
    return m


def toks_for(g, t=6):
    return pre_tokenize(g, build_vocab(g.texts, max_size=40), t)


def row(toks, v):
    return toks.ids[v][toks.mask[v] == 1]


def test_figure_instance():
    g = random_graph(10, 0.0, 0)
    g = from_edges(10, [(0, 1), (0, 2), (1, 4), (1, 8), (1, 9), (2, 5), (2, 6)], g.texts)
    toks, m = toks_for(g), model()
    out = hicom_forward(g, [0], [3, 2], toks, m, seed=0)
    h = out.hierarchy

    def comp(prefix, nodes):
        ids = np.concatenate([row(toks, v) for v in nodes])[None]
        pv = None if prefix is None else torch.ones(1, prefix.shape[0])
        return m.compress(None if prefix is None else prefix[None], pv, ids, np.ones_like(ids))[0]

    level1 = [int(v) for v in h.levels[1][np.argsort(h.slots[1])]]
    s = {}
    for v in level1:
        i = int(np.nonzero(h.levels[1] == v)[0][0])
        kids = h.levels[0][h.parents[0] == i][np.argsort(h.slots[0][h.parents[0] == i])]
        s[v] = comp(None, kids)
    s0 = comp(torch.cat([s[v] for v in level1]), level1)
    assert torch.allclose(out.summaries[0], s0, atol=1e-5)


def test_single_level_single_neighbor():
    g = from_edges(2, [(0, 1)], ["a b", "c d e"])
    toks, m = toks_for(g), model()
    out = hicom_forward(g, [0], [1], toks, m)
    ids = row(toks, 1)[None]
    assert torch.allclose(out.summaries, m.compress(None, None, ids, np.ones_like(ids)), atol=1e-6)


@pytest.mark.parametrize("trim", [True, False])
def test_batched_equals_single(trim):
    g = random_graph(40, 0.12, 11)
    toks, m = toks_for(g), model()
    targets = np.arange(16)
    out = hicom_forward(g, targets, [2, 3], toks, m, seed=4, accumulate=True, trim=trim)
    for b, t in enumerate(targets):
        s, acc = hicom_single(g, int(t), [2, 3], toks, m, seed=4)
        assert torch.allclose(out.summaries[b], s, atol=1e-5)
        valid = out.accumulated_valid[b].bool()
        assert torch.allclose(out.accumulated[b][valid], torch.cat(acc), atol=1e-5)


def test_mean_pool_through_pipeline():
    g = from_edges(3, [(0, 1), (0, 2)], ["x", "a b", "c"])
    toks = toks_for(g, 3)
    emb = torch.randn(40, 4, dtype=torch.float64)
    out = hicom_forward(g, [0], [2], toks, MeanPoolCompressor(emb, 2))
    expected = emb[np.concatenate([row(toks, 1), row(toks, 2)])].mean(0)
    assert torch.allclose(out.summaries[0, 0], expected)


def test_waste_recorded_per_level():
    g = random_graph(30, 0.15, 2)
    out = hicom_forward(g, np.arange(8), [2, 2], toks_for(g, 8), model(), trim=True)
    assert len(out.waste) == 2
    assert all(0 <= after <= before <= 1 for before, after in out.waste)


def test_accumulate_order():
    s1, s2, s0 = (torch.full((2, 3), float(i)) for i in (1, 2, 0))
    out = summary_accumulate([s1, s2, s0])
    assert out.shape == (6, 3) and out[:, 0].tolist() == [1, 1, 2, 2, 0, 0]
    assert torch.equal(summary_accumulate([s1]), s1)


def test_accumulate_permutation():
    blocks = [np.full((2, 4), i) for i in range(4)]
    perm = [2, 0, 3, 1]
    out = summary_accumulate([blocks[i] for i in perm])
    for j, i in enumerate(perm):
        assert (out[2 * j:2 * j + 2] == i).all()


def test_accumulate_width_mismatch():
    with pytest.raises(ValueError):
        summary_accumulate([np.zeros((2, 3)), np.zeros((2, 4))])
