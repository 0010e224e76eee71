"""Ready-made runs on the synthetic neighborhood-label benchmark."""

from __future__ import annotations

import time
from dataclasses import replace

from .graph import split_dataset
from .model import ModelConfig
from .synth import make_synthetic_graph
from .tokenizer import build_vocab, pre_tokenize
from .trainer import MODES, TrainConfig, evaluate, pretrain, train

# Synthetic texts are exactly 16 words, so a 64-token input limit leaves
# room for the target plus three neighbors in the uncompressed baseline.
SYNTH_T = 16
SYNTH_INPUT_LIMIT = 64
SYNTH_SPLIT = {"per_class": 20, "val_size": 300, "test_cap": 1000}


def synthetic_setup(seed: int = 3, **graph_kw):
    g = make_synthetic_graph(seed=seed, **graph_kw)
    vocab = build_vocab(g.texts)
    toks = pre_tokenize(g, vocab, SYNTH_T)
    split = split_dataset(g, seed=seed, **SYNTH_SPLIT)
    return g, vocab, toks, split


def run_modes(seed: int = 3, modes=MODES, model_kw=None, train_kw=None, log=None) -> dict:
    """Train every mode from one shared pretrained compressor; report test metrics.

    Returns ``{mode: {"test": EvalReport, "val": EvalReport, "seconds": float}}``.
    """
    g, vocab, toks, split = synthetic_setup(seed)
    model_cfg = ModelConfig(vocab_size=vocab.size, **(model_kw or {}))
    base = TrainConfig(seed=seed, input_limit=SYNTH_INPUT_LIMIT, **(train_kw or {}))
    start = time.perf_counter()
    init = pretrain(g, toks, model_cfg, base, log)
    results = {"pretrain_seconds": time.perf_counter() - start}
    for mode in modes:
        cfg = replace(base, mode=mode)
        start = time.perf_counter()
        res = train(g, split, toks, model_cfg, cfg, log=log, init=init)
        test = evaluate(res.model, res.head, g, toks, split.test, cfg, split.sizes())
        results[mode] = {"test": test, "val": res.best_val, "seconds": time.perf_counter() - start}
        if log:
            log(f"{mode}: test macro-F1 {test.f1_macro:.4f} ({results[mode]['seconds']:.0f}s)")
    return results
