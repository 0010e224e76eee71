"""Runtime measurements against the quadratic attention cost model.

Attention dominates the cost of a forward pass, so a single sequence of
length ``n`` costs ``n**2`` units and ``t`` separately processed segments
cost ``sum(n_i**2)``. Wall times are medians over repeated trials; the
predicted-cost, token and waste columns are deterministic.
"""

from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import asdict, dataclass, replace

import numpy as np
import torch

from .model import Compressor, ModelConfig
from .synth import make_synthetic_graph
from .tokenizer import build_vocab, pre_tokenize
from .trainer import TrainConfig, classification_loss

# Attention-dominated regime: long texts, narrow model. Texts fill half of
# ``t``, so every packed row is 50% dummy tokens before trimming.
BENCH_MODEL = {"d": 32, "layers": 2, "heads": 2, "k": 4, "max_len": 1024, "dropout": 0.0}
BENCH_GRAPH = {"num_nodes": 300, "avg_degree": 6.0, "min_words": 128, "max_words": 128}
BENCH_T = 256
BENCH_TARGETS = 32
BENCH_BATCH = 16


def model_cost(segmentation) -> int:
    """Quadratic cost of processing each segment on its own: ``sum(n_i**2)``."""
    seg = [int(n) for n in segmentation]
    if not seg:
        raise ValueError("segmentation must be non-empty")
    if any(n < 1 for n in seg):
        raise ValueError("segment lengths must be >= 1")
    return sum(n * n for n in seg)


class CostMeter:
    """Accumulates sequence statistics from every transformer pass."""

    def __init__(self):
        self.cost = 0
        self.positions = 0
        self.valid = 0
        self.packed_total = 0
        self.packed_valid = 0

    def record(self, valid: torch.Tensor) -> None:
        B, S = valid.shape
        self.cost += B * S * S
        self.positions += B * S
        self.valid += int(valid.sum())

    def record_packed(self, batch) -> None:
        self.packed_total += int(np.prod(batch.masks.shape)) + int(np.prod(batch.summary_valid.shape))
        self.packed_valid += int(batch.masks.sum()) + int(batch.summary_valid.sum())

    @property
    def waste_after(self) -> float:
        return 1.0 - self.valid / self.positions if self.positions else 0.0

    @property
    def waste_before(self) -> float:
        if not self.packed_total:
            return self.waste_after
        return 1.0 - self.packed_valid / self.packed_total


def _median_time(fn, trials: int) -> float:
    times = []
    for _ in range(trials):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def segmentation_timing(total: int = 1024, segments: int = 8, trials: int = 5, seed: int = 0,
                        model_kw=None) -> dict:
    """Forward+backward time of one length-``total`` row vs ``segments`` equal rows."""
    torch.manual_seed(seed)
    cfg = ModelConfig(vocab_size=256, seed=seed, **{**BENCH_MODEL, "max_len": total + 8, **(model_kw or {})})
    model = Compressor(cfg)
    rng = np.random.default_rng(seed)
    ids = rng.integers(2, cfg.vocab_size, total)
    flat_ids, flat_mask = ids[None], np.ones((1, total), dtype=np.int64)
    seg_ids = ids.reshape(segments, total // segments)
    seg_mask = np.ones_like(seg_ids)

    def step(i, m):
        model.zero_grad()
        model.compress(None, None, i, m).sum().backward()

    step(flat_ids, flat_mask)  # warm-up
    step(seg_ids, seg_mask)
    t_flat = _median_time(lambda: step(flat_ids, flat_mask), trials)
    t_seg = _median_time(lambda: step(seg_ids, seg_mask), trials)
    flat_len, seg_len = total + cfg.k, total // segments + cfg.k
    return {
        "flat_ms": 1000 * t_flat,
        "segmented_ms": 1000 * t_seg,
        "measured_ratio": t_seg / t_flat,
        "predicted_ratio": model_cost([seg_len] * segments) / model_cost([flat_len]),
    }


@dataclass
class BenchRow:
    config: str
    label: str
    time_ms: float
    predicted_cost: int
    tokens: int
    waste_before: float
    waste_after: float


def bench_setup(seed: int = 0):
    g = make_synthetic_graph(seed=seed, **BENCH_GRAPH)
    vocab = build_vocab(g.texts)
    toks = pre_tokenize(g, vocab, BENCH_T)
    model = Compressor(ModelConfig(vocab_size=vocab.size, seed=seed, **BENCH_MODEL))
    targets = np.random.default_rng(seed).choice(g.num_nodes, BENCH_TARGETS, replace=False)
    return g, toks, model, targets


def _train_config(entry: dict, seed: int) -> TrainConfig:
    mode = entry["mode"]
    if mode == "nconcat":
        n = int(entry["neighbors"])
        # one hop of n neighbors, input limit wide enough to keep all of them
        return TrainConfig(mode=mode, fanouts=(n,), input_limit=(n + 1) * BENCH_T, seed=seed,
                           trim=entry.get("trim", True))
    return TrainConfig(mode=mode, fanouts=tuple(entry.get("fanouts", ())), input_limit=BENCH_T,
                       seed=seed, trim=entry.get("trim", True))


def config_label(entry: dict) -> str:
    if entry["mode"] == "nconcat":
        label = f"nconcat-{entry['neighbors']}"
    else:
        label = entry["mode"] + "-" + "-".join(str(n) for n in entry.get("fanouts", ()))
    if not entry.get("trim", True):
        label += "-notrim"
    return label


def epoch_pass(model, g, toks, targets, cfg: TrainConfig, batch: int = BENCH_BATCH) -> None:
    """One forward+backward sweep over ``targets``."""
    for i in range(0, len(targets), batch):
        model.zero_grad()
        classification_loss(model, _head_for(model, g), g, toks, targets[i:i + batch], cfg, seed=cfg.seed + i).backward()


_HEADS: dict = {}


def _head_for(model, g):
    key = (id(model), g.num_classes)
    if key not in _HEADS:
        _HEADS[key] = torch.nn.Linear(model.d, g.num_classes)
    return _HEADS[key]


def runtime_bench(configs, trials: int = 5, seed: int = 0, setup=None) -> list[BenchRow]:
    """Median epoch time per configuration on a fixed graph and model."""
    g, toks, model, targets = setup or bench_setup(seed)
    model.train()
    rows = []
    for entry in configs:
        cfg = _train_config(entry, seed)
        meter = CostMeter()
        model.meter = meter
        epoch_pass(model, g, toks, targets, cfg)  # warm-up, also fills the meter
        model.meter = None
        elapsed = _median_time(lambda: epoch_pass(model, g, toks, targets, cfg), trials)
        rows.append(BenchRow(json.dumps(entry, sort_keys=True), config_label(entry), 1000 * elapsed,
                             meter.cost, meter.positions, meter.waste_before, meter.waste_after))
    return rows


def write_report(rows: list[BenchRow], csv_path, json_path=None) -> None:
    fields = ["config", "label", "time_ms", "predicted_cost", "waste_before", "waste_after"]
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(asdict(row))
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as f:
            json.dump([asdict(r) for r in rows], f, indent=2)


DEFAULT_CONFIGS = [
    {"mode": "nconcat", "neighbors": 4},
    {"mode": "hicom", "fanouts": [2, 2]},
    {"mode": "hicom", "fanouts": [2, 2], "trim": False},
    {"mode": "hicom", "fanouts": [4, 4]},
]
