"""Node classification on top of the compressor: modes, training, F1 evaluation."""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .graph import DatasetSplit, TextGraph
from .model import Compressor, ConfigError, ModelConfig, load_checkpoint, save_checkpoint
from .packer import rearrange_and_trim
from .pipeline import hicom_forward, root_positions
from .sampler import _mix, build_hierarchy
from .tokenizer import TokenTable

logger = logging.getLogger(__name__)

MODES = ("hicom", "hicom_no_hierarchy", "hicom_no_accumulation", "nconcat", "target_only")


class TrainingDivergedError(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at step {step}")
        self.step = step


class EmptyEvalError(ValueError):
    pass


@dataclass
class TrainConfig:
    mode: str = "hicom"
    fanouts: tuple = (4, 4)
    epochs: int = 30
    batch_size: int = 16
    lr: float = 1e-3
    weight_decay: float = 0.0
    pretrain_epochs: int = 3
    pretrain_lr: float = 1e-3
    pretrain_batch_size: int = 32
    threshold: float = 0.5
    seed: int = 0
    input_limit: int = 128
    trim: bool = True
    eval_batch_size: int = 128

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        self.fanouts = tuple(int(n) for n in self.fanouts or ())
        if self.mode != "target_only" and not self.fanouts:
            raise ConfigError(f"mode {self.mode!r} requires fanouts")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie in (0, 1)")


def _targets_block(toks: TokenTable, targets):
    targets = np.asarray(targets, dtype=np.int64)
    return toks.ids[targets], toks.mask[targets]


def _repeat_valid(valid: torch.Tensor, k: int) -> torch.Tensor:
    return valid.long()[:, None].expand(-1, k)


def flat_forward(g, targets, fanouts, toks, model, seed, trim=True):
    """Shuffle the sampled occurrences of each target into one sequence and
    compress it chunk by chunk of ``fanouts[0]`` nodes. Each chunk sees the
    summaries of all earlier chunks as its prefix.

    Returns the last chunk's ``(summary [B, k, d], valid [B])``.
    """
    h = build_hierarchy(g, targets, fanouts, seed)
    B, n, k, t = h.targets.size, h.fanouts[0], model.k, toks.t
    nodes, roots, keys = [], [], []
    for l in range(h.depth):
        nodes.append(h.levels[l])
        roots.append(root_positions(h, l)[0])
        keys.append(h.keys[l])
    nodes, roots, keys = (np.concatenate(a) for a in (nodes, roots, keys))
    with np.errstate(over="ignore"):
        shuffle_key = _mix(keys, np.uint64(0x5EED))
    order = np.lexsort((shuffle_key, roots))
    nodes, roots = nodes[order], roots[order]
    counts = np.bincount(roots, minlength=B)
    rank = np.arange(nodes.size) - np.repeat(np.cumsum(counts) - counts, counts)
    n_chunks = int(np.ceil(counts.max() / n)) if nodes.size else 0

    ids = np.zeros((B, max(n_chunks, 1), n, t), dtype=np.int64)
    mask = np.zeros_like(ids)
    ids[roots, rank // n, rank % n] = toks.ids[nodes]
    mask[roots, rank // n, rank % n] = toks.mask[nodes]
    has_chunk = np.zeros((B, max(n_chunks, 1)), dtype=bool)
    has_chunk[roots, rank // n] = True

    summary = torch.zeros(B, k, model.d, dtype=model.dtype)
    valid = torch.zeros(B, dtype=torch.bool)
    history = torch.zeros(B, 0, model.d, dtype=model.dtype)
    history_valid = torch.zeros(B, 0, dtype=torch.long)
    for j in range(n_chunks):
        active = np.nonzero(has_chunk[:, j])[0]
        rows, rmask = ids[active, j].reshape(active.size, n * t), mask[active, j].reshape(active.size, n * t)
        prefix, pvalid = history[active], history_valid[active]
        if trim:
            rows, rmask = rearrange_and_trim(rows, rmask)
            prefix, pvalid = rearrange_and_trim(prefix, pvalid)
        s = model.compress(prefix, pvalid, rows, rmask)
        idx = torch.as_tensor(active)
        summary = summary.clone()
        summary[idx] = s
        valid = valid.clone()
        valid[idx] = True
        step_valid = torch.zeros(B, k, dtype=torch.long)
        step_valid[idx] = 1
        history = torch.cat([history, summary * step_valid[..., None].to(summary.dtype)], dim=1)
        history_valid = torch.cat([history_valid, step_valid], dim=1)
    return summary, valid


def nconcat_rows(g, targets, fanouts, toks, input_limit, seed):
    """Target tokens followed by distinct sampled neighbors' tokens, cut at ``input_limit``."""
    targets = np.asarray(targets, dtype=np.int64)
    B = targets.size
    pools = [[] for _ in range(B)]
    if fanouts:
        h = build_hierarchy(g, targets, fanouts, seed)
        for l in range(h.depth - 1, -1, -1):
            root, pos = root_positions(h, l)
            for j in np.lexsort((pos, root)):
                pools[root[j]].append(int(h.levels[l][j]))
    rows = []
    for b, v in enumerate(targets):
        seq = list(toks.ids[v][toks.mask[v] == 1])
        seen = {int(v)}
        for u in pools[b]:
            if len(seq) >= input_limit:
                break
            if u in seen:
                continue
            seen.add(u)
            seq.extend(toks.ids[u][toks.mask[u] == 1])
        rows.append(seq[:input_limit])
    width = max(1, max(len(r) for r in rows))
    ids = np.zeros((B, width), dtype=np.int64)
    mask = np.zeros((B, width), dtype=np.int64)
    for b, r in enumerate(rows):
        ids[b, :len(r)] = r
        mask[b, :len(r)] = 1
    return ids, mask


def predictor_inputs(g, targets, toks, model, cfg: TrainConfig, seed: int):
    """Per-mode ``(prefix, prefix_valid, ids, mask)`` for the predictor."""
    mode = cfg.mode
    if mode == "nconcat":
        ids, mask = nconcat_rows(g, targets, cfg.fanouts, toks, cfg.input_limit, seed)
        return None, None, ids, mask
    ids, mask = _targets_block(toks, targets)
    ids, mask = ids[:, :cfg.input_limit], mask[:, :cfg.input_limit]
    if mode == "target_only":
        return None, None, ids, mask
    if mode == "hicom_no_hierarchy":
        s, valid = flat_forward(g, targets, cfg.fanouts, toks, model, seed, trim=cfg.trim)
        return s, _repeat_valid(valid, model.k), ids, mask
    out = hicom_forward(g, targets, cfg.fanouts, toks, model, seed,
                        accumulate=(mode == "hicom"), trim=cfg.trim)
    if mode == "hicom":
        return out.accumulated, out.accumulated_valid, ids, mask
    return out.summaries, torch.ones(out.summaries.shape[:2], dtype=torch.long), ids, mask


def class_logits(model: Compressor, head: nn.Module, g, targets, toks, cfg: TrainConfig, seed: int) -> torch.Tensor:
    prefix, valid, ids, mask = predictor_inputs(g, targets, toks, model, cfg, seed)
    return head(model.last_state(prefix, valid, ids, mask))


def predict(model: Compressor, head: nn.Module, target_summary, target_tokens) -> np.ndarray:
    """Per-class scores in (0, 1) for one node from its summary rows and TokenSeq."""
    prefix = valid = None
    if target_summary is not None:
        prefix = torch.as_tensor(target_summary, dtype=model.dtype)[None]
        valid = torch.ones(prefix.shape[:2], dtype=torch.long)
    ids, mask = target_tokens
    with torch.no_grad():
        h = model.last_state(prefix, valid, np.asarray(ids)[None], np.asarray(mask)[None])
        return torch.sigmoid(head(h))[0].numpy()


def label_matrix(g: TextGraph, nodes) -> np.ndarray:
    y = np.zeros((len(nodes), g.num_classes), dtype=bool)
    for i, v in enumerate(nodes):
        y[i, sorted(g.labels[v])] = True
    return y


@dataclass
class EvalReport:
    f1_macro: float
    f1_micro: float
    per_class: list
    split_sizes: dict = field(default_factory=dict)

    def to_json(self, config: dict | None = None) -> dict:
        return {"f1_macro": self.f1_macro, "f1_micro": self.f1_micro, "per_class": self.per_class,
                "split_sizes": self.split_sizes, "config": config or {}}


def f1_report(y_true: np.ndarray, y_pred: np.ndarray) -> EvalReport:
    """Macro and micro F1 for boolean ``[N, C]`` label matrices; 0/0 counts as 0."""
    y_true, y_pred = np.asarray(y_true, bool), np.asarray(y_pred, bool)
    tp = (y_true & y_pred).sum(axis=0)
    fp = (~y_true & y_pred).sum(axis=0)
    fn = (y_true & ~y_pred).sum(axis=0)

    def ratio(a, b):
        return np.divide(a, b, out=np.zeros(a.shape, dtype=float), where=b > 0)

    precision, recall = ratio(tp, tp + fp), ratio(tp, tp + fn)
    f1 = ratio(2 * tp, 2 * tp + fp + fn)
    denom = 2 * tp.sum() + fp.sum() + fn.sum()
    micro = float(2 * tp.sum() / denom) if denom else 0.0
    per_class = [{"class": c, "precision": float(precision[c]), "recall": float(recall[c]),
                  "f1": float(f1[c]), "support": int(y_true[:, c].sum())} for c in range(y_true.shape[1])]
    return EvalReport(float(f1.mean()) if f1.size else 0.0, micro, per_class)


def eval_seed(cfg: TrainConfig) -> int:
    return cfg.seed * 7919 + 104729


def scores(model, head, g, toks, nodes, cfg: TrainConfig) -> np.ndarray:
    out = []
    was_training = model.training
    model.eval()
    with torch.no_grad():
        for i in range(0, len(nodes), cfg.eval_batch_size):
            batch = nodes[i:i + cfg.eval_batch_size]
            out.append(torch.sigmoid(class_logits(model, head, g, batch, toks, cfg, eval_seed(cfg))).numpy())
    model.train(was_training)
    return np.concatenate(out) if out else np.zeros((0, g.num_classes))


def evaluate(model, head, g, toks, nodes, cfg: TrainConfig, split_sizes: dict | None = None) -> EvalReport:
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        raise EmptyEvalError("nothing to evaluate")
    report = f1_report(label_matrix(g, nodes), scores(model, head, g, toks, nodes, cfg) > cfg.threshold)
    report.split_sizes = dict(split_sizes or {"eval": int(nodes.size)})
    return report


def make_head(model_cfg: ModelConfig, num_classes: int, seed: int) -> nn.Linear:
    head = nn.Linear(model_cfg.d, num_classes)
    gen = torch.Generator().manual_seed(seed + 1)
    with torch.no_grad():
        head.weight.copy_(torch.randn(head.weight.shape, generator=gen) * model_cfg.init_std)
        head.bias.zero_()
    return head


def classification_loss(model, head, g, toks, targets, cfg: TrainConfig, seed: int) -> torch.Tensor:
    logits = class_logits(model, head, g, targets, toks, cfg, seed)
    y = torch.as_tensor(label_matrix(g, targets), dtype=logits.dtype)
    return F.binary_cross_entropy_with_logits(logits, y)


def pretrain(g: TextGraph, toks: TokenTable, model_cfg: ModelConfig, cfg: TrainConfig, log=None) -> Compressor:
    """Soft-prompt language-model warm-up on every node's text.

    Each node's neighborhood is compressed to its summary vectors, which then
    stand in for context while the model predicts the node's own tokens.
    Labels are never used.
    """
    torch.manual_seed(cfg.seed)
    model = Compressor(model_cfg)
    if not cfg.fanouts or cfg.pretrain_epochs <= 0:
        return model
    rng = np.random.default_rng(cfg.seed + 17)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.pretrain_lr)
    nodes = np.nonzero(toks.lengths() >= 1)[0]
    model.train()
    step = 0
    for epoch in range(cfg.pretrain_epochs):
        losses = []
        for batch in np.array_split(rng.permutation(nodes), max(1, -(-nodes.size // cfg.pretrain_batch_size))):
            out = hicom_forward(g, batch, cfg.fanouts, toks, model, seed=cfg.seed * 999_983 + step, trim=cfg.trim)
            prefix_valid = torch.ones(out.summaries.shape[:2], dtype=torch.long)
            loss = model.lm_loss(out.summaries, prefix_valid, toks.ids[batch], toks.mask[batch])
            if not torch.isfinite(loss):
                raise TrainingDivergedError(step, loss.item())
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
            step += 1
        if log:
            log(f"pretrain {epoch:3d}  lm loss {np.mean(losses):.4f}")
    return model


@dataclass
class TrainResult:
    model: Compressor
    head: nn.Linear
    history: list               # per epoch: {"epoch", "train_loss", "val": EvalReport json}
    best_epoch: int
    best_val: EvalReport


def train(g: TextGraph, split: DatasetSplit, toks: TokenTable, model_cfg: ModelConfig,
          cfg: TrainConfig, log=None, init: Compressor | None = None) -> TrainResult:
    """Adam on mean per-class BCE; keeps the epoch with the best validation macro-F1.

    ``init`` is a compressor to start from (left untouched); without it the
    compressor is built and pretrained here.
    """
    if split.train.size == 0:
        raise ValueError("training split is empty")
    if init is None:
        model = pretrain(g, toks, model_cfg, cfg, log)
    else:
        model = copy.deepcopy(init)
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    head = make_head(model_cfg, g.num_classes, cfg.seed)
    params = list(model.parameters()) + list(head.parameters())
    opt = torch.optim.Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    sizes = split.sizes()
    val_nodes = split.val if split.val.size else split.train

    history, best, best_epoch, best_state = [], None, -1, None
    step = 0
    for epoch in range(cfg.epochs):
        model.train()
        order = rng.permutation(split.train)
        losses = []
        for i in range(0, order.size, cfg.batch_size):
            batch = order[i:i + cfg.batch_size]
            loss = classification_loss(model, head, g, toks, batch, cfg, seed=cfg.seed * 1_000_003 + step)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(step, float(loss))
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
            step += 1
        val = evaluate(model, head, g, toks, val_nodes, cfg, sizes)
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)), "val_f1_macro": val.f1_macro,
                        "val_f1_micro": val.f1_micro})
        if log:
            log(f"epoch {epoch:3d}  loss {history[-1]['train_loss']:.4f}  val macro-F1 {val.f1_macro:.4f}")
        if best is None or val.f1_macro > best.f1_macro:
            best, best_epoch = val, epoch
            best_state = (copy.deepcopy(model.state_dict()), copy.deepcopy(head.state_dict()))
    model.load_state_dict(best_state[0])
    head.load_state_dict(best_state[1])
    model.eval()
    return TrainResult(model, head, history, best_epoch, best)


def save_trained(path, model, head, cfg: TrainConfig) -> None:
    save_checkpoint(path, model, head, {"train": asdict(cfg), "num_classes": head.out_features})


def load_trained(path):
    model, head_state, meta = load_checkpoint(path)
    head = nn.Linear(model.cfg.d, int(meta["num_classes"]))
    head.load_state_dict(head_state)
    model.eval()
    return model, head, TrainConfig(**meta["train"])


def dumps_report(report: EvalReport, config: dict) -> str:
    return json.dumps(report.to_json(config), indent=2, sort_keys=True)
