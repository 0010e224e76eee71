"""Soft-prompt compressor: a small pre-norm causal transformer.

The same network serves as compressor and predictor backbone. Compression
appends ``k`` learnable prompt embeddings after the input and reads their
final hidden states out as the summary vectors.

Inputs are always ``[summary rows] ++ [token embeddings]`` with separate
validity masks. Invalid entries are excluded as attention keys and do not
advance the position counter, so any padding layout of the same valid
content gives the same result.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

_CKPT_MAGIC = b"HICK"


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    vocab_size: int
    d: int = 64
    layers: int = 2
    heads: int = 4
    k: int = 4
    max_len: int = 512
    ff_mult: int = 4
    init_std: float = 0.1
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.d % self.heads:
            raise ConfigError(f"heads ({self.heads}) must divide d ({self.d})")
        if min(self.vocab_size, self.d, self.layers, self.heads, self.k, self.max_len) < 1:
            raise ConfigError("model sizes must be positive")


class Block(nn.Module):
    def __init__(self, d: int, heads: int, ff_mult: int, dropout: float = 0.0):
        super().__init__()
        self.heads = heads
        self.drop = nn.Dropout(dropout)
        self.ln1 = nn.LayerNorm(d)
        self.qkv = nn.Linear(d, 3 * d)
        self.proj = nn.Linear(d, d)
        self.ln2 = nn.LayerNorm(d)
        self.ff = nn.Sequential(nn.Linear(d, ff_mult * d), nn.GELU(), nn.Linear(ff_mult * d, d))

    def forward(self, x, allowed):
        B, S, d = x.shape
        hd = d // self.heads
        q, k, v = self.qkv(self.ln1(x)).split(d, dim=-1)
        q = q.view(B, S, self.heads, hd).transpose(1, 2)
        k = k.view(B, S, self.heads, hd).transpose(1, 2)
        v = v.view(B, S, self.heads, hd).transpose(1, 2)
        att = (q @ k.transpose(-2, -1)) / math.sqrt(hd)
        att = att.masked_fill(~allowed[:, None], float("-inf")).softmax(dim=-1)
        y = (self.drop(att) @ v).transpose(1, 2).reshape(B, S, d)
        x = x + self.drop(self.proj(y))
        return x + self.drop(self.ff(self.ln2(x)))


def _as_long(a, device):
    return torch.as_tensor(np.asarray(a) if not isinstance(a, torch.Tensor) else a,
                           dtype=torch.long, device=device)


class Compressor(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.d
        self.token_embedding = nn.Embedding(cfg.vocab_size, d)
        self.position_embedding = nn.Embedding(cfg.max_len, d)
        self.prompt_embeddings = nn.Parameter(torch.zeros(cfg.k, d))
        self.blocks = nn.ModuleList(Block(d, cfg.heads, cfg.ff_mult, cfg.dropout) for _ in range(cfg.layers))
        self.ln_f = nn.LayerNorm(d)
        self.drop = nn.Dropout(cfg.dropout)
        self.output_vocab_projection = nn.Linear(d, cfg.vocab_size, bias=False)
        self.meter = None  # optional cost recorder, see hicom.bench.CostMeter
        self.reset_parameters()

    def reset_parameters(self):
        gen = torch.Generator().manual_seed(self.cfg.seed)
        std = self.cfg.init_std
        with torch.no_grad():
            for module in self.modules():
                if isinstance(module, nn.LayerNorm):
                    module.weight.fill_(1.0)
                    module.bias.zero_()
                elif isinstance(module, (nn.Linear, nn.Embedding)):
                    module.weight.copy_(torch.randn(module.weight.shape, generator=gen) * std)
                    if getattr(module, "bias", None) is not None:
                        module.bias.zero_()
            self.prompt_embeddings.copy_(torch.randn(self.prompt_embeddings.shape, generator=gen) * std)

    @property
    def k(self) -> int:
        return self.cfg.k

    @property
    def d(self) -> int:
        return self.cfg.d

    @property
    def dtype(self) -> torch.dtype:
        return self.token_embedding.weight.dtype

    def _inputs(self, prefix, prefix_valid, ids, mask):
        """Assemble ``[prefix rows, token embeddings]`` with a joint validity mask."""
        device = self.token_embedding.weight.device
        dtype = self.token_embedding.weight.dtype
        parts, valid = [], []
        B = None
        if ids is not None:
            ids = _as_long(ids, device)
            mask = _as_long(mask, device).bool()
            B = ids.shape[0]
        if prefix is not None:
            if prefix.shape[-1] != self.d:
                raise ConfigError(f"summary rows have width {prefix.shape[-1]}, model expects {self.d}")
            B = prefix.shape[0]
            parts.append(prefix.to(dtype))
            valid.append(_as_long(prefix_valid, device).bool())
        if ids is not None:
            parts.append(self.token_embedding(ids))
            valid.append(mask)
        if B is None:
            raise ConfigError("need a summary prefix or token ids")
        if not parts:
            return torch.zeros(B, 0, self.d, dtype=dtype, device=device), torch.zeros(B, 0, dtype=torch.bool)
        return torch.cat(parts, dim=1), torch.cat(valid, dim=1)

    def encode(self, x, valid):
        """Add positions, run the blocks, and return final-normed hidden states."""
        pos = (valid.long().cumsum(dim=1) - 1).clamp(min=0)
        if x.shape[1] and int(pos.max()) >= self.cfg.max_len:
            raise ConfigError(f"input of {int(pos.max()) + 1} positions exceeds max_len {self.cfg.max_len}")
        x = self.drop(x + self.position_embedding(pos))
        S = x.shape[1]
        if self.meter is not None:
            self.meter.record(valid)
        causal = torch.ones(S, S, dtype=torch.bool, device=x.device).tril()
        eye = torch.eye(S, dtype=torch.bool, device=x.device)
        allowed = causal & (valid[:, None, :] | eye)
        for block in self.blocks:
            x = block(x, allowed)
        return self.ln_f(x)

    def run(self, prefix, prefix_valid, ids, mask, prompts: bool = False):
        x, valid = self._inputs(prefix, prefix_valid, ids, mask)
        if prompts:
            B = x.shape[0]
            x = torch.cat([x, self.prompt_embeddings.expand(B, -1, -1)], dim=1)
            valid = torch.cat([valid, valid.new_ones(B, self.k)], dim=1)
        return self.encode(x, valid), valid

    def compress(self, prefix, prefix_valid, ids, mask):
        """Map a batch of inputs to ``[B, k, d]`` summary vectors."""
        hidden, _ = self.run(prefix, prefix_valid, ids, mask, prompts=True)
        return hidden[:, -self.k:]

    def last_state(self, prefix, prefix_valid, ids, mask):
        """Hidden state at the last valid position of each row (position 0 if none)."""
        hidden, valid = self.run(prefix, prefix_valid, ids, mask)
        S = valid.shape[1]
        idx = torch.where(valid, torch.arange(S, device=valid.device), -1).max(dim=1).values.clamp(min=0)
        return hidden[torch.arange(hidden.shape[0]), idx]

    def lm_loss(self, prefix, prefix_valid, ids, mask):
        """Mean next-token cross-entropy over the continuation ``ids``.

        Each valid token is predicted from the state of the previous valid
        entry, which is the last summary row for the first token when a
        prefix is present.
        """
        x, valid = self._inputs(prefix, prefix_valid, ids, mask)
        hidden = self.encode(x, valid)
        B, S = valid.shape
        W = _as_long(ids, valid.device).shape[1]
        pos = torch.arange(S, device=valid.device)
        prev = torch.where(valid, pos, -1).cummax(dim=1).values
        prev = torch.cat([prev.new_full((B, 1), -1), prev[:, :-1]], dim=1)
        is_target = valid.clone()
        is_target[:, :S - W] = False
        is_target &= prev >= 0
        if not bool(is_target.any()):
            raise ValueError("continuation needs at least one predictable token")
        b_idx, p_idx = torch.nonzero(is_target, as_tuple=True)
        logits = self.output_vocab_projection(hidden[b_idx, prev[b_idx, p_idx]])
        targets = _as_long(ids, valid.device)[b_idx, p_idx - (S - W)]
        return F.cross_entropy(logits, targets)


class MeanPoolCompressor:
    """Reference compressor: every summary row is the mean of the valid input embeddings."""

    def __init__(self, embedding: torch.Tensor, k: int):
        self.embedding = embedding
        self.k = k
        self.d = embedding.shape[1]
        self.dtype = embedding.dtype

    def compress(self, prefix, prefix_valid, ids, mask):
        device = self.embedding.device
        sums, counts = 0.0, 0.0
        if prefix is not None and prefix.shape[1]:
            pv = _as_long(prefix_valid, device).to(self.embedding.dtype)
            sums = sums + (prefix * pv[..., None]).sum(dim=1)
            counts = counts + pv.sum(dim=1)
        if ids is not None:
            tm = _as_long(mask, device).to(self.embedding.dtype)
            emb = self.embedding[_as_long(ids, device)]
            sums = sums + (emb * tm[..., None]).sum(dim=1)
            counts = counts + tm.sum(dim=1)
        mean = sums / torch.clamp(torch.as_tensor(counts), min=1.0)[..., None]
        return mean[:, None, :].expand(-1, self.k, -1).clone()


def lm_soft_prompt_loss(model: Compressor, summary_prefix, continuation, mask=None) -> torch.Tensor:
    """Loss of predicting ``continuation`` given only the summary vectors before it.

    ``summary_prefix`` is a ``[k, d]`` (or ``[B, k, d]``) tensor or ``None``;
    ``continuation`` is a 1-D (or 2-D) id array with optional ``mask``.
    """
    ids = np.asarray(continuation) if not isinstance(continuation, torch.Tensor) else continuation
    if ids.ndim == 1:
        ids = ids[None]
    if mask is None:
        mask = np.ones(tuple(ids.shape), dtype=np.int64)
    elif np.ndim(mask) == 1:
        mask = np.asarray(mask)[None]
    if int(np.asarray(mask).sum()) < 1:
        raise ValueError("continuation is empty")
    prefix_valid = None
    if summary_prefix is not None:
        if summary_prefix.dim() == 2:
            summary_prefix = summary_prefix[None]
        prefix_valid = torch.ones(summary_prefix.shape[:2], dtype=torch.long)
    return model.lm_loss(summary_prefix, prefix_valid, ids, mask)


def save_arrays(path, arrays: dict[str, torch.Tensor], meta: dict) -> None:
    """Write named arrays as little-endian float32 after a JSON header.

    Layout: ``b"HICK"``, uint32 header length, UTF-8 JSON header
    ``{"meta": ..., "arrays": [{"name", "shape"}, ...]}``, then the raw
    array data in header order.
    """
    entries = [{"name": name, "shape": list(t.shape)} for name, t in arrays.items()]
    header = json.dumps({"meta": meta, "arrays": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC + struct.pack("<I", len(header)) + header)
        for t in arrays.values():
            f.write(t.detach().cpu().numpy().astype("<f4").tobytes())


def load_arrays(path) -> tuple[dict, dict[str, torch.Tensor]]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (n,) = struct.unpack("<I", blob[4:8])
    header = json.loads(blob[8:8 + n].decode("utf-8"))
    offset = 8 + n
    arrays = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        data = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        arrays[entry["name"]] = torch.from_numpy(data.astype(np.float32).reshape(entry["shape"]))
        offset += 4 * count
    return header["meta"], arrays


def save_checkpoint(path, model: Compressor, head: nn.Module | None = None, meta: dict | None = None) -> None:
    arrays = {f"compressor.{k}": v for k, v in model.state_dict().items()}
    if head is not None:
        arrays.update({f"head.{k}": v for k, v in head.state_dict().items()})
    save_arrays(path, arrays, {"model": asdict(model.cfg), **(meta or {})})


def load_checkpoint(path):
    """Return ``(model, head_state, meta)``; ``head_state`` may be empty."""
    meta, arrays = load_arrays(path)
    model = Compressor(ModelConfig(**meta["model"]))
    model.load_state_dict({k[len("compressor."):]: v for k, v in arrays.items() if k.startswith("compressor.")})
    head_state = {k[len("head."):]: v for k, v in arrays.items() if k.startswith("head.")}
    return model, head_state, meta
