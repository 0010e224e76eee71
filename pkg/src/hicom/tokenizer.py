"""Whitespace tokenizer, vocabulary, and fixed-length pre-tokenization.

Pre-tokenized cache layout (``tokens.bin``), all little-endian::

    magic   4 bytes   b"HTOK"
    n       uint32    number of nodes
    t       uint32    sequence length
    records n * (t int32 ids, then t int32 mask values)

Record ``i`` belongs to node ``i``.
"""

from __future__ import annotations

import json
import struct
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
_MAGIC = b"HTOK"


class EmptyVocabError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    return text.lower().split()


@dataclass(frozen=True)
class Vocabulary:
    token_to_id: dict[str, int]

    pad_id = PAD_ID
    unk_id = UNK_ID

    @property
    def size(self) -> int:
        return len(self.token_to_id)

    def encode(self, text: str) -> list[int]:
        get = self.token_to_id.get
        return [get(tok, UNK_ID) for tok in tokenize(text)]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for tok, i in sorted(self.token_to_id.items(), key=lambda kv: kv[1]):
                f.write(json.dumps({"token": tok, "id": i}) + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        mapping = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    rec = json.loads(line)
                    mapping[rec["token"]] = int(rec["id"])
        if sorted(mapping.values()) != list(range(len(mapping))):
            raise ValueError(f"{path}: vocabulary ids are not contiguous")
        return cls(mapping)


def build_vocab(corpus: Iterable[str], max_size: int = 20000, min_freq: int = 1) -> Vocabulary:
    """Frequency-ranked vocabulary; ties go to the lexicographically smaller token."""
    if max_size < 3:
        raise ValueError("max_size must be >= 3")
    counts = Counter()
    for text in corpus:
        counts.update(tokenize(text))
    counts.pop(PAD_TOKEN, None)
    counts.pop(UNK_TOKEN, None)
    ranked = sorted((tok for tok, c in counts.items() if c >= min_freq),
                    key=lambda tok: (-counts[tok], tok))
    if not ranked:
        raise EmptyVocabError("corpus yields no tokens")
    mapping = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
    for tok in ranked[:max_size - 2]:
        mapping[tok] = len(mapping)
    return Vocabulary(mapping)


class TokenSeq(NamedTuple):
    ids: np.ndarray
    mask: np.ndarray


class TokenTable:
    """Per-node token ids and masks stored as two ``[N, t]`` arrays."""

    def __init__(self, ids: np.ndarray, mask: np.ndarray):
        if ids.shape != mask.shape or ids.ndim != 2:
            raise ValueError("ids and mask must be matching [N, t] arrays")
        self.ids = ids
        self.mask = mask

    @property
    def t(self) -> int:
        return self.ids.shape[1]

    def __len__(self) -> int:
        return self.ids.shape[0]

    def __getitem__(self, node: int) -> TokenSeq:
        return TokenSeq(self.ids[node], self.mask[node])

    def lengths(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    def save(self, path) -> None:
        n, t = self.ids.shape
        rec = np.concatenate([self.ids, self.mask], axis=1).astype("<i4")
        with open(path, "wb") as f:
            f.write(_MAGIC + struct.pack("<II", n, t))
            f.write(rec.tobytes())

    @classmethod
    def load(cls, path) -> "TokenTable":
        with open(path, "rb") as f:
            head = f.read(12)
            if head[:4] != _MAGIC:
                raise ValueError(f"{path}: not a token cache")
            n, t = struct.unpack("<II", head[4:])
            rec = np.frombuffer(f.read(), dtype="<i4").reshape(n, 2 * t)
        return cls(rec[:, :t].astype(np.int64), rec[:, t:].astype(np.int64))


def pre_tokenize(texts: Iterable[str], vocab: Vocabulary, t: int) -> TokenTable:
    """Encode every text to exactly ``t`` ids, tail-truncated and PAD-filled.

    Accepts either a sequence of strings or a graph (its ``texts`` are used).
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    texts = getattr(texts, "texts", texts)
    encoded = [vocab.encode(text)[:t] for text in texts]
    ids = np.full((len(encoded), t), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(encoded), t), dtype=np.int64)
    for i, row in enumerate(encoded):
        ids[i, :len(row)] = row
        mask[i, :len(row)] = 1
    return TokenTable(ids, mask)
