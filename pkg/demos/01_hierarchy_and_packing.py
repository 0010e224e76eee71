"""Walk through one batch: sample a hierarchy, pack it, trim it, compress it.

    python3 demos/01_hierarchy_and_packing.py
"""

import numpy as np
import torch

from hicom.graph import from_edges
from hicom.model import Compressor, ModelConfig
from hicom.packer import compact, concat_rows, pack_level
from hicom.pipeline import hicom_forward
from hicom.sampler import build_hierarchy
from hicom.tokenizer import build_vocab, pre_tokenize

torch.set_num_threads(1)

# A product graph in miniature. Node 0 is the item we want to classify;
# node 2 has fewer neighbors than the fanout asks for.
texts = ["insulated water bottle", "stainless steel tumbler with lid", "hiking daypack",
         "trail running shoes", "camping stove", "glass tumblers", "ice cube tray",
         "climbing rope", "bike bottle cage", "carabiner set"]
edges = [(0, 1), (0, 2), (1, 3), (1, 4), (1, 8), (1, 9), (2, 5), (3, 7), (6, 5)]
g = from_edges(len(texts), edges, texts)

vocab = build_vocab(g.texts)
toks = pre_tokenize(g, vocab, t=6)
print(f"{g.num_nodes} nodes, {g.num_edges} edges, vocabulary of {vocab.size}")

# Fanouts [3, 2]: two one-hop neighbors, each with up to three children.
h = build_hierarchy(g, [0], [3, 2], seed=0)
for l in range(h.depth, -1, -1):
    print(f"level {l}: nodes {h.levels[l].tolist()}")
for j, (v, p, s) in enumerate(zip(h.levels[0], h.parents[0], h.slots[0])):
    print(f"  level-0 node {v} sits in slot {s} under level-1 node {h.levels[1][p]}")

# Level 1 placeholders: one row per level-1 node, n_1 slots of t tokens each.
packed = pack_level(h, 1, toks)
print("token block", packed.token_block.shape, "(parents, slots, tokens)")
batch = concat_rows(packed)
print("concatenated rows\n", batch.rows, "\nmask\n", batch.masks)
print(f"dummy share before trim: {batch.waste():.2f}")
trimmed = compact(batch)
print("after rearrange-and-trim\n", trimmed.rows)
print(f"dummy share after trim: {trimmed.waste():.2f}")

# The compressor turns each level into k summary vectors per node.
model = Compressor(ModelConfig(vocab_size=vocab.size, d=32, layers=2, heads=4, k=2, dropout=0.0))
model.eval()
with torch.no_grad():
    out = hicom_forward(g, [0], [3, 2], toks, model, seed=0, accumulate=True)
print("summary for node 0:", tuple(out.summaries.shape), "(targets, k, d)")
print("accumulated predictor prefix:", tuple(out.accumulated.shape),
      "= level-1 summaries followed by s0")
print("waste per level (before, after):", [(round(b, 2), round(a, 2)) for b, a in out.waste])
