"""Hierarchical compression of text-graph neighborhoods into soft-prompt summaries."""

from .graph import TextGraph, from_edges, ingest_graph, k_core, split_dataset
from .model import Compressor, ModelConfig, lm_soft_prompt_loss
from .pipeline import hicom_forward, hicom_single
from .sampler import build_hierarchy
from .tokenizer import build_vocab, pre_tokenize
from .trainer import TrainConfig, evaluate, train

__all__ = ["TextGraph", "from_edges", "ingest_graph", "k_core", "split_dataset", "Compressor", "ModelConfig",
           "lm_soft_prompt_loss", "hicom_forward", "hicom_single", "build_hierarchy", "build_vocab",
           "pre_tokenize", "TrainConfig", "evaluate", "train"]
