"""Command-line entry point: ``hicom <subcommand> [--config run.toml] [--set k=v] [--seed N]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import bench as benchmod
from .config import load_config, model_config, report_config, train_config, write_resolved
from .graph import (DatasetSplit, GraphFormatError, UnknownNodeError, degree_stats, ingest_graph, k_core,
                    split_dataset, write_graph, write_id_mapping)
from .model import ConfigError
from .pipeline import hicom_forward
from .sampler import build_hierarchy
from .synth import make_synthetic_graph
from .tokenizer import Vocabulary, build_vocab, pre_tokenize
from .trainer import dumps_report, evaluate, load_trained, save_trained, train

SUBCOMMANDS = ("ingest", "kcore", "split", "train", "eval", "bench", "synth")
log = logging.getLogger("hicom")


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hicom", description="Hierarchical neighborhood compression for text graphs.")
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. train.epochs=5 (repeatable)")
    p.add_argument("--seed", type=int, help="override every seed in the config")
    p.add_argument("--out", help="output directory (HICOM_OUT still wins)")
    p.add_argument("--edges", help="edge file, overrides paths.edges")
    p.add_argument("--texts", help="node text file, overrides paths.texts")
    p.add_argument("--labels", help="label file, overrides paths.labels")
    p.add_argument("--k", type=int, help="core number for kcore")
    p.add_argument("--debug-dump", action="store_true",
                   help="train: write a sample hierarchy and packing statistics as JSON")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def resolve(args) -> dict:
    overrides = list(args.overrides)
    for key in ("out", "edges", "texts", "labels"):
        value = getattr(args, key)
        if value is not None:
            overrides.append(f"paths.{key}={json.dumps(value)}")
    cfg = load_config(args.config, overrides, seed=args.seed)
    out = Path(cfg["paths"]["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_resolved(cfg, out)
    return cfg


def _graph(cfg):
    p = cfg["paths"]
    return ingest_graph(p["edges"], p["texts"], p["labels"], cfg["graph"]["num_classes"] or None)


def _split(cfg, g) -> DatasetSplit:
    path = Path(cfg["paths"]["out"]) / "split.json"
    if path.exists():
        return DatasetSplit.from_json(json.loads(path.read_text(encoding="utf-8")))
    return split_dataset(g, seed=cfg["train"]["seed"], **cfg["split"])


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_synth(cfg, args):
    s = cfg["synth"]
    g = make_synthetic_graph(num_nodes=s["num_nodes"], num_classes=s["num_classes"], avg_degree=s["avg_degree"],
                             seed=cfg["train"]["seed"])
    out = Path(cfg["paths"]["out"])
    write_graph(g, out / "edges.tsv", out / "texts.jsonl", out / "labels.jsonl")
    (out / "run.toml").write_text(
        '[paths]\nedges = "edges.tsv"\ntexts = "texts.jsonl"\nlabels = "labels.jsonl"\nout = "."\n\n'
        f'[graph]\nnum_classes = {g.num_classes}\n\n[train]\nseed = {cfg["train"]["seed"]}\n', encoding="utf-8")
    log.info("wrote %d nodes, %d edges to %s", g.num_nodes, g.num_edges, out)


def cmd_ingest(cfg, args):
    g = _graph(cfg)
    tk = cfg["tokenizer"]
    vocab = build_vocab(g.texts, tk["max_vocab"], tk["min_freq"])
    out = Path(cfg["paths"]["out"])
    vocab.save(out / "vocab.jsonl")
    pre_tokenize(g, vocab, tk["t"]).save(out / "tokens.bin")
    stats = {**degree_stats(g), "num_nodes": g.num_nodes, "num_edges": g.num_edges,
             "num_classes": g.num_classes, "labeled": int(g.labeled_nodes().size),
             "dropped_self_loops": g.dropped_self_loops}
    _write_json(out / "stats.json", stats)
    log.info("%s", stats)


def cmd_kcore(cfg, args):
    if args.k is None:
        raise UsageError("kcore requires --k")
    g = _graph(cfg)
    core, mapping = k_core(g, args.k)
    out = Path(cfg["paths"]["out"])
    write_graph(core, out / "core_edges.tsv", out / "core_texts.jsonl", out / "core_labels.jsonl")
    write_id_mapping(mapping, out / "core_mapping.jsonl")
    log.info("%d-core: %d of %d nodes", args.k, core.num_nodes, g.num_nodes)


def cmd_split(cfg, args):
    g = _graph(cfg)
    split = split_dataset(g, seed=cfg["train"]["seed"], **cfg["split"])
    _write_json(Path(cfg["paths"]["out"]) / "split.json", split.to_json())
    log.info("split sizes %s", split.sizes())


def _debug_dump(out: Path, g, toks, model, tcfg, nodes):
    h = build_hierarchy(g, nodes, tcfg.fanouts, tcfg.seed)
    h.dump(out / "debug_hierarchy.json")
    with torch.no_grad():
        res = hicom_forward(g, nodes, tcfg.fanouts, toks, model, seed=tcfg.seed, trim=tcfg.trim, hierarchy=h)
    _write_json(out / "debug_packing.json",
                {"levels": [{"level": l + 1, "waste_before": b, "waste_after": a}
                            for l, (b, a) in enumerate(res.waste)]})


def cmd_train(cfg, args):
    g = _graph(cfg)
    tk = cfg["tokenizer"]
    vocab = build_vocab(g.texts, tk["max_vocab"], tk["min_freq"])
    toks = pre_tokenize(g, vocab, tk["t"])
    split = _split(cfg, g)
    mcfg, tcfg = model_config(cfg, vocab.size), train_config(cfg)
    res = train(g, split, toks, mcfg, tcfg, log=log.info)
    out = Path(cfg["paths"]["out"])
    save_trained(out / "checkpoint.bin", res.model, res.head, tcfg)
    vocab.save(out / "vocab.jsonl")
    report = evaluate(res.model, res.head, g, toks, split.test, tcfg, split.sizes())
    (out / "metrics.json").write_text(dumps_report(report, report_config(cfg)) + "\n", encoding="utf-8")
    _write_json(out / "history.json", res.history)
    if args.debug_dump and tcfg.mode.startswith("hicom") and tcfg.mode != "hicom_no_hierarchy":
        _debug_dump(out, g, toks, res.model, tcfg, split.train[: tcfg.batch_size])
    log.info("test macro-F1 %.4f  micro-F1 %.4f", report.f1_macro, report.f1_micro)


def cmd_eval(cfg, args):
    out = Path(cfg["paths"]["out"])
    if not (out / "checkpoint.bin").exists():
        raise UsageError(f"no checkpoint.bin in {out}; run train first")
    g = _graph(cfg)
    vocab = Vocabulary.load(out / "vocab.jsonl")
    toks = pre_tokenize(g, vocab, cfg["tokenizer"]["t"])
    model, head, tcfg = load_trained(out / "checkpoint.bin")
    split = _split(cfg, g)
    report = evaluate(model, head, g, toks, split.test, tcfg, split.sizes())
    (out / "eval_metrics.json").write_text(dumps_report(report, report_config(cfg)) + "\n", encoding="utf-8")
    print(json.dumps({"f1_macro": report.f1_macro, "f1_micro": report.f1_micro}))


def cmd_bench(cfg, args):
    b = cfg["bench"]
    seed = cfg["train"]["seed"]
    seg = benchmod.segmentation_timing(trials=b["trials"], seed=seed)
    rows = benchmod.runtime_bench(b["configs"], trials=b["trials"], seed=seed)
    out = Path(cfg["paths"]["out"])
    benchmod.write_report(rows, out / "bench.csv", out / "bench.json")
    _write_json(out / "bench_segmentation.json", seg)
    for r in rows:
        log.info("%-22s %9.1f ms  cost %d  waste %.3f -> %.3f", r.label, r.time_ms, r.predicted_cost,
                 r.waste_before, r.waste_after)
    log.info("segmented/flat time ratio %.3f (cost model %.3f)", seg["measured_ratio"], seg["predicted_ratio"])


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "kcore": cmd_kcore, "split": cmd_split,
            "train": cmd_train, "eval": cmd_eval, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on bad usage
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    torch.set_num_threads(1)
    try:
        cfg = resolve(args)
        COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError) as e:
        parser.print_usage(sys.stderr)
        print(f"hicom {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (GraphFormatError, UnknownNodeError, OSError, ValueError) as e:
        print(f"hicom {args.command}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
