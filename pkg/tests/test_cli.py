import hashlib
import json

import pytest

from hicom.cli import main
from hicom.config import load_config, parse_override
from hicom.model import ConfigError

FAST = ["--set", "synth.num_nodes=300", "--set", "train.epochs=2", "--set", "train.pretrain_epochs=1",
        "--set", "model.d=16", "--set", "model.layers=1", "--set", "model.heads=2",
        "--set", "split.val_size=30", "--set", "split.test_cap=60"]


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_override_parsing():
    assert parse_override("train.fanouts=[2, 8]") == (["train", "fanouts"], [2, 8])
    assert parse_override("train.mode=nconcat") == (["train", "mode"], "nconcat")
    cfg = load_config(None, ["train.lr=0.01", "model.d=32"], seed=5, env={})
    assert cfg["train"]["lr"] == 0.01 and cfg["model"]["d"] == 32 and cfg["model"]["seed"] == 5


def test_config_errors():
    with pytest.raises(ConfigError):
        load_config(None, ["train.nope=1"], env={})
    with pytest.raises(ConfigError):
        load_config(None, ["train.epochs=abc"], env={})
    with pytest.raises(ConfigError):
        load_config(None, ["train.mode=gnn"], env={})


def test_config_file_and_env(tmp_path):
    (tmp_path / "run.toml").write_text('[paths]\nedges = "g.tsv"\n[train]\nfanouts = [2, 8]\n')
    cfg = load_config(tmp_path / "run.toml", env={"HICOM_OUT": "/x"})
    assert cfg["paths"]["edges"] == str(tmp_path / "g.tsv") and cfg["paths"]["out"] == "/x"
    assert cfg["train"]["fanouts"] == [2, 8] and cfg["train"]["epochs"] == 30


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2
    assert main(["split", "--out", str(tmp_path), "--set", "bogus.key=1"]) == 2
    (tmp_path / "bad.toml").write_text("[train\n")
    assert main(["split", "--config", str(tmp_path / "bad.toml")]) == 2
    assert main(["kcore", "--out", str(tmp_path)]) == 2


def test_kcore_star(tmp_path):
    (tmp_path / "e.tsv").write_text("".join(f"0\t{i}\n" for i in range(1, 6)))
    (tmp_path / "t.jsonl").write_text("".join(json.dumps({"id": i, "text": "x"}) + "\n" for i in range(6)))
    (tmp_path / "l.jsonl").write_text("")
    before = digest(tmp_path / "e.tsv")
    args = ["--edges", str(tmp_path / "e.tsv"), "--texts", str(tmp_path / "t.jsonl"),
            "--labels", str(tmp_path / "l.jsonl"), "--out", str(tmp_path / "o"), "-q"]
    assert main(["kcore", "--k", "8", *args]) == 0
    assert (tmp_path / "o" / "core_texts.jsonl").read_text() == ""
    assert digest(tmp_path / "e.tsv") == before


def test_bad_input_file(tmp_path):
    (tmp_path / "e.tsv").write_text("0\tq\n")
    (tmp_path / "t.jsonl").write_text('{"id": 0, "text": "a"}\n')
    (tmp_path / "l.jsonl").write_text("")
    args = ["--edges", str(tmp_path / "e.tsv"), "--texts", str(tmp_path / "t.jsonl"),
            "--labels", str(tmp_path / "l.jsonl"), "--out", str(tmp_path / "o"), "-q"]
    assert main(["ingest", *args]) == 1


def test_pipeline_deterministic(tmp_path, monkeypatch):
    monkeypatch.delenv("HICOM_OUT", raising=False)
    data = tmp_path / "data"
    assert main(["synth", "--seed", "3", "--out", str(data), "-q", *FAST]) == 0
    run = str(data / "run.toml")
    assert main(["ingest", "--config", run, "--out", str(tmp_path / "ing"), "-q", *FAST]) == 0
    assert json.loads((tmp_path / "ing" / "stats.json").read_text())["num_nodes"] == 300
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["train", "--config", run, "--out", str(out), "--debug-dump", "-q", *FAST]) == 0
    assert (outs[0] / "metrics.json").read_bytes() == (outs[1] / "metrics.json").read_bytes()
    for name in ("checkpoint.bin", "vocab.jsonl", "resolved_config.json", "debug_hierarchy.json",
                 "debug_packing.json"):
        assert (outs[0] / name).exists()
    assert main(["eval", "--config", run, "--out", str(outs[0]), "-q", *FAST]) == 0
    train_m = json.loads((outs[0] / "metrics.json").read_text())
    eval_m = json.loads((outs[0] / "eval_metrics.json").read_text())
    assert train_m["f1_macro"] == eval_m["f1_macro"] and train_m["per_class"] == eval_m["per_class"]


def test_split_written(tmp_path):
    data = tmp_path / "data"
    assert main(["synth", "--out", str(data), "-q", *FAST]) == 0
    assert main(["split", "--config", str(data / "run.toml"), "-q", *FAST]) == 0
    split = json.loads((data / "split.json").read_text())
    assert len(split["train"]) == 160 and len(split["val"]) == 30
