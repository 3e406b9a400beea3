import json

import pytest

from dlnkit.cli import main
from dlnkit.data import save_feature_csv
from dlnkit.network import TrainConfig, format_config
from dlnkit.layers import SteFlags
from helpers import threshold_task


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out.strip().splitlines()
    return code, (json.loads(out[-1]) if out else None)


@pytest.fixture
def and_files(tmp_path):
    tr, te = tmp_path / "train.csv", tmp_path / "test.csv"
    save_feature_csv(threshold_task("and", 300, 0), tr)
    save_feature_csv(threshold_task("and", 200, 1), te)
    cfg = tmp_path / "and.cfg"
    cfg.write_text(format_config(TrainConfig(hidden_sizes=[16], group_size=10, epochs=40,
                                             learning_rate=0.02, ste=SteFlags(True, True, True))))
    return tr, te, cfg


def test_extract(tmp_path, capsys):
    src = tmp_path / "s.tsv"
    src.write_text("1 0.1 0.5 0.2 0.9 0.3\n2 1 2 3 4 5\n1 5 4 3 2 1\n")
    code, doc = run(capsys, "extract", "--input", src, "--out", tmp_path / "f.csv")
    assert code == 0 and doc["samples"] == 3
    header = (tmp_path / "f.csv").read_text().splitlines()[0].split(",")
    assert len(header) == 15 and header[-1] == "label"
    manifest = json.loads((tmp_path / "f.csv.manifest.json").read_text())
    assert manifest["command"] == "extract" and "--input" in manifest["argv"]


def test_extract_ragged(tmp_path, capsys):
    src = tmp_path / "s.tsv"
    src.write_text("1 1 2 3 4\n2 1 2 3\n")
    assert run(capsys, "extract", "--input", src, "--out", tmp_path / "f.csv")[0] == 2


def test_extract_unwritable(tmp_path, capsys):
    src = tmp_path / "s.tsv"
    src.write_text("1 1 2 3 4\n")
    code, _ = run(capsys, "extract", "--input", src, "--out", tmp_path / "missing" / "f.csv")
    assert code == 3


def test_missing_input_is_io_error(tmp_path, capsys):
    assert run(capsys, "extract", "--input", tmp_path / "nope", "--out", tmp_path / "f.csv")[0] == 3


def test_usage_error(capsys):
    assert main(["train"]) == 4
    assert main(["frobnicate"]) == 4


def test_train_zero_epochs(and_files, tmp_path, capsys):
    tr, te, _ = and_files
    code, doc = run(capsys, "train", "--train", tr, "--test", te, "--epochs", 0,
                    "--out", tmp_path / "m.json")
    assert code == 0 and doc["epochs"] == 0 and doc["final_loss"] is None
    assert (tmp_path / "m.json").exists()


def test_train_missing_label(tmp_path, and_files, capsys):
    _, te, _ = and_files
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n0.1,0.2\n")
    assert run(capsys, "train", "--train", bad, "--test", te, "--out", tmp_path / "m.json")[0] == 2


def test_train_bad_config(tmp_path, and_files, capsys):
    tr, te, _ = and_files
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("subset_gate_num = 5\n")
    code, _ = run(capsys, "train", "--train", tr, "--test", te, "--config", cfg,
                  "--out", tmp_path / "m.json")
    assert code == 4


def test_train_eval_compile(and_files, tmp_path, capsys):
    tr, te, cfg = and_files
    model = tmp_path / "m.json"
    code, doc = run(capsys, "train", "--train", tr, "--test", te, "--config", cfg, "--out", model)
    assert code == 0 and doc["test_balanced_accuracy"] > 0.9
    code, ev = run(capsys, "eval", "--model", model, "--test", te)
    assert code == 0
    assert ev["balanced_accuracy"] == doc["test_balanced_accuracy"]
    assert ev["circuit_balanced_accuracy"] == ev["balanced_accuracy"]

    code, comp = run(capsys, "compile", "--model", model, "--out", tmp_path / "c1")
    assert code == 0 and comp["total_ops"] == doc["total_ops"]
    rules = (tmp_path / "c1.rules.txt").read_text()
    assert "∧" in rules or "∨" in rules
    run(capsys, "compile", "--model", model, "--out", tmp_path / "c2")
    for ext in ("rules.txt", "dot", "cost.json"):
        assert (tmp_path / f"c1.{ext}").read_bytes() == (tmp_path / f"c2.{ext}").read_bytes()

    for fmt in ("text", "dot", "json"):
        code, _ = run(capsys, "export", "--model", model, "--format", fmt,
                      "--out", tmp_path / f"e.{fmt}")
        assert code == 0
    assert (tmp_path / "e.text").read_bytes() == (tmp_path / "c1.rules.txt").read_bytes()


def test_corrupt_model(tmp_path, and_files, capsys):
    _, te, _ = and_files
    bad = tmp_path / "m.json"
    bad.write_text('{"format": "dlnkit-model", "vers')
    assert run(capsys, "eval", "--model", bad, "--test", te)[0] == 2


def test_preprocess_command(and_files, tmp_path, capsys):
    tr, te, _ = and_files
    code, doc = run(capsys, "preprocess", "--train", tr, "--test", te, "--out", tmp_path / "p")
    assert code == 0 and doc["columns"] == ["x0", "x1"]
    assert (tmp_path / "p.preprocessor.json").exists()


def test_hpo_deterministic(and_files, tmp_path, capsys):
    tr, _, _ = and_files
    args = ["hpo", "--train", tr, "--trials", 2, "--epochs", 2, "--seed", 3]
    code, a = run(capsys, *args, "--out", tmp_path / "a")
    assert code == 0 and a["trials"] == 2
    code, b = run(capsys, *args, "--out", tmp_path / "b")
    assert a == b
    assert (tmp_path / "a.best.cfg").read_bytes() == (tmp_path / "b.best.cfg").read_bytes()
    assert len((tmp_path / "a.history.jsonl").read_text().splitlines()) == 2


def test_rerun_reproduces(and_files, tmp_path, capsys):
    tr, te, _ = and_files
    model = tmp_path / "m.json"
    run(capsys, "train", "--train", tr, "--test", te, "--epochs", 2, "--out", model)
    first = model.read_bytes()
    model.unlink()
    code, _ = run(capsys, "rerun", tmp_path / "m.json.manifest.json")
    assert code == 0 and model.read_bytes() == first
