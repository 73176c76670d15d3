import json
import math

import numpy as np
import pytest

from hvtm.cli import main
from hvtm.data_io import load_model, write_idx


@pytest.fixture
def tiny_idx(tmp_path):
    """Three classes of 8x8 images: a bar in the top, middle or bottom rows, plus noise."""
    rng = np.random.default_rng(0)
    imgs, labels = [], []
    for i in range(60):
        c = i % 3
        img = (rng.random((8, 8)) < 0.05) * 255
        img[c * 3:c * 3 + 2, 1:7] = 255
        imgs.append(img)
        labels.append(c)
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    ip.write_bytes(write_idx(np.array(imgs, dtype=np.uint8)))
    lp.write_bytes(write_idx(np.array(labels, dtype=np.uint8)))
    return ["--dataset", "idx", "--train-images", str(ip), "--train-labels", str(lp),
            "--n-train-per-class", "12", "--n-test-per-class", "8", "--hv-size", "256",
            "--clauses", "10", "--threshold", "5", "--epochs", "3"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_info(capsys):
    code, out, _ = run(capsys, "info", "--hv-size", "1024", "--nbits", "8", "--tokens", "0")
    d = json.loads(out)
    assert code == 0 and d["overlap_likelihood"] == 0.0
    assert int(d["capacity"]) == math.comb(1024, 8)


def test_train_xor_deterministic(tmp_path, capsys):
    outs = []
    for _ in range(2):
        code, _, _ = run(capsys, "train", "--dataset", "xor", "--epochs", "20", "--ensembles", "2",
                         "--seed", "5", "--output-dir", str(tmp_path / "a"))
        assert code == 0
        outs.append({p.name: p.read_bytes() for p in (tmp_path / "a").iterdir()})
    assert outs[0] == outs[1]
    assert {"manifest.json", "curves.csv", "curves_summary.csv", "model_ens0.json"} <= set(outs[0])


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dataset": "xor", "epochs": 5, "output_dir": str(tmp_path / "o")}))
    assert run(capsys, "train", "--config", str(cfg), "--epochs", "2")[0] == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["run_config"]["epochs"] == 2
    # the manifest doubles as a config for an exact re-run
    assert run(capsys, "train", "--config", str(tmp_path / "o" / "manifest.json"),
               "--output-dir", str(tmp_path / "o2"))[0] == 0
    assert (tmp_path / "o" / "model_ens0.json").read_bytes() == (tmp_path / "o2" / "model_ens0.json").read_bytes()


@pytest.mark.parametrize("argv", [
    ["--dataset", "nope"],
    ["--dataset", "idx"],
    ["--dataset", "xor", "--clauses", "3"],
    ["--dataset", "idx", "--train-images", "/does/not/exist", "--train-labels", "/nope"],
])
def test_config_errors_exit_2_without_outputs(tmp_path, capsys, argv):
    out = tmp_path / "out"
    code, _, err = run(capsys, "train", *argv, "--output-dir", str(out))
    assert code == 2 and "error" in err
    assert not out.exists()


def test_corrupt_data_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.idx"
    bad.write_bytes(b"\x00\x00\x08\x03\x00\x00")
    code, _, err = run(capsys, "train", "--dataset", "idx", "--train-images", str(bad),
                       "--train-labels", str(bad), "--n-train-per-class", "1",
                       "--n-test-per-class", "1", "--output-dir", str(tmp_path / "o"))
    assert code == 3 and "offset" in err


def test_idx_train_eval_explain_encode(tmp_path, capsys, tiny_idx):
    out = tmp_path / "run"
    code, stdout, _ = run(capsys, "train", *tiny_idx, "--output-dir", str(out))
    assert code == 0 and "mean_final_accuracy" in stdout
    model = out / "model_ens0.json"
    assert set(load_model(model).codebooks) == {"patch", "row", "column", "position"}

    code, stdout, _ = run(capsys, "eval", "--model", str(model), *tiny_idx)
    m = json.loads(stdout)
    assert code == 0 and 0 <= m["accuracy"] <= 1 and m["n_samples"] == 24

    code, _, err = run(capsys, "eval", "--model", str(model), *tiny_idx, "--hv-size", "128")
    assert code == 2 and "dimension" in err

    jl = tmp_path / "clauses.jsonl"
    assert run(capsys, "explain", "--model", str(model), "--output", str(jl))[0] == 0
    lines = jl.read_text().splitlines()
    assert len(lines) == 3 * 10 + 1 and "summary" in json.loads(lines[-1])
    assert run(capsys, "explain", "--model", str(model), "--text", "--top-k", "0")[0] == 0

    cache = tmp_path / "enc" / "cache.npz"
    assert run(capsys, "encode", *tiny_idx, "--output", str(cache))[0] == 0
    z = np.load(cache)
    assert z["train_literals"].shape[0] == 36 and int(z["num_features"]) == 256
    assert cache.with_suffix(".codebooks.json").exists()


def test_sweep_resumes(tmp_path, capsys, tiny_idx):
    out = tmp_path / "sweep"
    argv = ["sweep", *tiny_idx, "--hv-sizes", "64,128", "--ensembles", "2", "--output-dir", str(out)]
    assert run(capsys, *argv)[0] == 0
    first = (out / "sweep.csv").read_bytes()
    summary = (out / "sweep_summary.csv").read_text().splitlines()
    assert len(summary) == 3
    cells = (out / "cells.jsonl").read_text()
    assert run(capsys, *argv)[0] == 0
    assert (out / "cells.jsonl").read_text() == cells
    assert (out / "sweep.csv").read_bytes() == first


def test_text_and_fingerprint_datasets(tmp_path, capsys):
    rng = np.random.default_rng(1)
    words = {"LOC": ["where", "city", "country"], "HUM": ["who", "person", "author"]}
    lines = []
    for i in range(40):
        lab = "LOC" if i % 2 else "HUM"
        fine = "city" if lab == "LOC" else "ind"
        lines.append(f"{lab}:{fine}\t{' '.join(rng.choice(words[lab], 3))} is it?")
    tsv = tmp_path / "trec.tsv"
    tsv.write_text("\n".join(lines) + "\n", encoding="utf-8")
    out = tmp_path / "text"
    code, _, _ = run(capsys, "train", "--dataset", "text", "--train-path", str(tsv),
                     "--n-train-per-class", "15", "--n-test-per-class", "5", "--hv-size", "256",
                     "--clauses", "10", "--threshold", "5", "--epochs", "5", "--output-dir", str(out))
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["class_names"] == ["HUM", "LOC"]

    fps = []
    for i in range(40):
        lab = ["CI", "CA", "CM"][i % 3]
        bits = rng.random(64) < 0.1
        bits[0 if lab == "CI" else 1] = True
        value = int("".join("1" if b else "0" for b in bits), 2)
        fps.append(f"{lab}\t{value:016x}")
    fp = tmp_path / "hiv.tsv"
    fp.write_text("\n".join(fps) + "\n", encoding="utf-8")
    out = tmp_path / "fp"
    code, _, _ = run(capsys, "train", "--dataset", "fingerprint", "--train-path", str(fp),
                     "--fingerprint-length", "64", "--n-train-per-class", "8", "--n-test-per-class", "5",
                     "--hv-size", "256", "--clauses", "10", "--threshold", "5", "--epochs", "5",
                     "--output-dir", str(out))
    assert code == 0
    assert json.loads((out / "manifest.json").read_text())["class_names"] == ["Active", "Inactive"]
