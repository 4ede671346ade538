import csv
import json
import os

import numpy as np
import pytest

from hdrenhance.cli import main
from hdrenhance.imageio import load_png, save_png
from hdrenhance.nn.checkpoint import read_manifest

TRAIN_FLAGS = ["--epochs", "1", "--iters", "2", "--batch", "2", "--width-scale", "0.125",
               "--patch-size", "32", "--seed", "3"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def hdr_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("hdr")
    assert run("scenes", "--out", d, "--count", 4, "--seed", 5, "--height", 48, "--width", 64) == 0
    return d


@pytest.fixture(scope="module")
def checkpoint(hdr_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert run("train", "--hdr-dir", hdr_dir, "--out", out, *TRAIN_FLAGS) == 0
    return out / "ckpt_epoch1.nncp"


def read_bytes(directory):
    return {name: (directory / name).read_bytes() for name in sorted(os.listdir(directory))}


def test_scenes_written(hdr_dir):
    assert sorted(os.listdir(hdr_dir)) == [f"scene_{i:04d}.hdr" for i in range(4)]


def test_synth_file_count_and_determinism(hdr_dir, tmp_path, capsys):
    assert run("synth", "--hdr-dir", hdr_dir, "--out", tmp_path / "a", "--count", 8, "--seed", 1,
               "--size", 32) == 0
    assert "8 pairs" in capsys.readouterr().out
    files = read_bytes(tmp_path / "a")
    assert len(files) == 24
    assert {"00000_x.png", "00000_y.png", "00000.json", "00007.json"} <= set(files)
    assert run("synth", "--hdr-dir", hdr_dir, "--out", tmp_path / "b", "--count", 8, "--seed", 1,
               "--size", 32) == 0
    assert read_bytes(tmp_path / "b") == files
    record = json.loads(files["00003.json"])
    assert record["source"] == "scene_0003.hdr"
    assert load_png(tmp_path / "a" / "00000_x.png").shape == (32, 32, 3)


def test_synth_empty_dir(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert run("synth", "--hdr-dir", tmp_path / "empty", "--out", tmp_path / "o") == 2
    assert "no readable" in capsys.readouterr().err


def test_synth_skips_unreadable(hdr_dir, tmp_path):
    d = tmp_path / "mixed"
    d.mkdir()
    (d / "a_broken.hdr").write_bytes(b"not an hdr file")
    (d / "b_good.hdr").write_bytes((hdr_dir / "scene_0000.hdr").read_bytes())
    assert run("synth", "--hdr-dir", d, "--out", tmp_path / "o", "--count", 2, "--size", 16) == 0
    assert json.loads((tmp_path / "o" / "00001.json").read_text())["source"] == "b_good.hdr"


def test_train_outputs(checkpoint):
    out = checkpoint.parent
    with open(out / "loss_log.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 3
    assert sorted(p for p in os.listdir(out) if p.endswith(".nncp")) == ["ckpt_epoch1.nncp"]


def test_train_is_byte_deterministic(hdr_dir, checkpoint, tmp_path):
    assert run("train", "--hdr-dir", hdr_dir, "--out", tmp_path, *TRAIN_FLAGS) == 0
    assert (tmp_path / "ckpt_epoch1.nncp").read_bytes() == checkpoint.read_bytes()
    assert (tmp_path / "loss_log.csv").read_bytes() == (checkpoint.parent / "loss_log.csv").read_bytes()


def test_train_without_global_encoder(hdr_dir, tmp_path):
    assert run("train", "--hdr-dir", hdr_dir, "--out", tmp_path, *TRAIN_FLAGS, "--no-global-encoder") == 0
    names = [t["name"] for t in read_manifest(tmp_path / "ckpt_epoch1.nncp")["tensors"]]
    assert names and not any(n.startswith("global.") for n in names)


def test_train_precompute(hdr_dir, tmp_path):
    assert run("train", "--hdr-dir", hdr_dir, "--out", tmp_path, *TRAIN_FLAGS, "--precompute") == 0


@pytest.mark.parametrize("flags", [["--width-scale", "0.3"], ["--epochs", "0"], ["--patch-size", "40"],
                                   ["--batch", "two"]])
def test_train_invalid_flags(hdr_dir, tmp_path, flags):
    argv = ["train", "--hdr-dir", hdr_dir, "--out", tmp_path] + TRAIN_FLAGS + flags
    if flags[1] == "two":
        with pytest.raises(SystemExit) as exc:
            run(*argv)
        assert exc.value.code == 2
    else:
        assert run(*argv) == 2


def test_config_file_and_flag_precedence(hdr_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"hdr_dir": str(hdr_dir), "count": 3, "size": 16, "seed": 9}))
    assert run("synth", "--config", cfg, "--out", tmp_path / "a", "--count", 2) == 0
    assert len(os.listdir(tmp_path / "a")) == 6
    assert json.loads((tmp_path / "a" / "00000.json").read_text())["size"] == 16


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(SystemExit) as exc:
        run("synth", "--config", cfg, "--hdr-dir", tmp_path, "--out", tmp_path)
    assert exc.value.code == 2


def test_enhance_single_and_batch(checkpoint, tmp_path):
    rng = np.random.default_rng(0)
    inputs = tmp_path / "in"
    inputs.mkdir()
    for i, size in enumerate([(40, 48), (32, 32), (17, 60)]):
        save_png(inputs / f"img{i}.png", rng.integers(0, 80, size + (3,)).astype(np.uint8))
    assert run("enhance", "--checkpoint", checkpoint, "--input", inputs / "img0.png",
               "--out", tmp_path / "one.png") == 0
    assert load_png(tmp_path / "one.png").shape == (40, 48, 3)
    assert run("enhance", "--checkpoint", checkpoint, "--input", inputs, "--out", tmp_path / "out") == 0
    assert sorted(os.listdir(tmp_path / "out")) == ["img0.png", "img1.png", "img2.png"]
    assert (tmp_path / "out" / "img0.png").read_bytes() == (tmp_path / "one.png").read_bytes()


def test_enhance_corrupt_checkpoint(checkpoint, tmp_path):
    bad = tmp_path / "bad.nncp"
    bad.write_bytes(checkpoint.read_bytes()[:-100])
    save_png(tmp_path / "x.png", np.zeros((32, 32, 3), np.uint8))
    assert run("enhance", "--checkpoint", bad, "--input", tmp_path / "x.png", "--out", tmp_path / "y.png") == 3
    assert not (tmp_path / "y.png").exists()


def test_enhance_missing_input(checkpoint, tmp_path):
    assert run("enhance", "--checkpoint", checkpoint, "--input", tmp_path / "nope.png",
               "--out", tmp_path / "y.png") == 2


def test_eval_without_checkpoint(hdr_dir, tmp_path):
    report = tmp_path / "r.csv"
    argv = ["eval", "--hdr-dir", hdr_dir, "--methods", "input,he", "--report", report, "--size", 48,
            "--seed", 2]
    assert run(*argv) == 0
    with open(report) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["id", "method", "tmqi", "tmqi_s", "tmqi_n", "entropy"]
    assert len(rows) == 8
    summary = json.loads((tmp_path / "r.json").read_text())["methods"]
    for method in ("input", "he"):
        for col in ("tmqi", "tmqi_s", "tmqi_n", "entropy"):
            mean = np.mean([float(r[col]) for r in rows if r["method"] == method])
            assert abs(summary[method][col] - mean) < 1e-9
    first = report.read_bytes()
    assert run(*argv) == 0
    assert report.read_bytes() == first


def test_eval_proposed(hdr_dir, checkpoint, tmp_path):
    assert run("eval", "--hdr-dir", hdr_dir, "--methods", "input,proposed", "--checkpoint", checkpoint,
               "--report", tmp_path / "r.csv", "--size", 32, "--save-outputs", tmp_path / "o") == 0
    assert len(os.listdir(tmp_path / "o")) == 8


def test_eval_proposed_needs_checkpoint(hdr_dir, tmp_path):
    assert run("eval", "--hdr-dir", hdr_dir, "--methods", "proposed", "--report", tmp_path / "r.csv") == 2


def test_eval_unknown_method(hdr_dir, tmp_path):
    assert run("eval", "--hdr-dir", hdr_dir, "--methods", "input,niqe", "--report", tmp_path / "r.csv") == 2


def test_fuse_identical(tmp_path):
    img = np.random.default_rng(1).integers(0, 256, (20, 30, 3)).astype(np.uint8)
    for name in "abc":
        save_png(tmp_path / f"{name}.png", img)
    assert run("fuse", "--inputs", tmp_path / "a.png", tmp_path / "b.png", tmp_path / "c.png",
               "--out", tmp_path / "f.png") == 0
    np.testing.assert_array_equal(load_png(tmp_path / "f.png"), img)


def test_fuse_dimension_mismatch(tmp_path):
    save_png(tmp_path / "a.png", np.zeros((20, 30, 3), np.uint8))
    save_png(tmp_path / "b.png", np.zeros((20, 31, 3), np.uint8))
    assert run("fuse", "--inputs", tmp_path / "a.png", tmp_path / "b.png", "--out", tmp_path / "f.png") == 2
    assert not (tmp_path / "f.png").exists()


def test_json_log(hdr_dir, tmp_path, capfd):
    assert run("synth", "--hdr-dir", hdr_dir, "--out", tmp_path, "--count", 1, "--size", 16, "--json-log") == 0
    err = capfd.readouterr().err.strip().splitlines()
    assert err and all(json.loads(line)["level"] for line in err)


def test_bad_thread_env(monkeypatch, tmp_path):
    monkeypatch.setenv("HDRE_THREADS", "zero")
    assert run("fuse", "--inputs", tmp_path / "a.png", "--out", tmp_path / "f.png") == 2
