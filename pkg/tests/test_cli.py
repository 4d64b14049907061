import csv

import numpy as np
import pytest

from pyramidlstm import cli
from pyramidlstm.config import load
from pyramidlstm.network import load_checkpoint
from pyramidlstm.volume import read_labels, read_vol

from toy_workspace import write_workspace


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_param_count_fc_only(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[arch]\ninput_channels = 16\nlayers = fc:25:tanh\n")
    assert run("param-count", "--config", cfg, "--out", tmp_path) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[-1].split() == ["total", "425"]


def test_param_count_default_architecture(capsys):
    assert run("param-count") == 0
    assert capsys.readouterr().out.splitlines()[-1].split() == ["total", "10673400"]


@pytest.mark.parametrize("text, field", [
    ("[arch]\nlayerz = fc:2:softmax\n", "arch.layerz"),
    ("[bogus]\n", "bogus"),
    ("[arch]\nlayers = conv:3\n", "arch.layers"),
    ("[schedule]\nstages = 10@8x8\n", "schedule.stages"),
    ("[run]\nseed = x\n", "run.seed"),
])
def test_config_errors_exit_2(tmp_path, capsys, text, field):
    cfg = tmp_path / "c.ini"
    cfg.write_text(text)
    assert run("param-count", "--config", cfg) == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("pyramidlstm: error kind=config")
    assert f"field={field}" in err and "\n" not in err


def test_data_error_exit_3(tmp_path, capsys):
    bad = tmp_path / "x.lab"
    bad.write_bytes(b"nope")
    cfg = tmp_path / "c.ini"
    cfg.write_text(f"[evaluate]\nprediction = {bad}\nreference = {bad}\n")
    assert run("evaluate", "--config", cfg, "--out", tmp_path) == 3
    assert "kind=data field=magic" in capsys.readouterr().err


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("ws")
    configs, pairs = write_workspace(root)
    for n in range(3):
        assert run("preprocess", "--config", configs[f"pre{n}"]) == 0
    assert run("train", "--config", configs["main"]) == 0
    assert run("predict", "--config", configs["main"]) == 0
    assert run("evaluate", "--config", configs["main"]) == 0
    return root, configs, pairs


def test_pipeline_artifacts(pipeline):
    root, configs, pairs = pipeline
    pre = read_vol(root / "pre0.vol")
    assert pre.shape == (16, 16, 8, 1)
    assert np.max(np.abs(pre.mean(axis=(0, 1)))) <= 1e-10
    probs = read_vol(root / "probs.vol")
    assert probs.shape == (16, 16, 8, 2)
    assert np.max(np.abs(probs.sum(-1) - 1)) <= 1e-10
    labels = read_labels(root / "pred.lab")
    assert labels.num_classes == 2
    with open(root / "out" / "loss.csv") as f:
        rows = list(csv.DictReader(f))
    assert [int(r["epoch"]) for r in rows] == list(range(10))
    with open(root / "metrics.csv") as f:
        metrics = list(csv.DictReader(f))
    assert {m["metric"] for m in metrics} >= {"dice", "hausdorff95", "avd", "pixel_error",
                                               "rand_error"}
    net = load_checkpoint(root / "out" / "checkpoint.pnet")[0]
    assert net.input_channels == 1


def test_resolved_config_reloads(pipeline):
    root, _, _ = pipeline
    cfg = load(root / "out" / "resolved_config.ini")
    assert cfg.num_classes == 2 and cfg.schedule.total_epochs == 10


def test_evaluate_against_itself(pipeline, tmp_path, capsys):
    root, _, _ = pipeline
    cfg = tmp_path / "self.ini"
    cfg.write_text(f"[evaluate]\nprediction = {root / 'pred.lab'}\nreference = {root / 'pred.lab'}\n"
                   f"classes = 0, 1\noutput = {tmp_path / 'm.csv'}\n")
    assert run("evaluate", "--config", cfg, "--out", tmp_path) == 0
    with open(tmp_path / "m.csv") as f:
        rows = list(csv.DictReader(f))
    labels = read_labels(root / "pred.lab").labels
    for r in rows:
        if r["metric"] == "dice" and (labels == int(r["class"])).any():
            assert float(r["value"]) == 1.0


def test_cli_resume_bit_identical(pipeline, tmp_path):
    root, configs, _ = pipeline
    full = (root / "out" / "checkpoint.pnet").read_bytes()
    out = tmp_path / "split"
    assert run("train", "--config", configs["main"], "--out", out, "--stop-epoch", 7) == 0
    assert load_checkpoint(out / "checkpoint.pnet")[3] == 7
    assert run("train", "--config", configs["main"], "--out", out,
               "--resume", out / "checkpoint.pnet") == 0
    assert (out / "checkpoint.pnet").read_bytes() == full
    with open(out / "loss.csv") as f:
        assert [int(r["epoch"]) for r in csv.DictReader(f)] == list(range(10))


def test_resume_with_wrong_seed(pipeline, tmp_path, capsys):
    root, configs, _ = pipeline
    code = run("train", "--config", configs["main"], "--out", tmp_path, "--seed", 5,
               "--resume", root / "out" / "checkpoint.pnet")
    assert code == 2 and "field=run.seed" in capsys.readouterr().err


def test_bench_small(tmp_path, capsys):
    cfg = tmp_path / "b.ini"
    cfg.write_text("[arch]\nfilter_size = 3\nlayers = pyramid:2, fc:classes:softmax\n"
                   "[bench]\ndims = 8x8x4\nthreads = 1, 2\n")
    assert run("bench", "--config", cfg, "--out", tmp_path) == 0
    with open(tmp_path / "bench.csv") as f:
        rows = list(csv.DictReader(f))
    assert [int(r["threads"]) for r in rows] == [1, 2]
    assert float(rows[0]["speedup"]) == 1.0
    assert "bit-identical across thread counts: True" in capsys.readouterr().out
