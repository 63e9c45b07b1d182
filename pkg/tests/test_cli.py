import json

from mlqegan.cli import run
from mlqegan.core import load_config

TINY = ["--set", "dataset.base_h=4", "--set", "dataset.base_w=4", "--set", "dataset.level_counts=[4, 4]",
        "--set", "dataset.val_count=1", "--set", "dataset.test_count=2", "--set", "dataset.source_size=64",
        "--set", "capacity.gen_blocks=[1, 1]", "--set", "capacity.gen_channels=[4, 4]",
        "--set", "capacity.disc_blocks=[2, 2]", "--set", "capacity.disc_channels=[4, 4]",
        "--set", "capacity.disc_hidden=8", "--set", "batch_size=4", "--epochs", "1"]


def test_print_config(capsys):
    assert run(["--print-config", "--seed", "3"]) == 0
    assert "seed = 3" in capsys.readouterr().out


def test_config_error_exit_code(capsys):
    assert run(["train", "--out", "x", "--set", "levels=0"]) == 1
    assert "levels" in capsys.readouterr().err


def test_runtime_error_exit_code(tmp_path):
    assert run(["evaluate", "--model", str(tmp_path / "missing.ckpt"), "--manifest", str(tmp_path),
                "--out", str(tmp_path / "m.csv")]) == 2


def test_config_file_with_override(tmp_path, capsys):
    path = tmp_path / "c.toml"
    path.write_text("seed = 4\nepochs = 9\n")
    assert run(["--config", str(path), "--epochs", "2", "--print-config"]) == 0
    out = capsys.readouterr().out
    assert "seed = 4" in out and "epochs = 2" in out


def test_end_to_end(tmp_path):
    data, model, sweep = tmp_path / "data", tmp_path / "model", tmp_path / "sweep"
    assert run(["synth-data", "--out", str(data), *TINY]) == 0
    assert run(["train", "--out", str(model), "--data", str(data), *TINY]) == 0
    assert (model / "log.csv").exists() and (model / "model.ckpt").exists()
    assert load_config(model / "config.toml").epochs == 1
    assert run(["train", "--out", str(tmp_path / "base"), "--data", str(data), "--baseline", *TINY]) == 0
    assert run(["evaluate", "--model", str(model / "model.ckpt"), "--manifest", str(data),
                "--out", str(tmp_path / "metrics.csv")]) == 0
    assert json.loads((tmp_path / "metrics.json").read_text())["n"] == 2
    assert run(["sweep", "--data", str(data), "--out", str(sweep), "--high-counts", "2,4",
                "--mid-count", "2", "--seeds", "0", *TINY]) == 0
    assert run(["report", "--results", str(sweep), "--out", str(tmp_path / "report")]) == 0
    assert (tmp_path / "report" / "rrmse.png").exists()


def test_resume_flag(tmp_path):
    out = tmp_path / "m"
    assert run(["train", "--out", str(out), *TINY]) == 0
    assert run(["train", "--out", str(tmp_path / "m2"), "--resume", str(out / "model.ckpt"), *TINY]) == 0
    # a structurally different config must refuse the checkpoint
    assert run(["train", "--out", str(tmp_path / "m3"), "--resume", str(out / "model.ckpt"),
                *TINY, "--set", "capacity.gen_channels=[8, 4]"]) == 2


def test_saturating_flag(tmp_path):
    out = tmp_path / "m"
    assert run(["train", "--out", str(out), "--saturating", *TINY]) == 0
    assert load_config(out / "config.toml").adversarial_mode == "saturating"
