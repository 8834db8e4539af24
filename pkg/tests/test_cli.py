import csv

import pytest

from masc.cli import main
from masc.config import DEFAULTS, ConfigError, RunConfig

TINY = """\
# tiny pipeline for tests
height = 32
width = 32
n_train = 6
n_val = 2
n_test = 3
pretrain_epochs = 1
pretrain_batch = 3
mar_depth = 2
mar_channels = 4
encoder_channels = 4,8,8
rollouts = 1
rollout_length = 32
minibatch = 16
mar_finetune_images = 16
mar_finetune_batch = 8
dqn_steps = 48
dqn_batch = 16
"""


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- config ----------------------------------------------------------------
def test_defaults_roundtrip():
    cfg = RunConfig()
    again = RunConfig.parse(cfg.to_text())
    assert again.values == cfg.values
    assert len(cfg.values) == len(DEFAULTS)


def test_parse_comments_and_types():
    cfg = RunConfig.parse("seed = 5  # master\n\n# note\nalpha=50\nencoder_channels = 2, 4, 8\naccel = 5x\n")
    assert cfg["seed"] == 5 and cfg["alpha"] == 50.0 and cfg["encoder_channels"] == (2, 4, 8)
    assert cfg.lines() == (3, 10)
    assert cfg.env().total_lines == 13


@pytest.mark.parametrize("text", ["bogus = 1", "seed = 1\nseed = 2", "seed", "seed = x", "accel = 3x"])
def test_bad_config_rejected(text):
    with pytest.raises(ConfigError):
        RunConfig.parse(text).lines()


def test_explicit_lines_override_preset():
    cfg = RunConfig.parse("initial_lines = 4\nbudget = 2")
    assert cfg.lines() == (4, 2)


def test_module_configs_build():
    cfg = RunConfig()
    assert cfg.data().subject_counts() == {"train": 160, "val": 20, "test": 20}
    assert cfg.masc().ppo.rollout_length == 512 and cfg.masc().env.reward_mode == "mar"
    assert cfg.dqn(double=True).double and cfg.pretrain().lr == 1e-3
    assert cfg.mar().base_channels == 8


# -- commands --------------------------------------------------------------
@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    conf = root / "tiny.cfg"
    conf.write_text(TINY)
    d = root / "data"
    steps = [
        ["gen-data", "--config", str(conf), "--out", str(d)],
        ["pretrain-mar", "--config", str(conf), "--data", str(d), "--out", str(root / "pre")],
        ["train-masc", "--config", str(conf), "--data", str(d), "--out", str(root / "masc"),
         "--mar-checkpoint", str(root / "pre" / "mar.ck")],
        ["train-ppo-raw", "--config", str(conf), "--data", str(d), "--out", str(root / "raw")],
        ["train-dqn", "--config", str(conf), "--data", str(d), "--out", str(root / "ddqn"), "--double"],
        ["evaluate", "--config", str(conf), "--data", str(d), "--out", str(root / "eval"),
         "--mar-checkpoint", str(root / "pre" / "mar.ck"), "--checkpoint", f"masc={root / 'masc'}",
         "--checkpoint", f"ppo-raw={root / 'raw' / 'policy.ck'}", "--checkpoint", f"ss-ddqn={root / 'ddqn'}"],
    ]
    for argv in steps:
        assert main(argv) == 0, argv
    return root


def test_gen_data_outputs(pipeline):
    d = pipeline / "data"
    manifest = _rows(d / "manifest.csv")
    assert len(manifest) == 11
    assert {r["split"] for r in manifest} == {"train", "val", "test"}
    assert (d / "config.txt").exists()


def test_gen_data_bit_identical(pipeline, tmp_path):
    assert main(["gen-data", "--config", str(pipeline / "tiny.cfg"), "--out", str(tmp_path)]) == 0
    for name in ("train.masc", "val.masc", "test.masc", "manifest.csv"):
        assert (tmp_path / name).read_bytes() == (pipeline / "data" / name).read_bytes()


def test_training_outputs(pipeline):
    assert len(_rows(pipeline / "masc" / "train_log.csv")) == 1
    for f in ("policy.ck", "mar.ck", "config.txt"):
        assert (pipeline / "masc" / f).exists()
    assert (pipeline / "ddqn" / "qnet.ck").exists()
    assert len(_rows(pipeline / "pre" / "pretrain_log.csv")) == 1


def test_table_has_row_per_policy_and_flag(pipeline):
    rows = _rows(pipeline / "eval" / "table.csv")
    pairs = {(r["policy"], r["mar"]) for r in rows}
    names = ("center-out", "random", "random-lowbias", "equispaced", "masc", "ppo-raw", "ss-ddqn")
    assert pairs == {(n, f) for n in names for f in ("0", "1")}
    ref = next(r for r in rows if r["policy"] == "masc" and r["mar"] == "1")
    assert ref["p_ssim"] == ""
    assert all(r["p_ssim"] != "" for r in rows if r is not ref)


def test_curve_length(pipeline):
    rows = _rows(pipeline / "eval" / "curves.csv")
    per = {}
    for r in rows:
        per.setdefault((r["policy"], r["mar"]), []).append(int(r["lines"]))
    assert all(v == list(range(1, 7)) for v in per.values())   # budget 5 -> 6 points
    assert (pipeline / "eval" / "curve_ssim.svg").read_text().startswith("<svg")


def test_evaluate_twice_appends_identical_rows(pipeline, tmp_path):
    argv = ["evaluate", "--config", str(pipeline / "tiny.cfg"), "--data", str(pipeline / "data"), "--out",
            str(tmp_path), "--policies", "center-out,masc", "--checkpoint", f"masc={pipeline / 'masc'}"]
    assert main(argv) == 0 and main(argv) == 0
    lines = (tmp_path / "table.csv").read_text().splitlines()
    # center-out has no MAR here, so each run appends center-out, masc, masc+MAR
    assert len(lines) == 1 + 6 and lines[1:4] == lines[4:7]


def test_snapshot_rerun_reproduces_metrics(pipeline, tmp_path):
    snap = pipeline / "masc" / "config.txt"
    argv = ["train-masc", "--config", str(snap), "--out", str(tmp_path), "--mar-checkpoint",
            str(pipeline / "pre" / "mar.ck")]
    assert main(argv) == 0
    assert (tmp_path / "train_log.csv").read_bytes() == (pipeline / "masc" / "train_log.csv").read_bytes()


def test_train_masc_needs_mar_checkpoint(pipeline, capsys):
    assert main(["train-masc", "--config", str(pipeline / "tiny.cfg"), "--data", str(pipeline / "data"),
                 "--out", str(pipeline / "x")]) == 1
    assert "--mar-checkpoint" in capsys.readouterr().err


def test_accel_flag_switches_preset(pipeline, tmp_path):
    argv = ["evaluate", "--config", str(pipeline / "tiny.cfg"), "--data", str(pipeline / "data"), "--out",
            str(tmp_path), "--policies", "center-out", "--accel", "5x", "--no-mar"]
    assert main(argv) == 0
    rows = _rows(tmp_path / "curves.csv")
    assert [int(r["lines"]) for r in rows] == list(range(3, 14))
    assert _rows(tmp_path / "table.csv")[0]["accel"] == "5x"
    assert "accel = 5x" in (tmp_path / "config.txt").read_text()


def test_missing_checkpoints_skip_then_fail(pipeline, tmp_path, capsys):
    base = ["evaluate", "--config", str(pipeline / "tiny.cfg"), "--data", str(pipeline / "data"), "--out",
            str(tmp_path)]
    assert main(base + ["--policies", "dqn,random", "--checkpoint", "dqn=nowhere.ck", "--no-mar"]) == 0
    assert "dqn" in capsys.readouterr().err
    assert main(base + ["--policies", "dqn", "--checkpoint", "dqn=nowhere.ck"]) == 1


def test_invalid_inputs_exit_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 3\n")
    assert main(["gen-data", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert main(["pretrain-mar", "--data", str(tmp_path / "none"), "--out", str(tmp_path)]) == 1
    assert main(["evaluate", "--policies", "spiral", "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err
