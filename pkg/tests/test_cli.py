import json
import subprocess
import sys

import pytest

from smre.cli import main

TINY = """epochs = 1
lr = 0.003
batch_size = 8
dims.d_v = 16
dims.d_h = 8
dims.d_s = 6
dims.d_t = 6
dims.d_e = 6
dims.d_dec = 8
dims.d_att = 5
beam_size = 2
max_len = 12
"""


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "tiny.cfg").write_text(TINY)
    assert main(["gen-data", "--n-videos", "20", "--d-v", "16", "--n-subjects", "3",
                 "--n-objects", "3", "--n-verbs", "3", "--seed", "1",
                 "--out", str(tmp_path / "c.jsonl")]) == 0
    return tmp_path


def _args(d, *extra):
    return ["--data", str(d / "c.jsonl"), "--config", str(d / "tiny.cfg"), *extra]


def test_train_eval_decode(workdir, capsys):
    assert main(["train", *_args(workdir, "--out", str(workdir / "run"))]) == 0
    capsys.readouterr()
    ck = str(workdir / "run" / "best.ckpt")
    assert main(["eval", "--data", str(workdir / "c.jsonl"), "--checkpoint", ck,
                 "--beam-size", "3"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["support_set_calls"] == 0 and report["text_encoder_calls"] == 0
    assert report["meteor"] == "unavailable" and report["n_videos"] == 4
    assert main(["decode", "--data", str(workdir / "c.jsonl"), "--checkpoint", ck,
                 "vid0003", "vid0000"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [ln.split("\t")[0] for ln in lines] == ["vid0003", "vid0000"]


def test_eval_without_checkpoint(workdir, capsys):
    code = main(["eval", "--data", str(workdir / "c.jsonl"), "--checkpoint",
                 str(workdir / "missing.ckpt")])
    assert code == 1
    assert "missing.ckpt" in capsys.readouterr().err


def test_ablate_five_rows(workdir, capsys):
    out = workdir / "rows.jsonl"
    assert main(["ablate", *_args(workdir, "--out", str(out))]) == 0
    table = capsys.readouterr().out.strip().splitlines()
    assert len(table) == 6
    rows = [json.loads(x) for x in out.read_text().splitlines()]
    assert [r["setting"] for r in rows] == ["baseline", "l_sup", "+l_inter", "+l_intra",
                                            "l_overall"]


def test_sweep_y_five_rows(workdir, capsys):
    assert main(["sweep-y", *_args(workdir)]) == 0
    table = capsys.readouterr().out.strip().splitlines()
    assert [ln.split()[0] for ln in table[1:]] == ["Y=0.0", "Y=0.2", "Y=0.5", "Y=0.8", "Y=1.0"]


def test_gradcheck_passes(capsys):
    assert main(["gradcheck", "--seed", "2"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "overall_loss(B=4)" in out


@pytest.mark.parametrize("argv", [["frobnicate"], ["train", "--bogus"], [],
                                  ["eval", "--data", "x"], ["train", "--data", "x",
                                                            "--set", "novalue"]])
def test_usage_errors(argv, capsys):
    assert main(argv) == 1
    assert capsys.readouterr().err


def test_bad_config_value(workdir, capsys):
    assert main(["train", *_args(workdir, "--set", "tel_prob=3")]) == 1
    assert "tel_prob" in capsys.readouterr().err


def test_corrupt_data(tmp_path, capsys):
    (tmp_path / "bad.jsonl").write_text("{oops\n")
    assert main(["train", "--data", str(tmp_path / "bad.jsonl")]) == 1
    assert "line 1" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_runtime_failure_exit_code(workdir, capsys):
    # a learning rate this large blows the loss up to inf on the first steps
    code = main(["train", *_args(workdir, "--set", "lr=1e30", "--set", "clip_norm=0",
                                 "--set", "epochs=3", "--out", str(workdir / "r"))])
    assert code == 2
    assert "runtime failure" in capsys.readouterr().err


def test_help_exits_zero():
    out = subprocess.run([sys.executable, "-m", "smre.cli", "--help"], capture_output=True,
                         text=True)
    assert out.returncode == 0 and "sweep-y" in out.stdout
