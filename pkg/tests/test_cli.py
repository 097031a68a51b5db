import json

import numpy as np
import pytest

from irnn.cli import build_parser, gradcheck, main, max_relative_error
from irnn.datasets import load_dataset


def audit(out):
    line = out.splitlines()[0]
    assert line.startswith("# config ")
    return json.loads(line[len("# config "):])


def test_max_relative_error():
    assert max_relative_error(np.array([1.0, 0.0]), np.array([1.1, 1e-12])) == pytest.approx(0.1 / 1.1)
    assert max_relative_error(np.zeros(2), np.zeros(2)) == 0.0


def test_gradcheck_one_layer(capsys):
    assert main(["gradcheck", "--arch", "one-layer", "--n-in", "3", "--n-out", "4", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert audit(out)["seed"] == 7
    assert "finite-diff" in out


def test_gradcheck_two_layer_reports_all_blocks(capsys):
    assert main(["gradcheck", "--arch", "two-layer", "--n-h", "4"]) == 0
    out = capsys.readouterr().out
    for block in ("Q_L2", "W_L2", "R", "T_L2", "Q_L1", "W_L1", "T_L1"):
        assert f"\n{block} " in out


def test_gradcheck_semi_breaches(capsys):
    assert main(["gradcheck", "--arch", "one-layer-semi"]) == 1
    assert "BREACH" in capsys.readouterr().out


def test_gradcheck_helper_values():
    fd, un = gradcheck("one-layer", 3, None, 4, 7)
    assert max(fd.values()) <= 1e-5 and un is not None and max(un.values()) <= 1e-3


def test_seed_env_override(capsys, monkeypatch):
    monkeypatch.setenv("IRNN_SEED", "5")
    main(["gradcheck", "--seed", "1"])
    assert audit(capsys.readouterr().out)["seed"] == 5


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as info:
        main(["gradcheck", "--bogus"])
    assert info.value.code == 2


def test_help_lists_defaults():
    text = build_parser()._subparsers._group_actions[0].choices["gradcheck"].format_help()
    assert "--tol" in text and "default: 1e-05" in text


def test_xor_semi_short(capsys, tmp_path):
    code = main(["xor", "--mode", "semi", "--epochs", "300", "--out", str(tmp_path / "x.csv")])
    out = capsys.readouterr().out
    assert code in (0, 1)
    assert "Ygt1(xor)" in out and "final Y1+Y2 MSE" in out
    assert (tmp_path / "x.csv").read_text().startswith("run_id,epoch,split,mse,wallclock_s")


def test_pendulum_pipeline(capsys, tmp_path):
    data = tmp_path / "d.csv"
    assert main(["pendulum", "generate", "--samples", "5", "--traj-len", "10", "--out", str(data)]) == 0
    ds = load_dataset(data)
    assert (ds.meta.n_train, ds.meta.n_test) == (4, 1)

    assert main(["pendulum", "generate", "--samples", "50", "--traj-len", "10", "--out", str(data)]) == 0
    args = ["pendulum", "train", "--arch", "implicit", "--epochs", "3", "--steps-per-epoch", "4",
            "--runs", "2", "--eval-every", "1", "--data", str(data)]
    assert main(args + ["--out", str(tmp_path / "o"), "--save", str(tmp_path / "models")]) == 0
    capsys.readouterr()
    metrics = (tmp_path / "o" / "metrics.csv").read_text().splitlines()
    last_test = [l for l in metrics if l.startswith("1,3,test")][0].split(",")[3]
    assert main(["pendulum", "eval", "--model", str(tmp_path / "models" / "model_run1.txt"), "--data", str(data)]) == 0
    out = capsys.readouterr().out
    normalized = float(out.split("test MSE (normalized) ")[1].split()[0])
    assert abs(normalized - float(last_test)) <= 1e-12
    assert "raw units" in out


def test_missing_dataset_is_infra_error(tmp_path, capsys):
    code = main(["pendulum", "train", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")])
    assert code == 2
