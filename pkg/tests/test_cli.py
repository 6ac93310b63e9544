import csv
import io
import json

import numpy as np
import pytest

import suite
from wrongevent.cli import main, read_values
from wrongevent.errors import DomainError
from wrongevent.experiment import ABLATION_CELLS
from wrongevent.evaluation import METRICS


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], stdout=out)
    return code, out.getvalue()


@pytest.fixture
def smoke_cfg(tmp_path):
    path = tmp_path / "smoke.json"
    path.write_text(json.dumps(suite.SMOKE))
    return path


def read_csv(path):
    with open(path) as fh:
        return [r for r in csv.reader(fh) if r and not r[0].startswith("#")]


def test_gen_writes_expected_rows_and_is_repeatable(tmp_path, smoke_cfg):
    code, _ = run("gen", "--config", smoke_cfg, "--out", tmp_path / "a", "--seed", 3)
    assert code == 0
    train = read_csv(tmp_path / "a" / "train.csv")
    test = read_csv(tmp_path / "a" / "test.csv")
    assert train[0] == ["f0", "f1", "given", "true"] and len(train) == 401 and len(test) == 401
    flips = np.mean([r[2] != r[3] for r in train[1:]])
    assert abs(flips - 0.3) < 0.07
    assert all(r[2] == r[3] for r in test[1:])
    run("gen", "--config", smoke_cfg, "--out", tmp_path / "b", "--seed", 3)
    assert (tmp_path / "a" / "train.csv").read_bytes() == (tmp_path / "b" / "train.csv").read_bytes()


def test_gen_refuses_to_overwrite(tmp_path, smoke_cfg):
    out = tmp_path / "g"
    assert run("gen", "--config", smoke_cfg, "--out", out)[0] == 0
    assert run("gen", "--config", smoke_cfg, "--out", out)[0] == 3
    assert run("gen", "--config", smoke_cfg, "--out", out, "--force")[0] == 0


def test_train_writes_run_directory(tmp_path, smoke_cfg):
    out = tmp_path / "run"
    code, text = run("train", "--config", smoke_cfg, "--out", out)
    assert code == 0 and "final test accuracy" in text
    for name in ("config.json", "metrics.csv", "weights_final.csv", "bank_final.csv", "base.ckpt",
                 "final.ckpt", "summary.json"):
        assert (out / name).exists(), name
    metrics = read_csv(out / "metrics.csv")
    assert metrics[0] == ["epoch", "stage", "train_loss", "test_acc", "label_wave", "auc_we", "auc_loss"]
    assert [r[1] for r in metrics[1:]] == ["1"] * 10 + ["2"] * 10
    weights = read_csv(out / "weights_final.csv")
    assert len(weights) == 401
    t1 = np.array([float(r[3]) for r in weights[1:]])
    t2 = np.array([float(r[5]) for r in weights[1:]])
    assert np.max(np.abs(t1 + t2 - 1)) <= 1e-9
    assert len(read_csv(out / "bank_final.csv")) == 5
    summary = json.loads((out / "summary.json").read_text())
    assert summary["stage2"]["max_tau_sum_error"] <= 1e-9
    assert [s["threshold"] for s in summary["stage2"]["selection"]] == [0.2, 0.5, 0.8]

    code, text = run("report", out)
    assert code == 0 and "digests: all match" in text
    (out / "metrics.csv").write_text("tampered\n")
    assert "MISMATCH in metrics.csv" in run("report", out)[1]


def test_train_stage1_only(tmp_path, smoke_cfg):
    out = tmp_path / "s1"
    assert run("train", "--config", smoke_cfg, "--out", out, "--stage1-only")[0] == 0
    assert not (out / "weights_final.csv").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert "stage2" not in summary and summary["final_test_acc"] == summary["stage1_final_test_acc"]
    assert "stage 2: not run" in run("report", out)[1]


def test_identical_reruns_give_identical_digests(tmp_path, smoke_cfg):
    for d in ("a", "b"):
        assert run("train", "--config", smoke_cfg, "--out", tmp_path / d, "--seed", 7)[0] == 0
    a = json.loads((tmp_path / "a" / "summary.json").read_text())
    b = json.loads((tmp_path / "b" / "summary.json").read_text())
    assert a["digests"] == b["digests"]
    assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()


def test_config_errors_exit_1_and_name_the_key(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"train": {"lrr": 0.1}}))
    assert run("train", "--config", bad, "--out", tmp_path / "x")[0] == 1
    assert "train.lrr" in capsys.readouterr().err
    bad.write_text(json.dumps({"noise": {"eta": 2}}))
    assert run("gen", "--config", bad, "--out", tmp_path / "x")[0] == 1
    assert "noise.eta" in capsys.readouterr().err
    bad.write_text("{not json")
    assert run("gen", "--config", bad, "--out", tmp_path / "x")[0] == 1
    assert run("gen", "--config", tmp_path / "missing.json", "--out", tmp_path / "x")[0] == 3


def test_argument_errors_exit_1():
    with pytest.raises(SystemExit) as exc:
        main(["train", "--seed", "-1"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code == 1


def _write_values(path, values, header=True):
    path.write_text(("value\n" if header else "") + "".join(f"{float(v)!r}\n" for v in values))
    return path


def test_fit_echoes_default_init_and_recovers_mixture(tmp_path):
    rng = np.random.default_rng(0)
    n = 3000
    x = np.where(rng.random(n) < 0.6, rng.beta(2, 10, n), rng.beta(8, 3, n))
    path = _write_values(tmp_path / "v.csv", x)
    code, text = run("fit", path, "--out", tmp_path / "fit")
    assert code == 0
    lines = text.splitlines()
    assert lines[0] == "init: Beta(1,2)/Beta(2,1) weights 0.5/0.5"
    means = [float(v) for v in lines[1].split("means ")[1].split("/")]
    assert abs(means[0] - 2 / 12) < 0.03 and abs(means[1] - 8 / 11) < 0.03
    assert lines[2] == "idx,value,tau1,eps,tau2" and len(lines) == 3 + n
    rows = read_csv(tmp_path / "fit" / "fit.csv")
    assert len(rows) == n + 1
    assert all(abs(float(r[2]) + float(r[4]) - 1) <= 1e-9 and 0 <= float(r[3]) <= 1 for r in rows[1:])


def test_fit_custom_init(tmp_path):
    path = _write_values(tmp_path / "v.csv", np.linspace(0.05, 0.95, 40), header=False)
    code, text = run("fit", path, "--init", "2,5,5,2,0.3")
    assert code == 0 and text.startswith("init: Beta(2,5)/Beta(5,2) weights 0.3/0.7")
    assert run("fit", path, "--init", "2,5,5")[0] == 1
    assert run("fit", path, "--init", "2,5,5,-2")[0] == 1


def test_fit_errors(tmp_path, capsys):
    const = _write_values(tmp_path / "c.csv", [0.3] * 20)
    assert run("fit", const)[0] == 2
    out_of_range = _write_values(tmp_path / "o.csv", [0.2, 0.5, 1.0, 0.4])
    assert run("fit", out_of_range)[0] == 1
    assert "row 2" in capsys.readouterr().err
    garbage = tmp_path / "g.csv"
    garbage.write_text("value\n0.1\nabc\n")
    assert run("fit", garbage)[0] == 1
    assert run("fit", tmp_path / "nope.csv")[0] == 3


def test_read_values(tmp_path):
    p = tmp_path / "v.csv"
    p.write_text("w,other\n0.25,x\n\n0.5,y\n")
    assert read_values(p).tolist() == [0.25, 0.5]
    p.write_text("0.5\n0\n")
    with pytest.raises(DomainError, match="row 1 is 0.0"):
        read_values(p)


def test_compare_table_shape(tmp_path, smoke_cfg):
    out = tmp_path / "cmp"
    assert run("compare", "--config", smoke_cfg, "--out", out)[0] == 0
    lines = (out / "compare.csv").read_text().splitlines()
    assert lines[0].startswith("# schema:")
    rows = read_csv(out / "compare.csv")
    assert rows[0] == ["epoch", *METRICS]
    assert [r[0] for r in rows[1:]] == ["1", "5", "10", "20"]
    assert rows[1][METRICS.index("fe") + 1] == "-"
    for r in rows[2:]:
        assert all(v == "-" or 0 <= float(v) <= 1 for v in r[1:])


def test_ablate_table(tmp_path, smoke_cfg):
    out = tmp_path / "abl"
    code, text = run("ablate", "--config", smoke_cfg, "--out", out)
    assert code == 0
    rows = read_csv(out / "ablate.csv")
    assert [r[0] for r in rows[1:]] == [c[0] for c in ABLATION_CELLS]
    assert all(r[4] == "ok" and 0 <= float(r[3]) <= 1 for r in rows[1:])
    assert len(text.splitlines()) == len(ABLATION_CELLS)
