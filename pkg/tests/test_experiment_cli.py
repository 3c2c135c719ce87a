import csv
import json
import os

import numpy as np
import pytest

from bridgemi import cli
from bridgemi.driftnet import load_checkpoint
from bridgemi.errors import ConfigError
from bridgemi.experiment import ExperimentConfig, resolve_threads, run_experiment
from bridgemi.numcore import Rng

FAST = {"train_steps": 30, "eval_tuples": 500}


def _doc(out, **kw):
    doc = {
        "schema_version": 1,
        "tasks": [
            {"name": "biv", "kind": "gaussian", "dim": 1, "structure": "bivariate", "n_train": 200, "n_test": 100},
            {"name": "pair2", "kind": "gaussian", "dim": 2, "structure": "two-pair", "n_train": 200, "n_test": 100},
        ],
        "methods": [{"method": "infobridge", "overrides": FAST}],
        "seeds": [0, 1, 2],
        "output_dir": str(out),
    }
    doc.update(kw)
    return doc


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_grid_writes_one_report_per_run(tmp_path):
    cfg = ExperimentConfig.from_dict(_doc(tmp_path / "out"))
    assert run_experiment(cfg) == 0
    reports = sorted(os.listdir(tmp_path / "out" / "reports"))
    assert len(reports) == 6
    rows = _read_csv(tmp_path / "out" / "aggregate.csv")
    assert rows[0] == ["task", "method", "gt_mi", "mean_est", "std_est", "n_seeds", "mae"]
    assert [r[0] for r in rows[1:]] == ["biv", "pair2"]
    assert _read_csv(tmp_path / "out" / "plot_data.csv")[0] == ["task", "method", "x", "y", "err"]
    rec = json.loads((tmp_path / "out" / "reports" / "biv__infobridge__seed0.json").read_text())
    assert rec["status"] == "ok" and len(rec["config_fingerprint"]) == 16


def test_rerun_gives_identical_aggregate_bytes(tmp_path):
    blobs = []
    for sub in ("a", "b"):
        cfg = ExperimentConfig.from_dict(_doc(tmp_path / sub))
        run_experiment(cfg, threads=2 if sub == "b" else 1)
        blobs.append((tmp_path / sub / "aggregate.csv").read_bytes())
    assert blobs[0] == blobs[1]


def test_aggregate_matches_reports(tmp_path):
    doc = _doc(tmp_path / "out", methods=[{"method": "infobridge", "overrides": FAST}, {"method": "ksg"}])
    run_experiment(ExperimentConfig.from_dict(doc))
    rows = _read_csv(tmp_path / "out" / "aggregate.csv")[1:]
    assert len(rows) == 4
    for task, method, gt, mean, std, n, mae in rows:
        recs = [json.loads((tmp_path / "out" / "reports" / f"{task}__{method}__seed{s}.json").read_text()) for s in range(3)]
        est = np.array([r["estimate_nats"] for r in recs])
        assert int(n) == 3
        assert abs(float(mean) - est.mean()) <= 1e-12
        assert abs(float(std) - est.std(ddof=1)) <= 1e-12
        assert abs(float(mae) - np.abs(est - float(gt)).mean()) <= 1e-12


def test_fingerprints_track_config(tmp_path):
    doc = _doc(tmp_path / "out", seeds=[0, 1])
    doc["methods"] = [{"method": "oracle-mi", "overrides": {"eval_tuples": 200}}]
    run_experiment(ExperimentConfig.from_dict(doc))
    fps = {json.loads((tmp_path / "out" / "reports" / f"biv__oracle-mi__seed{s}.json").read_text())["config_fingerprint"] for s in (0, 1)}
    assert len(fps) == 2


@pytest.mark.parametrize(
    "mutate,field",
    [
        (lambda d: d["tasks"][1].update(bogus=1), "tasks[1].bogus"),
        (lambda d: d.update(extra=True), "extra"),
        (lambda d: d["methods"][0]["overrides"].update(speed=2), "methods[0].overrides.speed"),
        (lambda d: d.update(schema_version=2), "schema_version"),
        (lambda d: d.update(seeds=[]), "seeds"),
        (lambda d: d["methods"][0].update(method="mine"), "methods[0].method"),
        (lambda d: d["tasks"][0].update(structure="spiral"), "tasks[0].structure"),
        (lambda d: d["methods"][0].update(method="kl"), "methods[0].method"),
    ],
)
def test_config_errors_name_the_field(tmp_path, mutate, field):
    doc = _doc(tmp_path)
    doc["methods"][0]["overrides"] = dict(FAST)
    mutate(doc)
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict(doc)
    assert info.value.field == field


def test_failed_run_is_kept_and_flagged(tmp_path):
    doc = _doc(tmp_path / "out", seeds=[0])
    doc["tasks"] = [{"name": "ent", "kind": "distribution", "distribution": {"kind": "gaussian", "dim": 3}, "n_train": 2, "n_test": 2}]
    doc["methods"] = [{"method": "entropy-gaussian", "overrides": FAST}]
    assert run_experiment(ExperimentConfig.from_dict(doc)) == 3
    rec = json.loads((tmp_path / "out" / "reports" / "ent__entropy-gaussian__seed0.json").read_text())
    assert rec["status"] == "failed"


def test_all_methods_run(tmp_path):
    doc = {
        "schema_version": 1,
        "tasks": [
            {"name": "box", "kind": "distribution", "distribution": {"kind": "uniform-box", "dim": 2, "params": {"hi": 2.0}}, "n_train": 100, "n_test": 50},
            {"name": "shift", "kind": "kl-pair", "p1": {"kind": "gaussian", "dim": 1}, "p2": {"kind": "gaussian", "dim": 1, "params": {"mean": 1.0}}, "n_train": 100, "n_test": 50},
            {"name": "noise", "kind": "uniform-noise", "noise_scale": 0.75, "n_train": 100, "n_test": 50},
        ],
        "methods": ["entropy-uniform", "entropy-gaussian", "kl", "oracle-kl", "oracle-mi", "ksg"],
        "seeds": [0],
        "output_dir": str(tmp_path / "out"),
        "defaults": FAST,
    }
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(doc)
    doc["methods"] = [
        {"method": "entropy-uniform", "overrides": {"reference": {"kind": "scaled-normal", "variance": 2.0}}},
        {"method": "entropy-gaussian", "overrides": {"net": {"hidden_width": 16, "embed_dim": 16}}},
    ]
    doc["tasks"] = doc["tasks"][:1]
    assert run_experiment(ExperimentConfig.from_dict(doc)) == 0
    rows = _read_csv(tmp_path / "out" / "aggregate.csv")[1:]
    assert [r[1] for r in rows] == ["entropy-uniform", "entropy-gaussian"]
    assert float(rows[0][2]) == pytest.approx(2 * np.log(2.0))


def test_kl_and_oracle_methods(tmp_path):
    doc = {
        "schema_version": 1,
        "tasks": [{"name": "shift", "kind": "kl-pair", "p1": {"kind": "gaussian", "dim": 1}, "p2": {"kind": "gaussian", "dim": 1, "params": {"mean": 1.0}}, "n_train": 100, "n_test": 2000}],
        "methods": ["kl", "oracle-kl"],
        "seeds": [0],
        "output_dir": str(tmp_path / "out"),
        "defaults": FAST,
    }
    assert run_experiment(ExperimentConfig.from_dict(doc)) == 0
    rec = json.loads((tmp_path / "out" / "reports" / "shift__oracle-kl__seed0.json").read_text())
    assert rec["gt"] == 0.5 and rec["estimate_nats"] == pytest.approx(0.5, abs=1e-12)


def test_checkpoint_written_and_loadable(tmp_path):
    doc = _doc(tmp_path / "out", seeds=[0])
    doc["tasks"] = doc["tasks"][:1]
    doc["methods"][0]["overrides"] = {**FAST, "save_checkpoint": True}
    run_experiment(ExperimentConfig.from_dict(doc))
    net, extra = load_checkpoint(str(tmp_path / "out" / "checkpoints" / "biv__seed0.json"))
    assert net.step_count == 30 and extra["bridge"]["epsilon"] == 1.0 and extra["affine"] is not None


def test_threads_resolution(monkeypatch):
    monkeypatch.delenv("BRIDGEMI_THREADS", raising=False)
    assert resolve_threads(None) == 1
    monkeypatch.setenv("BRIDGEMI_THREADS", "4")
    assert resolve_threads(None) == 4
    assert resolve_threads(2) == 2
    monkeypatch.setenv("BRIDGEMI_THREADS", "many")
    with pytest.raises(ConfigError):
        resolve_threads(None)
    with pytest.raises(ConfigError):
        resolve_threads(0)


# -- command line ----------------------------------------------------------------


def _csv(path, arr, header=True):
    arr = np.asarray(arr).reshape(len(arr), -1)
    lines = [",".join(f"c{i}" for i in range(arr.shape[1]))] if header else []
    lines += [",".join(repr(float(v)) for v in row) for row in arr]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def test_cli_bench_and_exit_codes(tmp_path, capsys):
    cfg = _write(tmp_path / "cfg.json", _doc(tmp_path / "unused", seeds=[0]))
    assert cli.main(["bench", "--config", cfg, "--out", str(tmp_path / "o"), "--seed", "5", "--threads", "2"]) == 0
    assert sorted(os.listdir(tmp_path / "o" / "reports")) == ["biv__infobridge__seed5.json", "pair2__infobridge__seed5.json"]
    bad = _doc(tmp_path)
    bad["tasks"][0]["typo"] = 1
    assert cli.main(["bench", "--config", _write(tmp_path / "bad.json", bad)]) == 1
    assert "tasks[0].typo" in capsys.readouterr().err
    (tmp_path / "broken.json").write_text("{not json")
    assert cli.main(["bench", "--config", str(tmp_path / "broken.json")]) == 1


def test_cli_estimate_zero_steps_and_data_errors(tmp_path, capsys):
    r = Rng(0)
    x0 = _csv(tmp_path / "x0.csv", r.normal((100, 2)))
    x1 = _csv(tmp_path / "x1.csv", r.normal((100, 1)))
    out = tmp_path / "rep.json"
    assert cli.main(["estimate", "--x0", x0, "--x1", x1, "--steps", "0", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["estimate_nats"] == 0.0
    capsys.readouterr()
    assert cli.main(["estimate", "--x0", str(tmp_path / "missing.csv"), "--x1", x1]) == 2
    assert "missing.csv" in capsys.readouterr().err
    (tmp_path / "bad.csv").write_text("a,b\n1,2\nx,3\n")
    assert cli.main(["estimate", "--x0", str(tmp_path / "bad.csv"), "--x1", x1]) == 2
    short = _csv(tmp_path / "short.csv", r.normal((10, 1)))
    assert cli.main(["estimate", "--x0", short, "--x1", x1]) == 2


def test_cli_numerical_error_exit_code(tmp_path):
    x = _csv(tmp_path / "x.csv", Rng(3).normal((50, 1)))
    with np.errstate(all="ignore"):
        code = cli.main(["estimate", "--x0", x, "--x1", x, "--steps", "50", "--lr", "1e200"])
    assert code == 3


def test_cli_estimate_independent_noise(tmp_path):
    r = Rng(4)
    x0 = _csv(tmp_path / "a.csv", r.normal((1000, 1)))
    x1 = _csv(tmp_path / "b.csv", r.normal((1000, 1)))
    out = tmp_path / "rep.json"
    assert cli.main(["estimate", "--x0", x0, "--x1", x1, "--steps", "2000", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["estimate_nats"] <= 0.05


def test_cli_estimate_ksg_and_checkpoint(tmp_path):
    r = Rng(1)
    z = r.normal((400, 1))
    x0 = _csv(tmp_path / "a.csv", z)
    x1 = _csv(tmp_path / "b.csv", 0.8 * z + 0.6 * r.normal((400, 1)))
    out = tmp_path / "k.json"
    assert cli.main(["estimate", "--x0", x0, "--x1", x1, "--method", "ksg", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["method"] == "ksg"
    ck = tmp_path / "net.json"
    assert cli.main(["estimate", "--x0", x0, "--x1", x1, "--steps", "5", "--checkpoint", str(ck)]) == 0
    net, extra = load_checkpoint(str(ck))
    assert net.step_count == 5 and "affine" in extra


def test_cli_entropy_kl_oracle(tmp_path, capsys):
    r = Rng(2)
    box = _csv(tmp_path / "u.csv", r.uniform(0.0, 2.0, (200, 2)))
    assert cli.main(["entropy", "--samples", box, "--method", "uniform", "--box", "0,2", "--steps", "0"]) == 0
    assert json.loads(capsys.readouterr().out)["estimate_nats"] == pytest.approx(2 * np.log(2.0))
    assert cli.main(["entropy", "--samples", box, "--method", "uniform", "--steps", "0"]) == 1
    assert cli.main(["entropy", "--samples", box, "--method", "uniform", "--box", "0,1", "--steps", "0"]) == 2
    capsys.readouterr()
    assert cli.main(["entropy", "--samples", box, "--steps", "0"]) == 0
    capsys.readouterr()
    p2 = _csv(tmp_path / "p2.csv", r.normal((200, 2)) + 1.0)
    assert cli.main(["kl", "--p1", box, "--p2", p2, "--steps", "3", "--reference", "data-gaussian"]) == 0
    assert json.loads(capsys.readouterr().out)["method"] == "kl"
    out = tmp_path / "o.json"
    assert cli.main(["oracle", "--n", "2000", "--epsilon", "0.5", "--out", str(out)]) == 0
    rec = json.loads(out.read_text())
    assert abs(rec["estimate_nats"] - rec["gt"]) < 0.05 and rec["epsilon"] == 0.5
    cfg = _write(tmp_path / "cfg.json", _doc(tmp_path / "unused"))
    capsys.readouterr()
    assert cli.main(["oracle", "--config", cfg]) == 0
    assert [t["task"] for t in json.loads(capsys.readouterr().out)["tasks"]] == ["biv", "pair2"]
