import json
import math

import numpy as np
import pytest

from pragmatic_speaker import cli
from pragmatic_speaker.harness import (SLICES, SPEAKERS, AccuracyReport, ExperimentConfig,
                                       LambdaSweepReport, ShiftReport, evaluate_speaker, export,
                                       gain_report, lambda_sweep, run_experiment)
from pragmatic_speaker.listener import ListenerProfile
from pragmatic_speaker.pragmatic import DisparityPolicy, TrainConfig, train
from pragmatic_speaker.scenes import ConfigError, assemble_dataset


def small(**kw):
    return ExperimentConfig(**{"n_pairs": 200, "epochs": 10, "n_repeats": 2, **kw})


@pytest.fixture(scope="module")
def result():
    return run_experiment(small())


def fake_report(s1d=0.9, s1=0.8, s1nd=0.9):
    vals = {"S0": 0.5, "S1": s1, "S1d": s1d, "S1nd": s1nd}
    return AccuracyReport({sp: {sl: [v, v] for sl in SLICES} for sp, v in vals.items()}, 10, 10)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(mode="paragraph")
    with pytest.raises(ConfigError):
        ExperimentConfig(n_repeats=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(epochs=0)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"colour": "blue"})
    assert ExperimentConfig(disparity="limited-visual").disparity == "limited_visual"


def test_config_file(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text("seed: 4\nn-pairs: 300\ndisparity: limited_visual\n")
    cfg = ExperimentConfig.from_file(path, seed=9)
    assert (cfg.seed, cfg.n_pairs, cfg.disparity) == (9, 300, "limited_visual")


def test_s1d_requires_policy(tax):
    ds = assemble_dataset(0, 20, tax=tax)
    with pytest.raises(ConfigError):
        evaluate_speaker("S1d", ds.test, ListenerProfile.hypernym_only(), tax,
                         np.random.default_rng(0))


def test_no_disparity_control(tax):
    ds = assemble_dataset(0, 500, tax=tax)
    run = evaluate_speaker("S1", ds.test + ds.val, ListenerProfile.full(), tax,
                           np.random.default_rng(0))
    assert run.accuracy()["Combined"] >= 0.99


def test_lambda_d_zero_matches_s1(tax):
    ds = assemble_dataset(2, 1000, tax=tax)
    hyp = ListenerProfile.hypernym_only()
    pol, _ = train(ds, hyp, TrainConfig.for_mode("word", epochs=10, lambda_d=0.0), tax)
    assert all(v == 0 for v in pol.theta.values())
    acc = {k: evaluate_speaker(k, ds.test + ds.val, hyp, tax, np.random.default_rng(1), pol)
           .accuracy()["Combined"] for k in ("S1", "S1d")}
    assert abs(acc["S1"] - acc["S1d"]) <= 0.02


def test_report_consistency(result):
    acc = result.accuracy
    for sp in SPEAKERS:
        for r in range(2):
            h, e, c = (acc.per_repeat[sp][s][r] for s in SLICES)
            assert c == pytest.approx((h * acc.n_hard + e * acc.n_easy) / (acc.n_hard + acc.n_easy), abs=1e-9)
        for sl in SLICES:
            assert 0 <= acc.mean(sp, sl) <= 1 and acc.std(sp, sl) >= 0


def test_shift_frequencies_sum_to_one(result, tax):
    for sp in SPEAKERS:
        assert sum(result.shift.frequencies(sp).values()) == pytest.approx(1, abs=1e-9)
        h = result.shift.mean(sp, "hyponym_share") + result.shift.mean(sp, "hypernym_share")
        assert h == pytest.approx(1, abs=1e-9)


def test_gain_report():
    g = {(r["slice"], r["vs"]): r for r in gain_report(fake_report()).rows()}
    assert g[("Combined", "S1")]["gain"] == pytest.approx(0.1)
    assert g[("Easy", "S1nd")]["gain"] == 0
    assert all(r["std"] == 0 for r in g.values())


def test_export_csv_stable(tmp_path, result):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    export(result.accuracy, "csv", a)
    export(result.accuracy, "csv", b)
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == "speaker,slice,mean,std"
    assert len(lines) == 1 + len(SPEAKERS) * len(SLICES)


def test_export_six_significant_digits(tmp_path):
    path = export(fake_report(s1d=2 / 3), "csv", tmp_path / "acc.csv")
    assert "S1d,Hard,0.666667,0" in path.read_text().splitlines()


@pytest.mark.parametrize("cls,attr", [(AccuracyReport, "accuracy"), (ShiftReport, "shift")])
def test_export_json_round_trip(tmp_path, result, cls, attr):
    report = getattr(result, attr)
    path = export(report, "json", tmp_path / "r.json")
    assert cls.from_dict(json.loads(path.read_text())) == report


def test_export_bad_path(tmp_path, result):
    with pytest.raises(OSError):
        export(result.accuracy, "csv", tmp_path / "missing" / "x.csv")


def test_run_experiment_outputs(tmp_path):
    run_experiment(small(n_repeats=1), tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"accuracy.csv", "shift.csv", "policy_0.json", "history_0.json", "gain.csv"} <= names
    assert not any(n.startswith(".partial") for n in names)


def test_run_experiment_cleans_up_on_failure(tmp_path, monkeypatch):
    import pragmatic_speaker.harness as h

    def boom(*a, **k):
        raise RuntimeError("disk full")
    monkeypatch.setattr(h, "export", boom)
    with pytest.raises(RuntimeError):
        run_experiment(small(n_repeats=1), tmp_path)
    assert list(tmp_path.iterdir()) == []


def test_policies_reused(result):
    again = run_experiment(small(), policies=result.policies, dataset=result.dataset)
    assert again.accuracy == result.accuracy


def test_lambda_sweep_small(tmp_path):
    rep = lambda_sweep(small(n_repeats=1), [(1, 1), (1, 0)], out_dir=tmp_path)
    assert [(p["lambda_l"], p["lambda_d"]) for p in rep.points] == [(1.0, 1.0), (1.0, 0.0)]
    assert (tmp_path / "sweep.csv").read_text().splitlines()[0] == "lambda_l,lambda_d,mean,std"
    assert LambdaSweepReport.from_dict(json.loads((tmp_path / "sweep.json").read_text())) == rep


def test_lambda_sweep_rejects_empty_grid():
    with pytest.raises(ConfigError):
        lambda_sweep(small(), [])


# -- CLI -----------------------------------------------------------------------------

ARGS = ["--pairs", "100", "--epochs", "5", "--repeats", "1"]


def test_cli_pipeline(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["gen-data", *ARGS, "--out", str(out)]) == 0
    ds = out / "dataset.jsonl"
    assert ds.exists()
    assert cli.main(["train", *ARGS, "--dataset", str(ds), "--out", str(out)]) == 0
    assert (out / "policy_0.json").exists() and (out / "history_0.json").exists()
    assert cli.main(["eval", *ARGS, "--dataset", str(ds), "--policies", str(out), "--out", str(out)]) == 0
    assert cli.main(["shift", *ARGS, "--dataset", str(ds), "--out", str(out)]) == 0
    assert cli.main(["sweep", *ARGS, "--ratios", "1:1,2:1", "--dataset", str(ds), "--out", str(out)]) == 0
    assert cli.main(["candidates", *ARGS, "--dataset", str(ds), "--out", str(out)]) == 0
    for name in ("accuracy.csv", "shift.csv", "sweep.csv", "candidates.json"):
        assert (out / name).exists()
    assert "S1d" in capsys.readouterr().out


def test_cli_report_with_config_file(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("n_pairs: 100\nepochs: 3\nn_repeats: 1\ndisparity: limited_visual\n")
    assert cli.main(["report", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "accuracy.csv").exists()


def test_cli_config_error_exit_code(tmp_path):
    assert cli.main(["eval", "--pairs", "5", "--out", str(tmp_path)]) == 2
    assert cli.main(["sweep", *ARGS, "--ratios", "1-1", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as e:
        cli.main(["eval", "--mode", "paragraph"])
    assert e.value.code == 2


def test_cli_runtime_error_exit_code(tmp_path):
    # policies directory without checkpoints
    assert cli.main(["eval", *ARGS, "--policies", str(tmp_path), "--out", str(tmp_path)]) == 1
