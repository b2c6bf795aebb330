import json

import pytest

from serotonav import cli, experiment
from serotonav.patience import read_curves_csv
from serotonav.report import Comparison, TrialReport, read_geojson, read_summary_csv


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_simulate_writes_report_csv_and_geojson(tmp_path, capsys):
    out = tmp_path / "sim"
    assert run("simulate", "--site", "encinitas", "--trials", 2, "--seed", 4, "--out", out) == 0
    rep = TrialReport.from_json((out / "report.json").read_text())
    assert rep.config["master_seed"] == 4 and len(rep.trials) == 2
    assert len(read_summary_csv((out / "summary.csv").read_text())) == 2
    read_geojson((out / "trial_1.geojson").read_text())
    assert json.loads(capsys.readouterr().out)["trials"] == 2


def test_simulate_is_byte_identical_across_runs_and_workers(tmp_path):
    args = ("simulate", "--site", "aldrich", "--trials", 3, "--condition", "high", "--seed", 9)
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b", "--parallel", 2) == 0
    for name in ("report.json", "summary.csv", "trial_2.geojson"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "exp.toml"
    cfg.write_text(
        '[experiment]\nname = "cfgtest"\ncondition = "high"\ntrials = 2\nseed = 5\n'
        '[site]\nprofile = "encinitas"\nnoiseless = true\n'
    )
    out = tmp_path / "o"
    assert run("simulate", "--config", cfg, "--trials", 1, "--out", out) == 0
    rep = TrialReport.from_json((out / "report.json").read_text())
    assert rep.config["name"] == "cfgtest"
    assert rep.config["condition"] == "high"
    assert rep.config["trials"] == 1 and rep.config["master_seed"] == 5
    assert rep.trials[0].completed and rep.trials[0].skipped == []


@pytest.mark.parametrize("argv", [
    ["simulate", "--trials", "0"],
    ["simulate", "--seed", "-1"],
    ["simulate", "--seed", str(2 ** 64)],
    ["simulate", "--site", "atlantis"],
    ["simulate", "--mode", "road"],
    ["compare-modes", "--site", "aldrich"],
    ["compare-modes", "--site", "encinitas", "--oracle"],
    ["export", "--site", "encinitas"],
    ["export", "--site", "encinitas", "--trials", "2", "--trial", "5"],
    ["curves", "--step", "0"],
    ["eval-road"],
    ["frobnicate"],
])
def test_configuration_errors_exit_1(argv, tmp_path):
    assert cli.main([*argv, "--out", str(tmp_path / "x")] if argv[0] != "frobnicate" else argv) == 1


def test_missing_and_malformed_config_files(tmp_path):
    assert run("simulate", "--config", tmp_path / "nope.toml", "--out", tmp_path) == 1
    bad = tmp_path / "bad.toml"
    bad.write_text("[experiment\n")
    assert run("simulate", "--config", bad, "--out", tmp_path) == 1
    bad.write_text('[experiment]\ntrials = "many"\n')
    assert run("simulate", "--config", bad, "--out", tmp_path) == 1


def test_runtime_failure_flushes_partial_results(tmp_path, monkeypatch):
    real = experiment.run_trial

    def flaky(*args, **kw):
        rec = real(*args, **kw)
        if rec.trial == 2:
            raise RuntimeError("simulated fault")
        return rec

    monkeypatch.setattr(experiment, "run_trial", flaky)
    out = tmp_path / "partial"
    assert run("simulate", "--site", "encinitas", "--trials", 4, "--out", out) == 2
    rep = TrialReport.from_json((out / "report.json").read_text())
    assert [t.trial for t in rep.trials] == [0, 1]
    assert not (out / "trial_2.geojson").exists()


def test_curves_output(tmp_path, capsys):
    out = tmp_path / "c"
    assert run("curves", "--out", out) == 0
    rows = read_curves_csv((out / "curves.csv").read_text())
    assert len(rows) == 121
    assert rows[0][0] == 0.0 and rows[-1][0] == 120.0
    crossing = next(t for t, _, hi in rows if hi <= 0.5)
    assert crossing == 73.0  # continuous crossing at 72.897 s
    assert "72.90" in capsys.readouterr().out
    svg = (out / "curves.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<polyline") == 2


def test_literal_curves_are_ordered_the_other_way(tmp_path):
    out = tmp_path / "c"
    assert run("curves", "--variant", "literal", "--out", out) == 0
    rows = read_curves_csv((out / "curves.csv").read_text())
    t, lo, hi = rows[25]
    assert t == 25.0 and lo > hi


def test_export_is_byte_identical(tmp_path):
    args = ("export", "--site", "aldrich", "--trials", 3, "--trial", 1, "--condition", "high")
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b") == 0
    a = (tmp_path / "a" / "trial_1.geojson").read_bytes()
    assert a == (tmp_path / "b" / "trial_1.geojson").read_bytes()
    read_geojson(a.decode())


def test_export_matches_simulate_output(tmp_path):
    assert run("simulate", "--site", "encinitas", "--trials", 2, "--seed", 1, "--out", tmp_path / "s") == 0
    assert run("export", "--site", "encinitas", "--trials", 2, "--seed", 1, "--trial", 1, "--out", tmp_path / "e") == 0
    assert (tmp_path / "s" / "trial_1.geojson").read_bytes() == (tmp_path / "e" / "trial_1.geojson").read_bytes()


def test_compare_modes_with_oracle(tmp_path):
    out = tmp_path / "cmp"
    assert run("compare-modes", "--site", "aldrich", "--trials", 2, "--oracle", "--out", out) == 0
    cmp = Comparison.from_json((out / "report.json").read_text())
    assert set(cmp.modes) == {"shortcut", "road"}
    assert (out / "summary.csv").read_text().splitlines()[0].startswith("mode,mean_time")


def test_train_and_eval_round_trip(tmp_path, capsys):
    out = tmp_path / "t"
    assert run("train-road", "--track", "straight", "--episodes", 5, "--out", out) == 0
    assert (out / "learning_curve.csv").read_text().count("\n") == 6
    capsys.readouterr()
    assert run("eval-road", "--track", "straight", "--episodes", 2, "--checkpoint", out / "checkpoint.bin",
               "--out", tmp_path / "e") == 0
    body = json.loads((tmp_path / "e" / "eval.json").read_text())
    assert body["follower"] == "checkpoint" and 0.0 <= body["on_road_fraction"] <= 1.0
    assert run("eval-road", "--oracle", "--episodes", 2, "--out", tmp_path / "o") == 0
    assert json.loads((tmp_path / "o" / "eval.json").read_text())["on_road_fraction"] > 0.95


def test_corrupt_checkpoint_is_a_config_error(tmp_path):
    ck = tmp_path / "bad.bin"
    ck.write_bytes(b"not a checkpoint")
    assert run("eval-road", "--checkpoint", ck, "--out", tmp_path / "e") == 1


def test_training_table_in_config(tmp_path):
    cfg = tmp_path / "train.toml"
    cfg.write_text('[training]\ntrack = "straight"\nepisodes = 3\nseed = 7\nlr = 5e-4\n')
    assert run("train-road", "--config", cfg, "--out", tmp_path / "a") == 0
    assert (tmp_path / "a" / "learning_curve.csv").read_text().count("\n") == 4
    assert run("train-road", "--config", cfg, "--seed", 7, "--out", tmp_path / "b") == 0
    assert (tmp_path / "a" / "checkpoint.bin").read_bytes() == (tmp_path / "b" / "checkpoint.bin").read_bytes()
    cfg.write_text("[training]\nbogus = 1\n")
    assert run("train-road", "--config", cfg, "--out", tmp_path / "c") == 1
