from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from fdibench.cli import main as cli_main
from fdibench.harness import (
    ExperimentPlan,
    cmd_attack,
    cmd_calibrate_bdd,
    cmd_evaluate,
    cmd_gen_data,
    cmd_report,
    cmd_train_detectors,
    cmd_train_nse,
    paths_for,
)

# one small shared pipeline: ieee14 has no bundled region fixture, so the plan
# carries a region file written on the fly


def tiny_plan(tmp_path, **overrides) -> ExperimentPlan:
    region_file = tmp_path / "region14.json"
    region_file.write_text(json.dumps({
        "schema": "fdibench-region/1", "case": "ieee14", "kind": "localized",
        "indexing": "bus-index",
        "buses": [4, 5, 10, 11, 12, 13],
        "lines": [[4, 5], [5, 10], [5, 11], [5, 12], [9, 10], [11, 12], [12, 13], [8, 13]],
    }))
    defaults = dict(
        case="ieee14", region=str(region_file), out_dir=str(tmp_path / "run"),
        epsilons=(1.0, 5.0), modes=("all", "tenth"),
        samples_a=260, samples_b=300, seed_a=1, seed_b=2, attack_seed=3,
        nse_hidden=(24,), nse_steps=400, window=50,
        detector_hidden=(32, 16), detector_max_steps=2500,
        detector_accuracy_gate=0.80,
    )
    defaults.update(overrides)
    return ExperimentPlan(**defaults)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("pipeline")
    plan = tiny_plan(tmp_path)
    cmd_gen_data(plan)
    cmd_train_nse(plan)
    cmd_calibrate_bdd(plan)
    cmd_train_detectors(plan)
    cmd_attack(plan)
    rows = cmd_evaluate(plan)
    cmd_report(plan)
    return plan, rows


def test_datasets_disjoint_and_hashed(pipeline):
    plan, _ = pipeline
    paths = paths_for(plan)
    manifest = json.loads(paths.manifest.read_text())
    assert manifest["dataset_a_hash"] != manifest["dataset_b_hash"]
    assert len(manifest["attacked_sample_ids"]) == plan.samples_b // 3


def test_nse_sidecar_records_provenance(pipeline):
    plan, _ = pipeline
    paths = paths_for(plan)
    meta = json.loads(paths.nse_meta.read_text())
    manifest = json.loads(paths.manifest.read_text())
    assert meta["dataset_hash"] == manifest["dataset_a_hash"]
    assert meta["cfg"]["steps"] == plan.nse_steps
    assert meta["report"]["n_test"] > 0


def test_spillage_guard_refuses_nse_trained_on_b(pipeline, tmp_path):
    plan, _ = pipeline
    paths = paths_for(plan)
    meta = json.loads(paths.nse_meta.read_text())
    manifest = json.loads(paths.manifest.read_text())
    forged = dict(meta, dataset_hash=manifest["dataset_b_hash"])
    original = paths.nse_meta.read_text()
    paths.nse_meta.write_text(json.dumps(forged))
    try:
        with pytest.raises(RuntimeError, match="disjoint"):
            cmd_attack(plan)
    finally:
        paths.nse_meta.write_text(original)


def test_report_rows_complete(pipeline):
    plan, rows = pipeline
    active = [d for d in plan.detectors]
    grid = [(e, m) for e in plan.epsilons for m in plan.modes]
    for detector in active:
        for eps, mode in grid:
            match = [r for r in rows if r["detector"] == detector
                     and r["epsilon"] == eps and r["mode"] == mode]
            assert len(match) == 1
            assert 0.0 <= match[0]["bypass_probability"] <= 1.0
    controls = [r for r in rows if r["mode"] == "control"]
    assert {r["detector"] for r in controls} == set(active)


def test_control_bypass_tracks_false_alarm_rate(pipeline):
    plan, rows = pipeline
    for r in rows:
        if r["mode"] == "control" and r["detector"] in ("lnrt", "chi2"):
            assert abs(r["bypass_probability"] - (1 - plan.far_target)) < 0.03


def test_selection_counts_in_report(pipeline):
    plan, rows = pipeline
    region_size = 2 * 6 + 4 * 8
    for r in rows:
        if r["mode"] == "all":
            assert r["num_compromised_channels"] == region_size
        if r["mode"] == "tenth":
            assert r["num_compromised_channels"] == round(region_size / 10)


def test_boxplot_source_matches_quantile_oracle(pipeline):
    plan, _ = pipeline
    paths = paths_for(plan)
    import csv
    with open(paths.boxplot_csv) as fh:
        box_rows = list(csv.DictReader(fh))
    assert box_rows
    # recompute one family's quartiles from the attacked dataset directly
    from fdibench import datafiles
    from fdibench.network import builtin_case
    from fdibench.powerflow import real_power_channel_mask
    case = builtin_case("ieee14")
    eps, mode = plan.epsilons[0], plan.modes[0]
    _, att = datafiles.read_dataset(paths.attacked_dataset_stem(eps, mode) + ".bin")
    _, benign = datafiles.read_dataset(paths.dataset_bin("b"))
    by_time = {r.timestamp_index: r for r in benign}
    mask = real_power_channel_mask(case)
    per_sample = [float(np.max(np.abs(r.measurements - by_time[r.timestamp_index].measurements)[mask]))
                  for r in att]
    q1, med, q3 = np.percentile(per_sample, [25, 50, 75])
    row = next(r for r in box_rows
               if r["family"] == "max_dp" and float(r["epsilon"]) == eps
               and r["mode"] == mode)
    assert float(row["q1"]) == pytest.approx(q1)
    assert float(row["median"]) == pytest.approx(med)
    assert float(row["q3"]) == pytest.approx(q3)


def test_report_artifacts_exist(pipeline):
    plan, _ = pipeline
    paths = paths_for(plan)
    for path in (paths.report_csv, paths.boxplot_csv, paths.point_deviation_csv):
        assert path.exists()
    svgs = list(Path(plan.out_dir).glob("*.svg"))
    assert len(svgs) >= 3
    for eps in plan.epsilons:
        for mode in plan.modes:
            assert paths.attack_batch(eps, mode).exists()


def test_empty_roster_rejected(pipeline):
    plan, _ = pipeline
    from dataclasses import replace
    with pytest.raises(ValueError, match="roster"):
        cmd_evaluate(replace(plan, detectors=()))


def test_plan_json_round_trip(tmp_path):
    plan = tiny_plan(tmp_path, workers=2)
    again = ExperimentPlan.from_json(plan.to_json())
    assert again == plan


def test_paper_scale_resolution(tmp_path):
    plan = tiny_plan(tmp_path, paper_scale=True).resolved()
    assert plan.samples_a == 105_120
    assert plan.samples_b == 105_120
    assert plan.nse_hidden == (512, 512)
    assert plan.nse_steps == 50_000


def test_workers_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv("FDIBENCH_WORKERS", "3")
    plan = tiny_plan(tmp_path).resolved()
    assert plan.workers == 3


def test_cli_help_lists_subcommands():
    runner = CliRunner()
    result = runner.invoke(cli_main, ["--help"])
    assert result.exit_code == 0
    for cmd in ("gen-data", "train-nse", "calibrate-bdd", "train-detectors",
                "attack", "evaluate", "report"):
        assert cmd in result.output


def test_cli_gen_data_runs(tmp_path):
    plan = tiny_plan(tmp_path, samples_a=60, samples_b=60)
    plan_file = tmp_path / "plan.json"
    plan_file.write_text(plan.to_json())
    runner = CliRunner()
    result = runner.invoke(cli_main, ["--plan", str(plan_file), "gen-data"])
    assert result.exit_code == 0, result.output
    assert "dataset_a_hash" in result.output


def test_fill_estimates_worker_invariant(tmp_path):
    # fixed-size warm-start blocks make the estimates identical for any
    # worker count
    from fdibench.estimation import weights_from_sigmas
    from fdibench.harness import fill_estimates, reference_sigmas
    from fdibench.network import build_admittance, builtin_case
    from fdibench.powerflow import ScenarioConfig, generate_scenarios, synthetic_profile

    plan = tiny_plan(tmp_path)
    case = builtin_case("ieee14")
    adm = build_admittance(case)
    weights = weights_from_sigmas(reference_sigmas(case, adm, plan))
    cfg = ScenarioConfig(num_samples=40, seed=5)
    samples = list(generate_scenarios(case, adm, cfg, synthetic_profile("beta", 40, 5)))
    sequential = fill_estimates(case, adm, weights, samples, workers=1)
    parallel = fill_estimates(case, adm, weights, samples, workers=3)
    for a, b in zip(sequential, parallel):
        np.testing.assert_array_equal(a, b)


def test_plan_validation(tmp_path):
    with pytest.raises(ValueError, match="positive"):
        tiny_plan(tmp_path, epsilons=(1.0, -2.0))
    with pytest.raises(ValueError, match="disjoint"):
        tiny_plan(tmp_path, seed_a=9, seed_b=9)


def test_evaluate_names_missing_artifacts(pipeline):
    plan, _ = pipeline
    paths = paths_for(plan)
    original = paths.thresholds.read_bytes()
    paths.thresholds.unlink()
    try:
        with pytest.raises(FileNotFoundError, match="bdd_thresholds"):
            cmd_evaluate(plan)
    finally:
        paths.thresholds.write_bytes(original)
