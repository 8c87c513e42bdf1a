"""End-to-end experiment orchestration.

Stages (mirrored by the CLI): generate the two scenario datasets, train the
substitute estimator on dataset A, calibrate the conventional tests and the
windowed detectors on dataset B, build the labelled injection dataset and
train the classifier, attack a third of dataset B over the epsilon/selection
grid, evaluate every detector, and render report tables and figures.
Dataset A exists only to train the substitute; evaluation refuses to run if
the substitute's recorded training hash matches dataset B.
"""

from __future__ import annotations

import json
import multiprocessing
import os
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import attack as attack_mod
from . import datafiles
from .attack import PcdmConfig
from .bdd import BddThresholds, calibrate_thresholds, chi2_test, lnr_test, normalized_residuals
from .datafiles import DatasetHeader, DatasetRecord, file_hash
from .detectors import (
    DetectorTrainConfig,
    bypass_probability,
    calibrate_windowed,
    mlp_detect,
    train_mlp_detector,
    windowed_detector_from_json,
    windowed_detector_to_json,
)
from .estimation import EstimatorConfig, weights_from_sigmas, wls_estimate
from .mlp import load_model, save_model
from .network import build_admittance, builtin_case, parse_case
from .nse import TrainConfig, train_nse
from .powerflow import (
    ScenarioConfig,
    StateVector,
    generate_scenarios,
    measurement_function,
    noise_sigmas,
    real_power_channel_mask,
    reactive_power_channel_mask,
    solve_powerflow,
    synthetic_profile,
)
from .regions import builtin_region, project, project_states, region_from_json, region_to_json
from .sfdia import build_attacked_dataset

PAPER_SCALE_SAMPLES = 105_120
WARM_START_BLOCK = 512      # fixed so results do not depend on worker count
CONVENTIONAL_DETECTORS = ("lnrt", "chi2")
WINDOWED_DETECTORS = ("kld", "tkld", "ksrs")
OUT_OF_SCOPE_DETECTORS = ("ancusum_c", "outlier_graph", "lstm", "bilstm",
                          "tcn", "arma_gnn", "e3lm", "dagmm")

REPORT_COLUMNS = ("detector", "epsilon", "mode", "num_compromised_channels",
                  "bypass_probability", "max_dp", "max_dq", "median_dvm",
                  "median_dva")


@dataclass(frozen=True)
class ExperimentPlan:
    case: str = "ieee39"
    region: str = "ieee39-localized"     # builtin region name or file path
    out_dir: str = "runs/default"
    epsilons: tuple = (1.0, 2.0, 5.0, 10.0)
    modes: tuple = ("all", "half", "tenth")
    samples_a: int = 2000
    samples_b: int = 2000
    seed_a: int = 11
    seed_b: int = 22
    attack_seed: int = 33
    noise_fraction: float = 0.01
    far_target: float = 0.02
    window: int = 50
    detectors: tuple = ("lnrt", "chi2", "kld", "tkld", "ksrs", "mlp")
    workers: int = 0                     # 0: take the environment default
    paper_scale: bool = False
    classical_normalization: bool = True
    nse_hidden: tuple = (128, 128)
    nse_steps: int = 4000
    nse_batch: int = 256
    detector_hidden: tuple = (256, 128, 64)
    detector_max_steps: int = 20_000
    detector_accuracy_gate: float = 0.98

    def __post_init__(self):
        if any(e <= 0 for e in self.epsilons):
            raise ValueError("epsilons must be positive")
        if self.seed_a == self.seed_b:
            raise ValueError("datasets A and B must use disjoint seeds")

    def resolved(self) -> "ExperimentPlan":
        plan = self
        if plan.paper_scale:
            plan = replace(plan, samples_a=PAPER_SCALE_SAMPLES,
                           samples_b=PAPER_SCALE_SAMPLES,
                           nse_hidden=(512, 512), nse_steps=50_000)
        if plan.workers <= 0:
            plan = replace(plan, workers=int(os.environ.get("FDIBENCH_WORKERS", "1")))
        return plan

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    @staticmethod
    def from_json(text: str) -> "ExperimentPlan":
        doc = json.loads(text)
        lists_as_tuples = {k: tuple(v) if isinstance(v, list) else v
                           for k, v in doc.items()}
        return ExperimentPlan(**lists_as_tuples)


@dataclass(frozen=True)
class Paths:
    root: Path

    @property
    def manifest(self):
        return self.root / "manifest.json"

    def dataset_stem(self, name):
        return str(self.root / f"dataset_{name}")

    def dataset_bin(self, name):
        return self.root / f"dataset_{name}.bin"

    @property
    def nse_model(self):
        return self.root / "nse_model.bin"

    @property
    def nse_meta(self):
        return self.root / "nse_model.meta.json"

    @property
    def thresholds(self):
        return self.root / "bdd_thresholds.json"

    def detector_state(self, name):
        return self.root / f"detector_{name}.json"

    @property
    def detector_model(self):
        return self.root / "detector_mlp.bin"

    def attack_batch(self, epsilon, mode):
        return self.root / f"attacks_eps{epsilon:g}_{mode}.jsonl"

    def attacked_dataset_stem(self, epsilon, mode):
        return str(self.root / f"dataset_bdeebbaa_eps{epsilon:g}_{mode}")

    @property
    def report_csv(self):
        return self.root / "report.csv"

    @property
    def boxplot_csv(self):
        return self.root / "boxplot_source.csv"

    @property
    def point_deviation_csv(self):
        return self.root / "point_deviation.csv"


def paths_for(plan: ExperimentPlan) -> Paths:
    root = Path(plan.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    return Paths(root=root)


def load_case(plan: ExperimentPlan):
    try:
        return builtin_case(plan.case)
    except KeyError:
        return parse_case(Path(plan.case).read_text(), name=Path(plan.case).stem)


def load_region(plan: ExperimentPlan, case):
    try:
        return builtin_region(plan.region, case)
    except KeyError:
        return region_from_json(Path(plan.region).read_text(), case)


def reference_sigmas(case, adm, plan: ExperimentPlan):
    """Fixed per-channel noise model shared by synthesis and the estimator."""
    clean = measurement_function(case, adm, solve_powerflow(case, adm))
    cfg = ScenarioConfig(num_samples=1, noise_sigma_fraction=plan.noise_fraction)
    return noise_sigmas(cfg, clean)


def _manifest_update(paths: Paths, entries: dict):
    doc = {}
    if paths.manifest.exists():
        doc = json.loads(paths.manifest.read_text())
    doc.update(entries)
    paths.manifest.write_text(json.dumps(doc, indent=1, sort_keys=True))
    return doc


def _manifest(paths: Paths) -> dict:
    if not paths.manifest.exists():
        raise FileNotFoundError(f"missing manifest {paths.manifest}; run gen-data first")
    return json.loads(paths.manifest.read_text())


# ---------------------------------------------------------------------------
# Parallel helpers (order-preserving; results identical for any worker count)
# ---------------------------------------------------------------------------

_WORKER_STATE: dict = {}


def _estimate_block(args):
    case, adm, weights, block = _WORKER_STATE["ctx"]
    lo, hi = args
    out = []
    warm = None
    cfg = EstimatorConfig(weights=weights)
    for rec_t, z in block[lo:hi]:
        result = wls_estimate(case, adm, z, cfg, x0=warm)
        warm = result.state
        out.append(result.state.as_array())
    return out


def _init_worker(ctx):
    _WORKER_STATE["ctx"] = ctx


def _run_blocks(fn, ctx, blocks, workers):
    if workers <= 1:
        _init_worker(ctx)
        return [fn(b) for b in blocks]
    with multiprocessing.get_context("fork").Pool(
            workers, initializer=_init_worker, initargs=(ctx,)) as pool:
        return pool.map(fn, blocks)


def fill_estimates(case, adm, weights, samples, workers=1):
    """WLS estimates for a scenario stream, warm-starting inside fixed-size
    blocks so output is bit-identical for any worker count."""
    items = [(s.timestamp_index, s.measurements) for s in samples]
    blocks = [(lo, min(lo + WARM_START_BLOCK, len(items)))
              for lo in range(0, len(items), WARM_START_BLOCK)]
    ctx = (case, adm, weights, items)
    results = _run_blocks(_estimate_block, ctx, blocks, workers)
    return [est for block in results for est in block]


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def cmd_gen_data(plan: ExperimentPlan, progress=lambda msg: None) -> dict:
    """Generate datasets A and B with estimated states; returns their hashes."""
    plan = plan.resolved()
    paths = paths_for(plan)
    case = load_case(plan)
    adm = build_admittance(case)
    sigmas = reference_sigmas(case, adm, plan)
    weights = weights_from_sigmas(sigmas)
    hashes = {}
    for name, profile_kind, seed, count in (
            ("a", "alpha", plan.seed_a, plan.samples_a),
            ("b", "beta", plan.seed_b, plan.samples_b)):
        progress(f"dataset {name.upper()}: {count} samples ({profile_kind} profile)")
        cfg = ScenarioConfig(num_samples=count, noise_sigma_fraction=plan.noise_fraction,
                             seed=seed)
        profile = synthetic_profile(profile_kind, count, seed=seed)
        samples = list(generate_scenarios(case, adm, cfg, profile))
        estimates = fill_estimates(case, adm, weights, samples, plan.workers)
        records = [DatasetRecord(timestamp_index=s.timestamp_index,
                                 true_state=s.true_state.as_array(),
                                 measurements=s.measurements,
                                 estimated_state=est)
                   for s, est in zip(samples, estimates)]
        header = DatasetHeader(case_name=case.name, n_state=2 * case.n_bus,
                               n_measurements=len(records[0].measurements),
                               has_labels=False, profile=f"synthetic-{profile_kind}")
        out = datafiles.write_dataset(paths.dataset_stem(name), header, records)
        hashes[f"dataset_{name}_hash"] = file_hash(out["binary"])
    _manifest_update(paths, {**hashes, "plan": json.loads(plan.to_json())})
    return hashes


def cmd_train_nse(plan: ExperimentPlan, progress=lambda msg: None) -> dict:
    """Train the substitute estimator on dataset A, projected into the region."""
    plan = plan.resolved()
    paths = paths_for(plan)
    case = load_case(plan)
    region = load_region(plan, case)
    _, records = datafiles.read_dataset(paths.dataset_bin("a"))
    inputs = np.stack([project(region, r.measurements) for r in records])
    targets = np.stack([project_states(region, r.estimated()) for r in records])
    cfg = TrainConfig(batch_size=plan.nse_batch, steps=plan.nse_steps,
                      hidden_sizes=plan.nse_hidden, seed=plan.seed_a)
    progress(f"training substitute estimator: {inputs.shape[1]} -> {targets.shape[1]}, "
             f"{cfg.steps} steps")
    model, report = train_nse(inputs, targets, cfg)
    save_model(model, paths.nse_model)
    meta = {
        "region_hash": _region_hash(region, case),
        "dataset_hash": _manifest(paths)["dataset_a_hash"],
        "cfg": asdict(cfg),
        "report": asdict(report),
    }
    paths.nse_meta.write_text(json.dumps(meta, indent=1, sort_keys=True))
    return meta


def _region_hash(region, case):
    import hashlib
    return hashlib.sha256(region_to_json(region, case).encode()).hexdigest()


def _benign_residual_stream(case, adm, weights, records, plan):
    """(normalized residual norms, raw residual vectors) for benign records."""
    norms = []
    raws = []
    for rec in records:
        x_hat = rec.estimated()
        r_norm = normalized_residuals(case, adm, rec.measurements, x_hat, weights,
                                      classical_normalization=plan.classical_normalization)
        norms.append(r_norm)
        raws.append(rec.measurements - measurement_function(case, adm, x_hat))
    return norms, np.stack(raws)


def cmd_calibrate_bdd(plan: ExperimentPlan, progress=lambda msg: None) -> BddThresholds:
    """Calibrate the conventional residual-test thresholds on dataset B."""
    plan = plan.resolved()
    paths = paths_for(plan)
    case = load_case(plan)
    adm = build_admittance(case)
    weights = weights_from_sigmas(reference_sigmas(case, adm, plan))
    _, records = datafiles.read_dataset(paths.dataset_bin("b"))
    progress(f"calibrating residual tests on {len(records)} benign samples")
    norms, _ = _benign_residual_stream(case, adm, weights, records, plan)
    thresholds = calibrate_thresholds(iter(norms), plan.far_target,
                                      case_name=case.name,
                                      min_samples=min(1000, len(norms)))
    paths.thresholds.write_text(thresholds.to_json())
    return thresholds


def cmd_train_detectors(plan: ExperimentPlan, progress=lambda msg: None) -> dict:
    """Build the labelled injection dataset, calibrate the windowed detectors
    and train the classifier."""
    plan = plan.resolved()
    paths = paths_for(plan)
    case = load_case(plan)
    adm = build_admittance(case)
    weights = weights_from_sigmas(reference_sigmas(case, adm, plan))
    header, records = datafiles.read_dataset(paths.dataset_bin("b"))

    progress("building labelled injection dataset")
    rng = np.random.default_rng(np.random.SeedSequence((plan.seed_b, 0xA77)))
    att_records = []
    for rec, z_out, label in build_attacked_dataset(records, case, adm, rng):
        att_records.append(DatasetRecord(
            timestamp_index=rec.timestamp_index, true_state=rec.true_state,
            measurements=z_out, estimated_state=rec.estimated_state, label=label))
    att_header = DatasetHeader(case_name=header.case_name, n_state=header.n_state,
                               n_measurements=header.n_measurements, has_labels=True,
                               profile=header.profile)
    datafiles.write_dataset(paths.dataset_stem("b_att"), att_header, att_records)

    outputs = {}
    windowed_roster = [d for d in plan.detectors if d in WINDOWED_DETECTORS]
    if windowed_roster:
        progress("calibrating windowed detectors")
        _, raw = _benign_residual_stream(case, adm, weights, records, plan)
        for name in windowed_roster:
            det = calibrate_windowed(name, raw, plan.far_target, window=plan.window)
            paths.detector_state(name).write_text(windowed_detector_to_json(det))
            outputs[name] = {"threshold": det.threshold}

    if "mlp" in plan.detectors:
        progress("training classifier on the labelled dataset")
        x = np.stack([r.measurements for r in att_records])
        y = np.array([float(r.label.attacked) for r in att_records])
        cfg = DetectorTrainConfig(hidden_sizes=plan.detector_hidden,
                                  max_steps=plan.detector_max_steps,
                                  accuracy_gate=plan.detector_accuracy_gate,
                                  seed=plan.seed_b)
        model, report = train_mlp_detector(x, y, cfg)
        save_model(model, paths.detector_model)
        outputs["mlp"] = asdict(report)
    _manifest_update(paths, {"dataset_b_att_hash": file_hash(paths.dataset_bin("b_att"))})
    return outputs


def _attack_block(args):
    case, adm, weights, region, model, plan, items = _WORKER_STATE["ctx"]
    lo, hi = args
    cfg_est = EstimatorConfig(weights=weights)
    out = []
    for rec_idx, rec in items[lo:hi]:
        # the Jacobian and the dominant direction are shared across the grid,
        # so hoist them out of the (epsilon, mode) loops
        z_region = project(region, rec.measurements)
        jac = attack_mod.attack_jacobian(model, z_region)
        quad = attack_mod.build_quadratic(jac)
        row = {}
        for eps in plan.epsilons:
            cfg = PcdmConfig(epsilon=eps)
            sol = attack_mod.solve_sdp(quad, cfg)
            eta = attack_mod.recover_perturbation(sol, cfg)
            eta_physical = attack_mod.perturbation_to_physical(model, eta)
            for mode in plan.modes:
                selected = attack_mod.selection_vector(eta, mode)
                z_a = attack_mod.attack_measurements(rec.measurements, region,
                                                     eta_physical, selected)
                est = wls_estimate(case, adm, z_a, cfg_est, x0=rec.estimated())
                diag = {
                    "eta": eta, "lambda_star": sol.lambda_star,
                    "lambda_2": sol.lambda_2,
                    "selected_indices": tuple(int(i) for i in np.nonzero(selected)[0]),
                }
                row[(eps, mode)] = (z_a, est.state.as_array(), diag)
        out.append((rec_idx, row))
    return out


def cmd_attack(plan: ExperimentPlan, progress=lambda msg: None) -> dict:
    """Attack a random third of dataset B over the epsilon/selection grid."""
    plan = plan.resolved()
    paths = paths_for(plan)
    case = load_case(plan)
    adm = build_admittance(case)
    region = load_region(plan, case)
    weights = weights_from_sigmas(reference_sigmas(case, adm, plan))
    manifest = _manifest(paths)
    meta = json.loads(paths.nse_meta.read_text())
    if meta["dataset_hash"] == manifest.get("dataset_b_hash"):
        raise RuntimeError("substitute estimator was trained on dataset B; "
                           "training and attack data must stay disjoint")
    if meta["dataset_hash"] != manifest.get("dataset_a_hash"):
        raise RuntimeError("substitute estimator does not match this run's dataset A")
    model = load_model(paths.nse_model)

    header, records = datafiles.read_dataset(paths.dataset_bin("b"))
    rng = np.random.default_rng(np.random.SeedSequence((plan.attack_seed, 0xDEE)))
    count = max(1, len(records) // 3)
    chosen = np.sort(rng.choice(len(records), size=count, replace=False))
    progress(f"attacking {count} of {len(records)} samples, "
             f"{len(plan.epsilons)}x{len(plan.modes)} grid")

    items = [(int(i), records[int(i)]) for i in chosen]
    blocks = [(lo, min(lo + 64, len(items))) for lo in range(0, len(items), 64)]
    ctx = (case, adm, weights, region, model, plan, items)
    results = _run_blocks(_attack_block, ctx, blocks, plan.workers)
    flat = [pair for block in results for pair in block]

    for eps in plan.epsilons:
        for mode in plan.modes:
            batch_rows = []
            att_records = []
            for rec_idx, row in flat:
                z_a, est_a, diag = row[(eps, mode)]
                rec = records[rec_idx]
                batch_rows.append({
                    "sample_id": rec.timestamp_index, "epsilon": eps, "mode": mode,
                    "selected_indices": diag["selected_indices"],
                    "eta": diag["eta"],
                    "lambda_star": diag["lambda_star"], "lambda_2": diag["lambda_2"],
                })
                att_records.append(DatasetRecord(
                    timestamp_index=rec.timestamp_index, true_state=rec.true_state,
                    measurements=z_a, estimated_state=est_a))
            datafiles.write_attack_batch(paths.attack_batch(eps, mode), batch_rows)
            att_header = DatasetHeader(case_name=header.case_name,
                                       n_state=header.n_state,
                                       n_measurements=header.n_measurements,
                                       has_labels=False, profile=header.profile)
            datafiles.write_dataset(paths.attacked_dataset_stem(eps, mode),
                                    att_header, att_records)
    _manifest_update(paths, {"attacked_sample_ids": [int(i) for i in chosen]})
    return {"attacked": count, "grid": len(plan.epsilons) * len(plan.modes)}


# ---------------------------------------------------------------------------
# Evaluation and reporting
# ---------------------------------------------------------------------------

def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, columns, rows):
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row.get(c)) for c in columns) + "\n")


def _windowed_window(raw_benign, attacked_raw, t_index, window):
    """Window of raw residuals ending at the attacked sample's timestamp,
    with the attacked residual substituted in place."""
    t = int(t_index)
    if t >= window - 1:
        block = raw_benign[t - window + 1:t + 1].copy()
        block[-1] = attacked_raw
    else:
        block = raw_benign[:window].copy()
        block[t] = attacked_raw
    return block


def _deviation_stats(case, z_benign, z_attacked, x_benign, x_attacked):
    n = case.n_bus
    dp = np.abs(z_attacked - z_benign)[real_power_channel_mask(case)]
    dq = np.abs(z_attacked - z_benign)[reactive_power_channel_mask(case)]
    dvm = np.abs(x_attacked[:n] - x_benign[:n])
    dva = np.abs(x_attacked[n:] - x_benign[n:])
    return (float(np.max(dp)), float(np.max(dq)),
            float(np.median(dvm)), float(np.median(dva)))


def _five_number(values):
    q1, med, q3 = np.percentile(values, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = [v for v in values if lo_fence <= v <= hi_fence]
    return {"q1": float(q1), "median": float(med), "q3": float(q3),
            "whisker_lo": float(min(inside)), "whisker_hi": float(max(inside))}


def cmd_evaluate(plan: ExperimentPlan, progress=lambda msg: None) -> list[dict]:
    """Score every detector on every attack batch; emit the report tables."""
    plan = plan.resolved()
    paths = paths_for(plan)
    if not plan.detectors:
        raise ValueError("empty detector roster: nothing to evaluate")
    case = load_case(plan)
    adm = build_admittance(case)
    weights = weights_from_sigmas(reference_sigmas(case, adm, plan))
    _, benign_records = datafiles.read_dataset(paths.dataset_bin("b"))
    by_time = {r.timestamp_index: r for r in benign_records}

    missing = []
    thresholds = None
    if any(d in CONVENTIONAL_DETECTORS for d in plan.detectors):
        if paths.thresholds.exists():
            thresholds = BddThresholds.from_json(paths.thresholds.read_text())
        else:
            missing.append(str(paths.thresholds))
    windowed = {}
    for name in plan.detectors:
        if name in WINDOWED_DETECTORS:
            state = paths.detector_state(name)
            if state.exists():
                windowed[name] = windowed_detector_from_json(state.read_text())
            else:
                missing.append(str(state))
    mlp_model = None
    if "mlp" in plan.detectors:
        if paths.detector_model.exists():
            mlp_model = load_model(paths.detector_model)
        else:
            missing.append(str(paths.detector_model))
    if missing:
        raise FileNotFoundError("missing detector artifacts: " + ", ".join(missing))

    progress("scoring benign stream")
    benign_norms, benign_raw = _benign_residual_stream(case, adm, weights,
                                                       benign_records, plan)

    def verdicts_for(detector, z_a, est_a, raw_a, t_index):
        if detector == "lnrt":
            r = normalized_residuals(case, adm, z_a, StateVector.from_array(est_a),
                                     weights,
                                     classical_normalization=plan.classical_normalization)
            return lnr_test(r, thresholds)
        if detector == "chi2":
            r = normalized_residuals(case, adm, z_a, StateVector.from_array(est_a),
                                     weights,
                                     classical_normalization=plan.classical_normalization)
            return chi2_test(r, thresholds)
        if detector in windowed:
            block = _windowed_window(benign_raw, raw_a, t_index, plan.window)
            return windowed[detector].verdict(block).attacked
        if detector == "mlp":
            return mlp_detect(mlp_model, z_a).attacked
        raise KeyError(detector)

    report_rows = []
    box_rows = []
    point_rows = []
    active = [d for d in plan.detectors if d not in OUT_OF_SCOPE_DETECTORS]

    for eps in plan.epsilons:
        for mode in plan.modes:
            _, att_records = datafiles.read_dataset(
                paths.attacked_dataset_stem(eps, mode) + ".bin")
            batch = datafiles.read_attack_batch(paths.attack_batch(eps, mode))
            n_channels = len(batch[0]["selected_indices"]) if batch else 0
            progress(f"evaluating eps={eps:g} mode={mode} "
                     f"({len(att_records)} attacked samples)")
            flags = {d: [] for d in active}
            stats = []
            for rec in att_records:
                benign = by_time[rec.timestamp_index]
                raw_a = rec.measurements - measurement_function(
                    case, adm, rec.estimated())
                for d in active:
                    flags[d].append(verdicts_for(d, rec.measurements,
                                                 rec.estimated_state, raw_a,
                                                 rec.timestamp_index))
                stats.append(_deviation_stats(case, benign.measurements,
                                              rec.measurements,
                                              benign.estimated_state,
                                              rec.estimated_state))
            stats = np.array(stats)
            agg = {
                "max_dp": float(np.max(stats[:, 0])),
                "max_dq": float(np.max(stats[:, 1])),
                "median_dvm": float(np.median(stats[:, 2])),
                "median_dva": float(np.median(stats[:, 3])),
            }
            for d in active:
                report_rows.append({
                    "detector": d, "epsilon": eps, "mode": mode,
                    "num_compromised_channels": n_channels,
                    "bypass_probability": bypass_probability(flags[d]), **agg,
                })
            for d in OUT_OF_SCOPE_DETECTORS:
                if d in plan.detectors:
                    report_rows.append({
                        "detector": d, "epsilon": eps, "mode": mode,
                        "num_compromised_channels": n_channels,
                    })
            for family, column in (("max_dp", 0), ("max_dq", 1),
                                   ("median_dvm", 2), ("median_dva", 3)):
                box_rows.append({"epsilon": eps, "mode": mode,
                                 "num_compromised_channels": n_channels,
                                 "family": family,
                                 **_five_number(stats[:, column])})
            first = att_records[0]
            benign = by_time[first.timestamp_index]
            for ch in range(len(first.measurements)):
                point_rows.append({"epsilon": eps, "mode": mode, "kind": "measurement",
                                   "index": ch,
                                   "before": float(benign.measurements[ch]),
                                   "after": float(first.measurements[ch])})
            for j in range(len(first.estimated_state)):
                point_rows.append({"epsilon": eps, "mode": mode, "kind": "state",
                                   "index": j,
                                   "before": float(benign.estimated_state[j]),
                                   "after": float(first.estimated_state[j])})

    # benign control block: the benign stream scored as if it were attacked,
    # so bypass approximates 1 - FAR
    control_flags = {d: [] for d in active}
    for idx, rec in enumerate(benign_records):
        for d in active:
            if d in CONVENTIONAL_DETECTORS:
                verdict = (lnr_test(benign_norms[idx], thresholds) if d == "lnrt"
                           else chi2_test(benign_norms[idx], thresholds))
            elif d in windowed:
                if idx < plan.window - 1:
                    continue
                verdict = windowed[d].verdict(
                    benign_raw[idx - plan.window + 1:idx + 1]).attacked
            else:
                verdict = mlp_detect(mlp_model, rec.measurements).attacked
            control_flags[d].append(verdict)
    for d in active:
        report_rows.append({
            "detector": d, "epsilon": 0.0, "mode": "control",
            "num_compromised_channels": 0,
            "bypass_probability": bypass_probability(control_flags[d]),
            "max_dp": 0.0, "max_dq": 0.0, "median_dvm": 0.0, "median_dva": 0.0,
        })

    _write_csv(paths.report_csv, REPORT_COLUMNS, report_rows)
    _write_csv(paths.boxplot_csv,
               ("epsilon", "mode", "num_compromised_channels", "family",
                "q1", "median", "q3", "whisker_lo", "whisker_hi"), box_rows)
    _write_csv(paths.point_deviation_csv,
               ("epsilon", "mode", "kind", "index", "before", "after"), point_rows)
    return report_rows


def cmd_report(plan: ExperimentPlan, progress=lambda msg: None) -> list[str]:
    """Render SVG figures from the evaluation tables."""
    plan = plan.resolved()
    paths = paths_for(plan)
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "fdibench"
    import matplotlib.pyplot as plt

    def read_csv(path):
        with open(path) as fh:
            cols = fh.readline().strip().split(",")
            return [dict(zip(cols, line.rstrip("\n").split(","))) for line in fh]

    outputs = []
    report = [r for r in read_csv(paths.report_csv)
              if r["mode"] != "control" and r["bypass_probability"]]
    detectors = sorted({r["detector"] for r in report})
    combos = sorted({(float(r["epsilon"]), r["mode"],
                      int(r["num_compromised_channels"])) for r in report})
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(combos)), 4))
    width = 0.8 / max(len(detectors), 1)
    for k, det in enumerate(detectors):
        vals = []
        for eps, mode, nch in combos:
            match = [float(r["bypass_probability"]) for r in report
                     if r["detector"] == det and float(r["epsilon"]) == eps
                     and r["mode"] == mode]
            vals.append(match[0] if match else np.nan)
        xs = np.arange(len(combos)) + k * width
        ax.bar(xs, vals, width=width, label=det)
    ax.set_xticks(np.arange(len(combos)) + 0.4)
    ax.set_xticklabels([f"eps={e:g}\n{m} ({n})" for e, m, n in combos], fontsize=7)
    ax.set_ylabel("bypass probability")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=7)
    out = paths.root / "bypass_probability.svg"
    fig.savefig(out, metadata={"Date": None})
    plt.close(fig)
    outputs.append(str(out))

    box = read_csv(paths.boxplot_csv)
    families = ("max_dp", "max_dq", "median_dvm", "median_dva")
    log_scale = {"median_dvm", "median_dva"}    # magnitude/angle panels use log
    fig, axes = plt.subplots(1, 4, figsize=(16, 4))
    for ax, family in zip(axes, families):
        rows = [r for r in box if r["family"] == family]
        stats = [{
            "label": f"{float(r['epsilon']):g}/{r['mode']}",
            "q1": float(r["q1"]), "med": float(r["median"]), "q3": float(r["q3"]),
            "whislo": float(r["whisker_lo"]), "whishi": float(r["whisker_hi"]),
            "fliers": [],
        } for r in rows]
        ax.bxp(stats, showfliers=False)
        ax.set_title(family, fontsize=9)
        ax.tick_params(axis="x", labelrotation=90, labelsize=6)
        if family in log_scale:
            positive = [s for s in stats if s["whislo"] > 0]
            if len(positive) == len(stats) and stats:
                ax.set_yscale("log")
    fig.tight_layout()
    out = paths.root / "deviation_boxplots.svg"
    fig.savefig(out, metadata={"Date": None})
    plt.close(fig)
    outputs.append(str(out))

    points = read_csv(paths.point_deviation_csv)
    if points:
        eps0 = points[0]["epsilon"]
        mode0 = points[0]["mode"]
        fig, axes = plt.subplots(1, 2, figsize=(12, 4))
        for ax, kind in zip(axes, ("measurement", "state")):
            rows = [r for r in points
                    if r["kind"] == kind and r["epsilon"] == eps0 and r["mode"] == mode0]
            idx = [int(r["index"]) for r in rows]
            ax.plot(idx, [float(r["before"]) for r in rows], label="before", lw=0.8)
            ax.plot(idx, [float(r["after"]) for r in rows], label="after", lw=0.8)
            ax.set_title(f"{kind} (eps={eps0}, {mode0})", fontsize=9)
            ax.legend(fontsize=7)
        fig.tight_layout()
        out = paths.root / "point_deviation.svg"
        fig.savefig(out, metadata={"Date": None})
        plt.close(fig)
        outputs.append(str(out))
    progress(f"wrote {len(outputs)} figures")
    return outputs


def run_pipeline(plan: ExperimentPlan, progress=lambda msg: None) -> list[dict]:
    """All stages in order; returns the evaluation rows."""
    cmd_gen_data(plan, progress)
    cmd_train_nse(plan, progress)
    cmd_calibrate_bdd(plan, progress)
    cmd_train_detectors(plan, progress)
    cmd_attack(plan, progress)
    rows = cmd_evaluate(plan, progress)
    cmd_report(plan, progress)
    return rows
