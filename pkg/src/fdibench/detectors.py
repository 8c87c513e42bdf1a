"""Advanced defense baselines beyond the conventional residual tests.

Three statistical-consistency detectors over sliding windows of measurement
residuals (divergence of the pooled residue distribution, the same after a
sign-preserving power transform, and the top-k per-channel divergence of
one-step residual deltas), plus a supervised point classifier on raw
measurement vectors.  All thresholds are empirical benign quantiles at a
target false-alarm rate; divergences use the natural-log convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .mlp import (
    AdamParams,
    MlpModel,
    bce_with_logits,
    fit_normalization,
    init_model,
    normalize,
    predict,
    train_mlp,
)

HISTOGRAM_BINS = 64
HISTOGRAM_SPAN_SIGMAS = 6.0
LAPLACE_SMOOTHING = 1e-6
DEFAULT_WINDOW = 50


@dataclass(frozen=True)
class ResidualHistogram:
    bin_edges: np.ndarray       # uniform, len B + 1
    probabilities: np.ndarray   # len B, smoothed, sums to 1
    channel: int | None = None  # None = pooled over channels

    def __post_init__(self):
        if np.any(self.probabilities <= 0):
            raise ValueError("histogram probabilities must be positive after smoothing")
        if abs(float(np.sum(self.probabilities)) - 1.0) > 1e-9:
            raise ValueError("histogram probabilities must sum to 1")


@dataclass(frozen=True)
class DetectorVerdict:
    attacked: bool
    statistic: float
    threshold: float
    detector: str


def build_histogram(values: np.ndarray, bins: int = HISTOGRAM_BINS,
                    span_sigmas: float = HISTOGRAM_SPAN_SIGMAS,
                    channel: int | None = None) -> ResidualHistogram:
    """Uniform-bin histogram over mean +- span_sigmas of the calibration data."""
    values = np.asarray(values, dtype=float).ravel()
    mu, sd = float(values.mean()), float(values.std())
    half = span_sigmas * max(sd, 1e-12)
    edges = np.linspace(mu - half, mu + half, bins + 1)
    return ResidualHistogram(bin_edges=edges,
                             probabilities=_smoothed_probs(values, edges),
                             channel=channel)


def _smoothed_probs(values, edges):
    idx = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, len(edges) - 2)
    counts = np.bincount(idx, minlength=len(edges) - 1).astype(float)
    counts += LAPLACE_SMOOTHING
    return counts / counts.sum()


def empirical_probabilities(hist: ResidualHistogram, values: np.ndarray) -> np.ndarray:
    """Window values binned on the history's edges, same smoothing."""
    return _smoothed_probs(np.asarray(values, dtype=float).ravel(), hist.bin_edges)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.sum(p * np.log(p / q)))


def js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    m = 0.5 * (p + q)
    return 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m)


def power_transform(values: np.ndarray, p: float) -> np.ndarray:
    """Sign-preserving |r|^p transform."""
    return np.sign(values) * np.abs(values) ** p


# ---------------------------------------------------------------------------
# Windowed divergence detectors
# ---------------------------------------------------------------------------

def kld_test(history: ResidualHistogram, window_residuals: np.ndarray,
             threshold: float) -> DetectorVerdict:
    """Divergence of the pooled window residue distribution from history."""
    window_residuals = np.atleast_2d(window_residuals)
    if window_residuals.size == 0:
        raise ValueError("empty residual window")
    stat = kl_divergence(empirical_probabilities(history, window_residuals),
                         history.probabilities)
    return DetectorVerdict(attacked=stat > threshold, statistic=stat,
                           threshold=threshold, detector="kld")


def transformed_kld_test(history: ResidualHistogram, window_residuals: np.ndarray,
                         threshold: float, power_p: float = 2.0) -> DetectorVerdict:
    """KLD after the sign-preserving power transform; the history histogram
    must have been built from transformed residues."""
    window_residuals = np.atleast_2d(window_residuals)
    if window_residuals.size == 0:
        raise ValueError("empty residual window")
    stat = kl_divergence(
        empirical_probabilities(history, power_transform(window_residuals, power_p)),
        history.probabilities)
    return DetectorVerdict(attacked=stat > threshold, statistic=stat,
                           threshold=threshold, detector="tkld")


def ksrs_statistic(histories: list[ResidualHistogram], window_residuals: np.ndarray,
                   k: int) -> float:
    """Mean of the k largest per-channel JSDs of one-step residual deltas."""
    window_residuals = np.atleast_2d(window_residuals)
    if len(window_residuals) < 2:
        raise ValueError("need at least two residual vectors for one-step deltas")
    n_channels = window_residuals.shape[1]
    if k > n_channels:
        raise ValueError(f"k={k} exceeds channel count {n_channels}")
    deltas = np.diff(window_residuals, axis=0)
    scores = np.empty(n_channels)
    for ch in range(n_channels):
        hist = histories[ch]
        scores[ch] = js_divergence(empirical_probabilities(hist, deltas[:, ch]),
                                   hist.probabilities)
    return float(np.mean(np.sort(scores)[-k:]))


def ksrs_test(histories: list[ResidualHistogram], window_residuals: np.ndarray,
              k: int, threshold: float) -> DetectorVerdict:
    stat = ksrs_statistic(histories, window_residuals, k)
    return DetectorVerdict(attacked=stat > threshold, statistic=stat,
                           threshold=threshold, detector="ksrs")


def default_ksrs_k(n_channels: int) -> int:
    return int(np.ceil(0.05 * n_channels))


@dataclass(frozen=True)
class WindowedDetector:
    """A calibrated divergence detector bundled with its history and threshold."""
    name: str                    # kld | tkld | ksrs
    threshold: float
    window: int
    history: ResidualHistogram | None = None
    channel_histories: tuple = ()
    power: float = 2.0
    k: int = 1

    def verdict(self, window_residuals: np.ndarray) -> DetectorVerdict:
        if self.name == "kld":
            return kld_test(self.history, window_residuals, self.threshold)
        if self.name == "tkld":
            return transformed_kld_test(self.history, window_residuals,
                                        self.threshold, self.power)
        if self.name == "ksrs":
            return ksrs_test(list(self.channel_histories), window_residuals,
                             self.k, self.threshold)
        raise ValueError(f"unknown detector {self.name!r}")


def sliding_windows(stream: np.ndarray, window: int, stride: int = 1):
    stream = np.asarray(stream)
    for start in range(0, len(stream) - window + 1, stride):
        yield stream[start:start + window]


def calibrate_windowed(name: str, benign_residuals: np.ndarray, far_target: float,
                       window: int = DEFAULT_WINDOW, power: float = 2.0,
                       k: int | None = None) -> WindowedDetector:
    """Build histories from a benign residual stream and set the threshold at
    the (1 - far_target) quantile of benign window statistics.

    The stream is split internally: histories come from the first half and
    the quantile from windows over the second half, since scoring the same
    data that built the history biases the statistic low.
    """
    benign_residuals = np.asarray(benign_residuals, dtype=float)
    if len(benign_residuals) < 4 * window:
        raise ValueError("calibration stream shorter than four windows")
    half = len(benign_residuals) // 2
    fit_part, quant_part = benign_residuals[:half], benign_residuals[half:]
    if name == "kld":
        history = build_histogram(fit_part)
        det = WindowedDetector(name=name, threshold=np.inf, window=window,
                               history=history)
    elif name == "tkld":
        history = build_histogram(power_transform(fit_part, power))
        det = WindowedDetector(name=name, threshold=np.inf, window=window,
                               history=history, power=power)
    elif name == "ksrs":
        k = default_ksrs_k(benign_residuals.shape[1]) if k is None else k
        deltas = np.diff(fit_part, axis=0)
        hists = tuple(build_histogram(deltas[:, ch], channel=ch)
                      for ch in range(benign_residuals.shape[1]))
        det = WindowedDetector(name=name, threshold=np.inf, window=window,
                               channel_histories=hists, k=k)
    else:
        raise ValueError(f"unknown detector {name!r}")
    stats = [det.verdict(w).statistic for w in sliding_windows(quant_part, window)]
    threshold = float(np.quantile(stats, 1.0 - far_target))
    return WindowedDetector(name=det.name, threshold=threshold, window=window,
                            history=det.history,
                            channel_histories=det.channel_histories,
                            power=det.power, k=det.k)


# ---------------------------------------------------------------------------
# Supervised point classifier
# ---------------------------------------------------------------------------

class DetectorAccuracyError(RuntimeError):
    """Accuracy gate missed within the step cap; more data usually fixes it."""

    def __init__(self, accuracy, gate, steps):
        self.accuracy = accuracy
        super().__init__(
            f"held-out accuracy {accuracy:.4f} below the {gate:.2f} gate after "
            f"{steps} steps; train with more (or more separable) labelled data")


@dataclass(frozen=True)
class DetectorTrainConfig:
    hidden_sizes: tuple[int, ...] = (256, 128, 64)
    dropout_prob: float = 0.10
    batch_size: int = 256
    learning_rate: float = 1e-3
    max_steps: int = 20_000
    check_every: int = 1000
    accuracy_gate: float = 0.98
    train_fraction: float = 0.8
    leaky_slope: float = 0.01
    seed: int = 0


@dataclass(frozen=True)
class DetectorTrainReport:
    steps: int
    holdout_accuracy: float
    n_train: int
    n_test: int


def train_mlp_detector(measurements: np.ndarray, labels: np.ndarray,
                       cfg: DetectorTrainConfig | None = None):
    """Binary classifier on raw measurement vectors (voltage channels included).

    Trains in chunks until the held-out accuracy clears the gate; raises
    DetectorAccuracyError if the step cap is hit first.
    """
    cfg = cfg or DetectorTrainConfig()
    measurements = np.asarray(measurements, dtype=float)
    labels = np.asarray(labels, dtype=float).reshape(-1, 1)
    split_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xD0)))
    perm = split_rng.permutation(len(measurements))
    n_train = max(1, int(round(cfg.train_fraction * len(measurements))))
    train_idx, test_idx = perm[:n_train], perm[n_train:]

    in_mean, in_scale = fit_normalization(measurements[train_idx])
    model = init_model([measurements.shape[1], *cfg.hidden_sizes, 1],
                       cfg.leaky_slope,
                       np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xD1))),
                       output_activation="sigmoid")
    model.in_mean, model.in_scale = in_mean, in_scale

    xn_train = normalize(measurements[train_idx], in_mean, in_scale)
    y_train = labels[train_idx]
    train_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xD2)))

    def holdout_accuracy():
        if not len(test_idx):
            return float("nan")
        prob = predict(model, measurements[test_idx])
        return float(np.mean((prob.ravel() > 0.5) == (labels[test_idx].ravel() > 0.5)))

    steps_done = 0
    accuracy = 0.0
    while steps_done < cfg.max_steps:
        chunk = min(cfg.check_every, cfg.max_steps - steps_done)
        train_mlp(model, xn_train, y_train, bce_with_logits,
                  steps=chunk, batch_size=cfg.batch_size, dropout=cfg.dropout_prob,
                  rng=train_rng, adam=AdamParams(learning_rate=cfg.learning_rate))
        steps_done += chunk
        accuracy = holdout_accuracy()
        if accuracy > cfg.accuracy_gate:
            break
    if accuracy <= cfg.accuracy_gate and len(test_idx):
        raise DetectorAccuracyError(accuracy, cfg.accuracy_gate, steps_done)
    return model, DetectorTrainReport(steps=steps_done, holdout_accuracy=accuracy,
                                      n_train=len(train_idx), n_test=len(test_idx))


def mlp_detect(model: MlpModel, z: np.ndarray) -> DetectorVerdict:
    """Attacked iff the sigmoid output strictly exceeds one half."""
    prob = float(np.asarray(predict(model, z)).ravel()[0])
    return DetectorVerdict(attacked=prob > 0.5, statistic=prob, threshold=0.5,
                           detector="mlp")


def bypass_probability(verdicts) -> float:
    """Fraction of attacked samples the detector calls benign."""
    flags = [v.attacked if isinstance(v, DetectorVerdict) else bool(v)
             for v in verdicts]
    if not flags:
        raise ValueError("bypass probability needs at least one attacked sample")
    return 1.0 - float(np.mean(flags))


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _hist_doc(h):
    return {"bin_edges": h.bin_edges.tolist(),
            "probabilities": h.probabilities.tolist(),
            "channel": h.channel}


def _hist_from(doc):
    return ResidualHistogram(bin_edges=np.array(doc["bin_edges"]),
                             probabilities=np.array(doc["probabilities"]),
                             channel=doc.get("channel"))


def windowed_detector_to_json(det: WindowedDetector) -> str:
    return json.dumps({
        "schema": "fdibench-detector/1",
        "name": det.name, "threshold": det.threshold, "window": det.window,
        "power": det.power, "k": det.k,
        "history": _hist_doc(det.history) if det.history is not None else None,
        "channel_histories": [_hist_doc(h) for h in det.channel_histories],
    })


def windowed_detector_from_json(text: str) -> WindowedDetector:
    doc = json.loads(text)
    if doc.get("schema") != "fdibench-detector/1":
        raise ValueError(f"unsupported detector schema {doc.get('schema')!r}")
    return WindowedDetector(
        name=doc["name"], threshold=doc["threshold"], window=doc["window"],
        power=doc["power"], k=doc["k"],
        history=_hist_from(doc["history"]) if doc["history"] else None,
        channel_histories=tuple(_hist_from(h) for h in doc["channel_histories"]))
