"""Training the adversary's substitute state estimator.

The substitute maps region power measurements to region state estimates.
Defaults follow the reference recipe: two 512-unit hidden layers with a
leaky rectifier, 20% dropout, vector-gated Huber loss (gamma 1), Adam at
1e-3, batches of 256 for 50000 steps, 80/20 train/test split, per-channel
standardization fit on the training split.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mlp import (
    AdamParams,
    MlpModel,
    fit_normalization,
    huber_component_loss,
    huber_vector_loss,
    init_model,
    normalize,
    predict,
    train_mlp,
)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    steps: int = 50_000
    learning_rate: float = 1e-3
    dropout_prob: float = 0.2
    huber_gamma: float = 1.0
    seed: int = 0
    train_fraction: float = 0.8
    hidden_sizes: tuple[int, ...] = (512, 512)
    leaky_slope: float = 0.01
    per_component_huber: bool = False

    def __post_init__(self):
        if not 0 <= self.dropout_prob < 1:
            raise ValueError("dropout_prob must lie in [0, 1)")
        if self.huber_gamma <= 0:
            raise ValueError("huber_gamma must be positive")
        if not 0 < self.train_fraction <= 1:
            raise ValueError("train_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class TrainReport:
    n_train: int
    n_test: int
    first_loss: float
    final_loss: float
    holdout_rmse: float
    holdout_max_error: float


def train_nse(inputs: np.ndarray, targets: np.ndarray,
              cfg: TrainConfig | None = None) -> tuple[MlpModel, TrainReport]:
    """Fit the substitute estimator on (region measurements, region states).

    Returns the trained model and a report with held-out accuracy.  Fully
    deterministic under ``cfg.seed``.
    """
    cfg = cfg or TrainConfig()
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if inputs.ndim != 2 or targets.ndim != 2 or len(inputs) != len(targets):
        raise ValueError("inputs and targets must be matching 2-D arrays")

    split_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xA)))
    perm = split_rng.permutation(len(inputs))
    n_train = max(1, int(round(cfg.train_fraction * len(inputs))))
    train_idx, test_idx = perm[:n_train], perm[n_train:]

    in_mean, in_scale = fit_normalization(inputs[train_idx])
    out_mean, out_scale = fit_normalization(targets[train_idx])

    layer_sizes = [inputs.shape[1], *cfg.hidden_sizes, targets.shape[1]]
    init_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xB)))
    model = init_model(layer_sizes, cfg.leaky_slope, init_rng)
    model.in_mean, model.in_scale = in_mean, in_scale
    model.out_mean, model.out_scale = out_mean, out_scale

    huber = huber_component_loss if cfg.per_component_huber else huber_vector_loss

    def loss_fn(pred, target):
        return huber(pred - target, cfg.huber_gamma)

    train_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xC)))
    train_mlp(model,
              normalize(inputs[train_idx], in_mean, in_scale),
              normalize(targets[train_idx], out_mean, out_scale),
              loss_fn, steps=cfg.steps, batch_size=cfg.batch_size,
              dropout=cfg.dropout_prob, rng=train_rng,
              adam=AdamParams(learning_rate=cfg.learning_rate))

    if len(test_idx):
        pred = predict(model, inputs[test_idx])
        err = pred - targets[test_idx]
        rmse = float(np.sqrt(np.mean(err ** 2)))
        max_err = float(np.max(np.abs(err)))
    else:
        rmse = max_err = float("nan")
    return model, TrainReport(
        n_train=len(train_idx), n_test=len(test_idx),
        first_loss=model.loss_trace[0][1], final_loss=model.loss_trace[-1][1],
        holdout_rmse=rmse, holdout_max_error=max_err)
