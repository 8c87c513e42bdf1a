"""Residual-based bad-data detection and threshold calibration.

Residuals are normalized against the diagonal of the residual sensitivity
matrix ``B = I - H (K^-1 H' R^-1)`` with ``K = H' R^-1 H``.  The default
denominator is ``R_ii * B_ii``; ``classical_normalization`` switches to
``sqrt(R_ii * B_ii)``.  The chi-squared test thresholds the 2-norm of the
normalized residual vector, the largest-normalized-residue test its
infinity norm; both thresholds come from empirical benign quantiles at a
configured false-alarm rate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .estimation import ObservabilityError, _free_columns, measurement_jacobian
from .network import AdmittanceSet, NetworkCase
from .powerflow import StateVector, measurement_function

B_DIAGONAL_FLOOR = 1e-8   # guards leverage channels where B_ii -> 0


@dataclass(frozen=True)
class BddThresholds:
    tau_2: float
    tau_inf: float
    far_target: float
    sample_count: int = 0
    case_name: str = ""

    def __post_init__(self):
        if self.tau_2 <= 0 or self.tau_inf <= 0:
            raise ValueError("thresholds must be positive")

    def to_json(self) -> str:
        return json.dumps({
            "case": self.case_name, "far_target": self.far_target,
            "tau_2": self.tau_2, "tau_inf": self.tau_inf,
            "sample_count": self.sample_count,
        }, indent=1)

    @staticmethod
    def from_json(text: str) -> "BddThresholds":
        doc = json.loads(text)
        return BddThresholds(tau_2=doc["tau_2"], tau_inf=doc["tau_inf"],
                             far_target=doc["far_target"],
                             sample_count=doc.get("sample_count", 0),
                             case_name=doc.get("case", ""))


def normalized_residuals(case: NetworkCase, adm: AdmittanceSet, z: np.ndarray,
                         x_hat: StateVector, weights: np.ndarray,
                         classical_normalization: bool = False) -> np.ndarray:
    """Per-channel normalized residual magnitudes at the WLS estimate."""
    w = np.asarray(weights, dtype=float)
    r = np.abs(z - measurement_function(case, adm, x_hat))
    h = measurement_jacobian(case, adm, x_hat)[:, _free_columns(case)]
    gain = h.T @ (w[:, None] * h)
    try:
        gain_inv_ht = np.linalg.solve(gain, h.T)
    except np.linalg.LinAlgError:
        raise ObservabilityError("singular gain matrix in residual normalization") from None
    b_diag = 1.0 - np.einsum("ij,ji->i", h, gain_inv_ht * w[None, :])
    b_diag = np.maximum(b_diag, B_DIAGONAL_FLOOR)
    r_ii = 1.0 / w
    denom = r_ii * b_diag
    if classical_normalization:
        denom = np.sqrt(denom)
    return r / denom


def calibrate_thresholds(norm_residual_stream, far_target: float,
                         case_name: str = "", min_samples: int = 1000) -> BddThresholds:
    """Empirical (1 - far_target) quantiles of the benign residual norms.

    ``norm_residual_stream`` yields normalized-residual vectors of benign
    samples; at least ``min_samples`` are required.
    """
    if not 0 <= far_target < 1:
        raise ValueError("far_target must lie in [0, 1)")
    norms_2, norms_inf = [], []
    for r_norm in norm_residual_stream:
        norms_2.append(float(np.linalg.norm(r_norm)))
        norms_inf.append(float(np.max(np.abs(r_norm))))
    if len(norms_2) < min_samples:
        raise ValueError(f"need at least {min_samples} benign samples, got {len(norms_2)}")
    q = 1.0 - far_target
    return BddThresholds(tau_2=float(np.quantile(norms_2, q)),
                         tau_inf=float(np.quantile(norms_inf, q)),
                         far_target=far_target,
                         sample_count=len(norms_2),
                         case_name=case_name)


def chi2_test(r_norm: np.ndarray, thresholds: BddThresholds) -> bool:
    """True = attacked.  Strict inequality: ties stay benign."""
    return float(np.linalg.norm(r_norm)) > thresholds.tau_2


def lnr_test(r_norm: np.ndarray, thresholds: BddThresholds) -> bool:
    return float(np.max(np.abs(r_norm))) > thresholds.tau_inf
