"""Weighted-least-squares AC state estimation and its measurement Jacobian.

This is the defender's estimator: Gauss-Newton on the weighted residual
objective, slack angle pinned to zero, with a step-halving line search so the
objective never increases.  The Jacobian is analytic with rows ordered as the
measurement vector and columns as ``[vm, va]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import AdmittanceSet, NetworkCase
from .powerflow import StateVector, measurement_function, measurement_size


@dataclass(frozen=True)
class EstimatorConfig:
    tol: float = 1e-6          # infinity norm of the weighted gradient
    max_iters: int = 25
    weights: np.ndarray | None = None   # diagonal of R^-1; default all-ones
    max_halvings: int = 6

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.weights is not None and np.any(np.asarray(self.weights) <= 0):
            raise ValueError("weights must be positive")


@dataclass(frozen=True)
class EstimateResult:
    state: StateVector
    converged: bool
    iterations: int
    gradient_norm: float
    objective: float
    objective_trace: tuple = ()   # accepted objective after each iteration


class ObservabilityError(RuntimeError):
    """Singular gain matrix; carries the (approximately) unobservable directions."""

    def __init__(self, message, null_directions=None):
        self.null_directions = null_directions
        super().__init__(message)


def measurement_jacobian(case: NetworkCase, adm: AdmittanceSet, x: StateVector) -> np.ndarray:
    """Analytic dh/dx, shape (3N + 4M) x 2N, columns [vm | va]."""
    n, m = case.n_bus, case.n_branch
    v = x.voltages()
    vnorm = v / x.vm
    ibus = adm.ybus @ v

    diag_v = np.diag(v)
    diag_vn = np.diag(vnorm)
    ds_dvm = diag_v @ np.conj(adm.ybus @ diag_vn) + np.conj(np.diag(ibus)) @ diag_vn
    ds_dva = 1j * diag_v @ np.conj(np.diag(ibus) - adm.ybus @ diag_v)

    f_idx = np.array([br.from_bus for br in case.branches], dtype=int)
    t_idx = np.array([br.to_bus for br in case.branches], dtype=int)

    def branch_sensitivities(ybr, end_idx):
        i_br = ybr @ v
        cf = np.zeros((m, n))
        cf[np.arange(m), end_idx] = 1.0
        d_vm = np.conj(np.diag(i_br)) @ cf @ diag_vn + np.diag(cf @ v) @ np.conj(ybr @ diag_vn)
        d_va = 1j * (np.conj(np.diag(i_br)) @ cf @ diag_v - np.diag(cf @ v) @ np.conj(ybr @ diag_v))
        return d_vm, d_va

    dsf_dvm, dsf_dva = branch_sensitivities(adm.yfrom, f_idx)
    dst_dvm, dst_dva = branch_sensitivities(adm.yto, t_idx)

    h = np.zeros((measurement_size(case), 2 * n))
    for k in range(n):
        h[3 * k, k] = 1.0                      # |v_k| row: unit selector on vm
        h[3 * k + 1, :n] = ds_dvm.real[k]
        h[3 * k + 1, n:] = ds_dva.real[k]
        h[3 * k + 2, :n] = ds_dvm.imag[k]
        h[3 * k + 2, n:] = ds_dva.imag[k]
    base = 3 * n
    for l in range(m):
        h[base + 4 * l, :n] = dsf_dvm.real[l]
        h[base + 4 * l, n:] = dsf_dva.real[l]
        h[base + 4 * l + 1, :n] = dsf_dvm.imag[l]
        h[base + 4 * l + 1, n:] = dsf_dva.imag[l]
        h[base + 4 * l + 2, :n] = dst_dvm.real[l]
        h[base + 4 * l + 2, n:] = dst_dva.real[l]
        h[base + 4 * l + 3, :n] = dst_dvm.imag[l]
        h[base + 4 * l + 3, n:] = dst_dva.imag[l]
    return h


def _free_columns(case: NetworkCase) -> np.ndarray:
    """All state components except the slack angle, which stays pinned."""
    n = case.n_bus
    cols = np.ones(2 * n, dtype=bool)
    cols[n + case.slack_index] = False
    return cols


def wls_estimate(case: NetworkCase, adm: AdmittanceSet, z: np.ndarray,
                 cfg: EstimatorConfig | None = None,
                 x0: StateVector | None = None) -> EstimateResult:
    """Gauss-Newton WLS estimate of the state from a measurement vector.

    Weights are rescaled internally to geometric mean one, so ``cfg.tol``
    bounds the infinity norm of the rescaled gradient at convergence.
    """
    cfg = cfg or EstimatorConfig()
    nz = measurement_size(case)
    if len(z) != nz:
        raise ValueError(f"measurement vector has {len(z)} channels, expected {nz}")
    w = np.ones(nz) if cfg.weights is None else np.asarray(cfg.weights, dtype=float)
    # rescale by the geometric mean so the gradient tolerance is meaningful for
    # any weight magnitude; the minimizer is unchanged
    w_scale = float(np.exp(np.mean(np.log(w))))
    w = w / w_scale
    free = _free_columns(case)

    x = StateVector.flat(case.n_bus) if x0 is None else StateVector(x0.vm.copy(), x0.va.copy())
    r = z - measurement_function(case, adm, x)
    objective = float(r @ (w * r))
    grad_norm = np.inf
    iterations = 0
    trace = [objective]

    sqrt_w = np.sqrt(w)
    forced = 0
    for it in range(cfg.max_iters):
        h = measurement_jacobian(case, adm, x)[:, free]
        grad = h.T @ (w * r)
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm < cfg.tol:
            return EstimateResult(x, True, iterations, grad_norm, objective, tuple(trace))
        # solve the weighted least-squares step by orthogonal factorization;
        # forming the gain matrix squares the condition number
        hw = sqrt_w[:, None] * h
        step, _, rank, sv = np.linalg.lstsq(hw, sqrt_w * r, rcond=None)
        if rank < h.shape[1]:
            _, _, vt = np.linalg.svd(hw)
            raise ObservabilityError(
                "singular gain matrix: state not observable from this measurement set",
                null_directions=vt[rank:])

        # halve until the objective decreases
        alpha = 1.0
        accepted = False
        full = np.zeros(2 * case.n_bus)
        for _ in range(cfg.max_halvings + 1):
            full[free] = alpha * step
            trial = StateVector(vm=x.vm + full[:case.n_bus], va=x.va + full[case.n_bus:])
            if np.all(trial.vm > 0):
                r_trial = z - measurement_function(case, adm, trial)
                obj_trial = float(r_trial @ (w * r_trial))
                if obj_trial <= objective:
                    x, r, objective = trial, r_trial, obj_trial
                    trace.append(objective)
                    accepted = True
                    break
            alpha *= 0.5
        iterations = it + 1
        if not accepted:
            # objective differences are below float evaluation noise once the
            # gradient is small; rely on pure-Newton contraction to polish
            if grad_norm < 1e3 * cfg.tol and forced < 3:
                forced += 1
                full[free] = step
                x = StateVector(vm=x.vm + full[:case.n_bus], va=x.va + full[case.n_bus:])
                r = z - measurement_function(case, adm, x)
                objective = float(r @ (w * r))
                trace.append(objective)
                continue
            return EstimateResult(x, False, iterations, grad_norm, objective, tuple(trace))

    h = measurement_jacobian(case, adm, x)[:, free]
    grad_norm = float(np.max(np.abs(h.T @ (w * r))))
    return EstimateResult(x, grad_norm < cfg.tol, iterations, grad_norm, objective, tuple(trace))


def weights_from_sigmas(sigmas: np.ndarray) -> np.ndarray:
    """Diagonal of R^-1 for per-channel noise standard deviations."""
    sigmas = np.asarray(sigmas, dtype=float)
    return 1.0 / (sigmas * sigmas)
