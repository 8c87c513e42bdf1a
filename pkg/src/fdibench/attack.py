"""The black-box attack optimizer.

Pipeline per sample: project the live measurements into the region, take the
substitute model's input Jacobian J, linearize the deviation-maximization
problem into ``max eta' (J'J) eta  s.t. ||eta||_2 <= eps``, solve its convex
matrix relaxation, recover the perturbation from the solution's dominant
eigenpair, mask it with a sparsity selection vector and scatter it back into
the full measurement vector.

For a positive-semidefinite matrix variable the nuclear norm equals the
trace, so the relaxed feasible set is ``{W >= 0, Tr(W) <= min(eps^2, 1)}``
and the optimum is the rank-one matrix built from the dominant eigenvector
of J'J scaled by ``min(eps^2, 1)``.  A shifted power iteration extracts that
eigenvector; a deflated second pass certifies the spectral gap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mlp import MlpModel, input_jacobian, predict
from .regions import AttackRegion, embed, project

SELECTION_MODES = ("all", "half", "tenth")


@dataclass(frozen=True)
class PcdmConfig:
    epsilon: float = 1.0
    selection_mode: str = "all"       # all | half | tenth, or pass an explicit mask
    eig_tol: float = 1e-12
    eig_max_iters: int = 5000
    raw_units: bool = False           # optimize in physical instead of normalized units

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class SdpSolution:
    lambda_star: float        # principal eigenvalue of the solution matrix W
    nu_star: np.ndarray       # unit principal eigenvector
    lambda_2: float           # second eigenvalue of W (rank-one certificate)
    objective: float          # Tr(J~ W)
    degenerate: bool = False  # top eigenspace of J~ has no resolvable gap


@dataclass(frozen=True)
class AttackDiagnostics:
    lambda_star: float
    lambda_2: float
    objective: float
    predicted_deviation: float
    eta: np.ndarray           # recovered perturbation, region coordinates
    eta_norm: float
    budget_slack: float       # epsilon - ||eta||; positive when eps < 1
    degenerate: bool
    selected_indices: tuple


def build_quadratic(jac: np.ndarray) -> np.ndarray:
    """J'J, symmetrized against accumulation error."""
    jj = np.asarray(jac, dtype=float)
    quad = jj.T @ jj
    return 0.5 * (quad + quad.T)


def _power_iteration(mat, rng, tol, max_iters):
    """Dominant eigenpair by shifted power iteration; PSD input assumed."""
    n = mat.shape[0]
    v = rng.normal(size=n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        w = mat @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0, v, True       # null matrix: any unit vector works
        v_new = w / norm
        lam_new = float(v_new @ (mat @ v_new))
        converged = np.linalg.norm(mat @ v_new - lam_new * v_new) <= max(tol, tol * lam_new)
        v, lam = v_new, lam_new
        if converged:
            return lam, v, False
    return lam, v, True


def solve_sdp(quad: np.ndarray, cfg: PcdmConfig) -> SdpSolution:
    """Closed-form optimum of the trace-maximization relaxation.

    The solution is ``W = min(eps^2, 1) u u'`` with ``u`` the dominant unit
    eigenvector of the (PSD) quadratic; the returned ``lambda_2`` is the
    second eigenvalue of W, which certifies rank-one recovery, and the
    degenerate flag marks an unresolved top eigenspace of the quadratic.
    """
    quad = np.asarray(quad, dtype=float)
    n = quad.shape[0]
    if quad.shape != (n, n):
        raise ValueError("quadratic must be square")
    rng = np.random.default_rng(np.random.SeedSequence((0x5D9, n)))
    mu1, u, stagnated = _power_iteration(quad, rng, cfg.eig_tol, cfg.eig_max_iters)
    deflated = quad - mu1 * np.outer(u, u)
    mu2, _, _ = _power_iteration(deflated, rng, cfg.eig_tol, cfg.eig_max_iters)
    gap = mu1 - mu2
    degenerate = stagnated or (gap <= max(cfg.eig_tol, cfg.eig_tol * max(abs(mu1), 1.0)))

    trace_cap = min(cfg.epsilon ** 2, 1.0)
    w_mat = trace_cap * np.outer(u, u)
    # eigenpair of W itself: lambda* = trace_cap exactly; the deflated residual
    # is float noise and certifies the rank-one structure
    lambda_star = float(u @ (w_mat @ u))
    w_defl = w_mat - lambda_star * np.outer(u, u)
    lam2_w, _, _ = _power_iteration(w_defl, rng, cfg.eig_tol, cfg.eig_max_iters)
    return SdpSolution(lambda_star=lambda_star, nu_star=u,
                       lambda_2=float(max(lam2_w, 0.0)),
                       objective=float(trace_cap * mu1),
                       degenerate=degenerate)


def recover_perturbation(sol: SdpSolution, cfg: PcdmConfig) -> np.ndarray:
    """eta = eps * sqrt(lambda*) * nu*, sign fixed so the largest-magnitude
    component is positive."""
    eta = cfg.epsilon * np.sqrt(sol.lambda_star) * sol.nu_star
    pivot = np.argmax(np.abs(eta))
    if eta[pivot] < 0:
        eta = -eta
    return eta


def selection_vector(eta: np.ndarray, mode) -> np.ndarray:
    """Boolean mask of the channels that receive the perturbation.

    ``all`` selects everything, ``half`` the floor(N_A/2) largest-magnitude
    components, ``tenth`` the nearest-integer N_A/10 largest.  Ties resolve
    to the lower index.  An explicit boolean mask passes through unchanged.
    """
    n = len(eta)
    if isinstance(mode, (np.ndarray, list, tuple)):
        mask = np.asarray(mode, dtype=bool)
        if mask.shape != (n,):
            raise ValueError(f"explicit mask must have length {n}")
        return mask
    if mode == "all":
        return np.ones(n, dtype=bool)
    if mode == "half":
        count = n // 2
    elif mode == "tenth":
        count = int(np.floor(n / 10 + 0.5))
    else:
        raise ValueError(f"unknown selection mode {mode!r}")
    order = np.argsort(-np.abs(eta), kind="stable")
    mask = np.zeros(n, dtype=bool)
    mask[order[:count]] = True
    return mask


def attack_measurements(z: np.ndarray, region: AttackRegion, eta: np.ndarray,
                        selected: np.ndarray) -> np.ndarray:
    """Scatter the masked perturbation into the full measurement vector."""
    if len(eta) != region.size or len(selected) != region.size:
        raise ValueError("eta and selection must match the region size")
    return embed(region, eta * selected, z)


def attack_jacobian(model: MlpModel, z_region: np.ndarray,
                    raw_units: bool = False) -> np.ndarray:
    """The Jacobian the optimizer maximizes over.

    By default the derivative is taken with respect to the substitute's
    standardized input coordinates: perturbations then ride along channels in
    proportion to their natural variability, which is what keeps the injected
    vector close to the manifold of plausible measurement variations (and the
    residual tests quiet).  ``raw_units`` switches to physical per-unit
    coordinates.
    """
    jac = input_jacobian(model, z_region)
    if raw_units:
        return jac
    return jac * model.in_scale[None, :]


def perturbation_to_physical(model: MlpModel, masked_eta: np.ndarray,
                             raw_units: bool = False) -> np.ndarray:
    """Map a (masked) perturbation from optimizer coordinates to per-unit."""
    if raw_units:
        return masked_eta
    return masked_eta * model.in_scale


def run_attack(model: MlpModel, region: AttackRegion, z: np.ndarray,
               cfg: PcdmConfig) -> tuple[np.ndarray, AttackDiagnostics]:
    """Full pipeline; returns the attacked measurement vector and diagnostics.

    The perturbation is optimized (and budgeted by epsilon) in the
    substitute's input coordinates, then converted to physical units before
    the scatter; diagnostics carry the optimizer-space eta.
    """
    z_region = project(region, z)
    jac = attack_jacobian(model, z_region, cfg.raw_units)
    sol = solve_sdp(build_quadratic(jac), cfg)
    eta = recover_perturbation(sol, cfg)
    selected = selection_vector(eta, cfg.selection_mode)
    masked = eta * selected
    z_attacked = attack_measurements(
        z, region, perturbation_to_physical(model, eta, cfg.raw_units), selected)
    diagnostics = AttackDiagnostics(
        lambda_star=sol.lambda_star,
        lambda_2=sol.lambda_2,
        objective=sol.objective,
        predicted_deviation=float(np.linalg.norm(jac @ masked)),
        eta=eta,
        eta_norm=float(np.linalg.norm(eta)),
        budget_slack=float(cfg.epsilon - np.linalg.norm(eta)),
        degenerate=sol.degenerate,
        selected_indices=tuple(int(i) for i in np.nonzero(selected)[0]),
    )
    return z_attacked, diagnostics


def achieved_deviation(model: MlpModel, z_region: np.ndarray,
                       z_region_attacked: np.ndarray) -> float:
    """||f(z + eta o e) - f(z)||_2 through the substitute model."""
    return float(np.linalg.norm(predict(model, z_region_attacked)
                                - predict(model, z_region)))
