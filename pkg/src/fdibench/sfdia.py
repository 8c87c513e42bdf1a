"""Classic white-box stealthy injection generators.

These are the label-producing oracles the defender trains against: attacks
built from full model knowledge via ``a = h(x_hat + c) - h(x_hat)``, plus two
degraded variants (noisy line parameters, noisy state knowledge).  The state
deviation ``c`` is sampled relative to the current estimate with configurable
support fraction and magnitude range.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .network import AdmittanceSet, NetworkCase, build_admittance
from .powerflow import StateVector, measurement_function

VARIANTS = ("perfect", "noisy_params", "noisy_state")

SUPPORT_FRACTION_RANGE = (0.10, 0.80)
MAGNITUDE_RANGE = (0.10, 1.90)
PARAMETER_NOISE_SIGMA = 0.10
STATE_NOISE_BOUND = 0.08


@dataclass(frozen=True)
class StateDeviation:
    c: np.ndarray   # length 2N; slack angle component always 0

    @property
    def support(self):
        return np.nonzero(self.c)[0]


@dataclass(frozen=True)
class AttackSampleLabel:
    attacked: bool
    variant: str                      # perfect | noisy_params | noisy_state | none
    compromised_state_mask: np.ndarray

    def __post_init__(self):
        if self.attacked != (self.variant != "none"):
            raise ValueError("attacked flag inconsistent with variant")
        if self.attacked != bool(np.any(self.compromised_state_mask)):
            raise ValueError("mask inconsistent with attacked flag")


def sample_deviation(rng: np.random.Generator, case: NetworkCase,
                     x_hat: StateVector,
                     support_range=SUPPORT_FRACTION_RANGE,
                     magnitude_range=MAGNITUDE_RANGE) -> StateDeviation:
    """Random state deviation: support fraction over non-slack components,
    each nonzero scaled relative to the estimated value with random sign.

    Defaults follow the standard recipe (10..80% support, 10..190%
    magnitudes); narrower magnitude ranges keep the shifted estimate inside
    the estimator's convergence region."""
    n = case.n_bus
    base = x_hat.as_array()
    eligible = np.array([j for j in range(2 * n) if j != n + case.slack_index])
    fraction = rng.uniform(*support_range)
    count = int(np.floor(fraction * 2 * n + 0.5))   # nearest integer
    count = max(1, min(count, len(eligible)))
    support = rng.choice(eligible, size=count, replace=False)
    c = np.zeros(2 * n)
    magnitudes = rng.uniform(*magnitude_range, size=count)
    signs = rng.choice([-1.0, 1.0], size=count)
    c[support] = signs * magnitudes * base[support]
    return StateDeviation(c=c)


def _apply(x: StateVector, c: np.ndarray) -> StateVector:
    n = len(x.vm)
    vm = x.vm + c[:n]
    if np.any(vm <= 0):
        raise ValueError("deviation drives a voltage magnitude non-positive")
    return StateVector(vm=vm, va=x.va + c[n:])


def perfect_sfdia(case: NetworkCase, adm: AdmittanceSet, x_hat: StateVector,
                  c: np.ndarray) -> np.ndarray:
    """Residual-invariant injection from exact model and state knowledge."""
    return (measurement_function(case, adm, _apply(x_hat, c))
            - measurement_function(case, adm, x_hat))


def noisy_param_sfdia(case: NetworkCase, adm: AdmittanceSet, x_hat: StateVector,
                      c: np.ndarray, rng: np.random.Generator,
                      noise_sigma: float = PARAMETER_NOISE_SIGMA) -> np.ndarray:
    """Same construction, but through a line model with perturbed series
    admittances (relative Gaussian, truncated at 3 sigma so signs survive)."""
    branches = []
    for br in case.branches:
        factor = 0.0
        while True:
            g = rng.normal()
            if abs(g) <= 3.0:
                factor = 1.0 + noise_sigma * g
                if factor != 0.0:
                    break
        branches.append(replace(br, series_admittance=br.series_admittance * factor))
    perturbed_case = NetworkCase(case.name, case.base_mva, case.buses, branches)
    perturbed = build_admittance(perturbed_case)
    return (measurement_function(perturbed_case, perturbed, _apply(x_hat, c))
            - measurement_function(perturbed_case, perturbed, x_hat))


def noisy_state_sfdia(case: NetworkCase, adm: AdmittanceSet, x_hat: StateVector,
                      c: np.ndarray, rng: np.random.Generator,
                      error_bound: float = STATE_NOISE_BOUND) -> np.ndarray:
    """Same construction from a relatively perturbed state estimate."""
    e = rng.uniform(-error_bound, error_bound, size=2 * len(x_hat.vm))
    noisy = StateVector.from_array(x_hat.as_array() * (1.0 + e))
    return (measurement_function(case, adm, _apply(noisy, c))
            - measurement_function(case, adm, noisy))


def attack_sample(case: NetworkCase, adm: AdmittanceSet, x_hat, variant: str,
                  rng: np.random.Generator, max_tries: int = 200,
                  magnitude_range=MAGNITUDE_RANGE):
    """Draw deviations until one stays inside h's domain; returns (a, deviation)."""
    if not isinstance(x_hat, StateVector):
        x_hat = StateVector.from_array(x_hat)
    builders = {
        "perfect": lambda x, c, r: perfect_sfdia(case, adm, x, c),
        "noisy_params": lambda x, c, r: noisy_param_sfdia(case, adm, x, c, r),
        "noisy_state": lambda x, c, r: noisy_state_sfdia(case, adm, x, c, r),
    }
    build = builders[variant]
    for _ in range(max_tries):
        deviation = sample_deviation(rng, case, x_hat,
                                     magnitude_range=magnitude_range)
        if not np.any(deviation.c):
            continue
        try:
            return build(x_hat, deviation.c, rng), deviation
        except ValueError:
            continue  # negative-sign magnitude draw left the voltage domain
    raise RuntimeError(f"no valid deviation found in {max_tries} draws")


def build_attacked_dataset(samples, case: NetworkCase, adm: AdmittanceSet,
                           rng: np.random.Generator, attack_probability: float = 0.5):
    """Decorate benign (z, x_hat) samples with standard injections.

    Each sample is attacked with ``attack_probability``; the variant is chosen
    uniformly.  Yields ``(sample, z_out, label)`` where ``z_out`` is either the
    original or the attacked measurement vector.
    """
    for sample in samples:
        if sample.estimated_state is None:
            raise ValueError("samples must carry estimated states")
        x_hat = sample.estimated_state
        if not isinstance(x_hat, StateVector):
            x_hat = StateVector.from_array(x_hat)
        if rng.random() >= attack_probability:
            yield sample, sample.measurements, AttackSampleLabel(
                attacked=False, variant="none",
                compromised_state_mask=np.zeros(2 * case.n_bus, dtype=bool))
            continue
        variant = VARIANTS[rng.integers(len(VARIANTS))]
        a, deviation = attack_sample(case, adm, x_hat, variant, rng)
        mask = np.zeros(2 * case.n_bus, dtype=bool)
        mask[deviation.support] = True
        yield sample, sample.measurements + a, AttackSampleLabel(
            attacked=True, variant=variant, compromised_state_mask=mask)
