"""AC power flow, the measurement map h(x), and scenario synthesis.

The state is ``x = [vm_1..vm_N, va_1..va_N]`` (per-unit magnitudes, radians),
slack angle pinned to zero.  The measurement vector stacks per-bus triples
``(|v_k|, p_k, q_k)`` followed by per-branch quads ``(p_s, q_s, p_r, q_r)``,
giving ``3N + 4M`` channels.  Sending/receiving branch flows follow the
injected-into-branch sign convention, so ``p_s + p_r`` is the series loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import PQ, PV, AdmittanceSet, NetworkCase


@dataclass(frozen=True)
class StateVector:
    vm: np.ndarray   # N per-unit magnitudes, > 0
    va: np.ndarray   # N radians, va[slack] == 0

    def as_array(self):
        return np.concatenate([self.vm, self.va])

    @staticmethod
    def from_array(arr):
        n = len(arr) // 2
        return StateVector(vm=np.asarray(arr[:n], dtype=float).copy(),
                           va=np.asarray(arr[n:], dtype=float).copy())

    @staticmethod
    def flat(n):
        return StateVector(vm=np.ones(n), va=np.zeros(n))

    def voltages(self):
        return self.vm * np.exp(1j * self.va)


class PowerFlowError(RuntimeError):
    """Newton iteration failed; carries the final mismatch for diagnosis."""

    def __init__(self, message, mismatch=None):
        self.mismatch = mismatch
        super().__init__(message)


def measurement_size(case: NetworkCase) -> int:
    return 3 * case.n_bus + 4 * case.n_branch


def vmag_index(case, bus):
    return 3 * bus


def injection_indices(case, bus):
    """(p, q) channel positions for a bus."""
    return 3 * bus + 1, 3 * bus + 2


def flow_indices(case, branch):
    """(p_s, q_s, p_r, q_r) channel positions for a branch."""
    base = 3 * case.n_bus + 4 * branch
    return base, base + 1, base + 2, base + 3


def channel_names(case: NetworkCase) -> list[str]:
    names = []
    for b in case.buses:
        names += [f"vm:{b.label}", f"p:{b.label}", f"q:{b.label}"]
    for br in case.branches:
        f_lab = case.buses[br.from_bus].label
        t_lab = case.buses[br.to_bus].label
        names += [f"ps:{f_lab}-{t_lab}", f"qs:{f_lab}-{t_lab}",
                  f"pr:{f_lab}-{t_lab}", f"qr:{f_lab}-{t_lab}"]
    return names


def real_power_channel_mask(case: NetworkCase) -> np.ndarray:
    """True on the p / p_s / p_r channels."""
    mask = np.zeros(measurement_size(case), dtype=bool)
    for b in range(case.n_bus):
        mask[3 * b + 1] = True
    for l in range(case.n_branch):
        base = 3 * case.n_bus + 4 * l
        mask[base] = mask[base + 2] = True
    return mask


def reactive_power_channel_mask(case: NetworkCase) -> np.ndarray:
    mask = np.zeros(measurement_size(case), dtype=bool)
    for b in range(case.n_bus):
        mask[3 * b + 2] = True
    for l in range(case.n_branch):
        base = 3 * case.n_bus + 4 * l
        mask[base + 1] = mask[base + 3] = True
    return mask


def measurement_function(case: NetworkCase, adm: AdmittanceSet, x: StateVector) -> np.ndarray:
    """Noise-free h(x): magnitudes, injections and branch flows, stacked."""
    v = x.voltages()
    s_bus = v * np.conj(adm.ybus @ v)
    f_idx = np.array([br.from_bus for br in case.branches], dtype=int)
    t_idx = np.array([br.to_bus for br in case.branches], dtype=int)
    s_from = v[f_idx] * np.conj(adm.yfrom @ v)
    s_to = v[t_idx] * np.conj(adm.yto @ v)

    z = np.empty(measurement_size(case))
    bus_block = np.empty((case.n_bus, 3))
    bus_block[:, 0] = x.vm
    bus_block[:, 1] = s_bus.real
    bus_block[:, 2] = s_bus.imag
    branch_block = np.empty((case.n_branch, 4))
    branch_block[:, 0] = s_from.real
    branch_block[:, 1] = s_from.imag
    branch_block[:, 2] = s_to.real
    branch_block[:, 3] = s_to.imag
    z[:3 * case.n_bus] = bus_block.ravel()
    z[3 * case.n_bus:] = branch_block.ravel()
    return z


def solve_powerflow(case: NetworkCase, adm: AdmittanceSet,
                    loads: np.ndarray | None = None,
                    dispatch: np.ndarray | None = None,
                    tol: float = 1e-8, max_iters: int = 20,
                    x0: StateVector | None = None) -> StateVector:
    """Newton-Raphson solution of the injection equations.

    ``loads`` is complex consumed power per bus, ``dispatch`` real generation
    per bus (both per-unit; defaults come from the case).  PV buses hold their
    magnitude setpoint, the slack holds magnitude and angle and absorbs the
    residual.  Raises PowerFlowError when the mismatch is still above ``tol``
    after ``max_iters`` iterations.
    """
    n = case.n_bus
    if loads is None:
        loads = np.array([b.base_load for b in case.buses], dtype=complex)
    if dispatch is None:
        dispatch = np.array([b.base_dispatch for b in case.buses], dtype=float)
    s_spec = dispatch - loads  # net complex injection; PV/slack Q free

    slack = case.slack_index
    pv = [b.index for b in case.buses if b.bus_type == PV]
    pq = [b.index for b in case.buses if b.bus_type == PQ]
    non_slack = [i for i in range(n) if i != slack]

    vm = np.ones(n) if x0 is None else x0.vm.copy()
    va = np.zeros(n) if x0 is None else x0.va.copy()
    vm[slack] = case.buses[slack].vm_setpoint
    for i in pv:
        vm[i] = case.buses[i].vm_setpoint
    va[slack] = 0.0

    pq_pos = {b: k for k, b in enumerate(pq)}
    for it in range(max_iters + 1):
        v = vm * np.exp(1j * va)
        s_calc = v * np.conj(adm.ybus @ v)
        dp = s_spec.real[non_slack] - s_calc.real[non_slack]
        dq = s_spec.imag[pq] - s_calc.imag[pq]
        mismatch = np.concatenate([dp, dq])
        worst = np.max(np.abs(mismatch)) if mismatch.size else 0.0
        if worst < tol:
            return StateVector(vm=vm, va=va)
        if it == max_iters:
            raise PowerFlowError(
                f"no convergence after {max_iters} iterations "
                f"(max |mismatch| = {worst:.3e} pu)", mismatch=mismatch)

        diag_v = np.diag(v)
        diag_i = np.diag(adm.ybus @ v)
        diag_vn = np.diag(v / vm)
        ds_dvm = diag_v @ np.conj(adm.ybus @ diag_vn) + np.conj(diag_i) @ diag_vn
        ds_dva = 1j * diag_v @ np.conj(diag_i - adm.ybus @ diag_v)

        j11 = ds_dva.real[np.ix_(non_slack, non_slack)]
        j12 = ds_dvm.real[np.ix_(non_slack, pq)]
        j21 = ds_dva.imag[np.ix_(pq, non_slack)]
        j22 = ds_dvm.imag[np.ix_(pq, pq)]
        jac = np.block([[j11, j12], [j21, j22]])
        try:
            step = np.linalg.solve(jac, mismatch)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowError(f"singular Jacobian at iteration {it}: {exc}",
                                 mismatch=mismatch) from None
        va[non_slack] += step[:len(non_slack)]
        vm[pq] += step[len(non_slack):]
        if np.any(vm <= 0):
            raise PowerFlowError("voltage magnitude collapsed below zero",
                                 mismatch=mismatch)
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# Synthetic load profiles and scenario streams
# ---------------------------------------------------------------------------

SAMPLES_PER_DAY = 288  # 5-minute cadence


def synthetic_profile(kind: str, num_samples: int, seed: int) -> np.ndarray:
    """Per-interval load scale factors around 1.0 at a 5-minute cadence.

    Two families are bundled: ``alpha`` is generated on a 30-minute grid and
    linearly interpolated down to 5 minutes, ``beta`` is native 5-minute.
    Both are diurnal + weekly sinusoids with AR(1) roughness.
    """
    kind_tags = {"alpha": 1, "beta": 2}
    if kind not in kind_tags:
        raise ValueError(f"unknown profile kind {kind!r}")
    rng = np.random.default_rng(np.random.SeedSequence((0x9E3779B9, seed, kind_tags[kind])))
    if kind == "alpha":
        coarse_n = -(-num_samples // 6) + 1
        t = np.arange(coarse_n) * 6.0
        phase, wobble = 0.35, 0.05
    else:
        coarse_n = num_samples
        t = np.arange(coarse_n, dtype=float)
        phase, wobble = 0.10, 0.04
    day = 2 * np.pi * t / SAMPLES_PER_DAY
    week = day / 7.0
    base = 1.0 + 0.12 * np.sin(day - phase * np.pi) + 0.04 * np.sin(week + 0.5)
    ar = np.empty(coarse_n)
    ar[0] = 0.0
    eps = rng.normal(0.0, wobble, size=coarse_n)
    for i in range(1, coarse_n):
        ar[i] = 0.95 * ar[i - 1] + eps[i]
    series = base + ar
    if kind == "alpha":
        fine = np.interp(np.arange(num_samples) / 6.0, np.arange(coarse_n), series)
        return fine
    return series[:num_samples]


@dataclass(frozen=True)
class ScenarioConfig:
    num_samples: int
    interval_minutes: int = 5
    load_scale_bounds: tuple[float, float] = (0.7, 1.3)
    noise_sigma_fraction: float = 0.01
    noise_sigma_floor: float = 1e-4
    load_diversity_sigma: float = 0.05   # per-bus log-normal spread per interval
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.load_scale_bounds
        if lo > hi:
            raise ValueError("load_scale_bounds must satisfy lo <= hi")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.load_diversity_sigma < 0:
            raise ValueError("load_diversity_sigma must be >= 0")


@dataclass(frozen=True)
class ScenarioSample:
    timestamp_index: int
    scale: float
    true_state: StateVector
    measurements: np.ndarray
    estimated_state: StateVector | None = None


def noise_sigmas(cfg: ScenarioConfig, clean: np.ndarray) -> np.ndarray:
    return cfg.noise_sigma_fraction * np.maximum(np.abs(clean), cfg.noise_sigma_floor)


def _sample_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence((seed, index)))


def generate_scenarios(case: NetworkCase, adm: AdmittanceSet, cfg: ScenarioConfig,
                       profile: np.ndarray, on_skip=None):
    """Yield ScenarioSample records, one per profile interval.

    Loads follow the clipped profile factor with an independent per-bus
    log-normal spread (``load_diversity_sigma``) so consecutive operating
    points explore more than a single scaling direction; dispatch scales with
    the resulting total load, the slack absorbing the residual.  Per-channel
    Gaussian noise uses an independent substream per sample so the stream is
    reproducible regardless of consumption order.  Samples whose power flow
    fails to converge are skipped (reported through ``on_skip``).
    """
    if len(profile) < cfg.num_samples:
        raise ValueError(f"profile has {len(profile)} entries, need {cfg.num_samples}")
    lo, hi = cfg.load_scale_bounds
    base_load = np.array([b.base_load for b in case.buses], dtype=complex)
    base_dispatch = np.array([b.base_dispatch for b in case.buses], dtype=float)
    base_total = float(base_load.real.sum())
    warm: StateVector | None = None
    for i in range(cfg.num_samples):
        scale = float(np.clip(profile[i], lo, hi))
        rng = _sample_rng(cfg.seed, i)
        if cfg.load_diversity_sigma > 0:
            per_bus = np.exp(rng.normal(0.0, cfg.load_diversity_sigma, case.n_bus))
        else:
            per_bus = np.ones(case.n_bus)
        loads = scale * base_load * per_bus
        if base_total > 0:
            dispatch_scale = float(loads.real.sum()) / base_total
        else:
            dispatch_scale = scale
        try:
            x = solve_powerflow(case, adm, loads=loads,
                                dispatch=dispatch_scale * base_dispatch, x0=warm)
        except PowerFlowError as exc:
            if on_skip is not None:
                on_skip(i, exc)
            warm = None
            continue
        warm = x
        clean = measurement_function(case, adm, x)
        if cfg.noise_sigma_fraction > 0:
            z = clean + rng.normal(0.0, 1.0, size=clean.shape) * noise_sigmas(cfg, clean)
        else:
            z = clean
        yield ScenarioSample(timestamp_index=i, scale=scale, true_state=x, measurements=z)
