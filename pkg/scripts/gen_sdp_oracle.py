"""Offline oracle: solve the trace-maximization relaxation with a
general-purpose conic solver and freeze the optima for the test suite.

Writes tests/data/sdp_oracle.json.  Requires cvxpy (the runtime package
does not); run once when regenerating the fixture:

    python scripts/gen_sdp_oracle.py
"""

import json
import pathlib
import time

import cvxpy as cp
import numpy as np

EPSILONS = (0.5, 1.0, 2.0, 10.0)
N_INSTANCES = 50
OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data" / "sdp_oracle.json"


def instance_quadratic(seed: int) -> np.ndarray:
    """Deterministic PSD test matrix; the test suite rebuilds the same one."""
    rng = np.random.default_rng(np.random.SeedSequence((0x0DAC1E, seed)))
    dim = int(rng.integers(10, 61))
    a = rng.normal(size=(dim + 5, dim))
    return a.T @ a


def solve_reference(quad: np.ndarray, epsilon: float) -> float:
    n = quad.shape[0]
    w = cp.Variable((n, n), PSD=True)
    prob = cp.Problem(cp.Maximize(cp.trace(quad @ w)),
                      [cp.trace(w) <= epsilon ** 2, cp.normNuc(w) <= 1.0])
    prob.solve(solver="SCS", eps=1e-10, max_iters=200_000)
    if prob.status != "optimal":
        raise RuntimeError(f"reference solve ended with status {prob.status}")
    return float(prob.value)


def main():
    t0 = time.time()
    instances = []
    for seed in range(N_INSTANCES):
        quad = instance_quadratic(seed)
        objectives = {str(eps): solve_reference(quad, eps) for eps in EPSILONS}
        instances.append({"seed": seed, "dim": quad.shape[0], "objectives": objectives})
        print(f"instance {seed}: dim {quad.shape[0]} done ({time.time() - t0:.0f}s)")
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps({
        "solver": "SCS(eps=1e-10)",
        "epsilons": list(EPSILONS),
        "instances": instances,
    }, indent=1) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
