"""Attack regions: bus/line subsets and their measurement/state index maps.

A region picks the channels an adversary can observe and corrupt: the
``(p, q)`` injection pair of every region bus followed by the four flow
channels of every region line (voltage magnitudes are never included).
Line lists are multisets; a pair occurring twice contributes two blocks.
Regions are either constructed (localized k-hop / delocalized random, both
refusing generator buses) or loaded verbatim from fixture files, which may
violate the non-generator rule and are accepted as data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .network import NetworkCase
from .powerflow import StateVector

LOCALIZED, DELOCALIZED = "localized", "delocalized"

_BUILTIN_REGIONS = {
    "ieee39-localized": "ieee39_localized.json",
    "ieee39-delocalized": "ieee39_delocalized.json",
    "ieee118-localized": "ieee118_localized.json",
    "ieee118-delocalized": "ieee118_delocalized.json",
}


@dataclass(frozen=True)
class AttackRegion:
    case_name: str
    kind: str
    buses: tuple[int, ...]      # bus indices, file/selection order
    lines: tuple[int, ...]      # branch indices, multiset, file/selection order
    measurement_index_map: tuple[int, ...]
    state_index_map: tuple[int, ...]
    seed: int | None = None

    @property
    def size(self):
        """N_A: region measurement count, duplicates included."""
        return len(self.measurement_index_map)

    @property
    def n_buses(self):
        return len(self.buses)

    @property
    def n_lines(self):
        return len(self.lines)


def _index_maps(case: NetworkCase, buses, lines):
    n = case.n_bus
    meas = []
    for b in buses:
        meas += [3 * b + 1, 3 * b + 2]
    for l in lines:
        base = 3 * n + 4 * l
        meas += [base, base + 1, base + 2, base + 3]
    state = []
    for b in buses:
        state += [b, n + b]
    return tuple(meas), tuple(state)


def _make_region(case, kind, buses, lines, seed=None, allow_generator_buses=False):
    gen = set(case.generator_buses())
    if not allow_generator_buses:
        bad = [b for b in buses if b in gen]
        if bad:
            raise ValueError(f"generator buses not allowed in an attack region: {bad}")
    incident = {l for b in buses for l in _incident(case, b)}
    for l in lines:
        if l not in incident:
            raise ValueError(f"branch {l} is not incident on any region bus")
    meas, state = _index_maps(case, buses, lines)
    return AttackRegion(case_name=case.name, kind=kind, buses=tuple(buses),
                        lines=tuple(lines), measurement_index_map=meas,
                        state_index_map=state, seed=seed)


def _incident(case: NetworkCase, bus: int):
    return [br.index for br in case.branches if bus in (br.from_bus, br.to_bus)]


def _neighbors(case: NetworkCase):
    nbr: dict[int, set[int]] = {b.index: set() for b in case.buses}
    for br in case.branches:
        nbr[br.from_bus].add(br.to_bus)
        nbr[br.to_bus].add(br.from_bus)
    return nbr


def localized_region(case: NetworkCase, target_bus: int, k_hops: int) -> AttackRegion:
    """Non-generator buses within ``k_hops`` of the target, plus every line
    joining two region buses."""
    gen = set(case.generator_buses())
    if target_bus in gen:
        raise ValueError(f"target bus {target_bus} hosts a generator")
    nbr = _neighbors(case)
    reached = {target_bus}
    frontier = {target_bus}
    for _ in range(k_hops):
        frontier = {j for b in frontier for j in nbr[b]} - reached
        reached |= frontier
    buses = sorted(reached - gen)
    bus_set = set(buses)
    lines = [br.index for br in case.branches
             if br.from_bus in bus_set and br.to_bus in bus_set]
    return _make_region(case, LOCALIZED, buses, lines)


def delocalized_region(case: NetworkCase, num_buses: int,
                       line_inclusion_prob: float,
                       rng: np.random.Generator,
                       seed: int | None = None) -> AttackRegion:
    """Uniform random non-generator buses; each incident line whose far end is
    also non-generator joins independently with ``line_inclusion_prob``."""
    gen = set(case.generator_buses())
    eligible = [b.index for b in case.buses if b.index not in gen]
    if num_buses > len(eligible):
        raise ValueError(f"only {len(eligible)} non-generator buses available")
    buses = sorted(rng.choice(eligible, size=num_buses, replace=False).tolist())
    bus_set = set(buses)
    lines = []
    for b in buses:
        for l in _incident(case, b):
            br = case.branches[l]
            other = br.to_bus if br.from_bus == b else br.from_bus
            if other in gen or l in lines:
                continue
            if rng.random() < line_inclusion_prob:
                lines.append(l)
    return _make_region(case, DELOCALIZED, buses, lines, seed=seed)


# ---------------------------------------------------------------------------
# Projection and embedding
# ---------------------------------------------------------------------------

def project(region: AttackRegion, z: np.ndarray) -> np.ndarray:
    """Gather the region channels of a full measurement vector."""
    idx = np.asarray(region.measurement_index_map)
    if np.max(idx) >= len(z):
        raise ValueError("measurement vector too short for this region")
    return np.asarray(z)[idx]


def project_states(region: AttackRegion, x: StateVector) -> np.ndarray:
    idx = np.asarray(region.state_index_map)
    arr = x.as_array()
    if np.max(idx) >= len(arr):
        raise ValueError("state vector too short for this region")
    return arr[idx]


def embed(region: AttackRegion, values: np.ndarray, base: np.ndarray) -> np.ndarray:
    """Scatter region values additively into a copy of the full vector.

    Duplicate map entries accumulate (the scatter is the exact adjoint of the
    gather), so multiset line blocks each deposit their share.
    """
    if len(values) != region.size:
        raise ValueError(f"expected {region.size} region values, got {len(values)}")
    out = np.asarray(base, dtype=float).copy()
    np.add.at(out, np.asarray(region.measurement_index_map), values)
    return out


# ---------------------------------------------------------------------------
# Region files
# ---------------------------------------------------------------------------

def region_to_json(region: AttackRegion, case: NetworkCase) -> str:
    pairs = [[case.branches[l].from_bus, case.branches[l].to_bus] for l in region.lines]
    doc = {
        "schema": "fdibench-region/1",
        "case": region.case_name,
        "kind": region.kind,
        "indexing": "bus-index",
        "buses": list(region.buses),
        "lines": pairs,
    }
    if region.seed is not None:
        doc["seed"] = region.seed
    return json.dumps(doc, indent=1)


def region_from_json(text: str, case: NetworkCase) -> AttackRegion:
    """Load a region file; bus/line entries are 0-based bus indices.

    Line pairs resolve to branch indices; occurrences of the same pair are
    assigned round-robin over parallel branches so both repeated-entry
    readings (duplicate circuit, repeated channel block) stay representable.
    """
    doc = json.loads(text)
    if doc.get("schema") != "fdibench-region/1":
        raise ValueError(f"unsupported region schema {doc.get('schema')!r}")
    if doc.get("indexing", "bus-index") != "bus-index":
        raise ValueError("only bus-index region files are supported")
    buses = [int(b) for b in doc["buses"]]
    for b in buses:
        if not 0 <= b < case.n_bus:
            raise ValueError(f"bus index {b} outside case {case.name}")
    by_pair: dict[frozenset, list[int]] = {}
    for br in case.branches:
        by_pair.setdefault(frozenset((br.from_bus, br.to_bus)), []).append(br.index)
    seen: dict[frozenset, int] = {}
    lines = []
    for f, t in doc["lines"]:
        key = frozenset((int(f), int(t)))
        group = by_pair.get(key)
        if not group:
            raise ValueError(f"no branch between buses {f} and {t} in case {case.name}")
        k = seen.get(key, 0)
        lines.append(group[k % len(group)])
        seen[key] = k + 1
    return _make_region(case, doc["kind"], buses, lines, seed=doc.get("seed"),
                        allow_generator_buses=True)


def builtin_region(name: str, case: NetworkCase) -> AttackRegion:
    """A bundled fixture region: ieee39/ieee118 x localized/delocalized."""
    if name not in _BUILTIN_REGIONS:
        raise KeyError(f"unknown region {name!r}; have {sorted(_BUILTIN_REGIONS)}")
    text = resources.files("fdibench.casedata.regions").joinpath(
        _BUILTIN_REGIONS[name]).read_text()
    return region_from_json(text, case)
