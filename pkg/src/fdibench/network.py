"""Grid cases and admittance construction.

A case is a bus/branch/generator description in per-unit on a common MVA
base.  Two on-disk formats are accepted: a strict subset of the MATPOWER
table layout (``function mpc = ...`` with ``mpc.bus``, ``mpc.gen`` and
``mpc.branch`` matrices) and a JSON document mirroring the in-memory types.
Bus numbering is normalized to contiguous 0-based indices at parse time;
the original labels are kept for reporting.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

SLACK, PV, PQ = "slack", "PV", "PQ"

_BUILTIN_CASES = {"case2": "case2.m", "ieee14": "ieee14.m", "ieee39": "ieee39.m", "ieee118": "ieee118.m"}


class CaseSyntaxError(ValueError):
    """Malformed case text; carries the offending line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class CaseSemanticError(ValueError):
    """Structurally well-formed case that violates a model requirement."""


@dataclass(frozen=True)
class Bus:
    index: int                      # 0-based, contiguous
    label: int                      # original numbering from the source file
    bus_type: str                   # slack | PV | PQ
    shunt_admittance: complex       # g + jb, per-unit
    base_load: complex              # p + jq consumed, per-unit
    has_generator: bool             # positive base dispatch (or slack); condensers excluded
    base_dispatch: float = 0.0      # scheduled real generation, per-unit
    vm_setpoint: float = 1.0        # regulated magnitude for PV/slack buses


@dataclass(frozen=True)
class Branch:
    index: int
    from_bus: int
    to_bus: int
    series_admittance: complex      # 1/(r + jx), per-unit
    charging_susceptance: float     # total line charging b, per-unit
    tap_ratio: float = 1.0          # from-side off-nominal ratio


@dataclass(frozen=True)
class NetworkCase:
    name: str
    base_mva: float
    buses: list[Bus]
    branches: list[Branch]

    @property
    def n_bus(self):
        return len(self.buses)

    @property
    def n_branch(self):
        return len(self.branches)

    @property
    def slack_index(self):
        return next(b.index for b in self.buses if b.bus_type == SLACK)

    def generator_buses(self):
        return [b.index for b in self.buses if b.has_generator]

    def bus_by_label(self, label):
        for b in self.buses:
            if b.label == label:
                return b
        raise KeyError(f"no bus labelled {label}")

    def branches_between(self, from_label, to_label):
        """All branch indices joining the two labelled buses, either direction."""
        fi = self.bus_by_label(from_label).index
        ti = self.bus_by_label(to_label).index
        return [br.index for br in self.branches
                if {br.from_bus, br.to_bus} == {fi, ti}]


@dataclass(frozen=True)
class AdmittanceSet:
    ybus: np.ndarray    # N x N complex
    yfrom: np.ndarray   # M x N complex, sending-end branch currents i_s = yfrom @ v
    yto: np.ndarray     # M x N complex, receiving-end branch currents i_r = yto @ v


def _validate(case: NetworkCase) -> NetworkCase:
    n = case.n_bus
    if n < 2:
        raise CaseSemanticError("a case needs at least 2 buses")
    if case.n_branch < 1:
        raise CaseSemanticError("a case needs at least 1 branch")
    slack = [b for b in case.buses if b.bus_type == SLACK]
    if len(slack) != 1:
        raise CaseSemanticError(f"exactly one slack bus required, found {len(slack)}")
    seen = set()
    for b in case.buses:
        if b.index in seen:
            raise CaseSemanticError(f"duplicate bus index {b.index}")
        seen.add(b.index)
        if b.shunt_admittance.real < 0:
            raise CaseSemanticError(f"bus {b.label}: negative shunt conductance")
    if seen != set(range(n)):
        raise CaseSemanticError("bus indices not contiguous from 0")
    for br in case.branches:
        if br.from_bus == br.to_bus:
            raise CaseSemanticError(f"branch {br.index} is a self-loop")
        if abs(br.series_admittance) == 0:
            raise CaseSemanticError(f"branch {br.index} has zero series admittance")
        if br.tap_ratio <= 0:
            raise CaseSemanticError(f"branch {br.index} has non-positive tap ratio")
    # connectivity by union-find over branches
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for br in case.branches:
        parent[find(br.from_bus)] = find(br.to_bus)
    if len({find(i) for i in range(n)}) != 1:
        raise CaseSemanticError("graph is disconnected")
    return case


def parallel_branch_groups(case: NetworkCase):
    """Map unordered endpoint pair -> branch indices; >1 entry flags parallels."""
    groups: dict[frozenset, list[int]] = {}
    for br in case.branches:
        groups.setdefault(frozenset((br.from_bus, br.to_bus)), []).append(br.index)
    return {k: v for k, v in groups.items() if len(v) > 1}


# ---------------------------------------------------------------------------
# MATPOWER-subset text format
# ---------------------------------------------------------------------------

def _read_matrix(text, attr):
    """Rows of `mpc.<attr> = [ ... ];` as float lists, with 1-based line numbers."""
    m = re.search(rf"mpc\.{attr}\s*=\s*\[", text)
    if m is None:
        raise CaseSyntaxError(f"missing mpc.{attr} block")
    start = m.end()
    end = text.find("];", start)
    if end < 0:
        raise CaseSyntaxError(f"unterminated mpc.{attr} block",
                              line=text.count("\n", 0, start) + 1)
    rows = []
    base_line = text.count("\n", 0, start) + 1
    for offset, raw in enumerate(text[start:end].split("\n")):
        line = raw.split("%", 1)[0].strip().rstrip(";").strip()
        if not line:
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError as exc:
            raise CaseSyntaxError(f"bad number in mpc.{attr}: {exc}",
                                  line=base_line + offset) from None
    if not rows:
        raise CaseSyntaxError(f"empty mpc.{attr} block", line=base_line)
    width = len(rows[0])
    for offset, row in enumerate(rows):
        if len(row) != width:
            raise CaseSyntaxError(f"ragged mpc.{attr} row", line=base_line + offset)
    return rows


def parse_matpower(text: str, name: str | None = None) -> NetworkCase:
    """Parse the supported MATPOWER subset into a validated NetworkCase."""
    header = re.search(r"function\s+mpc\s*=\s*(\w+)", text)
    if header is None:
        raise CaseSyntaxError("missing 'function mpc = <name>' header", line=1)
    base = re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)\s*;", text)
    if base is None:
        raise CaseSyntaxError("missing mpc.baseMVA")
    base_mva = float(base.group(1))
    if base_mva <= 0:
        raise CaseSemanticError("baseMVA must be positive")

    bus_rows = _read_matrix(text, "bus")
    gen_rows = _read_matrix(text, "gen")
    branch_rows = _read_matrix(text, "branch")
    if len(bus_rows[0]) < 13:
        raise CaseSyntaxError("mpc.bus needs >= 13 columns")
    if len(gen_rows[0]) < 6:
        raise CaseSyntaxError("mpc.gen needs >= 6 columns")
    if len(branch_rows[0]) < 11:
        raise CaseSyntaxError("mpc.branch needs >= 11 columns")

    labels = [int(r[0]) for r in bus_rows]
    if len(set(labels)) != len(labels):
        raise CaseSemanticError("duplicate bus labels")
    index_of = {lab: i for i, lab in enumerate(labels)}

    dispatch = {}
    vg = {}
    for r in gen_rows:
        lab = int(r[0])
        if lab not in index_of:
            raise CaseSemanticError(f"generator at unknown bus {lab}")
        dispatch[lab] = dispatch.get(lab, 0.0) + r[1] / base_mva
        vg[lab] = r[5]

    type_names = {1: PQ, 2: PV, 3: SLACK}
    buses = []
    for i, r in enumerate(bus_rows):
        lab = labels[i]
        btype = type_names.get(int(r[1]))
        if btype is None:
            raise CaseSemanticError(f"bus {lab}: unsupported type code {int(r[1])}")
        if btype != PQ and lab not in vg:
            raise CaseSemanticError(f"bus {lab}: {btype} bus without a machine")
        disp = dispatch.get(lab, 0.0)
        buses.append(Bus(
            index=i,
            label=lab,
            bus_type=btype,
            shunt_admittance=complex(r[4] / base_mva, r[5] / base_mva),
            base_load=complex(r[2] / base_mva, r[3] / base_mva),
            has_generator=(disp > 0 or btype == SLACK),
            base_dispatch=disp,
            vm_setpoint=vg.get(lab, r[7] if r[7] > 0 else 1.0),
        ))

    branches = []
    for k, r in enumerate(branch_rows):
        f_lab, t_lab = int(r[0]), int(r[1])
        for lab in (f_lab, t_lab):
            if lab not in index_of:
                raise CaseSemanticError(f"branch {k}: unknown bus {lab}")
        if r[9] != 0.0:
            raise CaseSemanticError(f"branch {k}: phase-shifting transformers unsupported")
        if r[10] != 1.0:
            raise CaseSemanticError(f"branch {k}: out-of-service branches unsupported")
        z = complex(r[2], r[3])
        if z == 0:
            raise CaseSemanticError(f"branch {k}: zero impedance")
        branches.append(Branch(
            index=k,
            from_bus=index_of[f_lab],
            to_bus=index_of[t_lab],
            series_admittance=1.0 / z,
            charging_susceptance=r[4],
            tap_ratio=r[8] if r[8] != 0.0 else 1.0,
        ))

    return _validate(NetworkCase(name or header.group(1), base_mva, buses, branches))


# ---------------------------------------------------------------------------
# JSON mirror
# ---------------------------------------------------------------------------

def case_to_json(case: NetworkCase) -> str:
    doc = {
        "schema": "fdibench-case/1",
        "name": case.name,
        "base_mva": case.base_mva,
        "buses": [
            {
                "index": b.index, "label": b.label, "bus_type": b.bus_type,
                "shunt_admittance": [b.shunt_admittance.real, b.shunt_admittance.imag],
                "base_load": [b.base_load.real, b.base_load.imag],
                "has_generator": b.has_generator,
                "base_dispatch": b.base_dispatch,
                "vm_setpoint": b.vm_setpoint,
            } for b in case.buses
        ],
        "branches": [
            {
                "index": br.index, "from_bus": br.from_bus, "to_bus": br.to_bus,
                "series_admittance": [br.series_admittance.real, br.series_admittance.imag],
                "charging_susceptance": br.charging_susceptance,
                "tap_ratio": br.tap_ratio,
            } for br in case.branches
        ],
    }
    return json.dumps(doc, indent=1)


def parse_case_json(text: str) -> NetworkCase:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseSyntaxError(str(exc), line=exc.lineno) from None
    if doc.get("schema") != "fdibench-case/1":
        raise CaseSyntaxError(f"unsupported case schema {doc.get('schema')!r}")
    try:
        buses = [Bus(index=b["index"], label=b["label"], bus_type=b["bus_type"],
                     shunt_admittance=complex(*b["shunt_admittance"]),
                     base_load=complex(*b["base_load"]),
                     has_generator=b["has_generator"],
                     base_dispatch=b.get("base_dispatch", 0.0),
                     vm_setpoint=b.get("vm_setpoint", 1.0))
                 for b in doc["buses"]]
        branches = [Branch(index=br["index"], from_bus=br["from_bus"], to_bus=br["to_bus"],
                           series_admittance=complex(*br["series_admittance"]),
                           charging_susceptance=br["charging_susceptance"],
                           tap_ratio=br.get("tap_ratio", 1.0))
                    for br in doc["branches"]]
    except (KeyError, TypeError) as exc:
        raise CaseSyntaxError(f"missing or malformed field: {exc}") from None
    return _validate(NetworkCase(doc["name"], doc["base_mva"], buses, branches))


def parse_case(text: str, name: str | None = None) -> NetworkCase:
    """Parse either supported format, sniffing JSON by the leading brace."""
    if text.lstrip().startswith("{"):
        return parse_case_json(text)
    return parse_matpower(text, name=name)


def builtin_case(name: str) -> NetworkCase:
    """One of the bundled cases: case2, ieee14, ieee39, ieee118."""
    if name not in _BUILTIN_CASES:
        raise KeyError(f"unknown builtin case {name!r}; have {sorted(_BUILTIN_CASES)}")
    text = resources.files("fdibench.casedata").joinpath(_BUILTIN_CASES[name]).read_text()
    return parse_matpower(text, name=name)


# ---------------------------------------------------------------------------
# Admittance matrices
# ---------------------------------------------------------------------------

def build_admittance(case: NetworkCase) -> AdmittanceSet:
    """Assemble Ybus and the branch (from/to) admittance matrices.

    Off-nominal taps sit on the from side; line charging splits evenly
    across the two ends.  Parallel branches accumulate.  The decomposition
    ``ybus == Cf' yfrom + Ct' yto + diag(shunts)`` holds exactly.
    """
    n, m = case.n_bus, case.n_branch
    ybus = np.zeros((n, n), dtype=complex)
    yfrom = np.zeros((m, n), dtype=complex)
    yto = np.zeros((m, n), dtype=complex)
    for br in case.branches:
        f, t, a = br.from_bus, br.to_bus, br.tap_ratio
        ys = br.series_admittance
        ych = 0.5j * br.charging_susceptance
        ytt = ys + ych
        yff = ytt / (a * a)
        yft = -ys / a
        yfrom[br.index, f] = yff
        yfrom[br.index, t] = yft
        yto[br.index, f] = yft
        yto[br.index, t] = ytt
        ybus[f, f] += yff
        ybus[t, t] += ytt
        ybus[f, t] += yft
        ybus[t, f] += yft
    for b in case.buses:
        ybus[b.index, b.index] += b.shunt_admittance
    return AdmittanceSet(ybus=ybus, yfrom=yfrom, yto=yto)
