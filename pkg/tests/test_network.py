from __future__ import annotations

import numpy as np
import pytest

from fdibench.network import (
    Branch,
    Bus,
    CaseSemanticError,
    CaseSyntaxError,
    NetworkCase,
    build_admittance,
    case_to_json,
    parallel_branch_groups,
    parse_case,
    parse_case_json,
)

MINIMAL_2BUS = """
function mpc = tiny
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1.0\t0\t345\t1\t1.1\t0.9;
\t2\t1\t30\t10\t0\t0\t1\t1.0\t0\t345\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t30\t0\t100\t-100\t1.0\t100\t1\t100\t0;
];
mpc.branch = [
\t1\t2\t0.02\t0.2\t0\t0\t0\t0\t0\t0\t1\t-360\t360;
];
"""


def make_case(buses, branches, name="synthetic"):
    return NetworkCase(name=name, base_mva=100.0, buses=buses, branches=branches)


def test_parse_minimal_2bus():
    case = parse_case(MINIMAL_2BUS)
    assert case.n_bus == 2
    assert case.n_branch == 1
    assert case.buses[1].base_load == pytest.approx(0.30 + 0.10j)
    assert case.buses[0].bus_type == "slack"
    assert case.buses[0].has_generator


def test_bundled_case_dimensions(case39, case118):
    assert (case39.n_bus, case39.n_branch) == (39, 46)
    assert (case118.n_bus, case118.n_branch) == (118, 186)
    transformers = sum(1 for br in case118.branches if br.tap_ratio != 1.0)
    assert transformers == 9


def test_parse_whitespace_insensitive():
    squashed = MINIMAL_2BUS.replace("\t", "   ")
    a, b = parse_case(MINIMAL_2BUS), parse_case(squashed)
    assert a.buses == b.buses
    assert a.branches == b.branches


def test_syntax_error_carries_line_number():
    broken = MINIMAL_2BUS.replace("0.02", "zero.02")
    with pytest.raises(CaseSyntaxError) as err:
        parse_case(broken)
    assert err.value.line is not None


def test_semantic_errors():
    no_slack = MINIMAL_2BUS.replace("1\t3\t0", "1\t2\t0")
    with pytest.raises(CaseSemanticError, match="slack"):
        parse_case(no_slack)
    shifted = MINIMAL_2BUS.replace("0\t0\t1\t-360\t360", "0\t5\t1\t-360\t360")
    with pytest.raises(CaseSemanticError, match="phase"):
        parse_case(shifted)


def test_disconnected_graph_rejected():
    text = MINIMAL_2BUS.replace(
        "mpc.bus = [",
        "mpc.bus = [\n\t3\t1\t0\t0\t0\t0\t1\t1.0\t0\t345\t1\t1.1\t0.9;")
    with pytest.raises(CaseSemanticError, match="disconnected"):
        parse_case(text)


def test_duplicate_branches_accepted_and_flagged():
    text = MINIMAL_2BUS.replace(
        "mpc.branch = [",
        "mpc.branch = [\n\t1\t2\t0.02\t0.2\t0\t0\t0\t0\t0\t0\t1\t-360\t360;")
    case = parse_case(text)
    assert case.n_branch == 2
    groups = parallel_branch_groups(case)
    assert list(groups.values()) == [[0, 1]]


def test_json_mirror_round_trip(case14):
    doc = case_to_json(case14)
    again = parse_case(doc)  # format sniffing picks JSON
    assert again.buses == case14.buses
    assert again.branches == case14.branches
    with pytest.raises(CaseSyntaxError):
        parse_case_json("{\"schema\": \"other\"}")


def bus(i, btype="PQ", shunt=0j, load=0j, gen=False, disp=0.0):
    return Bus(index=i, label=i + 1, bus_type=btype, shunt_admittance=shunt,
               base_load=load, has_generator=gen, base_dispatch=disp)


def test_admittance_2bus_with_shunts():
    # the expected matrix is the series/shunt stamp written out by hand
    y_k, y_kp, y_br = 0.1 + 0.3j, 0.2 - 0.1j, 1.0 - 5.0j
    case = make_case(
        [bus(0, "slack", shunt=y_k, gen=True), bus(1, shunt=y_kp, load=0.5 + 0.1j)],
        [Branch(index=0, from_bus=0, to_bus=1, series_admittance=y_br,
                charging_susceptance=0.0)])
    adm = build_admittance(case)
    expected = np.array([[y_k + y_br, -y_br], [-y_br, y_kp + y_br]])
    np.testing.assert_allclose(adm.ybus, expected, atol=1e-15)


def test_admittance_pure_laplacian():
    case = make_case(
        [bus(0, "slack", gen=True), bus(1)],
        [Branch(index=0, from_bus=0, to_bus=1, series_admittance=1 + 0j,
                charging_susceptance=0.0)])
    adm = build_admittance(case)
    np.testing.assert_allclose(adm.ybus, np.array([[1, -1], [-1, 1]], dtype=complex))


def naive_ybus(case):
    """Independent entry-by-entry assembly with explicit double loops."""
    n = case.n_bus
    y = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            for br in case.branches:
                ys = br.series_admittance + 0.5j * br.charging_susceptance
                a = br.tap_ratio
                if i == j == br.from_bus:
                    y[i, j] += ys / (a * a)
                if i == j == br.to_bus:
                    y[i, j] += ys
                if (i, j) in ((br.from_bus, br.to_bus), (br.to_bus, br.from_bus)):
                    y[i, j] += -br.series_admittance / a
            if i == j:
                y[i, j] += case.buses[i].shunt_admittance
    return y


def test_ieee14_ybus_matches_naive_assembly(case14, adm14):
    np.testing.assert_allclose(adm14.ybus, naive_ybus(case14), rtol=0, atol=1e-12)


def test_row_sum_zero_without_shunts_or_charging():
    rng = np.random.default_rng(7)
    buses = [bus(0, "slack", gen=True)] + [bus(i) for i in range(1, 6)]
    branches = []
    edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (1, 4), (2, 5)]
    for k, (f, t) in enumerate(edges):
        y = complex(rng.uniform(0.5, 2), -rng.uniform(2, 9))
        branches.append(Branch(index=k, from_bus=f, to_bus=t,
                               series_admittance=y, charging_susceptance=0.0))
    adm = build_admittance(make_case(buses, branches))
    np.testing.assert_allclose(adm.ybus.sum(axis=1), np.zeros(6), atol=1e-13)
    np.testing.assert_allclose(adm.ybus, adm.ybus.T, atol=1e-13)


def test_ybus_symmetric_with_unit_taps(case39, adm39):
    taps = np.array([br.tap_ratio for br in case39.branches])
    sym_case = NetworkCase(
        name="ieee39-unit-taps", base_mva=case39.base_mva, buses=case39.buses,
        branches=[Branch(br.index, br.from_bus, br.to_bus, br.series_admittance,
                         br.charging_susceptance, 1.0) for br in case39.branches])
    adm = build_admittance(sym_case)
    np.testing.assert_allclose(adm.ybus, adm.ybus.T, atol=1e-12)
    assert np.any(taps != 1.0)  # the real case is asymmetric because of taps


def test_incidence_consistency(case14, adm14, rng):
    n, m = case14.n_bus, case14.n_branch
    cf = np.zeros((m, n))
    ct = np.zeros((m, n))
    for br in case14.branches:
        cf[br.index, br.from_bus] = 1.0
        ct[br.index, br.to_bus] = 1.0
    shunts = np.array([b.shunt_admittance for b in case14.buses])
    for _ in range(100):
        v = rng.normal(size=n) + 1j * rng.normal(size=n)
        lhs = adm14.ybus @ v
        rhs = cf.T @ (adm14.yfrom @ v) + ct.T @ (adm14.yto @ v) + shunts * v
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_sparsity_pattern(case39, adm39):
    neighbors = {b.index: {b.index} for b in case39.buses}
    for br in case39.branches:
        neighbors[br.from_bus].add(br.to_bus)
        neighbors[br.to_bus].add(br.from_bus)
    nz_rows, nz_cols = np.nonzero(np.abs(adm39.ybus) > 0)
    for i, j in zip(nz_rows, nz_cols):
        assert j in neighbors[i]
    for br in case39.branches:
        for row in (adm39.yfrom[br.index], adm39.yto[br.index]):
            cols = set(np.nonzero(np.abs(row) > 0)[0])
            assert cols <= {br.from_bus, br.to_bus}
