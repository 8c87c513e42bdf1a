from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdibench.powerflow import measurement_size, solve_powerflow, measurement_function
from fdibench.regions import (
    builtin_region,
    delocalized_region,
    embed,
    localized_region,
    project,
    project_states,
    region_from_json,
    region_to_json,
)

# frozen by an offline search: reproduces the published delocalized example
DELOCALIZED_EXAMPLE_SEED = 16941


def test_localized_example_ieee14(case14):
    # target bus 12 (0-based 11), two hops -> buses {5,6,11,12,13,14} 1-based
    region = localized_region(case14, 11, 2)
    labels = sorted(case14.buses[b].label for b in region.buses)
    assert labels == [5, 6, 11, 12, 13, 14]
    for l in region.lines:
        br = case14.branches[l]
        assert br.from_bus in region.buses and br.to_bus in region.buses


def test_localized_k0(case14):
    region = localized_region(case14, 11, 0)
    assert region.buses == (11,)
    assert region.lines == ()
    assert region.size == 2


def test_localized_rejects_generator_target(case14):
    with pytest.raises(ValueError, match="generator"):
        localized_region(case14, 0, 1)


def test_localized_fixture_reproducible_ieee39(case39):
    region = localized_region(case39, 24, 2)
    fixture = builtin_region("ieee39-localized", case39)
    assert sorted(region.buses) == sorted(fixture.buses)
    assert sorted(region.lines) == sorted(fixture.lines)
    assert region.size == fixture.size == 48


def test_delocalized_example_ieee14(case14):
    rng = np.random.default_rng(DELOCALIZED_EXAMPLE_SEED)
    region = delocalized_region(case14, 5, 0.5, rng)
    labels = sorted(case14.buses[b].label for b in region.buses)
    assert labels == [5, 9, 11, 12, 14]
    pairs = {frozenset((case14.branches[l].from_bus, case14.branches[l].to_bus))
             for l in region.lines}
    assert frozenset((8, 6)) in pairs     # line (9,7) 1-based
    assert frozenset((8, 13)) in pairs    # line (9,14)
    assert frozenset((8, 3)) not in pairs
    assert frozenset((8, 9)) not in pairs


def test_delocalized_zero_probability(case14, rng):
    region = delocalized_region(case14, 4, 0.0, rng)
    assert region.lines == ()
    assert region.size == 8


def test_delocalized_excludes_generator_buses(case39):
    gen = set(case39.generator_buses())
    for seed in range(10):
        region = delocalized_region(case39, 7, 0.5, np.random.default_rng(seed))
        assert not (set(region.buses) & gen)
        for l in region.lines:
            br = case39.branches[l]
            assert br.from_bus not in gen and br.to_bus not in gen


def test_delocalized_too_many_buses(case2):
    with pytest.raises(ValueError, match="non-generator"):
        delocalized_region(case2, 5, 0.5, np.random.default_rng(0))


def test_fixture_sizes(case39, case118):
    expected = {
        "ieee39-localized": (case39, 48),
        "ieee39-delocalized": (case39, 54),
        "ieee118-localized": (case118, 124),
        "ieee118-delocalized": (case118, 200),
    }
    for name, (case, n_a) in expected.items():
        region = builtin_region(name, case)
        assert region.size == n_a
        assert region.size == 2 * region.n_buses + 4 * region.n_lines


def test_fixture_duplicate_lines_counted(case39):
    region = builtin_region("ieee39-delocalized", case39)
    # the published table lists the (7,8) pair twice
    counts = {}
    for l in region.lines:
        counts[l] = counts.get(l, 0) + 1
    assert max(counts.values()) == 2


def test_projection_ordering(case2, adm2):
    region = region_from_json(
        '{"schema": "fdibench-region/1", "case": "case2", "kind": "localized",'
        ' "buses": [0, 1], "lines": [[0, 1]]}', case2)
    x = solve_powerflow(case2, adm2, loads=np.array([0, 0.4 + 0.1j]), dispatch=np.zeros(2))
    z = measurement_function(case2, adm2, x)
    z_region = project(region, z)
    # full-coverage region sees z minus its two voltage channels
    assert region.size == len(z) - 2
    np.testing.assert_array_equal(z_region, np.delete(z, [0, 3]))
    x_region = project_states(region, x)
    np.testing.assert_array_equal(x_region, [x.vm[0], x.va[0], x.vm[1], x.va[1]])


def test_scatter_gather_round_trip(case39, adm39, rng):
    region = builtin_region("ieee39-localized", case39)
    z = rng.normal(size=measurement_size(case39))
    gathered = project(region, z)
    rebuilt = embed(region, gathered, np.zeros_like(z))
    np.testing.assert_array_equal(project(region, rebuilt), gathered)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_region_size_arithmetic(seed):
    from fdibench.network import builtin_case
    case = builtin_case("ieee39")
    rng_local = np.random.default_rng(seed)
    n_buses = int(rng_local.integers(1, 8))
    region = delocalized_region(case, n_buses, float(rng_local.uniform(0, 1)), rng_local)
    assert region.size == 2 * region.n_buses + 4 * region.n_lines
    assert len(region.state_index_map) == 2 * region.n_buses


def test_region_json_round_trip(case39):
    region = builtin_region("ieee39-delocalized", case39)
    doc = region_to_json(region, case39)
    again = region_from_json(doc, case39)
    assert again.buses == region.buses
    assert again.lines == region.lines
    assert again.measurement_index_map == region.measurement_index_map


def test_region_rejects_unknown_line(case2):
    with pytest.raises(ValueError, match="no branch"):
        region_from_json(
            '{"schema": "fdibench-region/1", "case": "case2", "kind": "localized",'
            ' "buses": [0, 1], "lines": [[0, 5]]}', case2)


def test_localized_connected_subgraph(case39):
    region = localized_region(case39, 24, 2)
    # union-find over region lines connects every region bus
    parent = {b: b for b in region.buses}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for l in region.lines:
        br = case39.branches[l]
        parent[find(br.from_bus)] = find(br.to_bus)
    assert len({find(b) for b in region.buses}) == 1
