from __future__ import annotations

import numpy as np
import pytest

from fdibench.network import builtin_case, build_admittance


@pytest.fixture(scope="session")
def case2():
    return builtin_case("case2")


@pytest.fixture(scope="session")
def case14():
    return builtin_case("ieee14")


@pytest.fixture(scope="session")
def case39():
    return builtin_case("ieee39")


@pytest.fixture(scope="session")
def case118():
    return builtin_case("ieee118")


@pytest.fixture(scope="session")
def adm2(case2):
    return build_admittance(case2)


@pytest.fixture(scope="session")
def adm14(case14):
    return build_admittance(case14)


@pytest.fixture(scope="session")
def adm39(case39):
    return build_admittance(case39)


@pytest.fixture(scope="session")
def adm118(case118):
    return build_admittance(case118)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
