from __future__ import annotations

import pytest

import property_suites
from conftest import suite_outcomes

FUNCTIONAL = ("monotonicity", "midpoint_convexity", "cash_invariance", "positive_homogeneity", "young_gap", "embedding_inequality")
EXTENSION = ("gauge_lattice_laws", "level_set_characterization", "finiteness_bound")
MEMBERSHIP = ("verdict_monotonicity", "verdict_solidity", "verdict_linearity")


def test_every_suite_is_grouped():
    names = {s.__name__ for s in property_suites.SUITES}
    assert names == set(FUNCTIONAL + EXTENSION + MEMBERSHIP)


def _check(name):
    out = suite_outcomes()[name]
    assert out.trials >= property_suites.TRIALS
    assert out.violations == [], out.violations[:5]


class TestFunctionalProperties:
    @pytest.mark.parametrize("name", FUNCTIONAL)
    def test_suite(self, name):
        _check(name)


class TestExtensionProperties:
    @pytest.mark.parametrize("name", EXTENSION)
    def test_suite(self, name):
        _check(name)


class TestMembershipProperties:
    @pytest.mark.parametrize("name", MEMBERSHIP)
    def test_suite(self, name):
        _check(name)
