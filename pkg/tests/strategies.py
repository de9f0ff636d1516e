"""Hypothesis strategies that draw a seed and build the object with numpy.

Drawing one integer per example keeps 10^3-trial suites fast; the seed is
shown on failure, so a counterexample is reproducible from it.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np
from hypothesis import strategies as st

from lebex.space_model import RATIONAL, AtomicModel, AtomicRV

seeds = st.integers(0, 2**32 - 1)


def float_model(rng: np.random.Generator, max_atoms: int = 12) -> AtomicModel:
    n = int(rng.integers(1, max_atoms + 1))
    w = rng.uniform(0.05, 1.0, size=n)
    return AtomicModel.from_probs(list(w / w.sum()))


def float_law(rng: np.random.Generator, max_atoms: int = 12, scale: float = 5.0) -> AtomicRV:
    m = float_model(rng, max_atoms)
    return AtomicRV(m, rng.normal(scale=scale, size=m.n))


def rational_law(rng: np.random.Generator, max_atoms: int = 10) -> AtomicRV:
    n = int(rng.integers(1, max_atoms + 1))
    w = rng.integers(1, 10, size=n)
    total = int(w.sum())
    m = AtomicModel.from_probs([Fraction(int(x), total) for x in w], mode=RATIONAL)
    return AtomicRV(m, [Fraction(int(v), 2) for v in rng.integers(-20, 21, size=n)])


def pair_on(rng: np.random.Generator, m: AtomicModel, scale: float = 3.0) -> tuple[AtomicRV, AtomicRV]:
    return AtomicRV(m, rng.normal(scale=scale, size=m.n)), AtomicRV(m, rng.normal(scale=scale, size=m.n))


float_laws = seeds.map(lambda s: float_law(np.random.default_rng(s)))
rational_laws = seeds.map(lambda s: rational_law(np.random.default_rng(s)))
rngs = seeds.map(np.random.default_rng)
