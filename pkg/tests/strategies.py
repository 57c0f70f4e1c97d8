"""Hypothesis strategies built on the package's random generators."""

import numpy as np
from hypothesis import strategies as st

from rxnshingle.synthetic import random_molecule, random_reaction

seeds = st.integers(min_value=0, max_value=2**32 - 1)


@st.composite
def molecules(draw, max_atoms=12):
    return random_molecule(np.random.default_rng(draw(seeds)), max_atoms)


@st.composite
def reactions(draw, coords=False, max_atoms=12):
    return random_reaction(np.random.default_rng(draw(seeds)), max_atoms, coords=coords)


@st.composite
def permutations(draw, n):
    return list(np.random.default_rng(draw(seeds)).permutation(n))
