import warnings
from collections import Counter

import networkx as nx
import numpy as np
import pytest
from hypothesis import given

from rxnshingle.canon import canonicalize
from rxnshingle.molecule import Reaction
from rxnshingle.permtest import perturb_reaction
from rxnshingle.shingles import (
    Caps,
    EmptyShingleSet,
    apply_caps,
    extract_shingles,
    reactant_only_shingles,
    reaction_shingles,
    surviving_keys,
    symmetric_difference,
    union_shingles,
)
from rxnshingle.smiles import parse_molecule, parse_smiles

from oracles import brute_symdiff, edge_match, node_match, surviving_multiset, to_nx
from strategies import reactions, seeds


def _keys(s):
    return [canonicalize(k) for k in s]


def test_cco_radius_one():
    sh = extract_shingles(parse_molecule("CCO"), 1)
    assert [s.center for s in sh] == [0, 1, 2]
    assert [s.key for s in sh] == _keys(["CC", "CCO", "CO"])


def test_cyclopropane():
    sh = extract_shingles(parse_molecule("C1CC1"), 1)
    circ = [s for s in sh if not s.ring]
    rings = [s for s in sh if s.ring]
    assert len(circ) == 3 and len({s.key for s in circ}) == 1
    assert len(rings) == 1
    assert rings[0].key == canonicalize("C1CC1")


def test_single_atom_shingles():
    sh = extract_shingles(parse_molecule("[Cl-]"), 3)
    assert len(sh) == 3
    assert {s.key for s in sh} == {"[Cl-]"}


def test_ball_is_cumulative():
    sh = extract_shingles(parse_molecule("CCCCC"), 2)
    center = [s for s in sh if s.center == 2]
    assert [len(s.atom_indices) for s in center] == [3, 5]


def test_r_max_validated():
    with pytest.raises(ValueError):
        extract_shingles(parse_molecule("CC"), 0)


def test_symdiff_cco_to_acetaldehyde():
    rxn = Reaction.from_smiles("CCO>>CC=O")
    s = reaction_shingles(rxn, 1)
    left = {x.key for x in extract_shingles(parse_molecule("CCO"), 1)}
    right = {x.key for x in extract_shingles(parse_molecule("CC=O"), 1)}
    assert set(s.keys) == left ^ right


def test_identical_sides_warn():
    with pytest.warns(EmptyShingleSet):
        s = reaction_shingles(Reaction.from_smiles("CCO.CN>>CN.OCC"), 2)
    assert s.empty and len(s) == 0


def test_symdiff_commutes():
    a = Reaction.from_smiles("CCO.CC(=O)O>>CCOC(C)=O.O")
    b = Reaction.from_smiles("CCOC(C)=O.O>>CCO.CC(=O)O")
    assert sorted(set(reaction_shingles(a).keys)) == sorted(set(reaction_shingles(b).keys))


def test_union_and_reactant_modes():
    left, right = parse_molecule("CCO"), parse_molecule("c1ccccc1")
    kl = {s.key for s in extract_shingles(left, 2)}
    kr = {s.key for s in extract_shingles(right, 2)}
    assert kl.isdisjoint(kr)
    assert len(set(union_shingles([left], [right], 2).keys)) == len(kl) + len(kr)
    assert set(union_shingles([left], [left], 2).keys) == kl
    assert set(reactant_only_shingles([left], 2).keys) == kl
    assert set(symmetric_difference([left], [right], 2).keys) == kl | kr


def test_sorted_and_counted():
    s = reaction_shingles(Reaction.from_smiles("CC(C)Cc1ccccc1>>CC(C)Cc1ccc(Br)cc1"), 3)
    sk = [x.sort_key() for x in s]
    assert sk == sorted(sk)
    assert s.per_key_counts == dict(Counter(s.keys))


def test_caps_small():
    sh = extract_shingles(parse_molecule("C" * 30), 2)
    capped = apply_caps(sh, Caps(per_key=3, per_molecule=1000, total=1000))
    assert max(Counter(s.key for s in capped).values()) == 3
    capped = apply_caps(sh, Caps(per_key=100, per_molecule=7, total=1000))
    assert len(capped) == 7
    capped = apply_caps(sh, Caps(per_key=100, per_molecule=100, total=5))
    assert len(capped) == 5


def test_caps_keep_sorted_prefix():
    sh = extract_shingles(parse_molecule("CCCCCCCCCC"), 1)
    capped = apply_caps(sh, Caps(per_key=2, per_molecule=100, total=100))
    full = sorted(sh, key=lambda s: s.sort_key())
    by_key = {}
    for s in full:
        by_key.setdefault(s.key, []).append(s)
    assert capped == [s for k in sorted(by_key) for s in by_key[k][:2]]


@given(reactions(), seeds)
def test_permutation_invariance(rxn, seed):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyShingleSet)
        a = reaction_shingles(rxn, 2)
        b = reaction_shingles(perturb_reaction(rxn, np.random.default_rng(seed)), 2)
    assert [x.sort_key() for x in a] == [x.sort_key() for x in b]


@given(reactions())
def test_caps_hold(rxn):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyShingleSet)
        s = reaction_shingles(rxn, 3, "union")
    assert len(s) <= 280
    assert max(Counter(s.keys).values(), default=0) <= 10
    assert max(Counter((x.side, x.mol_index) for x in s).values(), default=0) <= 100


def _oracle_agrees(rxn, r):
    expected = surviving_multiset(brute_symdiff([m.graph for m in rxn.reactants],
                                                [m.graph for m in rxn.products], r))
    got = surviving_keys(rxn, r)
    assert sorted(got.values()) == sorted(c for _, c in expected)
    for key, count in got.items():
        g = to_nx(parse_smiles(key)[0])
        hits = [c for og, c in expected
                if nx.is_isomorphic(og, g, node_match=node_match, edge_match=edge_match)]
        assert hits == [count], key


@pytest.mark.parametrize("smiles", [
    "C1CC2CCC1C2>>C1CC2CCC1C2O",
    "c1ccc2ccccc2c1>>c1ccc2cc(Br)ccc2c1",
    "C12C3C4C1C5C2C3C45>>C",
    "[Na+].[Cl-].CCO>>CCO[Na]",
])
def test_oracle_hand_cases(smiles):
    _oracle_agrees(Reaction.from_smiles(smiles), 2)


@given(reactions(max_atoms=9))
def test_oracle_random(rxn):
    _oracle_agrees(rxn, 2)
