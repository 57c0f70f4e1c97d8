import math
import warnings

import numpy as np
import pytest
from hypothesis import given

from rxnshingle.model import ModelConfig, ShingleTransformer, featurize, make_batch
from rxnshingle.molecule import Conformer, Reaction, canonicalize_reaction
from rxnshingle.pairwise import (
    SIGMA_FLOOR,
    GkptParams,
    PairFeatures,
    gaussian,
    gkpt,
    initial_bias,
    pair_features,
)
from rxnshingle.shingles import Caps, reaction_shingles
from rxnshingle.smiles import parse_molecule

from oracles import random_rotation
from strategies import reactions


def _params(k=1, heads=1, e1=1.0, e2=0.0, mu=0.0, sigma=1.0):
    return GkptParams(np.full((2, k), e1), np.full((2, k), e2), np.full(k, mu),
                      np.full(k, sigma), np.ones((k, heads)))


def test_standard_normal_peak():
    out = gkpt(np.array(0.0), np.array(1), _params())
    assert out[0] == pytest.approx(1 / math.sqrt(2 * math.pi))
    assert out[0] == pytest.approx(0.398942, abs=1e-6)


def test_e1_zero_ignores_distance():
    p = _params(e1=0.0, e2=0.3)
    a = gkpt(np.array([0.0, 5.0, 100.0]), np.array([0, 0, 0]), p)
    assert np.all(a == a[0])


def test_sigma_floor_stays_finite():
    out = gaussian(np.array([1e3]), np.array([0.0]), np.array([0.0]))
    assert np.all(np.isfinite(out)) and out[0] == 0.0
    out = gaussian(np.array([0.0]), np.array([0.0]), np.array([-1.0]))
    assert out[0] == pytest.approx(1 / (SIGMA_FLOOR * math.sqrt(2 * math.pi)))


def test_pair_type_selects_row():
    p = _params(k=2)
    p.e2[1] = 1.0
    x = np.array([0.5, 0.5])
    out = gkpt(x, np.array([0, 1]), p)
    np.testing.assert_allclose(out[1], gaussian(1.5, p.mu, p.sigma))


def test_single_atom_centroids():
    a = Conformer(parse_molecule("[Na+]"), np.zeros((1, 3)))
    b = Conformer(parse_molecule("[Cl-]"), np.array([[1.5, 0.0, 0.0]]))
    s = reaction_shingles(Reaction((a, b), (parse_molecule("O"),)), 1, "reactants")
    pf = pair_features(s)
    assert pf.d_e[0, 1] == 0 and pf.d_g[0, 1] == 0.0


def test_same_molecule_distance():
    conf = Conformer(parse_molecule("CCCC"), np.array([[0.0, 0, 0], [1.5, 0, 0], [3.0, 0, 0],
                                                       [4.5, 0, 0]]))
    s = reaction_shingles(Reaction((conf,), (parse_molecule("O"),)), 1, "reactants",
                          Caps(100, 100, 280))
    pf = pair_features(s)
    xyz = s.reaction.reactants[0].conformer.coords
    for p, sp in enumerate(s):
        for q, sq in enumerate(s):
            ca = xyz[list(sp.atom_indices)].mean(0)
            cb = xyz[list(sq.atom_indices)].mean(0)
            assert pf.d_g[p, q] == pytest.approx(np.linalg.norm(ca - cb), abs=1e-12)
    # the two three-atom balls are centered 1.5 apart on the chain
    triples = [i for i, x in enumerate(s) if len(x.atom_indices) == 3]
    assert len(triples) == 2
    assert pf.d_g[triples[0], triples[1]] == pytest.approx(1.5)


def _features(rxn, mode="symdiff"):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = reaction_shingles(rxn, 2, mode)
    return s, pair_features(s)


@given(reactions(coords=True))
def test_pair_feature_invariants(rxn):
    s, pf = _features(rxn, "union")
    n = len(s)
    for m in (pf.d_g, pf.d_e, pf.d_s):
        assert m.shape == (n, n)
        assert np.array_equal(m, m.T)
    assert np.all(np.diag(pf.d_g) == 0) and np.all(np.diag(pf.d_s) == 0)
    assert np.all(np.diag(pf.d_e) == 1)
    assert np.all(pf.d_g[pf.d_e == 0] == 0)
    assert np.all((pf.d_s >= 0) & (pf.d_s <= 1))
    cross = [(i, j) for i in range(n) for j in range(n)
             if (s.shingles[i].side, s.shingles[i].mol_index)
             != (s.shingles[j].side, s.shingles[j].mol_index)]
    assert all(pf.d_e[i, j] == 0 for i, j in cross)


def test_null_features():
    pf = PairFeatures.null()
    assert pf.size == 1 and pf.d_e[0, 0] == 1 and pf.d_g[0, 0] == 0 and pf.d_s[0, 0] == 0


def test_wrong_reaction_rejected():
    s, _ = _features(Reaction.from_smiles("CCO>>CC=O"))
    with pytest.raises(ValueError):
        pair_features(s, canonicalize_reaction(Reaction.from_smiles("CCO>>CC=O")))


@given(reactions(coords=True))
def test_rigid_motion(rxn):
    rng = np.random.default_rng(0)
    q, t = random_rotation(rng), rng.standard_normal(3) * 5
    moved = Reaction(tuple(Conformer(m.graph, m.coords @ q.T + t) for m in rxn.reactants),
                     tuple(Conformer(m.graph, m.coords @ q.T + t) for m in rxn.products))
    _, a = _features(rxn, "union")
    _, b = _features(moved, "union")
    if a.size == b.size:
        np.testing.assert_allclose(a.d_g, b.d_g, atol=1e-9)


def test_bias_examples(rng):
    _, pf = _features(Reaction.from_smiles("CC(=O)O.OCC>>CC(=O)OCC.O"))
    pg = GkptParams.init(8, 4, 0.0, 10.0, rng)
    ps = GkptParams.init(8, 4, 0.0, 1.0, rng)
    bias = initial_bias(pf, pg, ps)
    assert bias.shape == (4, pf.size, pf.size)
    assert np.allclose(bias, bias.transpose(0, 2, 1))
    pg.w[:] = 0
    ps.w[:] = 0
    assert not np.any(initial_bias(pf, pg, ps))
    with pytest.raises(ValueError):
        initial_bias(pf, None, None)


def test_constant_kernels():
    _, pf = _features(Reaction.from_smiles("CCO>>CC=O"))
    p = _params(k=3, e1=0.0, e2=0.5)
    bias = initial_bias(pf, p, None)
    assert bias.shape[0] == 1 and np.all(bias == bias[0, 0, 0])


def test_model_bias_matches_numpy():
    cfg = ModelConfig.profile("desk", dtype="float64")
    model = ShingleTransformer(cfg)
    f = featurize(Reaction.from_smiles("CC(=O)Cl.NCC>>CC(=O)NCC.Cl"), cfg)
    st = model.state_arrays()
    grab = lambda pre: GkptParams(*(st[f"{pre}.{n}"] for n in ("e1", "e2", "mu", "sigma", "w")))
    expected = initial_bias(f.pairs, grab("pair_g"), grab("pair_s"))
    got = model.pair_bias(make_batch([f])).data[0]
    np.testing.assert_allclose(got[:, 1:, 1:], expected, rtol=1e-12, atol=1e-14)
    assert not np.any(got[:, 0, :]) and not np.any(got[:, :, 0])
