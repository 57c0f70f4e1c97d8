"""Random small molecules and reactions for tests, demos and benchmarks."""

from __future__ import annotations

import warnings

import numpy as np

from .molecule import Conformer, LabeledReaction, Reaction, fallback_coords
from .shingles import reaction_shingles
from .smiles import AtomSpec, BondOrder, BondSpec, MolGraph

VALENCE = {"C": 4, "N": 3, "O": 2, "S": 2, "F": 1, "Cl": 1, "Br": 1}
_HEAVY = ("C", "C", "C", "C", "C", "N", "N", "O", "O", "S")
_HALOGEN = ("F", "Cl", "Br")


class _Builder:
    def __init__(self):
        self.atoms: list[AtomSpec] = []
        self.bonds: dict[tuple[int, int], BondOrder] = {}
        self.free: list[int] = []

    def add_atom(self, element: str, aromatic: bool = False) -> int:
        self.atoms.append(AtomSpec(element, aromatic=aromatic))
        self.free.append(VALENCE[element] - (3 if aromatic else 0))
        return len(self.atoms) - 1

    def bond(self, i: int, j: int, order: BondOrder, cost: int | None = None):
        self.bonds[(min(i, j), max(i, j))] = order
        used = int(order) if cost is None else cost
        self.free[i] -= used
        self.free[j] -= used

    def graph(self) -> MolGraph:
        bonds = tuple(BondSpec(o, ij) for ij, o in sorted(self.bonds.items()))
        return MolGraph(tuple(self.atoms), bonds)


def random_molecule(rng: np.random.Generator, max_atoms: int = 12,
                    aromatic_prob: float = 0.25, ring_prob: float = 0.3) -> MolGraph:
    """A connected, valence-respecting random graph with at most ``max_atoms`` atoms."""
    n_target = int(rng.integers(1, max_atoms + 1))
    b = _Builder()
    if n_target >= 6 and rng.random() < aromatic_prob:
        ring = [b.add_atom("C", aromatic=True) for _ in range(6)]
        for k in range(6):
            b.bond(ring[k], ring[(k + 1) % 6], BondOrder.AROMATIC, cost=0)
    else:
        b.add_atom(str(rng.choice(_HEAVY)))
    while len(b.atoms) < n_target:
        open_atoms = [i for i, f in enumerate(b.free) if f > 0]
        if not open_atoms:
            break
        anchor = int(rng.choice(open_atoms))
        element = str(rng.choice(_HALOGEN)) if rng.random() < 0.12 else str(rng.choice(_HEAVY))
        new = b.add_atom(element)
        b.bond(anchor, new, BondOrder.SINGLE)
    if rng.random() < ring_prob:
        dist = b.graph().distance_matrix()
        cands = [(i, j) for i in range(len(b.atoms)) for j in range(i + 1, len(b.atoms))
                 if dist[i][j] >= 2 and b.free[i] > 0 and b.free[j] > 0
                 and not b.atoms[i].aromatic and not b.atoms[j].aromatic]
        if cands:
            i, j = cands[int(rng.integers(len(cands)))]
            b.bond(i, j, BondOrder.SINGLE)
    for (i, j), order in list(b.bonds.items()):
        if (order == BondOrder.SINGLE and b.free[i] > 0 and b.free[j] > 0
                and rng.random() < 0.15):
            b.bonds[(i, j)] = BondOrder.DOUBLE
            b.free[i] -= 1
            b.free[j] -= 1
    return b.graph()


def _rebuild(mol: MolGraph) -> _Builder:
    b = _Builder()
    for a in mol.atoms:
        b.add_atom(a.element, a.aromatic)
    for bond in mol.bonds:
        cost = 0 if bond.order == BondOrder.AROMATIC else None
        b.bond(*bond.endpoints, bond.order, cost=cost)
    return b


def _couple(a: MolGraph, c: MolGraph, rng) -> MolGraph | None:
    """Join two molecules by one new single bond between atoms with spare valence."""
    ba, bc = _rebuild(a), _rebuild(c)
    ia = [i for i, f in enumerate(ba.free) if f > 0]
    ic = [i for i, f in enumerate(bc.free) if f > 0]
    if not ia or not ic:
        return None
    joined = _rebuild(a)
    off = a.n_atoms
    for atom in c.atoms:
        joined.add_atom(atom.element, atom.aromatic)
    for bond in c.bonds:
        i, j = bond.endpoints
        cost = 0 if bond.order == BondOrder.AROMATIC else None
        joined.bond(i + off, j + off, bond.order, cost=cost)
    joined.bond(int(rng.choice(ia)), off + int(rng.choice(ic)), BondOrder.SINGLE)
    return joined.graph()


def _modify(a: MolGraph, rng) -> MolGraph:
    """Swap the element of one atom (valence permitting) or grow one atom."""
    b = _rebuild(a)
    candidates = [i for i, atom in enumerate(a.atoms) if not atom.aromatic]
    if candidates and rng.random() < 0.5:
        i = int(rng.choice(candidates))
        used = VALENCE[a.atoms[i].element] - b.free[i]
        options = [e for e in VALENCE if e != a.atoms[i].element and VALENCE[e] >= used]
        if options:
            atoms = list(a.atoms)
            atoms[i] = AtomSpec(str(rng.choice(options)))
            return MolGraph(tuple(atoms), a.bonds)
    open_atoms = [i for i, f in enumerate(b.free) if f > 0]
    if not open_atoms:
        return MolGraph(a.atoms[:1], ()) if a.n_atoms > 1 else MolGraph((AtomSpec("O"),), ())
    new = b.add_atom(str(rng.choice(("C", "N", "O"))))
    b.bond(int(rng.choice(open_atoms)), new, BondOrder.SINGLE)
    return b.graph()


def with_random_coords(mol: MolGraph, rng: np.random.Generator, noise: float = 0.3) -> Conformer:
    """Fallback geometry plus Gaussian jitter: generic coordinates without symmetric ties."""
    base = fallback_coords(mol).coords
    return Conformer(mol, base + rng.normal(0.0, noise, size=base.shape))


def random_reaction(rng: np.random.Generator, max_atoms: int = 12, coords: bool = False,
                    spectator_prob: float = 0.3, id: str = "") -> Reaction:
    """Coupling or single-site modification, optionally with a spectator on both sides."""
    a = random_molecule(rng, max_atoms)
    reactants, products = [a], []
    if rng.random() < 0.5:
        c = random_molecule(rng, max_atoms)
        joined = _couple(a, c, rng) if a.n_atoms + c.n_atoms <= 2 * max_atoms else None
        reactants.append(c)
        products.append(joined if joined is not None else _modify(a, rng))
        if joined is None:
            products.append(c)
    else:
        products.append(_modify(a, rng))
        if rng.random() < 0.3:
            products.append(MolGraph((AtomSpec("O"),), ()))
    if rng.random() < spectator_prob:
        spectator = random_molecule(rng, max_atoms)
        reactants.append(spectator)
        products.append(spectator)
    order_r = rng.permutation(len(reactants))
    order_p = rng.permutation(len(products))
    reactants = [reactants[i] for i in order_r]
    products = [products[i] for i in order_p]
    if coords:
        return Reaction(tuple(with_random_coords(m, rng) for m in reactants),
                        tuple(with_random_coords(m, rng) for m in products), id)
    return Reaction(tuple(reactants), tuple(products), id)


def random_reactions(n: int, seed: int = 0, **kwargs) -> list[Reaction]:
    rng = np.random.default_rng(seed)
    return [random_reaction(rng, id=f"rxn{i}", **kwargs) for i in range(n)]


def shingle_count_dataset(n: int, seed: int = 0, radius: int = 3, slope: float = 0.5,
                          intercept: float = 1.0, **kwargs) -> list[LabeledReaction]:
    """Reactions labeled ``intercept + slope * |capped symmetric-difference shingles|``."""
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for rxn in random_reactions(n, seed, **kwargs):
            count = len(reaction_shingles(rxn, radius))
            out.append(LabeledReaction(rxn, intercept + slope * count))
    return out
