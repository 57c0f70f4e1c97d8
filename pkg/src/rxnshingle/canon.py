"""Canonical atom labeling and canonical SMILES.

Labeling works by partition refinement: atoms start in classes given by
their local invariants (element, isotope, charge, explicit H, aromaticity,
degree, ring membership) and classes are split by the multiset of
(neighbor class, bond order) until stable. Remaining ties are broken by
individualizing each member of the first tied class in turn and keeping the
labeling whose labeled graph is lexicographically smallest. Subtrees that
are images of an explored subtree under an automorphism already found are
skipped.
"""

from __future__ import annotations

import warnings
from functools import lru_cache
import numpy as np

from .rings import ring_atoms
from .smiles import MolGraph, parse_smiles, write_smiles

# exhaustive enumeration of equivalent labelings is abandoned past this many leaves
MAX_LEAVES = 20000


def _dense_rank(keys: list) -> list[int]:
    table = {k: r for r, k in enumerate(sorted(set(keys)))}
    return [table[k] for k in keys]


class _Labeler:
    def __init__(self, mol: MolGraph):
        self.mol = mol
        self.n = mol.n_atoms
        in_ring = ring_atoms(mol)
        self.inv = [a.invariant() + (mol.degree(i), int(in_ring[i]))
                    for i, a in enumerate(mol.atoms)]
        self.adj = [[(b, int(mol.bond_order(a, b))) for b in mol.adjacency[a]]
                    for a in range(self.n)]
        self.bonds = [(min(b.endpoints), max(b.endpoints), int(b.order)) for b in mol.bonds]

    def refine(self, ranks: list[int]) -> list[int]:
        count = len(set(ranks))
        adj = self.adj
        while True:
            keys = [(ranks[a], tuple(sorted((ranks[b], o) for b, o in adj[a])))
                    for a in range(self.n)]
            new = _dense_rank(keys)
            new_count = len(set(new))
            if new_count == count:
                return new
            ranks, count = new, new_count

    def initial(self) -> list[int]:
        return self.refine(_dense_rank(self.inv))

    def certificate(self, ranks: list[int]) -> tuple:
        order = sorted(range(self.n), key=ranks.__getitem__)
        atoms = tuple(self.inv[a] for a in order)
        bonds = tuple(sorted((min(ranks[i], ranks[j]), max(ranks[i], ranks[j]), o)
                             for i, j, o in self.bonds))
        return atoms, bonds

    @staticmethod
    def target_cell(ranks: list[int]) -> list[int] | None:
        counts: dict[int, int] = {}
        for r in ranks:
            counts[r] = counts.get(r, 0) + 1
        tied = [r for r, c in counts.items() if c > 1]
        if not tied:
            return None
        r = min(tied)
        return [a for a, ra in enumerate(ranks) if ra == r]

    def individualize(self, ranks: list[int], v: int) -> list[int]:
        keys = [(r, 0 if a == v else 1) for a, r in enumerate(ranks)]
        return self.refine(_dense_rank(keys))

    def search(self, collect_all: bool) -> tuple[tuple, list[list[int]]]:
        """Return the minimal certificate and the leaf rankings attaining it.

        With ``collect_all`` every optimal leaf is returned (no pruning);
        otherwise only one.
        """
        best_cert = None
        best: list[list[int]] = []
        autos: list[list[int]] = []
        leaves = 0
        prune = not collect_all

        def orbit_of(path: list[int], atoms: list[int]) -> dict[int, int]:
            parent = {a: a for a in atoms}

            def find(x):
                while parent.get(x, x) != x:
                    x = parent[x]
                return x

            for g in autos:
                if any(g[p] != p for p in path):
                    continue
                for a in atoms:
                    b = g[a]
                    if b in parent:
                        ra, rb = find(a), find(b)
                        if ra != rb:
                            parent[max(ra, rb)] = min(ra, rb)
            return {a: find(a) for a in atoms}

        def visit(ranks: list[int], path: list[int]):
            nonlocal best_cert, best, leaves
            cell = self.target_cell(ranks)
            if cell is None:
                leaves += 1
                cert = self.certificate(ranks)
                if best_cert is None or cert < best_cert:
                    best_cert, best = cert, [ranks]
                elif cert == best_cert:
                    if collect_all:
                        best.append(ranks)
                    order_best = sorted(range(self.n), key=best[0].__getitem__)
                    autos.append([order_best[ranks[a]] for a in range(self.n)])
                if collect_all and leaves > MAX_LEAVES:
                    raise _Abort
                return
            tried: list[int] = []
            for v in cell:
                if prune and tried:
                    orb = orbit_of(path, cell)
                    if any(orb[v] == orb[u] for u in tried):
                        continue
                tried.append(v)
                visit(self.individualize(ranks, v), path + [v])

        try:
            visit(self.initial(), [])
        except _Abort:
            warnings.warn("too many equivalent labelings; coordinate tie-break "
                          "falls back to graph-only labeling", stacklevel=3)
            return self.search(collect_all=False)
        return best_cert, best


class _Abort(Exception):
    pass


def canonical_ranks(mol: MolGraph) -> list[int]:
    """Canonical label of every atom (a permutation of ``range(n)``)."""
    if mol.n_atoms == 0:
        return []
    _, leaves = _Labeler(mol).search(collect_all=False)
    return leaves[0]


def canonical_order(mol: MolGraph, coords: np.ndarray | None = None) -> list[int]:
    """Atom order (``order[label] = atom``) of the canonical frame.

    When ``coords`` are given, ties between automorphism-equivalent
    labelings are broken by the labeled interatomic distance matrix (first
    rounded to 1e-6, then exact), so that relabeling the atoms of a
    conformer yields the same canonical conformer.
    """
    if mol.n_atoms == 0:
        return []
    if coords is None:
        ranks = canonical_ranks(mol)
        return sorted(range(mol.n_atoms), key=ranks.__getitem__)
    _, leaves = _Labeler(mol).search(collect_all=True)
    dist = pairwise_distances(coords)
    n = mol.n_atoms
    iu = np.triu_indices(n, 1)
    best_key, best_order = None, None
    for ranks in leaves:
        order = sorted(range(n), key=ranks.__getitem__)
        sub = dist[np.ix_(order, order)][iu]
        key = (tuple(np.round(sub, 6).tolist()), tuple(sub.tolist()))
        if best_key is None or key < best_key:
            best_key, best_order = key, order
    return best_order


def pairwise_distances(coords: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix; entry (i, j) is bit-identical to (j, i)."""
    x = np.asarray(coords, dtype=np.float64)
    diff = x[:, None, :] - x[None, :, :]
    sq = diff ** 2
    return np.sqrt(sq[..., 0] + sq[..., 1] + sq[..., 2])


def _structure_key(mol: MolGraph) -> tuple:
    return mol.atoms, tuple(sorted((min(b.endpoints), max(b.endpoints), int(b.order))
                                   for b in mol.bonds))


@lru_cache(maxsize=262144)
def _canonical_from_key(key: tuple) -> str:
    atoms, bonds = key
    from .smiles import BondOrder, BondSpec

    mol = MolGraph(atoms, tuple(BondSpec(BondOrder(o), (i, j)) for i, j, o in bonds))
    return write_smiles(mol, rank=canonical_ranks(mol))


def canonical_smiles(mol: MolGraph) -> str:
    """Canonical SMILES: identical text for every atom ordering of a graph."""
    if mol.n_atoms == 0:
        return ""
    return _canonical_from_key(_structure_key(mol))


def canonicalize(smiles: str) -> str:
    """Parse SMILES and return its canonical form (fragments sorted, dot-joined)."""
    return ".".join(sorted(canonical_smiles(m) for m in parse_smiles(smiles)))

