"""Circular and ring shingles, and reaction-level shingle sets.

A shingle is the sub-graph induced by a center atom and every atom within
graph distance ``r``; its identity is the canonical SMILES of that sub-graph.
Rings (relevant cycles) are shingles too. A reaction's shingle set is formed
by set algebra on keys across the reactant and product sides, then capped.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Literal, Sequence

from .canon import canonical_smiles
from .molecule import (
    CanonicalReaction,
    Conformer,
    Reaction,
    canonical_side,
    canonicalize_reaction,
)
from .rings import relevant_cycles
from .smiles import MolGraph

Side = Literal["reactant", "product"]
Mode = Literal["symdiff", "union", "reactants"]
SIDE_RANK = {"reactant": 0, "product": 1}
MODES = ("symdiff", "union", "reactants")


class EmptyShingleSet(UserWarning):
    """Reactant and product shingle keys cancel completely."""


@dataclass(frozen=True)
class Caps:
    per_key: int = 10
    per_molecule: int = 100
    total: int = 280


DEFAULT_CAPS = Caps()
NO_CAPS = Caps(per_key=10**9, per_molecule=10**9, total=10**9)


@dataclass(frozen=True)
class Shingle:
    key: str
    mol_index: int
    side: Side
    atom_indices: tuple[int, ...]
    radius: int
    ring: bool = False
    center: int = -1

    def sort_key(self) -> tuple:
        return (self.key, SIDE_RANK[self.side], self.mol_index, self.atom_indices[0],
                self.atom_indices, self.ring, self.radius, self.center)


@dataclass(frozen=True, eq=False)
class ShingleSet:
    """Capped, canonically ordered shingles of one reaction.

    ``mol_index`` of each shingle refers to the molecule position within its
    side of ``reaction`` (a :class:`CanonicalReaction`), and ``atom_indices``
    to atoms in that molecule's canonical frame.
    """

    shingles: tuple[Shingle, ...]
    reaction: CanonicalReaction
    mode: Mode = "symdiff"
    per_key_counts: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.shingles)

    def __iter__(self):
        return iter(self.shingles)

    @property
    def keys(self) -> list[str]:
        return [s.key for s in self.shingles]

    @property
    def empty(self) -> bool:
        return not self.shingles

    def molecule(self, s: Shingle):
        return self.reaction.side(s.side)[s.mol_index]


def _balls(graph: MolGraph, center: int, r_max: int) -> list[frozenset[int]]:
    """Atoms within distance <= r of ``center`` for r = 1..r_max."""
    dist = {center: 0}
    frontier = [center]
    balls = []
    current = {center}
    for _ in range(r_max):
        nxt = []
        for a in frontier:
            for b in graph.adjacency[a]:
                if b not in dist:
                    dist[b] = dist[a] + 1
                    nxt.append(b)
        current |= set(nxt)
        balls.append(frozenset(current))
        frontier = nxt
    return balls


def _graph_of(mol) -> MolGraph:
    if isinstance(mol, MolGraph):
        return mol
    if isinstance(mol, Conformer):
        return mol.graph
    return mol.conformer.graph


def extract_shingles(mol, r_max: int = 3, side: Side = "reactant",
                     mol_index: int = 0) -> list[Shingle]:
    """All radius-1..r_max shingles of every atom, then one shingle per ring.

    Atoms without neighbors yield single-atom shingles keyed by the bare atom.
    Order: center atom index, then radius, then rings in size/atom order.
    """
    if r_max < 1:
        raise ValueError(f"r_max must be >= 1, got {r_max}")
    graph = _graph_of(mol)
    keys: dict[frozenset, str] = {}
    out = []
    for v in range(graph.n_atoms):
        for r, ball in enumerate(_balls(graph, v, r_max), start=1):
            key = keys.get(ball)
            if key is None:
                key = keys[ball] = canonical_smiles(graph.subgraph(ball))
            out.append(Shingle(key, mol_index, side, tuple(sorted(ball)), r, False, v))
    for ring in relevant_cycles(graph):
        key = canonical_smiles(graph.subgraph(ring))
        out.append(Shingle(key, mol_index, side, tuple(ring), 0, True, -1))
    return out


def side_shingles(reaction: CanonicalReaction, side: Side, r_max: int) -> list[Shingle]:
    out = []
    for i, m in enumerate(reaction.side(side)):
        out.extend(extract_shingles(m.conformer.graph, r_max, side, i))
    return out


def _select(pool: list[Shingle], mode: Mode) -> list[Shingle]:
    react = [s for s in pool if s.side == "reactant"]
    if mode == "reactants":
        return react
    if mode == "union":
        return pool
    if mode != "symdiff":
        raise ValueError(f"unknown shingle mode {mode!r}")
    k_r = {s.key for s in react}
    k_p = {s.key for s in pool if s.side == "product"}
    survivors = k_r ^ k_p
    return [s for s in pool if s.key in survivors]


def apply_caps(shingles: Sequence[Shingle], caps: Caps = DEFAULT_CAPS) -> list[Shingle]:
    """Deduplicate, sort canonically and enforce per-key, per-molecule and total caps."""
    ordered = sorted(shingles, key=Shingle.sort_key)
    seen = set()
    per_key: Counter = Counter()
    per_mol: Counter = Counter()
    out = []
    for s in ordered:
        ident = (s.side, s.mol_index, s.atom_indices)
        if ident in seen:
            continue
        seen.add(ident)
        if per_key[s.key] >= caps.per_key:
            continue
        mol = (s.side, s.mol_index)
        if per_mol[mol] >= caps.per_molecule:
            continue
        per_key[s.key] += 1
        per_mol[mol] += 1
        out.append(s)
        if len(out) >= caps.total:
            break
    return out


def _as_canonical(reactants, products=None) -> CanonicalReaction:
    if isinstance(reactants, CanonicalReaction):
        return reactants
    if isinstance(reactants, Reaction):
        return canonicalize_reaction(reactants)
    return canonicalize_reaction(Reaction(tuple(reactants), tuple(products or ())))


def reaction_shingles(reaction, r_max: int = 3, mode: Mode = "symdiff",
                      caps: Caps = DEFAULT_CAPS) -> ShingleSet:
    """Shingle set of a :class:`Reaction` (or an already canonical one)."""
    canon = _as_canonical(reaction)
    pool = side_shingles(canon, "reactant", r_max)
    if mode != "reactants":
        pool += side_shingles(canon, "product", r_max)
    kept = apply_caps(_select(pool, mode), caps)
    if not kept and mode == "symdiff":
        warnings.warn("symmetric difference of reactant and product shingles is empty",
                      EmptyShingleSet, stacklevel=2)
    counts = dict(Counter(s.key for s in kept))
    return ShingleSet(tuple(kept), canon, mode, counts)


def symmetric_difference(reactants, products, r_max: int = 3,
                         caps: Caps = DEFAULT_CAPS) -> ShingleSet:
    return reaction_shingles(_as_canonical(reactants, products), r_max, "symdiff", caps)


def union_shingles(reactants, products, r_max: int = 3, caps: Caps = DEFAULT_CAPS) -> ShingleSet:
    return reaction_shingles(_as_canonical(reactants, products), r_max, "union", caps)


def reactant_only_shingles(reactants, r_max: int = 3, caps: Caps = DEFAULT_CAPS) -> ShingleSet:
    canon = CanonicalReaction(canonical_side(reactants, "reactant"), ())
    return reaction_shingles(canon, r_max, "reactants", caps)


def surviving_keys(reaction, r_max: int = 3, mode: Mode = "symdiff") -> Counter:
    """Key multiset of all extracted shingles that survive the set algebra, before caps."""
    canon = _as_canonical(reaction)
    pool = side_shingles(canon, "reactant", r_max)
    if mode != "reactants":
        pool += side_shingles(canon, "product", r_max)
    return Counter(s.key for s in _select(pool, mode))


def surviving_key_set(reaction, r_max: int = 3, mode: Mode = "symdiff") -> set[str]:
    return set(surviving_keys(reaction, r_max, mode))
