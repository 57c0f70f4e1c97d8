"""Conformers, reactions, labeled datasets and train/test splits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np

from .canon import canonical_order, canonical_smiles, pairwise_distances
from .exceptions import DegenerateSplit, EmptyDataset, EmptyReactantSide, EmptyProductSide, InvalidGraph
from .smiles import MolGraph, parse_reaction_smiles, write_smiles

BOND_LENGTH = 1.5
_DEGENERACY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Conformer:
    """A molecular graph with optional per-atom 3D coordinates (Angstrom)."""

    graph: MolGraph
    coords: np.ndarray | None = None

    def __post_init__(self):
        if self.coords is not None:
            xyz = np.array(self.coords, dtype=np.float64)
            if xyz.shape != (self.graph.n_atoms, 3):
                raise InvalidGraph(
                    f"coords shape {xyz.shape} does not match {self.graph.n_atoms} atoms")
            if not np.all(np.isfinite(xyz)):
                raise InvalidGraph("coordinates must be finite")
            xyz.setflags(write=False)
            object.__setattr__(self, "coords", xyz)

    @property
    def n_atoms(self) -> int:
        return self.graph.n_atoms

    def with_fallback(self) -> "Conformer":
        return self if self.coords is not None else fallback_coords(self.graph)

    def reorder(self, order: Sequence[int]) -> "Conformer":
        coords = None if self.coords is None else self.coords[list(order)]
        return Conformer(self.graph.reorder(order), coords)


@dataclass(frozen=True, eq=False)
class Reaction:
    reactants: tuple[Conformer, ...]
    products: tuple[Conformer, ...]
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "reactants", tuple(_as_conformer(m) for m in self.reactants))
        object.__setattr__(self, "products", tuple(_as_conformer(m) for m in self.products))
        if not self.reactants:
            raise EmptyReactantSide("reaction needs at least one reactant")
        if not self.products:
            raise EmptyProductSide("reaction needs at least one product")

    @classmethod
    def from_smiles(cls, text: str, id: str = "") -> "Reaction":
        reactants, products = parse_reaction_smiles(text)
        return cls(tuple(map(Conformer, reactants)), tuple(map(Conformer, products)), id)

    def to_smiles(self) -> str:
        """Reaction SMILES in the stored atom and molecule order (not canonical)."""
        left = ".".join(write_smiles(m.graph) for m in self.reactants)
        right = ".".join(write_smiles(m.graph) for m in self.products)
        return f"{left}>>{right}"

    @property
    def molecules(self) -> tuple[Conformer, ...]:
        return self.reactants + self.products

    def has_coords(self) -> bool:
        return any(m.coords is not None for m in self.molecules)


def _as_conformer(m) -> Conformer:
    if isinstance(m, Conformer):
        return m
    if isinstance(m, MolGraph):
        return Conformer(m)
    raise TypeError(f"expected Conformer or MolGraph, got {type(m).__name__}")


@dataclass(frozen=True, eq=False)
class LabeledReaction:
    reaction: Reaction
    label: float | int | None = None

    def __post_init__(self):
        if isinstance(self.label, float) and not math.isfinite(self.label):
            raise ValueError(f"label must be finite, got {self.label}")

    @property
    def id(self) -> str:
        return self.reaction.id


@dataclass(frozen=True)
class DatasetSplit:
    train: list[LabeledReaction]
    test: list[LabeledReaction]
    kind: Literal["random", "out-of-sample"] = "random"


# ----------------------------------------------------------------------------
# Fallback geometry


def _mds_coords(path: np.ndarray) -> np.ndarray:
    n = len(path)
    d2 = (BOND_LENGTH * path) ** 2
    j = np.eye(n) - 1.0 / n
    b = -0.5 * j @ d2 @ j
    b = 0.5 * (b + b.T)
    vals, vecs = np.linalg.eigh(b)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    scale = max(1.0, abs(vals[0]))
    keep = 0
    for k in range(min(3, n)):
        if vals[k] <= _DEGENERACY_TOL * scale:
            break
        keep = k + 1
    # a degenerate eigenspace cut in half would make distances basis-dependent
    while 0 < keep < n and abs(vals[keep - 1] - vals[keep]) <= _DEGENERACY_TOL * scale:
        head = keep - 1
        while head > 0 and abs(vals[head - 1] - vals[head]) <= _DEGENERACY_TOL * scale:
            head -= 1
        keep = head
    out = np.zeros((n, 3))
    for k in range(keep):
        v = vecs[:, k]
        pivot = int(np.argmax(np.abs(v) - 1e-12 * np.arange(n)))
        if v[pivot] < 0:
            v = -v
        out[:, k] = v * math.sqrt(vals[k])
    return out


def fallback_coords(mol: MolGraph) -> Conformer:
    """Deterministic pseudo-geometry from graph distances.

    Classical multidimensional scaling of ``1.5 * shortest-path length``
    into three dimensions. Computed in the canonical atom frame and mapped
    back, so relabeled inputs get the same geometry.
    """
    n = mol.n_atoms
    if n <= 1:
        return Conformer(mol, np.zeros((n, 3)))
    order = canonical_order(mol)
    canon = mol.reorder(order)
    path = np.array(canon.distance_matrix(), dtype=np.float64)
    path[path < 0] = n  # disconnected fragments: push apart
    xyz_canon = _mds_coords(path)
    xyz = np.empty_like(xyz_canon)
    xyz[order] = xyz_canon
    return Conformer(mol, xyz)


# ----------------------------------------------------------------------------
# Canonical frame


@dataclass(frozen=True, eq=False)
class CanonicalMolecule:
    """A conformer relabeled into canonical atom order, with provenance."""

    conformer: Conformer
    smiles: str
    distances: np.ndarray
    side: str
    source_index: int
    atom_order: tuple[int, ...]


def canonical_molecule(conf: Conformer, side: str, source_index: int) -> CanonicalMolecule:
    order = canonical_order(conf.graph, conf.coords)
    graph = conf.graph.reorder(order)
    if conf.coords is None:
        placed = fallback_coords(graph)
    else:
        placed = Conformer(graph, conf.coords[order])
    dist = pairwise_distances(placed.coords)
    return CanonicalMolecule(placed, canonical_smiles(graph), dist, side, source_index,
                             tuple(order))


@dataclass(frozen=True, eq=False)
class CanonicalReaction:
    """Reaction with molecules sorted and atoms relabeled into a canonical frame.

    Every quantity derived from it depends only on the reaction as a set of
    molecules with geometry, not on input molecule order or atom numbering.
    """

    reactants: tuple[CanonicalMolecule, ...]
    products: tuple[CanonicalMolecule, ...]
    id: str = ""

    def side(self, name: str) -> tuple[CanonicalMolecule, ...]:
        return self.reactants if name == "reactant" else self.products


def _molecule_sort_key(m: CanonicalMolecule):
    iu = np.triu_indices(len(m.distances), 1)
    d = m.distances[iu]
    return (m.smiles, tuple(np.round(d, 6).tolist()), tuple(d.tolist()))


def canonical_side(mols: Sequence[Conformer], side: str) -> tuple[CanonicalMolecule, ...]:
    canon = [canonical_molecule(_as_conformer(m), side, i) for i, m in enumerate(mols)]
    canon.sort(key=_molecule_sort_key)
    return tuple(canon)


def canonicalize_reaction(rxn: Reaction) -> CanonicalReaction:
    return CanonicalReaction(canonical_side(rxn.reactants, "reactant"),
                             canonical_side(rxn.products, "product"), rxn.id)


# ----------------------------------------------------------------------------
# Splits


def _train_size(n: int, test_fraction: float) -> int:
    return int(math.floor(n * (1.0 - test_fraction) + 1e-9))


def split_random(data: Sequence[LabeledReaction], test_fraction: float = 0.3,
                 seed: int = 0) -> DatasetSplit:
    """Shuffle with ``seed`` and cut; the train side gets ``floor(n * (1 - f))``."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    data = list(data)
    if not data:
        raise EmptyDataset("cannot split an empty dataset")
    perm = np.random.default_rng(seed).permutation(len(data))
    n_train = _train_size(len(data), test_fraction)
    train = [data[i] for i in perm[:n_train]]
    test = [data[i] for i in perm[n_train:]]
    return DatasetSplit(train, test, "random")


def split_by_pivot(data: Sequence[LabeledReaction], pivot_smiles: Iterable[str]) -> DatasetSplit:
    """Out-of-sample split: reactions containing any pivot molecule form the test set."""
    from .canon import canonicalize

    pivots = {canonicalize(s) for s in pivot_smiles}
    if not pivots:
        raise ValueError("pivot set must not be empty")
    train, test = [], []
    for item in data:
        keys = {canonical_smiles(m.graph) for m in item.reaction.molecules}
        (test if keys & pivots else train).append(item)
    if not train or not test:
        raise DegenerateSplit(
            f"pivot split leaves {len(train)} train / {len(test)} test reactions")
    return DatasetSplit(train, test, "out-of-sample")
