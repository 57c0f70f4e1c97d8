"""Independent reference implementations used by the tests.

Nothing here calls into the package's shingle, ring or canonicalization
code: sub-graphs are grouped by networkx isomorphism instead of canonical
SMILES, and ring sets come from brute-force cycle enumeration plus GF(2)
rank tests.
"""

from __future__ import annotations

import itertools

import networkx as nx
import numpy as np
from networkx.algorithms.isomorphism import categorical_edge_match, categorical_node_match

NODE_ATTRS = ("element", "charge", "aromatic", "explicit_h", "isotope")
node_match = categorical_node_match(list(NODE_ATTRS), [None] * len(NODE_ATTRS))
edge_match = categorical_edge_match("order", None)


def to_nx(mol) -> nx.Graph:
    g = nx.Graph()
    for i, a in enumerate(mol.atoms):
        g.add_node(i, element=a.element, charge=a.charge, aromatic=a.aromatic,
                   explicit_h=a.explicit_h, isotope=a.isotope)
    for b in mol.bonds:
        g.add_edge(*b.endpoints, order=int(b.order))
    return g


def _gf2_rank(rows: list[np.ndarray]) -> int:
    if not rows:
        return 0
    m = np.array(rows, dtype=np.uint8) % 2
    rank = 0
    n_rows, n_cols = m.shape
    for col in range(n_cols):
        pivot = None
        for r in range(rank, n_rows):
            if m[r, col]:
                pivot = r
                break
        if pivot is None:
            continue
        m[[rank, pivot]] = m[[pivot, rank]]
        for r in range(n_rows):
            if r != rank and m[r, col]:
                m[r] ^= m[rank]
        rank += 1
    return rank


def brute_relevant_cycles(g: nx.Graph) -> list[frozenset]:
    """Cycles that are not GF(2) sums of strictly shorter cycles."""
    edges = sorted(tuple(sorted(e)) for e in g.edges)
    col = {e: i for i, e in enumerate(edges)}
    cycles = []
    for cyc in nx.simple_cycles(g):
        if len(cyc) < 3:
            continue
        vec = np.zeros(len(edges), dtype=np.uint8)
        for a, b in zip(cyc, cyc[1:] + cyc[:1]):
            vec[col[tuple(sorted((a, b)))]] = 1
        cycles.append((len(cyc), frozenset(cyc), vec))
    out = []
    for length, atoms, vec in cycles:
        shorter = [v for l2, _, v in cycles if l2 < length]
        if _gf2_rank(shorter + [vec]) > _gf2_rank(shorter):
            out.append(atoms)
    return out


def brute_shingle_graphs(mol, r_max: int) -> list[nx.Graph]:
    """Every (atom, radius) ball and every relevant ring as an induced sub-graph."""
    g = to_nx(mol)
    out = []
    for v in g.nodes:
        for r in range(1, r_max + 1):
            ball = nx.single_source_shortest_path_length(g, v, cutoff=r)
            out.append(g.subgraph(ball).copy())
    for ring in brute_relevant_cycles(g):
        out.append(g.subgraph(ring).copy())
    return out


def _wl(g: nx.Graph) -> str:
    for n, d in g.nodes(data=True):
        d["label"] = "|".join(str(d[k]) for k in NODE_ATTRS)
    for _, _, d in g.edges(data=True):
        d["olabel"] = str(d["order"])
    return nx.weisfeiler_lehman_graph_hash(g, node_attr="label", edge_attr="olabel")


class IsoClasses:
    """Group graphs into isomorphism classes; per class, counts per tag."""

    def __init__(self):
        self.buckets: dict[str, list[list]] = {}

    def add(self, g: nx.Graph, tag: str):
        h = _wl(g)
        for entry in self.buckets.setdefault(h, []):
            if nx.is_isomorphic(entry[0], g, node_match=node_match, edge_match=edge_match):
                entry[1][tag] = entry[1].get(tag, 0) + 1
                return
        self.buckets[h].append([g, {tag: 1}])

    def classes(self):
        for entries in self.buckets.values():
            yield from entries

    def find(self, g: nx.Graph):
        for entry in self.buckets.get(_wl(g), []):
            if nx.is_isomorphic(entry[0], g, node_match=node_match, edge_match=edge_match):
                return entry
        return None


def brute_symdiff(reactants, products, r_max: int) -> IsoClasses:
    """Isomorphism classes of shingles with per-side counts."""
    classes = IsoClasses()
    for tag, mols in (("r", reactants), ("p", products)):
        for m in mols:
            for sg in brute_shingle_graphs(m, r_max):
                classes.add(sg, tag)
    return classes


def surviving_multiset(classes: IsoClasses) -> list[tuple[nx.Graph, int]]:
    """Classes present on exactly one side, with their total instance count."""
    out = []
    for g, counts in classes.classes():
        if ("r" in counts) != ("p" in counts):
            out.append((g, sum(counts.values())))
    return out


def finite_difference(f, x: np.ndarray, idx, eps: float = 1e-4) -> float:
    old = x[idx]
    x[idx] = old + eps
    up = f()
    x[idx] = old - eps
    down = f()
    x[idx] = old
    return (up - down) / (2 * eps)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def all_permutations_small(n: int, limit: int = 24):
    return itertools.islice(itertools.permutations(range(n)), limit)
