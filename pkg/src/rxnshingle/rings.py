"""Ring perception: ring-bond membership and relevant cycles."""

from __future__ import annotations

import networkx as nx

from .smiles import MolGraph


def ring_bonds(mol: MolGraph) -> set[tuple[int, int]]:
    """Bonds lying on at least one cycle (i.e. every bond that is not a bridge)."""
    n = mol.n_atoms
    disc = [-1] * n
    low = [0] * n
    bridges: set[tuple[int, int]] = set()
    timer = 0
    for root in range(n):
        if disc[root] >= 0:
            continue
        disc[root] = low[root] = timer
        timer += 1
        stack = [(root, -1, iter(mol.adjacency[root]))]
        while stack:
            a, parent, it = stack[-1]
            pushed = False
            for b in it:
                if b == parent:
                    continue
                if disc[b] < 0:
                    disc[b] = low[b] = timer
                    timer += 1
                    stack.append((b, a, iter(mol.adjacency[b])))
                    pushed = True
                    break
                low[a] = min(low[a], disc[b])
            if not pushed:
                stack.pop()
                if parent >= 0:
                    low[parent] = min(low[parent], low[a])
                    if low[a] > disc[parent]:
                        bridges.add((min(a, parent), max(a, parent)))
    every = {(min(b.endpoints), max(b.endpoints)) for b in mol.bonds}
    return every - bridges


def ring_atoms(mol: MolGraph) -> list[bool]:
    flags = [False] * mol.n_atoms
    for i, j in ring_bonds(mol):
        flags[i] = flags[j] = True
    return flags


def _edge_mask(cycle: list[int], edge_bit: dict) -> int:
    mask = 0
    for k in range(len(cycle)):
        a, b = cycle[k], cycle[(k + 1) % len(cycle)]
        mask |= edge_bit[(min(a, b), max(a, b))]
    return mask


def _reduce(vec: int, basis: dict[int, int]) -> int:
    while vec:
        top = vec.bit_length() - 1
        if top not in basis:
            return vec
        vec ^= basis[top]
    return 0


def relevant_cycles(mol: MolGraph) -> list[tuple[int, ...]]:
    """Cycles that are not a GF(2) sum of strictly shorter cycles.

    This is the union of all smallest sets of smallest rings, so unlike a
    single SSSR it does not depend on atom ordering. Each ring is returned
    as a sorted atom-index tuple; output is sorted by (size, atoms).
    """
    n = mol.n_atoms
    n_edges = len(mol.bonds)
    n_comp = len(mol.components()) if n else 0
    rank_needed = n_edges - n + n_comp
    if rank_needed <= 0:
        return []
    edges = sorted((min(b.endpoints), max(b.endpoints)) for b in mol.bonds)
    edge_bit = {e: 1 << k for k, e in enumerate(edges)}
    g = nx.Graph()
    g.add_nodes_from(range(n))
    g.add_edges_from(ring_bonds(mol))

    basis: dict[int, int] = {}
    found: set[tuple[int, ...]] = set()
    for length in range(3, n + 1):
        same_length = [c for c in nx.simple_cycles(g, length_bound=length) if len(c) == length]
        masks = []
        for cyc in same_length:
            m = _edge_mask(cyc, edge_bit)
            masks.append(m)
            if _reduce(m, basis):
                found.add(tuple(sorted(cyc)))
        for m in masks:
            r = _reduce(m, basis)
            if r:
                basis[r.bit_length() - 1] = r
        if len(basis) >= rank_needed:
            break
    return sorted(found, key=lambda c: (len(c), c))
