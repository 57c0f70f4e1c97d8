"""Molecular graph types and a SMILES reader/writer for a practical subset.

Supported: organic-subset atoms, bracket atoms with isotope, charge and
explicit hydrogen count, branches, ring closures ``0-9`` and ``%nn``, bond
symbols ``- = # :`` and lowercase aromatic atoms. Stereo marks (``@``, ``/``,
``\\``) are accepted and discarded with a warning; atom-map numbers are
discarded silently. No valence model is applied and no implicit hydrogens
are inferred.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence

from .exceptions import (
    EmptyInput,
    InvalidGraph,
    SmilesError,
    UnbalancedParen,
    UnknownElement,
    UnmatchedRingBond,
)

ELEMENTS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni "
    "Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I "
    "Xe Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt "
    "Au Hg Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr "
    "Rf Db Sg Bh Hs Mt Ds Rg Cn Nh Fl Mc Lv Ts Og"
).split()
ATOMIC_NUMBER = {sym: z for z, sym in enumerate(ELEMENTS, start=1)}

ORGANIC_SUBSET = frozenset("B C N O P S F Cl Br I".split())
AROMATIC_ORGANIC = frozenset("b c n o p s".split())
AROMATIC_BRACKET = frozenset("b c n o p s se as te".split())


class BondOrder(IntEnum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4


_BOND_SYMBOLS = {"-": BondOrder.SINGLE, "=": BondOrder.DOUBLE, "#": BondOrder.TRIPLE,
                 ":": BondOrder.AROMATIC}


@dataclass(frozen=True)
class AtomSpec:
    element: str
    charge: int = 0
    explicit_h: int = 0
    aromatic: bool = False
    isotope: int | None = None

    def __post_init__(self):
        if self.element not in ATOMIC_NUMBER:
            raise UnknownElement(f"unknown element {self.element!r}")
        if self.explicit_h < 0:
            raise InvalidGraph("explicit_h must be non-negative")
        if self.isotope is not None and self.isotope < 0:
            raise InvalidGraph("isotope must be non-negative")

    @property
    def atomic_number(self) -> int:
        return ATOMIC_NUMBER[self.element]

    def invariant(self) -> tuple:
        return (self.atomic_number, self.isotope or 0, self.charge, self.explicit_h,
                int(self.aromatic))


@dataclass(frozen=True)
class BondSpec:
    order: BondOrder
    endpoints: tuple[int, int]


@dataclass(frozen=True, eq=False)
class MolGraph:
    """Atoms, bonds and per-atom neighbor lists of one molecule (or fragment set)."""

    atoms: tuple[AtomSpec, ...]
    bonds: tuple[BondSpec, ...]
    adjacency: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    _bond_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.atoms)
        adj: list[list[int]] = [[] for _ in range(n)]
        index = {}
        for b in self.bonds:
            i, j = b.endpoints
            if i == j:
                raise InvalidGraph(f"bond endpoints must differ, got ({i}, {j})")
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidGraph(f"bond ({i}, {j}) outside atom range {n}")
            key = (min(i, j), max(i, j))
            if key in index:
                raise InvalidGraph(f"duplicate bond between atoms {key}")
            index[key] = b.order
            adj[i].append(j)
            adj[j].append(i)
        object.__setattr__(self, "adjacency", tuple(tuple(sorted(a)) for a in adj))
        object.__setattr__(self, "_bond_index", index)

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def bond_order(self, i: int, j: int) -> BondOrder | None:
        return self._bond_index.get((min(i, j), max(i, j)))

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])

    def structurally_equal(self, other: "MolGraph") -> bool:
        return (self.atoms == other.atoms
                and set(self._bond_index.items()) == set(other._bond_index.items()))

    def reorder(self, order: Sequence[int]) -> "MolGraph":
        """Return the graph whose atom ``i`` is atom ``order[i]`` of this one."""
        if sorted(order) != list(range(self.n_atoms)):
            raise InvalidGraph("order must be a permutation of atom indices")
        new_index = {old: new for new, old in enumerate(order)}
        atoms = tuple(self.atoms[old] for old in order)
        bonds = [BondSpec(b.order, tuple(sorted((new_index[b.endpoints[0]],
                                                 new_index[b.endpoints[1]]))))
                 for b in self.bonds]
        bonds.sort(key=lambda b: b.endpoints)
        return MolGraph(atoms, tuple(bonds))

    def subgraph(self, atom_indices: Iterable[int]) -> "MolGraph":
        """Induced sub-graph on ``atom_indices`` (kept in ascending index order)."""
        keep = sorted(set(atom_indices))
        new_index = {old: new for new, old in enumerate(keep)}
        atoms = tuple(self.atoms[i] for i in keep)
        bonds = tuple(BondSpec(order, (new_index[i], new_index[j]))
                      for (i, j), order in sorted(self._bond_index.items())
                      if i in new_index and j in new_index)
        return MolGraph(atoms, bonds)

    def components(self) -> list[list[int]]:
        """Connected components as sorted atom-index lists, ordered by first atom."""
        seen = [False] * self.n_atoms
        comps = []
        for start in range(self.n_atoms):
            if seen[start]:
                continue
            stack, comp = [start], []
            seen[start] = True
            while stack:
                a = stack.pop()
                comp.append(a)
                for b in self.adjacency[a]:
                    if not seen[b]:
                        seen[b] = True
                        stack.append(b)
            comps.append(sorted(comp))
        return comps

    def distance_matrix(self) -> list[list[int]]:
        """All-pairs shortest path lengths in bonds (-1 when disconnected)."""
        n = self.n_atoms
        out = []
        for s in range(n):
            dist = [-1] * n
            dist[s] = 0
            frontier = [s]
            while frontier:
                nxt = []
                for a in frontier:
                    for b in self.adjacency[a]:
                        if dist[b] < 0:
                            dist[b] = dist[a] + 1
                            nxt.append(b)
                frontier = nxt
            out.append(dist)
        return out

    def __repr__(self) -> str:
        return f"MolGraph({write_smiles(self)!r}, n_atoms={self.n_atoms})"


# ----------------------------------------------------------------------------
# Reader

_BRACKET_RE = re.compile(
    r"""^(?P<isotope>\d+)?
        (?P<symbol>[A-Z][a-z]?|se|as|te|[bcnops])
        (?P<chiral>@(?:@|TH[12]|AL[12]|SP[123]|TB\d{1,2}|OH\d{1,2})?)?
        (?P<hcount>H\d*)?
        (?P<charge>\+\+?|--?|[+-]\d+)?
        (?::(?P<map>\d+))?$""",
    re.VERBOSE,
)


def _parse_bracket(text: str, smiles: str, pos: int) -> tuple[AtomSpec, bool]:
    m = _BRACKET_RE.match(text)
    if m is None:
        raise SmilesError(f"malformed bracket atom [{text}]", smiles, pos)
    symbol = m.group("symbol")
    aromatic = symbol[0].islower()
    element = symbol.capitalize()
    if element not in ATOMIC_NUMBER:
        raise UnknownElement(f"unknown element {symbol!r}", smiles, pos)
    if aromatic and symbol not in AROMATIC_BRACKET:
        raise UnknownElement(f"{symbol!r} cannot be aromatic", smiles, pos)
    h = m.group("hcount")
    explicit_h = 0 if h is None else (int(h[1:]) if len(h) > 1 else 1)
    c = m.group("charge")
    if c is None:
        charge = 0
    elif c in ("+", "-"):
        charge = 1 if c == "+" else -1
    elif c in ("++", "--"):
        charge = 2 if c == "++" else -2
    else:
        charge = int(c)
    iso = m.group("isotope")
    atom = AtomSpec(element, charge, explicit_h, aromatic, int(iso) if iso else None)
    return atom, m.group("chiral") is not None


def _split_fragment_graph(atoms, bonds) -> list[MolGraph]:
    whole = MolGraph(tuple(atoms), tuple(bonds))
    comps = whole.components()
    if len(comps) == 1:
        return [whole]
    return [whole.subgraph(c) for c in comps]


def parse_smiles(smiles: str) -> list[MolGraph]:
    """Parse SMILES text into one :class:`MolGraph` per connected fragment.

    Raises
    ------
    EmptyInput, UnmatchedRingBond, UnbalancedParen, UnknownElement, SmilesError
    """
    if smiles is None or not smiles.strip():
        raise EmptyInput("empty SMILES input")
    s = smiles.strip().split()[0]  # drop CXSMILES extensions / trailing names
    atoms: list[AtomSpec] = []
    bonds: list[BondSpec] = []
    bonded: set[tuple[int, int]] = set()
    branch_stack: list[int] = []
    rings: dict[int, tuple[int, str | None, int]] = {}
    prev: int | None = None
    pending_bond: str | None = None
    dropped_stereo = False
    i, n = 0, len(s)

    def add_bond(a: int, b: int, symbol: str | None, pos: int):
        if a == b:
            raise SmilesError("atom bonded to itself", smiles, pos)
        key = (min(a, b), max(a, b))
        if key in bonded:
            raise SmilesError("duplicate bond", smiles, pos)
        if symbol is None:
            order = (BondOrder.AROMATIC if atoms[a].aromatic and atoms[b].aromatic
                     else BondOrder.SINGLE)
        else:
            order = _BOND_SYMBOLS[symbol]
        bonded.add(key)
        bonds.append(BondSpec(order, key))

    def add_atom(atom: AtomSpec, pos: int):
        nonlocal prev, pending_bond
        atoms.append(atom)
        idx = len(atoms) - 1
        if prev is not None:
            add_bond(prev, idx, pending_bond, pos)
        elif pending_bond is not None:
            raise SmilesError("bond symbol without preceding atom", smiles, pos)
        pending_bond = None
        prev = idx

    while i < n:
        ch = s[i]
        if ch == "[":
            close = s.find("]", i)
            if close < 0:
                raise SmilesError("unterminated bracket atom", smiles, i)
            atom, stereo = _parse_bracket(s[i + 1:close], smiles, i)
            dropped_stereo |= stereo
            add_atom(atom, i)
            i = close + 1
        elif ch.isalpha():
            two = s[i:i + 2]
            if two in ("Cl", "Br"):
                add_atom(AtomSpec(two), i)
                i += 2
            elif ch in ORGANIC_SUBSET:
                add_atom(AtomSpec(ch), i)
                i += 1
            elif ch in AROMATIC_ORGANIC:
                add_atom(AtomSpec(ch.upper(), aromatic=True), i)
                i += 1
            else:
                raise UnknownElement(f"unknown or non-organic atom {ch!r} outside brackets",
                                     smiles, i)
        elif ch == "*":
            raise UnknownElement("wildcard atom '*' is not supported", smiles, i)
        elif ch == "(":
            if prev is None:
                raise UnbalancedParen("branch opened before any atom", smiles, i)
            branch_stack.append(prev)
            i += 1
        elif ch == ")":
            if not branch_stack:
                raise UnbalancedParen("unmatched ')'", smiles, i)
            if pending_bond is not None:
                raise SmilesError("dangling bond symbol", smiles, i)
            prev = branch_stack.pop()
            i += 1
        elif ch in _BOND_SYMBOLS:
            if pending_bond is not None:
                raise SmilesError("two consecutive bond symbols", smiles, i)
            pending_bond = ch
            i += 1
        elif ch in "/\\":
            dropped_stereo = True
            if pending_bond is not None:
                raise SmilesError("two consecutive bond symbols", smiles, i)
            pending_bond = "-"
            i += 1
        elif ch.isdigit() or ch == "%":
            if ch == "%":
                digits = s[i + 1:i + 3]
                if len(digits) != 2 or not digits.isdigit():
                    raise SmilesError("'%' must be followed by two digits", smiles, i)
                num, width = int(digits), 3
            else:
                num, width = int(ch), 1
            if prev is None:
                raise SmilesError("ring closure before any atom", smiles, i)
            if num in rings:
                other, sym, pos0 = rings.pop(num)
                if sym is not None and pending_bond is not None and sym != pending_bond:
                    raise SmilesError("conflicting ring-closure bond symbols", smiles, i)
                add_bond(other, prev, sym if sym is not None else pending_bond, i)
            else:
                rings[num] = (prev, pending_bond, i)
            pending_bond = None
            i += width
        elif ch == ".":
            if branch_stack:
                raise UnbalancedParen("'.' inside an open branch", smiles, i)
            if pending_bond is not None:
                raise SmilesError("dangling bond symbol", smiles, i)
            prev = None
            i += 1
        else:
            raise SmilesError(f"unexpected character {ch!r}", smiles, i)

    if branch_stack:
        raise UnbalancedParen("unclosed '('", smiles, len(s))
    if rings:
        num, (_, _, pos) = next(iter(rings.items()))
        raise UnmatchedRingBond(f"ring-closure {num} never closed", smiles, pos)
    if pending_bond is not None:
        raise SmilesError("dangling bond symbol at end of input", smiles, len(s))
    if not atoms:
        raise EmptyInput("no atoms in SMILES input", smiles)
    if dropped_stereo:
        warnings.warn(f"stereo descriptors dropped from {smiles!r}", stacklevel=2)
    return _split_fragment_graph(atoms, bonds)


def parse_molecule(smiles: str) -> MolGraph:
    """Parse SMILES expected to hold exactly one connected molecule."""
    mols = parse_smiles(smiles)
    if len(mols) != 1:
        raise SmilesError(f"expected one molecule, found {len(mols)} fragments", smiles)
    return mols[0]


# ----------------------------------------------------------------------------
# Writer


def atom_token(atom: AtomSpec) -> str:
    bare = (atom.charge == 0 and atom.explicit_h == 0 and atom.isotope is None)
    if bare and not atom.aromatic and atom.element in ORGANIC_SUBSET:
        return atom.element
    if bare and atom.aromatic and atom.element.lower() in AROMATIC_ORGANIC:
        return atom.element.lower()
    parts = ["["]
    if atom.isotope is not None:
        parts.append(str(atom.isotope))
    parts.append(atom.element.lower() if atom.aromatic else atom.element)
    if atom.explicit_h:
        parts.append("H" if atom.explicit_h == 1 else f"H{atom.explicit_h}")
    if atom.charge:
        sign = "+" if atom.charge > 0 else "-"
        parts.append(sign if abs(atom.charge) == 1 else f"{sign}{abs(atom.charge)}")
    parts.append("]")
    return "".join(parts)


def _bond_token(mol: MolGraph, a: int, b: int) -> str:
    order = mol.bond_order(a, b)
    if order == BondOrder.DOUBLE:
        return "="
    if order == BondOrder.TRIPLE:
        return "#"
    if order == BondOrder.AROMATIC:
        return ":"
    if mol.atoms[a].aromatic and mol.atoms[b].aromatic:
        return "-"
    return ""


def _ring_label(d: int) -> str:
    return str(d) if d < 10 else f"%{d:02d}"


def write_smiles(mol: MolGraph, rank: Sequence[int] | None = None) -> str:
    """Emit SMILES by depth-first traversal (see :func:`write_smiles_with_order`)."""
    return write_smiles_with_order(mol, rank)[0]


def write_smiles_with_order(mol: MolGraph, rank: Sequence[int] | None = None
                            ) -> tuple[str, list[int]]:
    """Emit SMILES by depth-first traversal; also return atom indices in written order.

    ``rank`` orders atoms: each component starts at its lowest-ranked atom
    and neighbors are visited in ascending rank. Default rank is the atom
    index, which reproduces the input ordering. Aromatic bonds are always
    written as ``:``.
    """
    n = mol.n_atoms
    if rank is None:
        rank = range(n)
    rank = list(rank)
    nbrs = [sorted(mol.adjacency[a], key=rank.__getitem__) for a in range(n)]
    visited = [False] * n
    children: list[list[int]] = [[] for _ in range(n)]
    ring_open: list[list[int]] = [[] for _ in range(n)]
    ring_close: list[list[int]] = [[] for _ in range(n)]
    seen_edges: set[tuple[int, int]] = set()
    starts = []

    for start in sorted(range(n), key=rank.__getitem__):
        if visited[start]:
            continue
        starts.append(start)
        visited[start] = True
        # iterative DFS with explicit neighbor iterators keeps deep chains safe
        stack = [(start, iter(nbrs[start]))]
        while stack:
            a, it = stack[-1]
            advanced = False
            for b in it:
                edge = (min(a, b), max(a, b))
                if edge in seen_edges:
                    continue
                seen_edges.add(edge)
                if visited[b]:
                    ring_open[b].append(a)
                    ring_close[a].append(b)
                else:
                    visited[b] = True
                    children[a].append(b)
                    stack.append((b, iter(nbrs[b])))
                    advanced = True
                    break
            if not advanced:
                stack.pop()

    out: list[str] = []
    written: list[int] = []
    digit_of: dict[tuple[int, int], int] = {}
    free: list[int] = []
    next_digit = [1]

    def take_digit() -> int:
        if free:
            free.sort()
            return free.pop(0)
        d = next_digit[0]
        next_digit[0] += 1
        return d

    def emit(root: int):
        # explicit stack of work items: atoms to write and literal tokens
        work: list = [("atom", root, None)]
        while work:
            kind, a, parent = work.pop()
            if kind == "text":
                out.append(a)
                continue
            if parent is not None:
                out.append(_bond_token(mol, parent, a))
            out.append(atom_token(mol.atoms[a]))
            written.append(a)
            released = []
            for b in sorted(ring_close[a], key=rank.__getitem__):
                d = digit_of.pop((b, a))
                out.append(_ring_label(d))
                released.append(d)
            for b in sorted(ring_open[a], key=rank.__getitem__):
                d = take_digit()
                digit_of[(a, b)] = d
                out.append(_bond_token(mol, a, b) + _ring_label(d))
            free.extend(released)
            kids = children[a]
            # pushed in reverse so the first branch is written first
            todo = []
            for c in kids[:-1]:
                todo.append(("text", "(", None))
                todo.append(("atom", c, a))
                todo.append(("text", ")", None))
            if kids:
                todo.append(("atom", kids[-1], a))
            work.extend(reversed(todo))

    for k, s in enumerate(starts):
        if k:
            out.append(".")
        emit(s)
    return "".join(out), written


def parse_reaction_smiles(text: str) -> tuple[list[MolGraph], list[MolGraph]]:
    """Split ``reactants>agents>products`` into reactant and product graphs.

    Agents are appended to the reactant list: everything that is not a
    product counts as a reactant.
    """
    from .exceptions import EmptyProductSide, EmptyReactantSide, MissingArrow

    if text is None or not text.strip():
        raise EmptyInput("empty reaction SMILES")
    body = text.strip().split()[0]
    parts = body.split(">")
    if len(parts) != 3:
        raise MissingArrow("reaction SMILES needs the form 'R>A>P' or 'R>>P'", text)
    left, middle, right = parts
    if not right:
        raise EmptyProductSide("no product molecules", text)
    if not left and not middle:
        raise EmptyReactantSide("no reactant molecules", text)
    reactants = parse_smiles(left) if left else []
    if middle:
        reactants += parse_smiles(middle)
    return reactants, parse_smiles(right)
