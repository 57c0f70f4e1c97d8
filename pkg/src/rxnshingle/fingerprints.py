"""Hashed circular fingerprints, Tanimoto similarity and the DRFP reaction fingerprint."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .canon import canonical_smiles
from .exceptions import LengthMismatch
from .shingles import _balls, _as_canonical, surviving_key_set
from .smiles import MolGraph, parse_smiles

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

DRFP_BITS = 1024
SHINGLE_FP_RADIUS = 2
SHINGLE_FP_BITS = 2048


def fnv1a_64(text: str) -> int:
    h = FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True, eq=False)
class BitFingerprint:
    bits: np.ndarray  # uint8 array of 0/1

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=np.uint8)
        if b.ndim != 1:
            raise ValueError("fingerprint bits must be one-dimensional")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def length(self) -> int:
        return len(self.bits)

    def popcount(self) -> int:
        return int(self.bits.sum())

    def on_bits(self) -> list[int]:
        return np.flatnonzero(self.bits).tolist()

    def to_hex(self) -> str:
        """Hex string; bit 0 is the least significant bit of the first byte."""
        return np.packbits(self.bits, bitorder="little").tobytes().hex()

    @classmethod
    def from_hex(cls, text: str, length: int | None = None) -> "BitFingerprint":
        raw = np.frombuffer(bytes.fromhex(text.strip()), dtype=np.uint8)
        bits = np.unpackbits(raw, bitorder="little")
        return cls(bits if length is None else bits[:length])

    @classmethod
    def from_on_bits(cls, on: list[int], length: int) -> "BitFingerprint":
        bits = np.zeros(length, dtype=np.uint8)
        bits[list(on)] = 1
        return cls(bits)

    def __eq__(self, other) -> bool:
        return isinstance(other, BitFingerprint) and np.array_equal(self.bits, other.bits)

    __hash__ = None


def _fold(keys, nbits: int) -> BitFingerprint:
    bits = np.zeros(nbits, dtype=np.uint8)
    for k in keys:
        bits[fnv1a_64(k) % nbits] = 1
    return BitFingerprint(bits)


def neighborhood_keys(mol: MolGraph, radius: int) -> set[str]:
    """Canonical SMILES of every radius-0..radius atom neighborhood."""
    keys = set()
    for v in range(mol.n_atoms):
        keys.add(canonical_smiles(mol.subgraph([v])))
        if radius > 0:
            for ball in _balls(mol, v, radius):
                keys.add(canonical_smiles(mol.subgraph(ball)))
    return keys


def morgan_fingerprint(mol: MolGraph, radius: int = 2, nbits: int = 2048) -> BitFingerprint:
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if nbits <= 0 or nbits & (nbits - 1):
        raise ValueError(f"nbits must be a power of two, got {nbits}")
    return _fold(neighborhood_keys(mol, radius), nbits)


@lru_cache(maxsize=131072)
def shingle_fingerprint(key: str) -> BitFingerprint:
    """Morgan fingerprint of a shingle, looked up by its canonical key."""
    graph = parse_smiles(key)
    assert len(graph) == 1, key
    return morgan_fingerprint(graph[0], SHINGLE_FP_RADIUS, SHINGLE_FP_BITS)


def tanimoto(a: BitFingerprint, b: BitFingerprint) -> float:
    """|a AND b| / |a OR b|; two all-zero fingerprints have similarity 1."""
    if a.length != b.length:
        raise LengthMismatch(f"fingerprint lengths differ: {a.length} vs {b.length}")
    union = int(np.count_nonzero(a.bits | b.bits))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a.bits & b.bits)) / union


def tanimoto_matrix(fps: list[BitFingerprint]) -> np.ndarray:
    if not fps:
        return np.zeros((0, 0))
    m = np.stack([f.bits for f in fps]).astype(np.float64)
    inter = m @ m.T
    pop = m.sum(axis=1)
    union = pop[:, None] + pop[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        sim = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 1.0)
    return sim


def drfp(reaction, r_max: int = 3, nbits: int = DRFP_BITS) -> BitFingerprint:
    """Fold every surviving symmetric-difference key (no caps) into ``nbits`` bits.

    A reaction whose sides cancel gives the all-zero vector.
    """
    return _fold(sorted(surviving_key_set(_as_canonical(reaction), r_max, "symdiff")), nbits)
