"""Shingle-pair matrices and Gaussian-kernel-with-pair-type (GKPT) attention bias.

Three pair matrices are built over a shingle set: centroid distance within a
molecule (``d_g``), same-molecule indicator (``d_e``) and structural distance
``1 - tanimoto`` of shingle fingerprints (``d_s``). Each distance is passed
through a pair-type-conditioned affine map and a bank of Gaussian kernels,
then projected to one bias value per attention head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fingerprints import shingle_fingerprint, tanimoto_matrix
from .shingles import ShingleSet

SIGMA_FLOOR = 1e-6
N_PAIR_TYPES = 2  # cross-molecule (0) / same-molecule (1)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class PairFeatures:
    d_g: np.ndarray
    d_e: np.ndarray
    d_s: np.ndarray

    @property
    def size(self) -> int:
        return self.d_g.shape[0]

    @classmethod
    def null(cls) -> "PairFeatures":
        """Features of the single null token standing in for an empty shingle set."""
        return cls(np.zeros((1, 1)), np.ones((1, 1), dtype=np.int64), np.zeros((1, 1)))


def shingle_centroids(shingles: ShingleSet) -> np.ndarray:
    out = np.zeros((len(shingles), 3))
    for i, s in enumerate(shingles):
        coords = shingles.molecule(s).conformer.coords
        out[i] = coords[list(s.atom_indices)].mean(axis=0)
    return out


def pair_features(shingles: ShingleSet, reaction=None) -> PairFeatures:
    """Geometric distance, connectivity and structural distance between shingles.

    Molecule coordinates come from the shingle set's canonical reaction (input
    coordinates, or the graph-distance fallback when none were given). A
    ``reaction`` argument, if passed, must be that same canonical reaction.
    """
    if reaction is not None and reaction is not shingles.reaction:
        raise ValueError("shingle indices refer to a different reaction frame")
    n = len(shingles)
    if n == 0:
        return PairFeatures.null()
    owner = np.array([(0 if s.side == "reactant" else 1) * 1_000_000 + s.mol_index
                      for s in shingles])
    d_e = (owner[:, None] == owner[None, :]).astype(np.int64)
    cent = shingle_centroids(shingles)
    diff = cent[:, None, :] - cent[None, :, :]
    sq = diff ** 2
    d_g = np.sqrt(sq[..., 0] + sq[..., 1] + sq[..., 2]) * d_e
    fps = [shingle_fingerprint(s.key) for s in shingles]
    d_s = 1.0 - tanimoto_matrix(fps)
    np.fill_diagonal(d_s, 0.0)
    return PairFeatures(d_g, d_e, d_s)


@dataclass(eq=False)
class GkptParams:
    """Parameters of one GKPT branch: per-pair-type affine map, kernels, head projection."""

    e1: np.ndarray     # (N_e, K)
    e2: np.ndarray     # (N_e, K)
    mu: np.ndarray     # (K,)
    sigma: np.ndarray  # (K,)
    w: np.ndarray      # (K, heads)

    @classmethod
    def init(cls, n_kernels: int, heads: int, lo: float, hi: float,
             rng: np.random.Generator, std: float = 0.02, dtype=np.float64) -> "GkptParams":
        mu = np.linspace(lo, hi, n_kernels)
        spacing = (hi - lo) / max(n_kernels - 1, 1)
        return cls(
            e1=np.ones((N_PAIR_TYPES, n_kernels), dtype=dtype),
            e2=np.zeros((N_PAIR_TYPES, n_kernels), dtype=dtype),
            mu=mu.astype(dtype),
            sigma=np.full(n_kernels, spacing, dtype=dtype),
            w=(rng.standard_normal((n_kernels, heads)) * std).astype(dtype),
        )


def gaussian(x: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    sigma = np.maximum(sigma, SIGMA_FLOOR)
    z = (x - mu) / sigma
    return np.exp(-0.5 * z * z) * _INV_SQRT_2PI / sigma


def gkpt(x, e, params: GkptParams) -> np.ndarray:
    """Kernel responses, shape ``x.shape + (K,)``, for distances ``x`` of pair type ``e``."""
    x = np.asarray(x, dtype=np.float64)
    e = np.asarray(e, dtype=np.int64)
    shifted = params.e1[e] * x[..., None] + params.e2[e]
    return gaussian(shifted, params.mu, params.sigma)


def initial_bias(pf: PairFeatures, params_g: GkptParams | None,
                 params_s: GkptParams | None) -> np.ndarray:
    """Per-head bias ``(heads, N, N)`` summing the geometric and structural branches.

    Passing ``None`` for a branch drops it.
    """
    parts = []
    if params_g is not None:
        parts.append(gkpt(pf.d_g, pf.d_e, params_g) @ params_g.w)
    if params_s is not None:
        parts.append(gkpt(pf.d_s, pf.d_e, params_s) @ params_s.w)
    if not parts:
        raise ValueError("at least one branch is required")
    total = parts[0] if len(parts) == 1 else parts[0] + parts[1]
    return np.moveaxis(total, -1, 0)
