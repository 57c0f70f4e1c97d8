"""Permutation-invariance harness: shuffle molecules and relabel atoms, compare predictions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .fingerprints import fnv1a_64
from .molecule import Conformer, Reaction


def perturb_reaction(rxn: Reaction, rng: np.random.Generator) -> Reaction:
    """Same reaction with molecule order shuffled per side and atoms relabeled per molecule.

    Coordinates follow their atoms, so the geometry is unchanged.
    """
    def shuffle_side(mols: Sequence[Conformer]) -> tuple[Conformer, ...]:
        out = []
        for i in rng.permutation(len(mols)):
            conf = mols[i]
            out.append(conf.reorder(rng.permutation(conf.n_atoms).tolist()))
        return tuple(out)

    return Reaction(shuffle_side(rxn.reactants), shuffle_side(rxn.products), rxn.id)


@dataclass
class PermTestReport:
    stds: np.ndarray             # per reaction
    predictions: np.ndarray      # (n_reactions, n_perms)
    ids: list[str]

    @property
    def max_std(self) -> float:
        return float(self.stds.max()) if len(self.stds) else 0.0

    @property
    def fraction_nonzero(self) -> float:
        return float(np.mean(self.stds > 0)) if len(self.stds) else 0.0

    def to_dict(self) -> dict:
        return {
            "n_reactions": len(self.stds),
            "n_perms": int(self.predictions.shape[1]) if self.predictions.ndim == 2 else 0,
            "max_std": self.max_std,
            "mean_std": float(self.stds.mean()) if len(self.stds) else 0.0,
            "fraction_nonzero": self.fraction_nonzero,
            "per_reaction": [{"id": i, "std": float(s)} for i, s in zip(self.ids, self.stds)],
        }


def permutation_test(predict: Callable[[list[Reaction]], np.ndarray], reactions: Sequence[Reaction],
                     n_perms: int = 5, seed: int = 0) -> PermTestReport:
    """Predict ``n_perms`` random perturbations of every reaction and report the spread.

    The spread is the population std of predictions relative to the first
    perturbation, which is exactly 0.0 when all predictions are identical.
    """
    if n_perms < 2:
        raise ValueError(f"n_perms must be >= 2, got {n_perms}")
    rng = np.random.default_rng(seed)
    variants = [perturb_reaction(r, rng) for r in reactions for _ in range(n_perms)]
    preds = np.asarray(predict(variants), dtype=np.float64).reshape(len(reactions), n_perms)
    stds = np.std(preds - preds[:, :1], axis=1)
    return PermTestReport(stds, preds, [r.id for r in reactions])


class OrderSensitivePredictor:
    """Reference predictor that hashes the raw (non-canonical) reaction SMILES.

    Any change in molecule order or atom numbering changes its output, which
    makes it a positive control for the harness.
    """

    def predict(self, reactions: Sequence[Reaction]) -> np.ndarray:
        return np.array([(fnv1a_64(r.to_smiles()) % 1_000_003) / 1_000_003.0 for r in reactions])
