"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

from typing import Iterable

import numpy as np
from sklearn.utils import check_array

from .exceptions import EmptyDataset, LengthMismatch
from .molecule import LabeledReaction, Reaction


def check_reactions(X: Iterable, allow_empty: bool = False) -> list[Reaction]:
    """Coerce reaction SMILES strings, :class:`Reaction` or :class:`LabeledReaction` items."""
    if isinstance(X, (str, Reaction)):
        raise TypeError("expected a sequence of reactions, got a single reaction")
    out = []
    for i, item in enumerate(X):
        if isinstance(item, Reaction):
            out.append(item)
        elif isinstance(item, LabeledReaction):
            out.append(item.reaction)
        elif isinstance(item, str):
            out.append(Reaction.from_smiles(item, id=f"rxn{i}"))
        elif isinstance(item, np.ndarray) and item.shape == (1,):
            out.append(Reaction.from_smiles(str(item[0]), id=f"rxn{i}"))
        else:
            raise TypeError(f"item {i}: cannot interpret {type(item).__name__} as a reaction")
    if not out and not allow_empty:
        raise EmptyDataset("no reactions given")
    return out


def check_labels(y, n: int, task: str = "regression") -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        arr = arr.ravel()
    if len(arr) != n:
        raise LengthMismatch(f"{n} reactions but {len(arr)} labels")
    if task == "regression":
        arr = arr.astype(np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("labels must be finite")
    return arr


def check_fingerprints(X) -> np.ndarray:
    return check_array(X, dtype=np.float64, ensure_2d=True)
