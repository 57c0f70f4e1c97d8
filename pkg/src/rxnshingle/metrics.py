"""Regression and classification metrics."""

from __future__ import annotations

import math

import numpy as np

from .exceptions import LengthMismatch

CEN_FORMULA = (
    "confusion entropy: CEN = sum_j P_j * CEN_j with "
    "P_j = (row_j + col_j) / (2 * total) and "
    "CEN_j = -sum_{k != j} [a log_b a + c log_b c], a = C[j,k] / (row_j + col_j), "
    "c = C[k,j] / (row_j + col_j), b = 2 * (N - 1), 0 log 0 = 0; "
    "two classes use base 2"
)


def _pair(preds, labels) -> tuple[np.ndarray, np.ndarray]:
    p, y = np.asarray(preds), np.asarray(labels)
    if p.shape != y.shape:
        raise LengthMismatch(f"predictions {p.shape} and labels {y.shape} differ")
    return p, y


def regression_metrics(preds, labels) -> dict[str, float]:
    p, y = _pair(np.asarray(preds, dtype=np.float64), np.asarray(labels, dtype=np.float64))
    if len(y) < 2:
        raise LengthMismatch("R^2 needs at least two labels")
    err = p - y
    ss_res = float(np.sum(err * err))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else 0.0
    return {"MAE": float(np.mean(np.abs(err))), "RMSE": math.sqrt(ss_res / len(y)), "R2": r2}


def confusion_matrix(preds, labels, n_classes: int | None = None) -> np.ndarray:
    p, y = _pair(np.asarray(preds, dtype=np.int64), np.asarray(labels, dtype=np.int64))
    n = n_classes or int(max(p.max(initial=0), y.max(initial=0)) + 1)
    cm = np.zeros((n, n), dtype=np.int64)
    np.add.at(cm, (y, p), 1)
    return cm


def mcc(cm: np.ndarray) -> float:
    """Multiclass Matthews correlation from a confusion matrix (rows = truth)."""
    cm = cm.astype(np.float64)
    t = cm.sum(axis=1)
    pr = cm.sum(axis=0)
    c = np.trace(cm)
    s = cm.sum()
    num = c * s - t @ pr
    den = math.sqrt((s * s - pr @ pr) * (s * s - t @ t))
    return float(num / den) if den > 0 else 0.0


def cen(cm: np.ndarray) -> float:
    """Confusion entropy; see :data:`CEN_FORMULA`."""
    cm = cm.astype(np.float64)
    n = len(cm)
    if n < 2:
        return 0.0
    total = cm.sum()
    if total == 0:
        return 0.0
    log_base = math.log(2 * (n - 1))
    out = 0.0
    for j in range(n):
        denom = cm[j].sum() + cm[:, j].sum()
        if denom == 0:
            continue
        cen_j = 0.0
        for k in range(n):
            if k == j:
                continue
            for v in (cm[j, k], cm[k, j]):
                if v > 0:
                    q = v / denom
                    cen_j -= q * math.log(q) / log_base
        out += denom / (2 * total) * cen_j
    return out


def classification_metrics(preds, labels, n_classes: int | None = None) -> dict[str, float]:
    cm = confusion_matrix(preds, labels, n_classes)
    total = cm.sum()
    acc = float(np.trace(cm) / total) if total else 0.0
    return {"ACC": acc, "MCC": mcc(cm), "CEN": cen(cm)}


def metrics(preds, labels, task: str) -> dict[str, float]:
    if task == "regression":
        return regression_metrics(preds, labels)
    if task == "classification":
        return classification_metrics(preds, labels)
    raise ValueError(f"unknown task {task!r}")
