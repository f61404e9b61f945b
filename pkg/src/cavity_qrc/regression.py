"""Ridge-regularized least squares readout, prediction and NRMSE."""

from __future__ import annotations

import csv
import warnings
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

__all__ = ["DEFAULT_RIDGE", "RegressionError", "train_ridge", "predict", "nrmse",
           "save_weights", "load_weights"]

DEFAULT_RIDGE = 1e-10


class RegressionError(RuntimeError):
    pass


def train_ridge(X, y_target, delta: float = DEFAULT_RIDGE) -> np.ndarray:
    """Solve ``(X^T X + delta I) W = X^T y`` by Cholesky factorization."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y_target, dtype=float)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise RegressionError("design matrix or target contains non-finite values")
    L, n = X.shape
    if L < n:
        warnings.warn(f"underdetermined design: {L} rows for {n} columns", stacklevel=2)
    G = X.T @ X
    G[np.diag_indices_from(G)] += delta
    try:
        W = cho_solve(cho_factor(G), X.T @ y)
    except LinAlgError as exc:
        raise RegressionError(f"regularized normal matrix is not positive definite: {exc}") from exc
    if not np.all(np.isfinite(W)):
        raise RegressionError("non-finite weights")
    return W


def predict(X, W) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    W = np.asarray(W, dtype=float)
    if X.shape[-1] != W.shape[0]:
        raise ValueError(f"X has {X.shape[-1]} columns but W has length {W.shape[0]}")
    return X @ W


def nrmse(y, y_target) -> float:
    """RMS error divided by the target range (extrema of ``y_target``)."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(y_target, dtype=float)
    if y.shape != t.shape or y.ndim != 1:
        raise ValueError(f"shape mismatch: {y.shape} vs {t.shape}")
    if len(t) < 2:
        raise ValueError("need at least two points")
    span = t.max() - t.min()
    if span <= 0:
        raise ValueError("target is constant; NRMSE undefined")
    return float(np.sqrt(np.mean((y - t) ** 2)) / span)


def save_weights(W, path, names=None) -> Path:
    """CSV with columns (index, feature, weight)."""
    path = Path(path)
    names = names or [f"x{i}" for i in range(len(W))]
    if len(names) != len(W):
        raise ValueError("one name per weight required")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "feature", "weight"])
        for i, (nm, val) in enumerate(zip(names, W)):
            w.writerow([i, nm, repr(float(val))])
    return path


def load_weights(path) -> tuple[np.ndarray, list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([float(r[2]) for r in rows]), [r[1] for r in rows]
