"""Readout feature maps: bias plus linear, optionally plus quadratic monomials.

Column order is fixed: bias, the m readouts in observable order, then the
m(m+1)/2 products ``v_a * v_b`` for ``a <= b`` in lexicographic order.
"""

from __future__ import annotations

import numpy as np

__all__ = ["MODES", "feature_count", "linear_features", "poly_features", "build_features",
           "feature_names", "quadratic_pairs"]

MODES = ("linear", "polynomial")


def quadratic_pairs(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (a, b), a <= b, in lexicographic order."""
    return np.triu_indices(m)


def feature_count(n_atom: int, mode: str = "linear") -> int:
    """Number of features excluding the bias: 2N+2 or 2N^2+7N+5."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "linear":
        return 2 * n_atom + 2
    return 2 * n_atom**2 + 7 * n_atom + 5


def _check(sample: np.ndarray, n_readouts: int | None) -> np.ndarray:
    s = np.asarray(sample, dtype=float)
    if n_readouts is not None and s.shape[-1] != n_readouts:
        raise ValueError(f"expected {n_readouts} readouts, got {s.shape[-1]}")
    return s


def linear_features(sample, n_readouts: int | None = None) -> np.ndarray:
    """``[1, v_1, ..., v_m]``; works row-wise on a 2-D array of samples."""
    s = _check(sample, n_readouts)
    ones = np.ones(s.shape[:-1] + (1,))
    return np.concatenate([ones, s], axis=-1)


def poly_features(sample, n_readouts: int | None = None) -> np.ndarray:
    """``[1, v, v_a v_b for a <= b]``; works row-wise on a 2-D array of samples."""
    s = _check(sample, n_readouts)
    a, b = quadratic_pairs(s.shape[-1])
    quad = s[..., a] * s[..., b]
    return np.concatenate([linear_features(s), quad], axis=-1)


def build_features(readouts, mode: str) -> np.ndarray:
    if mode == "linear":
        return linear_features(readouts)
    if mode == "polynomial":
        return poly_features(readouts)
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def feature_names(readout_names, mode: str) -> list[str]:
    names = ["bias"] + list(readout_names)
    if mode == "polynomial":
        a, b = quadratic_pairs(len(readout_names))
        names += [f"{readout_names[i]}*{readout_names[j]}" for i, j in zip(a, b)]
    elif mode != "linear":
        raise ValueError(f"unknown mode {mode!r}")
    return names
