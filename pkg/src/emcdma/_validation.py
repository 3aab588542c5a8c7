"""Input checks shared by the estimators."""
from __future__ import annotations

import numpy as np


def check_symbols(y, name: str = "y") -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        y = y.ravel()
    y = y.astype(complex, copy=False)
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{name} contains NaN or inf")
    return y


def check_priors(s, n: int, atol: float = 1e-6) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape != (n, 4):
        raise ValueError(f"priors must have shape ({n}, 4), got {s.shape}")
    if (s < 0).any() or not np.allclose(s.sum(axis=1), 1.0, atol=atol):
        raise ValueError("each prior row must be a probability vector")
    return s


def check_llrs(v, n: int | None = None, name: str = "llr") -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    if n is not None and v.size != n:
        raise ValueError(f"{name} must have {n} entries, got {v.size}")
    if np.isnan(v).any():
        raise ValueError(f"{name} contains NaN")
    return v


def check_block_ids(ids, n: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64).ravel()
    if ids.size != n:
        raise ValueError(f"block ids must have {n} entries, got {ids.size}")
    if n and ids.min() < 0:
        raise ValueError("block ids must be non-negative")
    return ids
