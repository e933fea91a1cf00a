"""Input validation helpers."""
from __future__ import annotations

import numpy as np
import pandas as pd

from .exceptions import InvalidInput


def as_2d_float(X, name="X") -> np.ndarray:
    if isinstance(X, pd.DataFrame):
        X = X.to_numpy()
    elif hasattr(X, "values") and not isinstance(X, np.ndarray):
        X = X.values
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InvalidInput(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains NaN or infinite values")
    return np.ascontiguousarray(arr)


def as_1d_float(y, name="y") -> np.ndarray:
    arr = np.asarray(y, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains NaN or infinite values")
    return np.ascontiguousarray(arr)


def check_xy(X, y):
    Xa = as_2d_float(X)
    ya = as_1d_float(y)
    if Xa.shape[0] != ya.shape[0]:
        raise InvalidInput(f"X has {Xa.shape[0]} rows but y has {ya.shape[0]}")
    return Xa, ya


def column_names(X, p: int) -> list[str]:
    if isinstance(X, pd.DataFrame):
        return [str(c) for c in X.columns]
    names = getattr(X, "columns", None)
    if names is not None and len(names) == p:
        return list(names)
    return [f"x{j}" for j in range(p)]
