"""Multiple-testing p-value adjustment.

All adjusters return adjusted p-values in the input's positions.  They accept
a 1-d vector or a 2-d array, in which case each row is adjusted as its own
family (the Monte Carlo harness corrects thousands of curves at once).
"""

from __future__ import annotations

import enum

import numpy as np


class Method(str, enum.Enum):
    NONE = "none"
    BONFERRONI = "bonferroni"
    HOLM = "holm"
    BH = "bh"
    BY = "by"

    @classmethod
    def parse(cls, value: "Method | str") -> "Method":
        if isinstance(value, Method):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown correction method {value!r}") from None


def _prepare(p) -> tuple[np.ndarray, bool]:
    arr = np.asarray(p, dtype=float)
    squeeze = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.ndim != 2:
        raise ValueError("p-values must be a vector or a 2-d array of vectors")
    if np.any((arr < 0) | (arr > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    return arr, squeeze


def _unsort(sorted_vals: np.ndarray, order: np.ndarray) -> np.ndarray:
    out = np.empty_like(sorted_vals)
    np.put_along_axis(out, order, sorted_vals, axis=1)
    return out


def bonferroni(p) -> np.ndarray:
    arr, squeeze = _prepare(p)
    out = np.minimum(1.0, arr.shape[1] * arr)
    return out[0] if squeeze else out


def holm(p) -> np.ndarray:
    arr, squeeze = _prepare(p)
    m = arr.shape[1]
    order = np.argsort(arr, axis=1, kind="stable")
    ps = np.take_along_axis(arr, order, axis=1)
    factors = m - np.arange(m)
    q = np.maximum.accumulate(np.minimum(1.0, factors * ps), axis=1)
    out = _unsort(q, order)
    return out[0] if squeeze else out


def _step_up(arr: np.ndarray, scale: float) -> np.ndarray:
    m = arr.shape[1]
    order = np.argsort(arr, axis=1, kind="stable")
    ps = np.take_along_axis(arr, order, axis=1)
    raw = np.minimum(1.0, scale * m * ps / np.arange(1, m + 1))
    q = np.minimum.accumulate(raw[:, ::-1], axis=1)[:, ::-1]
    return _unsort(q, order)


def bh(p) -> np.ndarray:
    arr, squeeze = _prepare(p)
    out = _step_up(arr, 1.0)
    return out[0] if squeeze else out


def by(p) -> np.ndarray:
    arr, squeeze = _prepare(p)
    c = float(np.sum(1.0 / np.arange(1, arr.shape[1] + 1)))
    out = _step_up(arr, c)
    return out[0] if squeeze else out


_ADJUSTERS = {
    Method.BONFERRONI: bonferroni,
    Method.HOLM: holm,
    Method.BH: bh,
    Method.BY: by,
}


def adjust(p, method: Method | str) -> np.ndarray:
    """Adjust ``p`` (vector or rows of vectors) with ``method``."""
    method = Method.parse(method)
    if method is Method.NONE:
        arr, squeeze = _prepare(p)
        return arr[0].copy() if squeeze else arr.copy()
    return _ADJUSTERS[method](p)


def adjust_with_gaps(p, method: Method | str) -> np.ndarray:
    """Adjust a vector containing NaN gaps; each run between gaps is its own family."""
    arr = np.asarray(p, dtype=float)
    out = np.full(arr.shape, np.nan)
    valid = ~np.isnan(arr)
    idx = np.flatnonzero(valid)
    if idx.size == 0:
        return out
    breaks = np.flatnonzero(np.diff(idx) > 1) + 1
    for run in np.split(idx, breaks):
        out[run] = adjust(arr[run], method)
    return out
