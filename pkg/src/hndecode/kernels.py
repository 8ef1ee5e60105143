"""Numeric kernels for Shannon entropy.

This is the one hot inner loop in the package: entropy is evaluated once per
generated token position and in bulk by the property suite, so the kernels
come in two interchangeable implementations:

* a numba ``@njit`` version (default when numba imports cleanly), and
* a pure-numpy fallback.

Set ``HNDECODE_DISABLE_NUMBA=1`` before import to force the numpy path.
``KERNEL_IMPL`` records which one is active. Both paths accumulate in float64
and agree to ~1e-12; neither is bit-identical to the other, so a single
process always uses a single implementation.

Batch input is a ragged array in CSR form: ``flat`` holds the probabilities
of all rows back to back and ``offsets`` (length ``rows + 1``) marks row
boundaries. Entries with ``p <= 0`` contribute nothing (0 * log 0 := 0).
"""

from __future__ import annotations

import math
import os

import numpy as np

DISABLE_ENV = "HNDECODE_DISABLE_NUMBA"


def _numba_disabled() -> bool:
    return os.environ.get(DISABLE_ENV, "").strip().lower() in {"1", "true", "yes"}


def _entropy_scalar_py(probs: np.ndarray) -> float:
    s = 0.0
    for i in range(probs.size):
        p = probs[i]
        if p > 0.0:
            s -= p * math.log(p)
    return s if s > 0.0 else 0.0


def _entropy_batch_py(flat: np.ndarray, offsets: np.ndarray, out: np.ndarray) -> None:
    for r in range(out.size):
        s = 0.0
        for i in range(offsets[r], offsets[r + 1]):
            p = flat[i]
            if p > 0.0:
                s -= p * math.log(p)
        out[r] = s if s > 0.0 else 0.0


def _entropy_scalar_np(probs: np.ndarray) -> float:
    pos = probs[probs > 0.0]
    if pos.size == 0:
        return 0.0
    h = float(-np.dot(pos, np.log(pos)))
    return h if h > 0.0 else 0.0


def _entropy_batch_np(flat: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    rows = offsets.size - 1
    if rows == 0:
        return np.empty(0, dtype=np.float64)
    safe = np.where(flat > 0.0, flat, 1.0)
    # trailing zero keeps every reduceat index in bounds when the last
    # row is empty; it adds nothing to the final segment's sum
    terms = np.append(-(safe * np.log(safe)), 0.0)
    lengths = np.diff(offsets)
    # reduceat yields terms[i] (not 0) for interior empty segments
    out = np.add.reduceat(terms, offsets[:-1])
    if (lengths == 0).any():
        out = np.where(lengths == 0, 0.0, out)
    return np.maximum(out, 0.0)


if not _numba_disabled():
    try:
        from numba import njit

        _entropy_scalar_jit = njit(cache=True)(_entropy_scalar_py)
        _entropy_batch_jit = njit(cache=True)(_entropy_batch_py)
        KERNEL_IMPL = "numba"
    except ImportError:  # pragma: no cover - exercised only without numba
        KERNEL_IMPL = "numpy"
else:
    KERNEL_IMPL = "numpy"


def entropy_from_probs(probs: np.ndarray) -> float:
    """Shannon entropy in nats of one probability vector."""
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    if KERNEL_IMPL == "numba":
        return float(_entropy_scalar_jit(probs))
    return _entropy_scalar_np(probs)


def entropy_batch(flat: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Per-row Shannon entropy of a ragged batch in CSR form."""
    flat = np.ascontiguousarray(flat, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if offsets.size == 0 or offsets.size == 1:
        return np.empty(0, dtype=np.float64)
    if KERNEL_IMPL == "numba":
        out = np.empty(offsets.size - 1, dtype=np.float64)
        _entropy_batch_jit(flat, offsets, out)
        return out
    return _entropy_batch_np(flat, offsets)
