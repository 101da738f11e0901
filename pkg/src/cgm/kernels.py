"""Hot sequential loops, in two interchangeable implementations.

The numba path compiles plain double loops. The numpy path sweeps
anti-diagonals with vectorized updates; it performs the same floating
point operations cell by cell, so both backends return bit-identical
arrays.

Set ``CGM_BACKEND=numpy`` to force the fallback (``numba`` is the default
when importable).
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False


# --- numpy wavefront implementations --------------------------------------

def _diagonal(d: int, rows: int, cols: int, first: int = 1):
    lo = max(first, d - cols + 1)
    hi = min(rows - 1, d - first)
    i = np.arange(lo, hi + 1)
    return i, d - i


def corner_sweep_numpy(Y: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Fill ``T[i, j] = Y[i, j] + max(T[i-1, j], T[i, j-1])`` for i, j >= 1.

    Row 0 and column 0 of ``T`` must already hold the boundary values.
    """
    rows, cols = T.shape
    for d in range(2, rows + cols - 1):
        i, j = _diagonal(d, rows, cols)
        if i.size:
            T[i, j] = Y[i, j] + np.maximum(T[i - 1, j], T[i, j - 1])
    return T


def wet_sweep_numpy(open_: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Oriented reachability from ``R[0, 0]``; the seed's own state is ignored."""
    rows, cols = R.shape
    R[1:, 0] = np.logical_and.accumulate(open_[1:, 0]) & R[0, 0]
    R[0, 1:] = np.logical_and.accumulate(open_[0, 1:]) & R[0, 0]
    for d in range(2, rows + cols - 1):
        i, j = _diagonal(d, rows, cols)
        if i.size:
            R[i, j] = open_[i, j] & (R[i - 1, j] | R[i, j - 1])
    return R


def tandem_sweep_numpy(A: np.ndarray, S: np.ndarray, W: np.ndarray) -> None:
    """Run the tandem recursion in place.

    ``A`` has shape (N-1, K+1) with column 0 holding the input inter-arrivals,
    ``S`` and ``W`` have shape (N, K) and ``W[0, :]`` holds the initial waits.
    """
    steps, stations = A.shape[0], S.shape[1]
    # cell (n, k) depends on (n-1, k) and (n, k-1): sweep n + k
    for d in range(steps + stations - 1):
        k = np.arange(max(0, d - steps + 1), min(stations - 1, d) + 1)
        n = d - k
        x = W[n, k] + S[n, k] - A[n, k]
        W[n + 1, k] = np.maximum(x, 0.0)
        A[n, k + 1] = np.maximum(-x, 0.0) + S[n + 1, k]


# --- numba implementations ------------------------------------------------

def _corner_sweep_loop(Y, T):
    rows, cols = T.shape
    for i in range(1, rows):
        for j in range(1, cols):
            a = T[i - 1, j]
            b = T[i, j - 1]
            T[i, j] = Y[i, j] + (a if a >= b else b)
    return T


def _wet_sweep_loop(open_, R):
    rows, cols = R.shape
    for i in range(rows):
        for j in range(cols):
            if i == 0 and j == 0:
                continue
            left = R[i - 1, j] if i > 0 else False
            down = R[i, j - 1] if j > 0 else False
            R[i, j] = open_[i, j] and (left or down)
    return R


def _tandem_sweep_loop(A, S, W):
    steps = A.shape[0]
    stations = S.shape[1]
    for k in range(stations):
        for n in range(steps):
            x = W[n, k] + S[n, k] - A[n, k]
            W[n + 1, k] = max(x, 0.0)
            A[n, k + 1] = max(-x, 0.0) + S[n + 1, k]


numpy_kernels = SimpleNamespace(
    name="numpy",
    corner_sweep=corner_sweep_numpy,
    wet_sweep=wet_sweep_numpy,
    tandem_sweep=tandem_sweep_numpy,
)

if HAVE_NUMBA:
    numba_kernels = SimpleNamespace(
        name="numba",
        corner_sweep=njit(cache=True)(_corner_sweep_loop),
        wet_sweep=njit(cache=True)(_wet_sweep_loop),
        tandem_sweep=njit(cache=True)(_tandem_sweep_loop),
    )
else:  # pragma: no cover
    numba_kernels = None


def select_backend(name: str | None = None) -> SimpleNamespace:
    """Return the kernel namespace for ``name`` (default: from ``CGM_BACKEND``)."""
    name = (name or os.environ.get("CGM_BACKEND") or "numba").strip().lower()
    if name == "numpy" or not HAVE_NUMBA:
        return numpy_kernels
    if name != "numba":
        raise ValueError(f"unknown backend {name!r}; expected 'numba' or 'numpy'")
    return numba_kernels


active = select_backend()


def corner_sweep(Y: np.ndarray, T: np.ndarray) -> np.ndarray:
    return active.corner_sweep(Y, T)


def wet_sweep(open_: np.ndarray, R: np.ndarray) -> np.ndarray:
    return active.wet_sweep(open_, R)


def tandem_sweep(A: np.ndarray, S: np.ndarray, W: np.ndarray) -> None:
    active.tandem_sweep(A, S, W)
