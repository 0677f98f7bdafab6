"""Finite-difference derivative checks for scalar functions of a matrix.

These are the independent oracles the analytic gradients and Laplacians
are tested against, plus the fallback used when a prior has no
closed-form Laplacian trace.  Steps default to 1e-5 * max(1, ||M||_F)
for first derivatives and 1e-3 * max(1, ||M||_F) for second derivatives;
the second-derivative stencils are high order so that the default step
keeps truncation error far below the comparison tolerances.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

# 9-point central second-derivative stencil (8th order).
_D2_OFFSETS = np.array([-4, -3, -2, -1, 0, 1, 2, 3, 4], dtype=float)
_D2_WEIGHTS = np.array(
    [-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560]
)

Scalar = Callable[[np.ndarray], float]


def _first_step(M: np.ndarray) -> float:
    return 1e-5 * max(1.0, float(np.linalg.norm(M)))


def _second_step(M: np.ndarray) -> float:
    return 1e-3 * max(1.0, float(np.linalg.norm(M)))


def grad_fd(f: Scalar, M: np.ndarray, step: float | None = None) -> np.ndarray:
    """Central-difference gradient of f at M, entry by entry."""
    M = np.asarray(M, dtype=float)
    h = _first_step(M) if step is None else step
    g = np.zeros_like(M)
    E = np.zeros_like(M)
    for idx in np.ndindex(M.shape):
        E[idx] = h
        g[idx] = (f(M + E) - f(M - E)) / (2.0 * h)
        E[idx] = 0.0
    return g


def second_diag_fd(f: Scalar, M: np.ndarray, step: float | None = None) -> np.ndarray:
    """Pure second derivatives d2f/dM_ai^2 via the 9-point stencil."""
    M = np.asarray(M, dtype=float)
    h = _second_step(M) if step is None else step
    out = np.zeros_like(M)
    E = np.zeros_like(M)
    for idx in np.ndindex(M.shape):
        acc = 0.0
        for o, w in zip(_D2_OFFSETS, _D2_WEIGHTS):
            if o == 0.0:
                acc += w * f(M)
            else:
                E[idx] = o * h
                acc += w * f(M + E)
                E[idx] = 0.0
        out[idx] = acc / h**2
    return out


def laplacian_fd(f: Scalar, M: np.ndarray, step: float | None = None) -> float:
    """Finite-difference Laplacian: sum of all pure second derivatives."""
    return float(np.sum(second_diag_fd(f, M, step)))


def _mixed_fd(f: Scalar, M: np.ndarray, a: int, i: int, b: int, j: int, h: float) -> float:
    """Mixed partial d2f/dM_ai dM_bj, Richardson-extrapolated cross stencil."""

    def cross(hh: float) -> float:
        E1 = np.zeros_like(M)
        E2 = np.zeros_like(M)
        E1[a, i] = hh
        E2[b, j] = hh
        return (f(M + E1 + E2) - f(M + E1 - E2) - f(M - E1 + E2) + f(M - E1 - E2)) / (4.0 * hh**2)

    d1 = cross(h)
    d2 = cross(h / 2.0)
    return (4.0 * d2 - d1) / 3.0


def matrix_laplacian_fd(f: Scalar, M: np.ndarray, step: float | None = None) -> np.ndarray:
    """Finite-difference matrix Laplacian, the p x p array
    (sum_a d2 f / dM_ai dM_aj)_{ij}."""
    M = np.asarray(M, dtype=float)
    n, p = M.shape
    h = _second_step(M) if step is None else step
    out = np.zeros((p, p))
    diag = second_diag_fd(f, M, h)
    for i in range(p):
        out[i, i] = float(np.sum(diag[:, i]))
    for i in range(p):
        for j in range(i + 1, p):
            s = 0.0
            for a in range(n):
                s += _mixed_fd(f, M, a, i, a, j, h)
            out[i, j] = out[j, i] = s
    return out
