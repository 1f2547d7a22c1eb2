"""Compiled tridiagonal kernels on flat (concatenated-block) storage.

A set of independent tridiagonal blocks laid end to end is itself one
tridiagonal matrix whose couplings across block boundaries are zero, so every
kernel here works on a single length-N band with ``lower[0] == upper[-1] == 0``
by convention (entry ``lower[k]`` is ``M[k, k-1]``, ``upper[k]`` is ``M[k, k+1]``).
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def matvec(lower, diag, upper, x, out):
    n = x.shape[0]
    if n == 1:
        out[0] = diag[0] * x[0]
        return out
    out[0] = diag[0] * x[0] + upper[0] * x[1]
    for k in range(1, n - 1):
        out[k] = lower[k] * x[k - 1] + diag[k] * x[k] + upper[k] * x[k + 1]
    out[n - 1] = lower[n - 1] * x[n - 2] + diag[n - 1] * x[n - 1]
    return out


@njit(cache=True, nogil=True)
def shifted_matvec(lower, diag, upper, x, c, out):
    """out = x + c * M x"""
    n = x.shape[0]
    if n == 1:
        out[0] = x[0] + c * diag[0] * x[0]
        return out
    out[0] = x[0] + c * (diag[0] * x[0] + upper[0] * x[1])
    for k in range(1, n - 1):
        out[k] = x[k] + c * (lower[k] * x[k - 1] + diag[k] * x[k] + upper[k] * x[k + 1])
    out[n - 1] = x[n - 1] + c * (lower[n - 1] * x[n - 2] + diag[n - 1] * x[n - 1])
    return out


@njit(cache=True, nogil=True)
def thomas_factor(lower, diag, upper, c, mult, piv):
    """LU of ``I - c M`` without pivoting.

    Fills ``mult`` (unit-lower multipliers) and ``piv`` (diagonal of U); the
    superdiagonal of U is ``-c * upper``. Returns the index of the first
    non-positive pivot, or -1.
    """
    n = diag.shape[0]
    mult[0] = 0.0
    piv[0] = 1.0 - c * diag[0]
    bad = -1
    if piv[0] <= 0.0:
        bad = 0
    for k in range(1, n):
        m = (-c * lower[k]) / piv[k - 1]
        mult[k] = m
        piv[k] = (1.0 - c * diag[k]) - m * (-c * upper[k - 1])
        if bad < 0 and piv[k] <= 0.0:
            bad = k
    return bad


@njit(cache=True, nogil=True)
def thomas_solve(mult, piv, upper, c, rhs, out):
    n = rhs.shape[0]
    out[0] = rhs[0]
    for k in range(1, n):
        out[k] = rhs[k] - mult[k] * out[k - 1]
    out[n - 1] = out[n - 1] / piv[n - 1]
    for k in range(n - 2, -1, -1):
        out[k] = (out[k] + c * upper[k] * out[k + 1]) / piv[k]
    return out


@njit(cache=True, nogil=True)
def transpose_into(x, n_rows, n_cols, out):
    """Treat ``x`` as C-ordered (n_rows, n_cols) and write its transpose into ``out``."""
    for r in range(n_rows):
        base = r * n_cols
        for q in range(n_cols):
            out[q * n_rows + r] = x[base + q]
    return out


def empty(n):
    return np.empty(n, dtype=np.float64)
