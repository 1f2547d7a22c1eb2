"""Linear algebra for the split and unsplit implicit stages.

* pivot-free tridiagonal LU of ``I - c A_i`` (factor once, solve many);
* the grid-transpose permutation that makes ``A2`` tridiagonal;
* unpreconditioned BiCGStab and a banded LU for the unsplit system;
* a dense matrix-exponential oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .operators import DirectionalOperator

DENSE_CAP = 4096


class FactorizationError(ArithmeticError):
    """A non-positive pivot appeared; the operator breaks the assembly invariants."""


class BreakdownError(ArithmeticError):
    """BiCGStab hit a vanishing inner product before converging."""

    def __init__(self, msg, x, iterations, residual):
        super().__init__(msg)
        self.x = x
        self.iterations = iterations
        self.residual = residual


class OracleCapError(ValueError):
    pass


@dataclass(frozen=True)
class TridiagonalFactors:
    """LU factors of ``I - shift * op`` in the operator's own ordering.

    ``multipliers`` hold the unit-lower factor, ``pivots`` the diagonal of the
    upper factor; its superdiagonal is ``-shift * op.upper``.
    """

    op: DirectionalOperator
    shift: float
    multipliers: np.ndarray
    pivots: np.ndarray

    @property
    def n(self) -> int:
        return self.op.n

    def solve_own(self, rhs: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        if out is None:
            out = np.empty_like(rhs)
        _, _, up = self.op.flat
        return _kernels.thomas_solve(self.multipliers, self.pivots, up, self.shift, rhs, out)

    def dense_lu(self) -> tuple[np.ndarray, np.ndarray]:
        """``(L, U)`` as dense matrices in own ordering (small grids, for checking)."""
        n = self.n
        L = np.eye(n) + np.diag(self.multipliers[1:], -1)
        U = np.diag(self.pivots) + np.diag(-self.shift * self.op.flat[2][:-1], 1)
        return L, U


def factor_shifted(op: DirectionalOperator, c: float) -> TridiagonalFactors:
    """Factor every block of ``I - c * op`` by the Thomas algorithm, O(N)."""
    if not c > 0:
        raise ValueError(f"shift must be positive, got {c}")
    lo, di, up = op.flat
    n = op.n
    mult = np.empty(n)
    piv = np.empty(n)
    bad = _kernels.thomas_factor(lo, di, up, float(c), mult, piv)
    if bad >= 0:
        raise FactorizationError(f"non-positive pivot {float(piv[bad])!r} at index {bad}")
    mult.setflags(write=False)
    piv.setflags(write=False)
    return TridiagonalFactors(op, float(c), mult, piv)


def solve_factored(f: TridiagonalFactors, rhs) -> np.ndarray:
    """Solve ``(I - c A_i) x = rhs`` for a natural-order ``rhs``."""
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    if rhs.shape != (f.n,):
        raise ValueError(f"rhs of shape {rhs.shape} does not match {f.n} unknowns")
    return f.op.to_natural(f.solve_own(f.op.from_natural(rhs)))


def solve_lines(op: DirectionalOperator, c: float, rhs) -> np.ndarray:
    """Reference path: solve the line systems directly on the 2-D grid.

    No reordering is done; for ``A2`` the ``n_x`` column systems are eliminated
    in place along axis 0 of the ``(n_y, n_x)`` grid, vectorized across columns.
    """
    n_y, n_x = op.n_y, op.n_x
    grid = np.asarray(rhs, dtype=np.float64).reshape(n_y, n_x)
    if op.direction == "x":
        sub, dia, sup, b = op.lower.T, op.diag.T, op.upper.T, grid.T
    else:
        sub, dia, sup, b = op.lower.T, op.diag.T, op.upper.T, grid
    # rows of these views index the position along the line
    m = b.shape[0]
    a = -c * sub
    d = 1.0 - c * dia
    u = -c * sup
    piv = np.empty_like(d)
    y = np.empty_like(b)
    piv[0] = d[0]
    y[0] = b[0]
    for k in range(1, m):
        mult = a[k] / piv[k - 1]
        piv[k] = d[k] - mult * u[k - 1]
        y[k] = b[k] - mult * y[k - 1]
    x = np.empty_like(b)
    x[m - 1] = y[m - 1] / piv[m - 1]
    for k in range(m - 2, -1, -1):
        x[k] = (y[k] - u[k] * x[k + 1]) / piv[k]
    return (x.T if op.direction == "x" else x).ravel()


@dataclass(frozen=True)
class GridPermutation:
    """Index maps between x-fastest and y-fastest orderings (0-based).

    ``forward[l]`` is the y-fastest position of natural index ``l``; applying the
    permutation to a vector means ``out[forward] = x``.
    """

    n_x: int
    n_y: int
    forward: np.ndarray
    inverse: np.ndarray

    def apply(self, x) -> np.ndarray:
        out = np.empty(len(self.forward))
        out[self.forward] = x
        return out

    def apply_inverse(self, y) -> np.ndarray:
        return np.asarray(y)[self.forward]

    def permute_matrix(self, m) -> sp.csr_matrix:
        p = sp.csr_matrix(
            (np.ones(len(self.forward)), (self.forward, np.arange(len(self.forward)))),
            shape=(len(self.forward),) * 2,
        )
        return (p @ sp.csr_matrix(m) @ p.T).tocsr()


def transpose_permutation(n_x: int, n_y: int) -> GridPermutation:
    """Natural index ``j*n_x + i`` goes to ``i*n_y + j``."""
    if n_x < 1 or n_y < 1:
        raise ValueError("grid dimensions must be positive")
    nat = np.arange(n_x * n_y)
    fwd = (nat % n_x) * n_y + nat // n_x
    inv = np.empty_like(fwd)
    inv[fwd] = nat
    return GridPermutation(n_x, n_y, fwd, inv)


def bandwidth(m) -> int:
    m = sp.coo_matrix(m)
    if m.nnz == 0:
        return 0
    return int(np.max(np.abs(m.row - m.col)))


def bicgstab(apply, b, tol: float = 1e-7, maxiter: int = 300000, x0=None):
    """Unpreconditioned BiCGStab.

    Returns ``(x, iterations, relative_residual)``; stops when
    ``||b - A x|| <= tol * ||b||`` or after ``maxiter`` iterations, in which case
    the iterate with the smallest residual seen is returned. A vanishing
    ``rho`` or ``omega`` raises :class:`BreakdownError`.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if maxiter < 1:
        raise ValueError("maxiter must be at least 1")
    b = np.asarray(b, dtype=np.float64)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - apply(x)
    res = np.linalg.norm(r) / bnorm
    if res <= tol:
        return x, 0, res
    best_x, best_res = x.copy(), res
    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    tiny = np.finfo(float).tiny
    for it in range(1, maxiter + 1):
        rho_new = r_hat @ r
        if abs(rho_new) <= tiny or omega == 0.0:
            raise BreakdownError(f"rho breakdown at iteration {it}", best_x, it, best_res)
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        v = apply(p)
        denom = r_hat @ v
        if denom == 0.0:
            raise BreakdownError(f"alpha breakdown at iteration {it}", best_x, it, best_res)
        alpha = rho / denom
        s = r - alpha * v
        snorm = np.linalg.norm(s) / bnorm
        if snorm <= tol:
            x = x + alpha * p
            return x, it, snorm
        t = apply(s)
        tt = t @ t
        omega = (t @ s) / tt if tt > 0 else 0.0
        x = x + alpha * p + omega * s
        r = s - omega * t
        res = np.linalg.norm(r) / bnorm
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res <= tol:
            return x, it, res
    return best_x, maxiter, best_res


class BandedLU:
    """Factor-once banded LU (LAPACK ``gbtrf``) of ``I - c (A1 + A2)``.

    Bandwidth equals ``n_x`` in natural ordering, so storage is
    ``(3 n_x + 1) * N`` doubles; ``max_unknowns`` guards against huge grids.
    """

    def __init__(self, a: sp.spmatrix, c: float, n_x: int, max_unknowns: int = 20000):
        n = a.shape[0]
        if n > max_unknowns:
            raise OracleCapError(f"banded LU limited to {max_unknowns} unknowns, got {n}")
        kl = ku = max(n_x, 1) if n > 1 else 0
        m = (sp.identity(n, format="csr") - c * a).tocoo()
        ab = np.zeros((2 * kl + ku + 1, n))
        ab[kl + ku + m.row - m.col, m.col] = m.data
        gbtrf, gbtrs = scipy.linalg.get_lapack_funcs(("gbtrf", "gbtrs"), (ab,))
        lu, ipiv, info = gbtrf(ab, kl, ku)
        if info != 0:
            raise FactorizationError(f"gbtrf failed with info={info}")
        self._lu, self._ipiv, self._kl, self._ku, self._gbtrs = lu, ipiv, kl, ku, gbtrs

    def solve(self, rhs) -> np.ndarray:
        x, info = self._gbtrs(self._lu, self._kl, self._ku, rhs, self._ipiv)
        if info != 0:
            raise FactorizationError(f"gbtrs failed with info={info}")
        return x


def dense_expm_apply(a, f, t: float, cap: int = DENSE_CAP) -> np.ndarray:
    """``expm(t A) f`` with a dense scaling-and-squaring Pade evaluation."""
    a = a.toarray() if sp.issparse(a) else np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    if n > cap:
        raise OracleCapError(f"dense oracle limited to {cap} unknowns, got {n}")
    return scipy.linalg.expm(t * a) @ np.asarray(f, dtype=np.float64)


def reference_solution(a, f, t: float, cap: int = DENSE_CAP) -> np.ndarray:
    """Exact-in-time benchmark: dense expm up to ``cap`` unknowns, Krylov-free
    truncated Taylor action (``expm_multiply``) beyond."""
    if a.shape[0] <= cap:
        return dense_expm_apply(a, f, t, cap)
    return spla.expm_multiply(t * sp.csr_matrix(a), np.asarray(f, dtype=np.float64))
