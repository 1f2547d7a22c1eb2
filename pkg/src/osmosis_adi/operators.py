"""Drift fields and the two directional halves of the discrete osmosis operator.

Each half is a :class:`DirectionalOperator`: a stack of independent tridiagonal
blocks, one per grid line. ``A1`` (direction ``"x"``) has one block per row and
is tridiagonal in the natural x-fastest ordering; ``A2`` (direction ``"y"``) has
one block per column and is stored in the y-fastest ordering in which it is
tridiagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .grid_image import Image


@dataclass(frozen=True)
class DriftField:
    """Drift sampled on cell edges.

    ``d1[j, i]`` lives on the vertical edge between pixels ``i-1`` and ``i`` of
    row ``j`` (shape ``(n_y, n_x + 1)``); ``d2[j, i]`` on the horizontal edge
    between rows ``j-1`` and ``j`` of column ``i`` (shape ``(n_y + 1, n_x)``).
    Boundary edges are always zero.
    """

    d1: np.ndarray
    d2: np.ndarray
    h: float = 1.0

    def __post_init__(self):
        d1 = np.array(self.d1, dtype=np.float64)
        d2 = np.array(self.d2, dtype=np.float64)
        n_y, nx1 = d1.shape
        if d2.shape != (n_y + 1, nx1 - 1):
            raise ValueError(f"inconsistent edge grids {d1.shape} and {d2.shape}")
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        d1[:, 0] = d1[:, -1] = 0.0
        d2[0, :] = d2[-1, :] = 0.0
        d1.setflags(write=False)
        d2.setflags(write=False)
        object.__setattr__(self, "d1", d1)
        object.__setattr__(self, "d2", d2)

    @property
    def shape(self) -> tuple[int, int]:
        return self.d1.shape[0], self.d2.shape[1]

    @classmethod
    def zeros(cls, n_x: int, n_y: int, h: float = 1.0) -> "DriftField":
        return cls(np.zeros((n_y, n_x + 1)), np.zeros((n_y + 1, n_x)), h)


def _as_grid(v, channel: int) -> np.ndarray:
    if isinstance(v, Image):
        return v.data[channel]
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D grid or an Image")
    return arr


def canonical_drift(v, h: float = 1.0, channel: int = 0) -> DriftField:
    """Drift encoding reference image ``v`` (a discrete ``grad(ln v)``).

    Uses ``2 (v[i+1] - v[i]) / (h (v[i+1] + v[i]))`` on every interior edge,
    which makes ``v`` an exact steady state of the assembled operator.
    """
    g = _as_grid(v, channel)
    if not np.all(g > 0):
        raise ValueError("reference image must be strictly positive")
    n_y, n_x = g.shape
    d1 = np.zeros((n_y, n_x + 1))
    d2 = np.zeros((n_y + 1, n_x))
    d1[:, 1:-1] = 2.0 * (g[:, 1:] - g[:, :-1]) / (h * (g[:, 1:] + g[:, :-1]))
    d2[1:-1, :] = 2.0 * (g[1:, :] - g[:-1, :]) / (h * (g[1:, :] + g[:-1, :]))
    return DriftField(d1, d2, h)


def channel_drifts(v: Image, h: float = 1.0) -> list[DriftField]:
    return [canonical_drift(v, h, c) for c in range(v.channels)]


def mask_drift(d: DriftField, mask1, mask2) -> DriftField:
    """Zero the drift on masked edges. Masks have the shapes of ``d.d1``/``d.d2``."""
    m1 = np.asarray(mask1, dtype=bool)
    m2 = np.asarray(mask2, dtype=bool)
    if m1.shape != d.d1.shape or m2.shape != d.d2.shape:
        raise ValueError(
            f"mask shapes {m1.shape}, {m2.shape} do not match edge grids "
            f"{d.d1.shape}, {d.d2.shape}"
        )
    return DriftField(np.where(m1, 0.0, d.d1), np.where(m2, 0.0, d.d2), d.h)


@dataclass(frozen=True)
class DirectionalOperator:
    """Block tridiagonal half of the osmosis operator.

    ``lower``, ``diag``, ``upper`` have shape ``(n_blocks, block_size)``;
    ``lower[:, 0]`` and ``upper[:, -1]`` are zero.
    """

    direction: str
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    n_x: int
    n_y: int

    @property
    def n(self) -> int:
        return self.n_x * self.n_y

    @classmethod
    def zeros(cls, direction: str, n_x: int, n_y: int) -> "DirectionalOperator":
        shape = (n_y, n_x) if direction == "x" else (n_x, n_y)
        return cls(direction, np.zeros(shape), np.zeros(shape), np.zeros(shape), n_x, n_y)

    @property
    def flat(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Band arrays in the operator's own (tridiagonal) ordering."""
        return self.lower.ravel(), self.diag.ravel(), self.upper.ravel()

    def max_abs_diag(self) -> float:
        return float(np.max(np.abs(self.diag)))

    def column_sums(self) -> np.ndarray:
        """Column sums of every block, shape ``(n_blocks, block_size)``."""
        s = self.diag.copy()
        s[:, :-1] += self.lower[:, 1:]
        s[:, 1:] += self.upper[:, :-1]
        return s

    def to_natural(self, x: np.ndarray) -> np.ndarray:
        """Map a vector from this operator's ordering to x-fastest ordering."""
        if self.direction == "x":
            return x
        return np.ascontiguousarray(x.reshape(self.n_x, self.n_y).T).ravel()

    def from_natural(self, x: np.ndarray) -> np.ndarray:
        if self.direction == "x":
            return x
        return np.ascontiguousarray(x.reshape(self.n_y, self.n_x).T).ravel()

    def matvec_own(self, x: np.ndarray) -> np.ndarray:
        lo, di, up = self.flat
        return _kernels.matvec(lo, di, up, x, np.empty_like(x))

    def to_sparse(self, natural: bool = True) -> sp.csr_matrix:
        """Sparse matrix, in x-fastest ordering unless ``natural`` is False."""
        n = self.n
        lo, di, up = self.flat
        k = np.arange(n)
        rows = np.concatenate([k, k[1:], k[:-1]])
        cols = np.concatenate([k, k[:-1], k[1:]])
        vals = np.concatenate([di, lo[1:], up[:-1]])
        keep = vals != 0.0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        if natural and self.direction == "y":
            # own index q = i * n_y + j  ->  natural j * n_x + i
            def nat(q):
                return (q % self.n_y) * self.n_x + q // self.n_y

            rows, cols = nat(rows), nat(cols)
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _line_operator(e: np.ndarray, h: float):
    """Band arrays for a stack of 1-D lines with edge drifts ``e`` (n_lines, m + 1)."""
    n_lines, m = e.shape[0], e.shape[1] - 1
    inv_h2 = 1.0 / (h * h)
    lower = np.zeros((n_lines, m))
    upper = np.zeros((n_lines, m))
    lower[:, 1:] = inv_h2 + e[:, 1:-1] / (2.0 * h)
    upper[:, :-1] = inv_h2 - e[:, 1:-1] / (2.0 * h)
    diag = np.zeros((n_lines, m))
    # each diagonal entry cancels the rest of its column
    diag[:, 1:] -= upper[:, :-1]
    diag[:, :-1] -= lower[:, 1:]
    return lower, diag, upper


def assemble_directional(d: DriftField, direction: str) -> DirectionalOperator:
    n_y, n_x = d.shape
    if direction == "x":
        lo, di, up = _line_operator(d.d1, d.h)
    elif direction == "y":
        lo, di, up = _line_operator(np.ascontiguousarray(d.d2.T), d.h)
    else:
        raise ValueError(f"direction must be 'x' or 'y', got {direction!r}")
    for a in (lo, di, up):
        a.setflags(write=False)
    return DirectionalOperator(direction, lo, di, up, n_x, n_y)


def assemble(d: DriftField) -> tuple[DirectionalOperator, DirectionalOperator]:
    """Both halves ``(A1, A2)``."""
    return assemble_directional(d, "x"), assemble_directional(d, "y")


def apply_operator(op, u) -> np.ndarray:
    """Apply one directional operator, or the sum of a pair, to a natural-order vector."""
    if isinstance(op, DirectionalOperator):
        u = np.ascontiguousarray(u, dtype=np.float64)
        if u.shape != (op.n,):
            raise ValueError(f"vector of length {u.shape} does not match grid of {op.n}")
        return op.to_natural(op.matvec_own(op.from_natural(u)))
    a1, a2 = op
    return apply_operator(a1, u) + apply_operator(a2, u)


def full_sparse(a1: DirectionalOperator, a2: DirectionalOperator) -> sp.csr_matrix:
    """``A1 + A2`` as a sparse matrix in natural ordering."""
    return (a1.to_sparse() + a2.to_sparse()).tocsr()


def max_abs_diag(a1: DirectionalOperator, a2: DirectionalOperator) -> float:
    """Largest ``|a_ii|`` of the unsplit operator ``A1 + A2``."""
    d = a1.diag.ravel() + a2.to_natural(a2.diag.ravel())
    return float(np.max(np.abs(d)))


def export_coo(op, path) -> None:
    """Write an operator (or pair) as ``row,col,value`` text, 0-based natural ordering."""
    m = full_sparse(*op) if isinstance(op, tuple) else op.to_sparse()
    m = m.tocoo()
    with open(path, "w") as fh:
        fh.write("row,col,value\n")
        for r, c, v in zip(m.row, m.col, m.data):
            fh.write(f"{r},{c},{float(v)!r}\n")
