"""Time integration of ``u' = (A1 + A2) u``.

Single-step functions (:func:`step_fe`, :func:`step_be`, :func:`step_pr`,
:func:`step_douglas`) mirror the textbook updates and validate their inputs;
:func:`make_stepper` prepares factorizations and work buffers once so the time
loop in :func:`evolve` does no per-step setup.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .grid_image import Image
from .linalg import (
    BandedLU,
    TridiagonalFactors,
    bicgstab,
    factor_shifted,
)
from .operators import DirectionalOperator, DriftField, assemble, full_sparse, max_abs_diag

log = logging.getLogger(__name__)

SCHEMES = ("fe", "be", "pr", "douglas", "full")
SOLVERS = ("bicgstab", "lu")


class StepSizeError(ValueError):
    """Time step violates a hard stability bound."""


class PositivityWarning(UserWarning):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


class EvolutionError(RuntimeError):
    def __init__(self, msg, step):
        super().__init__(msg)
        self.step = step


@dataclass(frozen=True)
class SchemeConfig:
    """Time stepping parameters.

    ``scheme`` is one of ``fe``, ``be``, ``pr``, ``douglas`` or ``full`` (the
    theta-weighted unsplit scheme ``(I - theta tau A) u+ = (I + (1-theta) tau A) u``,
    of which ``be`` is the ``theta = 1`` case). ``solver`` selects the unsplit
    linear solver (``bicgstab`` or banded ``lu``).
    """

    scheme: str = "douglas"
    tau: float = 10.0
    T: float = 5000.0
    theta: float = 0.5
    solver: str = "bicgstab"
    tol: float = 1e-7
    maxiter: int = 300000
    diagnostics: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; choose from {SOLVERS}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.T >= self.tau:
            raise ValueError("T must be at least tau")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if not self.tol > 0 or self.maxiter < 1:
            raise ValueError("invalid Krylov tolerance or iteration limit")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.tau))

    @property
    def effective_theta(self) -> float:
        return 1.0 if self.scheme == "be" else self.theta


def fe_bound(a1: DirectionalOperator, a2: DirectionalOperator) -> float:
    """Largest admissible explicit Euler step, ``1 / max |a_ii|``."""
    m = max_abs_diag(a1, a2)
    return math.inf if m == 0 else 1.0 / m


def pr_bound(a1: DirectionalOperator, a2: DirectionalOperator) -> float:
    """Peaceman-Rachford positivity bound ``2 / max(max|a1_ii|, max|a2_ii|)``."""
    m = max(a1.max_abs_diag(), a2.max_abs_diag())
    return math.inf if m == 0 else 2.0 / m


def _pair(a):
    a1, a2 = a
    if a1.direction != "x" or a2.direction != "y":
        raise ValueError("operator pair must be (A1 along x, A2 along y)")
    return a1, a2


def _check_fe(a1, a2, tau):
    bound = fe_bound(a1, a2)
    if not tau < bound:
        raise StepSizeError(f"explicit Euler needs tau < {bound:.6g} (1/max|a_ii|), got {tau}")


def _full_action(a1, a2, u):
    """A u computed as two tridiagonal products."""
    return a1.matvec_own(u) + a2.to_natural(a2.matvec_own(a2.from_natural(u)))


def step_fe(u, a, tau: float) -> np.ndarray:
    a1, a2 = _pair(a)
    _check_fe(a1, a2, tau)
    u = np.ascontiguousarray(u, dtype=np.float64)
    return u + tau * _full_action(a1, a2, u)


def step_theta(u, a, tau: float, theta: float, solver: str = "bicgstab", tol=1e-7, maxiter=300000):
    """One unsplit theta step; ``theta = 1`` is implicit Euler."""
    a1, a2 = _pair(a)
    u = np.ascontiguousarray(u, dtype=np.float64)
    rhs = u + (1.0 - theta) * tau * _full_action(a1, a2, u) if theta < 1 else u
    if theta == 0:
        return rhs
    c = theta * tau
    if solver == "lu":
        return BandedLU(full_sparse(a1, a2), c, a1.n_x).solve(rhs)
    x, it, res = bicgstab(lambda y: y - c * _full_action(a1, a2, y), rhs, tol, maxiter, x0=u)
    if res > tol:
        raise ConvergenceError(f"BiCGStab stopped after {it} iterations at residual {res:.3e}", res)
    return x


def step_be(u, a, tau: float, solver: str = "bicgstab", tol=1e-7, maxiter=300000):
    return step_theta(u, a, tau, 1.0, solver, tol, maxiter)


def _check_shift(fac: TridiagonalFactors, c: float, name: str):
    if not math.isclose(fac.shift, c, rel_tol=1e-12):
        raise ValueError(f"{name} factored with shift {fac.shift}, step needs {c}")


def step_pr(u, f1: TridiagonalFactors, f2: TridiagonalFactors, tau: float) -> np.ndarray:
    """One Peaceman-Rachford step from half-step factors of ``A1`` and ``A2``."""
    _check_shift(f1, tau / 2, "A1")
    _check_shift(f2, tau / 2, "A2")
    return _PRStepper(f1, f2, tau).step(np.ascontiguousarray(u, dtype=np.float64))


def step_douglas(u, a, f1, f2, theta: float, tau: float) -> np.ndarray:
    """One Douglas step; ``f1``/``f2`` factor ``I - theta tau A_i`` (unused if theta = 0)."""
    a1, a2 = _pair(a)
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    if theta > 0:
        _check_shift(f1, theta * tau, "A1")
        _check_shift(f2, theta * tau, "A2")
    return _DouglasStepper(a1, a2, f1, f2, theta, tau).step(
        np.ascontiguousarray(u, dtype=np.float64)
    )


class _PRStepper:
    def __init__(self, f1, f2, tau):
        self.f1, self.f2, self.half = f1, f2, tau / 2
        n = f1.n
        self.n_x, self.n_y = f1.op.n_x, f1.op.n_y
        self.w1, self.w2 = np.empty(n), np.empty(n)

    def step(self, u):
        lo1, di1, up1 = self.f1.op.flat
        lo2, di2, up2 = self.f2.op.flat
        w1, w2 = self.w1, self.w2
        _kernels.shifted_matvec(lo1, di1, up1, u, self.half, w1)
        _kernels.transpose_into(w1, self.n_y, self.n_x, w2)
        self.f2.solve_own(w2, w1)
        _kernels.shifted_matvec(lo2, di2, up2, w1, self.half, w2)
        _kernels.transpose_into(w2, self.n_x, self.n_y, w1)
        return self.f1.solve_own(w1, np.empty_like(u))


class _DouglasStepper:
    def __init__(self, a1, a2, f1, f2, theta, tau):
        self.a1, self.a2, self.f1, self.f2 = a1, a2, f1, f2
        self.theta, self.tau = theta, tau
        n = a1.n
        self.n_x, self.n_y = a1.n_x, a1.n_y
        self.a1u, self.a2u, self.up, self.w = (np.empty(n) for _ in range(4))

    def step(self, u):
        a1u, a2u, up, w = self.a1u, self.a2u, self.up, self.w
        tau, theta = self.tau, self.theta
        _kernels.matvec(*self.a1.flat, u, a1u)
        _kernels.transpose_into(u, self.n_y, self.n_x, up)
        _kernels.matvec(*self.a2.flat, up, w)
        _kernels.transpose_into(w, self.n_x, self.n_y, a2u)
        y = u + tau * (a1u + a2u)
        if theta == 0:
            return y
        y -= theta * tau * a1u
        self.f1.solve_own(y, w)
        w -= theta * tau * a2u
        _kernels.transpose_into(w, self.n_y, self.n_x, up)
        self.f2.solve_own(up, w)
        return _kernels.transpose_into(w, self.n_x, self.n_y, np.empty_like(u))


class _FEStepper:
    def __init__(self, a1, a2, tau):
        self.inner = _DouglasStepper(a1, a2, None, None, 0.0, tau)

    def step(self, u):
        return self.inner.step(u)


class _FullStepper:
    def __init__(self, a1, a2, tau, theta, cfg: SchemeConfig):
        self.a1, self.a2, self.tau, self.theta, self.cfg = a1, a2, tau, theta, cfg
        self.lu = None
        if cfg.solver == "lu" and theta > 0:
            self.lu = BandedLU(full_sparse(a1, a2), theta * tau, a1.n_x)
        self.iterations = 0

    def step(self, u):
        a1, a2, tau, theta = self.a1, self.a2, self.tau, self.theta
        rhs = u + (1.0 - theta) * tau * _full_action(a1, a2, u) if theta < 1 else u.copy()
        if theta == 0:
            return rhs
        if self.lu is not None:
            return self.lu.solve(rhs)
        c = theta * tau
        x, it, res = bicgstab(
            lambda y: y - c * _full_action(a1, a2, y), rhs, self.cfg.tol, self.cfg.maxiter, x0=u
        )
        self.iterations += it
        if res > self.cfg.tol:
            raise ConvergenceError(
                f"BiCGStab stopped after {it} iterations at residual {res:.3e}", res
            )
        return x


def make_stepper(a1: DirectionalOperator, a2: DirectionalOperator, cfg: SchemeConfig):
    """Prepare a stepper object (factorizations included) with a ``step(u)`` method."""
    tau = cfg.tau
    if cfg.scheme == "fe":
        _check_fe(a1, a2, tau)
        return _FEStepper(a1, a2, tau)
    if cfg.scheme == "pr":
        bound = pr_bound(a1, a2)
        if not tau < bound:
            warnings.warn(
                f"tau={tau} exceeds the Peaceman-Rachford positivity bound {bound:.6g}",
                PositivityWarning,
                stacklevel=3,
            )
        return _PRStepper(factor_shifted(a1, tau / 2), factor_shifted(a2, tau / 2), tau)
    if cfg.scheme == "douglas":
        if cfg.theta > 0:
            f1 = factor_shifted(a1, cfg.theta * tau)
            f2 = factor_shifted(a2, cfg.theta * tau)
        else:
            f1 = f2 = None
        return _DouglasStepper(a1, a2, f1, f2, cfg.theta, tau)
    return _FullStepper(a1, a2, tau, cfg.effective_theta, cfg)


@dataclass
class ChannelRun:
    final: np.ndarray
    means: np.ndarray | None
    mins: np.ndarray | None
    factor_time: float
    step_time: float
    steps: int
    first_negative_step: int | None = None


def evolve_vector(u0, a1, a2, cfg: SchemeConfig) -> ChannelRun:
    """Run ``round(T / tau)`` steps from ``u0`` (natural ordering)."""
    t0 = time.perf_counter()
    stepper = make_stepper(a1, a2, cfg)
    t1 = time.perf_counter()
    u = np.array(u0, dtype=np.float64)
    n = cfg.n_steps
    means = mins = None
    if cfg.diagnostics:
        means, mins = np.empty(n + 1), np.empty(n + 1)
        means[0], mins[0] = u.mean(), u.min()
    first_neg = None
    for k in range(1, n + 1):
        u = stepper.step(u)
        if cfg.diagnostics:
            means[k], mins[k] = u.mean(), u.min()
            if first_neg is None and mins[k] < 0:
                first_neg = k
                log.warning("%s step %d produced a negative value %.3e", cfg.scheme, k, mins[k])
            if not np.isfinite(means[k]):
                raise EvolutionError(f"non-finite state after step {k}", k)
        elif not np.isfinite(u[0]) or (k % 64 == 0 and not np.all(np.isfinite(u))):
            raise EvolutionError(f"non-finite state after step {k}", k)
    if not np.all(np.isfinite(u)):
        raise EvolutionError(f"non-finite state after step {n}", n)
    t2 = time.perf_counter()
    return ChannelRun(u, means, mins, t1 - t0, t2 - t1, n, first_neg)


@dataclass
class EvolutionReport:
    """Result of :func:`evolve`; per-step arrays have shape ``(steps + 1, channels)``."""

    final: Image
    steps: int
    factor_time: float
    step_time: float
    means: np.ndarray | None = None
    mins: np.ndarray | None = None
    first_negative_step: int | None = None
    channels: list = field(default_factory=list, repr=False)


def evolve(f: Image, drift, cfg: SchemeConfig, threads: int = 1) -> EvolutionReport:
    """Evolve every channel of ``f`` under the osmosis operator of ``drift``.

    ``drift`` is one :class:`DriftField` shared by all channels or a sequence
    with one field per channel.
    """
    drifts = [drift] * f.channels if isinstance(drift, DriftField) else list(drift)
    if len(drifts) != f.channels:
        raise ValueError(f"{len(drifts)} drift fields for {f.channels} channels")
    for d in drifts:
        if d.shape != f.shape:
            raise ValueError(f"drift grid {d.shape} does not match image {f.shape}")

    def run(c):
        a1, a2 = assemble(drifts[c])
        return evolve_vector(f.vector(c), a1, a2, cfg)

    if threads > 1 and f.channels > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(run, range(f.channels)))
    else:
        runs = [run(c) for c in range(f.channels)]

    final = Image.from_vectors([r.final for r in runs], f.n_x, f.n_y, offset=f.offset)
    report = EvolutionReport(
        final=final,
        steps=runs[0].steps,
        factor_time=sum(r.factor_time for r in runs),
        step_time=sum(r.step_time for r in runs),
        channels=runs,
    )
    if cfg.diagnostics:
        report.means = np.stack([r.means for r in runs], axis=1)
        report.mins = np.stack([r.mins for r in runs], axis=1)
        negs = [r.first_negative_step for r in runs if r.first_negative_step is not None]
        report.first_negative_step = min(negs) if negs else None
    return report
