"""Experiment harnesses: conservation audits, convergence-order studies and the
split-versus-unsplit benchmark table."""

from __future__ import annotations

import csv
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .grid_image import Image, rrmse
from .linalg import DENSE_CAP, OracleCapError, reference_solution
from .operators import DriftField, assemble, canonical_drift, full_sparse
from .steppers import PositivityWarning, SchemeConfig, evolve, evolve_vector

SATURATION_FLOOR = 1e-12
BENCH_COLUMNS = ("method", "theta", "p", "tau", "steps", "time_s", "factor_s", "rrmse", "status")


def synthetic_pair(n_x: int, n_y: int, mean_f: float = 0.5, seed: int | None = None):
    """Smooth positive reference ``v`` (offset Gaussian bump) and constant ``f``.

    With a seed the bump centre and width are jittered reproducibly.
    """
    cx, cy, width = n_x / 2, n_y / 2, 0.2 * min(n_x, n_y)
    if seed is not None:
        rng = np.random.default_rng(seed)
        cx += rng.uniform(-0.1, 0.1) * n_x
        cy += rng.uniform(-0.1, 0.1) * n_y
        width *= rng.uniform(0.8, 1.2)
    y, x = np.mgrid[0:n_y, 0:n_x] + 0.5
    v = 0.2 + 0.8 * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * width**2))
    return Image(np.full((n_y, n_x), mean_f)), Image(v)


def expected_order(scheme: str, theta: float | None) -> int:
    if scheme == "pr":
        return 2
    if scheme in ("douglas", "full") and theta == 0.5:
        return 2
    return 1


def parse_scheme(token: str) -> tuple[str, float | None]:
    """``"douglas:0.5"`` -> ``("douglas", 0.5)``; ``"be"`` -> ``("be", 1.0)``."""
    name, _, th = token.strip().lower().partition(":")
    if name == "be":
        return "be", 1.0
    if name in ("pr", "fe"):
        return name, None
    if name in ("douglas", "full"):
        return name, float(th) if th else 0.5
    raise ValueError(f"unknown scheme {token!r}")


def fit_slope(taus, errors, floor: float = SATURATION_FLOOR) -> float | None:
    """Least-squares loglog slope over points whose error is at least ``floor``."""
    pts = [(t, e) for t, e in zip(taus, errors) if e is not None and np.isfinite(e) and e >= floor]
    if len({t for t, _ in pts}) < 2:
        return None
    lt, le = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
    return float(np.polyfit(lt, le, 1)[0])


@dataclass
class AuditReport:
    scheme: str
    tau: float
    theta: float
    steps: int
    max_mean_drift: float  # relative to mean(f), worst channel
    min_value: float
    first_negative_step: int | None


def conservation_audit(f: Image, drift, cfg: SchemeConfig) -> AuditReport:
    """Evolve with diagnostics on and summarize mean drift and positivity."""
    cfg = replace(cfg, diagnostics=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PositivityWarning)
        rep = evolve(f, drift, cfg)
    m0 = rep.means[0]
    drift_rel = np.max(np.abs(rep.means - m0) / np.abs(m0))
    return AuditReport(
        cfg.scheme,
        cfg.tau,
        cfg.effective_theta,
        rep.steps,
        float(drift_rel),
        float(rep.mins.min()),
        rep.first_negative_step,
    )


@dataclass
class OrderStudyResult:
    taus: list
    rows: list = field(default_factory=list)  # (scheme, theta, tau, rrmse, wall_time)
    slopes: dict = field(default_factory=dict)  # (scheme, theta) -> slope or None

    def errors(self, scheme: str, theta=None) -> list:
        return [r[3] for r in self.rows if r[0] == scheme and r[1] == theta]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scheme", "theta", "tau", "rrmse", "time_s"])
            for s, th, tau, e, t in self.rows:
                w.writerow([s, _fmt_theta(th), repr(float(tau)), f"{e:.6e}", f"{t:.6f}"])
            w.writerow([])
            w.writerow(["# slopes"])
            w.writerow(["scheme", "theta", "slope"])
            for (s, th), sl in self.slopes.items():
                w.writerow([s, _fmt_theta(th), "absent" if sl is None else f"{sl:.4f}"])

    def write_loglog(self, path) -> None:
        """Whitespace separated ``scheme theta tau rrmse`` lines for plotting tools."""
        with open(path, "w") as fh:
            for s, th, tau, e, _ in self.rows:
                fh.write(f"{s} {_fmt_theta(th)} {float(tau)!r} {e:.10e}\n")


def _fmt_theta(th) -> str:
    return "-" if th is None else repr(float(th))


def _as_vec(img) -> np.ndarray:
    if isinstance(img, Image):
        if img.channels != 1:
            raise ValueError("studies run on single-channel images")
        return img.vector()
    return np.asarray(img, dtype=np.float64)


def _shape(img) -> tuple[int, int]:
    return img.shape if isinstance(img, Image) else np.asarray(img).shape


class _References:
    """Exact-in-time states cached by the time actually reached."""

    def __init__(self, a, f, cap):
        self.a, self.f, self.cap, self.cache = a, f, cap, {}

    def at(self, t: float) -> np.ndarray:
        key = round(t, 12)
        if key not in self.cache:
            self.cache[key] = reference_solution(self.a, self.f, t, self.cap)
        return self.cache[key]


def order_study(
    f,
    v,
    taus,
    T: float = 10.0,
    schemes=("pr", "douglas:0.5", "douglas:1", "be"),
    h: float = 1.0,
    cap: int = DENSE_CAP,
    solver: str = "lu",
) -> OrderStudyResult:
    """rRMSE of each scheme against the dense exponential at the reached time.

    Runs take ``round(T / tau)`` steps, so each is compared with the exact state
    at ``round(T / tau) * tau``.
    """
    fv = _as_vec(f)
    if fv.size > cap:
        raise OracleCapError(f"grid of {fv.size} unknowns exceeds dense oracle cap {cap}")
    n_y, n_x = _shape(f)
    a1, a2 = assemble(canonical_drift(v, h))
    refs = _References(full_sparse(a1, a2), fv, cap)
    result = OrderStudyResult(list(taus))
    for token in schemes:
        scheme, theta = parse_scheme(token) if isinstance(token, str) else token
        errs = []
        for tau in taus:
            cfg = SchemeConfig(
                scheme, tau=tau, T=max(T, tau), theta=0.5 if theta is None else theta, solver=solver
            )
            t0 = time.perf_counter()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", PositivityWarning)
                run = evolve_vector(fv, a1, a2, cfg)
            wall = time.perf_counter() - t0
            e = rrmse(run.final, refs.at(cfg.n_steps * tau))
            errs.append(e)
            result.rows.append((scheme, theta, tau, e, wall))
        result.slopes[(scheme, theta)] = fit_slope(taus, errs)
    return result


METHODS = ("bicgstab", "lu", "douglas", "pr")


def _method_cfg(method, theta, tau, T, tol, maxiter) -> SchemeConfig:
    if method == "bicgstab":
        return SchemeConfig("full", tau, T, theta, "bicgstab", tol, maxiter)
    if method == "lu":
        return SchemeConfig("full", tau, T, theta, "lu")
    if method == "douglas":
        return SchemeConfig("douglas", tau, T, theta)
    if method == "pr":
        return SchemeConfig("pr", tau, T)
    raise ValueError(f"unknown method {method!r}")


@dataclass
class BenchTable:
    rows: list = field(default_factory=list)  # dicts keyed by BENCH_COLUMNS
    states: dict = field(default_factory=dict, repr=False)  # (method, theta, tau) -> final u

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
            w.writeheader()
            for r in self.rows:
                w.writerow(r)

    def lookup(self, method, theta, tau) -> dict:
        th = "-" if theta is None else repr(float(theta))
        for r in self.rows:
            if r["method"] == method and r["theta"] == th and r["tau"] == repr(float(tau)):
                return r
        raise KeyError((method, theta, tau))


def bench_grid(
    f,
    v,
    taus,
    T: float = 5000.0,
    methods=METHODS,
    thetas=(1.0, 0.5),
    repeat: int = 1,
    h: float = 1.0,
    tol: float = 1e-7,
    maxiter: int = 300000,
    cap: int = DENSE_CAP,
    workers: int = 1,
) -> BenchTable:
    """Time every (method, theta, tau) cell and score it against the exact solution.

    Wall time is the best of ``repeat`` runs and includes factorization, which
    is also reported separately. Failing cells get an ``error:`` status and the
    grid continues. ``workers > 1`` runs cells concurrently, which skews timing.
    """
    fv = _as_vec(f)
    a1, a2 = assemble(canonical_drift(v, h))
    refs = _References(full_sparse(a1, a2), fv, cap)
    cells = []
    for m in methods:
        for th in [None] if m == "pr" else thetas:
            for tau in taus:
                cells.append((m, th, tau))

    def run(cell):
        m, th, tau = cell
        row = {
            "method": m,
            "theta": _fmt_theta(th),
            "p": expected_order("pr" if m == "pr" else "full", th),
            "tau": repr(float(tau)),
        }
        out = None
        try:
            cfg = _method_cfg(m, 0.5 if th is None else th, tau, max(T, tau), tol, maxiter)
            best = None
            for _ in range(max(1, repeat)):
                t0 = time.perf_counter()
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", PositivityWarning)
                    out = evolve_vector(fv, a1, a2, cfg)
                wall = time.perf_counter() - t0
                if best is None or wall < best[0]:
                    best = (wall, out)
            wall, out = best
            err = rrmse(out.final, refs.at(cfg.n_steps * tau))
            row.update(
                steps=out.steps,
                time_s=f"{wall:.6f}",
                factor_s=f"{out.factor_time:.6f}",
                rrmse=f"{err:.6e}",
                status="ok",
            )
        except Exception as exc:  # recorded per cell
            row.update(steps="", time_s="", factor_s="", rrmse="", status=f"error: {exc}")
        return row, out.final if row["status"] == "ok" else None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, cells))
    else:
        results = [run(c) for c in cells]
    table = BenchTable([r for r, _ in results])
    table.states = {c: u for c, (_, u) in zip(cells, results) if u is not None}
    return table


def adi_step_times(sizes, scheme: str = "douglas", theta: float = 0.5, tau: float = 10.0,
                   repeat: int = 5, seed: int = 0):
    """Best-of-``repeat`` wall time per ADI step on square random grids.

    Returns ``(unknowns, seconds_per_step, loglog_slope)``.
    """
    from .steppers import make_stepper

    rng = np.random.default_rng(seed)
    ns, ts = [], []
    for n in sizes:
        v = rng.uniform(0.2, 1.0, (n, n))
        a1, a2 = assemble(canonical_drift(v))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PositivityWarning)
            st = make_stepper(a1, a2, SchemeConfig(scheme, tau, tau, theta))
        u = np.full(n * n, 0.5)
        st.step(u)
        reps = max(10, int(2e6 // (n * n)))
        best = math.inf
        for _ in range(repeat):
            t0 = time.perf_counter()
            for _ in range(reps):
                u = st.step(u)
            best = min(best, (time.perf_counter() - t0) / reps)
        ns.append(n * n)
        ts.append(best)
    slope = float(np.polyfit(np.log(ns), np.log(ts), 1)[0])
    return ns, ts, slope
