"""Command-line interface: ``osmosis-adi {solve,order-study,bench,shadow,replay}``.

Exit codes: 0 success, 1 runtime failure, 2 usage / parameter error. Every
output file gets a ``<output>.manifest.csv`` listing the resolved parameters
and the exact argument vector; ``osmosis-adi replay MANIFEST`` re-runs it.
"""

from __future__ import annotations

import argparse
import csv
import logging
import shlex
import sys
import warnings

import numpy as np

from . import __version__
from .grid_image import DEFAULT_OFFSET, Image, ImageFormatError, ensure_positive, load_image, save_image
from .linalg import OracleCapError
from .operators import assemble, channel_drifts
from .shadow import MaskShapeError, load_mask, masked_drifts, shadow_evolution
from .steppers import SCHEMES, SchemeConfig, StepSizeError, evolve, fe_bound
from .validation import METHODS, bench_grid, order_study, parse_scheme, synthetic_pair

log = logging.getLogger("osmosis_adi")


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _grid(text: str) -> tuple[int, int]:
    try:
        nx, ny = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 32x40, got {text!r}")
    if nx < 1 or ny < 1:
        raise argparse.ArgumentTypeError("grid dimensions must be positive")
    return nx, ny


def _add_scheme_flags(p, scheme_default="douglas"):
    p.add_argument("--scheme", choices=SCHEMES, default=scheme_default)
    p.add_argument("--tau", type=float, default=10.0)
    p.add_argument("--T", type=float, default=5000.0)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--solver", choices=("bicgstab", "lu"), default="bicgstab",
                   help="linear solver for the unsplit be/full schemes")
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--maxiter", type=int, default=300000)
    p.add_argument("--eps", type=float, default=DEFAULT_OFFSET, help="positivity offset")
    p.add_argument("--h", type=float, default=1.0, help="grid spacing")
    p.add_argument("--threads", type=int, default=1, help="channels evolved concurrently")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="osmosis-adi", description="ADI solvers for linear image osmosis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="evolve an image towards the osmosis steady state")
    p.add_argument("--input", required=True)
    p.add_argument("--reference", help="image defining the drift (default: --input)")
    p.add_argument("--out", required=True)
    p.add_argument("--diagnostics", action="store_true",
                   help="write per-step mean/min to <out>.diagnostics.csv")
    _add_scheme_flags(p)

    p = sub.add_parser("order-study", help="convergence orders against the dense oracle")
    p.add_argument("--taus", type=_floats, default=[0.05, 0.1, 0.2, 0.4, 0.8])
    p.add_argument("--T", type=float, default=10.0)
    p.add_argument("--schemes", default="pr,douglas:0.5,douglas:1,be")
    p.add_argument("--grid", type=_grid, default=(32, 40))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--cap", type=int, default=4096, help="dense oracle size limit")
    p.add_argument("--out-csv", required=True)
    p.add_argument("--loglog", help="optional tau/rrmse data file for plotting")

    p = sub.add_parser("bench", help="time split and unsplit methods")
    p.add_argument("--taus", type=_floats, default=[0.1, 1.0, 10.0, 100.0])
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--thetas", type=_floats, default=[1.0, 0.5])
    src = p.add_mutually_exclusive_group()
    src.add_argument("--grid", type=_grid, default=None)
    src.add_argument("--input", help="reference image v; f is a constant image")
    p.add_argument("--f-mean", type=float, default=0.5)
    p.add_argument("--T", type=float, default=5000.0)
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--maxiter", type=int, default=300000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1, help="cells run concurrently (skews timing)")
    p.add_argument("--out-csv", required=True)

    p = sub.add_parser("shadow", help="remove a shadow given its boundary mask")
    p.add_argument("--input", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--dilate", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_scheme_flags(p)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    return parser


def write_manifest(path: str, args: argparse.Namespace, argv: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "value"])
        w.writerow(["tool_version", __version__])
        w.writerow(["argv", shlex.join(argv)])
        for k, v in sorted(vars(args).items()):
            if isinstance(v, (list, tuple)):
                v = ",".join(str(x) for x in v)
            w.writerow([k, v])


def read_manifest(path: str) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return {r[0]: r[1] for r in rows[1:] if len(r) == 2}


def _config(args) -> SchemeConfig:
    try:
        return SchemeConfig(args.scheme, args.tau, args.T, args.theta, args.solver, args.tol,
                            args.maxiter, diagnostics=True)
    except ValueError as exc:
        raise UsageError(str(exc))


def _positive(img, eps):
    try:
        return ensure_positive(img, eps)
    except ValueError as exc:
        raise UsageError(str(exc))


def _check_fe(cfg, drifts):
    if cfg.scheme != "fe":
        return
    bound = min(fe_bound(*assemble(d)) for d in drifts)
    if not cfg.tau < bound:
        raise UsageError(f"explicit Euler requires tau < {bound:.6g} (1/max|a_ii|); got {cfg.tau}")


def _write_diagnostics_csv(path, rep, tau):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        nc = rep.means.shape[1]
        w.writerow(["step", "time"] + [f"mean_c{c}" for c in range(nc)]
                   + [f"min_c{c}" for c in range(nc)])
        for k in range(rep.means.shape[0]):
            w.writerow([k, repr(k * tau)] + [repr(float(x)) for x in rep.means[k]]
                       + [repr(float(x)) for x in rep.mins[k]])


def cmd_solve(args, argv) -> int:
    cfg = _config(args)
    f = _positive(load_image(args.input), args.eps)
    v = _positive(load_image(args.reference), args.eps) if args.reference else f
    if v.shape != f.shape:
        raise UsageError(f"reference is {v.n_x}x{v.n_y}, input is {f.n_x}x{f.n_y}")
    drifts = channel_drifts(v, args.h)
    if len(drifts) == 1 and f.channels == 3:
        drifts = drifts * 3
    elif len(drifts) != f.channels:
        raise UsageError("reference and input must have the same number of channels")
    _check_fe(cfg, drifts)
    rep = evolve(f, drifts, cfg, threads=args.threads)
    save_image(rep.final.without_offset(), args.out)
    write_manifest(args.out + ".manifest.csv", args, argv)
    if args.diagnostics:
        _write_diagnostics_csv(args.out + ".diagnostics.csv", rep, cfg.tau)
    log.info("%d steps, factor %.3fs, stepping %.3fs", rep.steps, rep.factor_time, rep.step_time)
    return 0


def cmd_order_study(args, argv) -> int:
    try:
        schemes = [parse_scheme(t) for t in args.schemes.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(str(exc))
    n_x, n_y = args.grid
    f, v = synthetic_pair(n_x, n_y, seed=args.seed)
    res = order_study(f, v, args.taus, args.T, schemes, cap=args.cap)
    res.write_csv(args.out_csv)
    if args.loglog:
        res.write_loglog(args.loglog)
    write_manifest(args.out_csv + ".manifest.csv", args, argv)
    for (s, th), sl in res.slopes.items():
        label = s if th is None else f"{s}(theta={th:g})"
        print(f"{label}: slope {'absent' if sl is None else f'{sl:.3f}'}")
    return 0


def cmd_bench(args, argv) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown methods {bad}; choose from {METHODS}")
    if args.input:
        v = ensure_positive(load_image(args.input))
        if v.channels != 1:
            v = Image(v.data[:1], offset=v.offset)
        f = Image(np.full(v.shape, args.f_mean))
    else:
        n_x, n_y = args.grid or (32, 40)
        f, v = synthetic_pair(n_x, n_y, mean_f=args.f_mean, seed=args.seed)
    table = bench_grid(f, v, args.taus, args.T, methods, args.thetas, args.repeat,
                       tol=args.tol, maxiter=args.maxiter, workers=args.threads)
    table.write_csv(args.out_csv)
    write_manifest(args.out_csv + ".manifest.csv", args, argv)
    failed = [r for r in table.rows if r["status"] != "ok"]
    for r in failed:
        log.error("%s theta=%s tau=%s: %s", r["method"], r["theta"], r["tau"], r["status"])
    return 0 if len(failed) < len(table.rows) else 1


def cmd_shadow(args, argv) -> int:
    cfg = _config(args)
    f = _positive(load_image(args.input), args.eps)
    if args.dilate < 0:
        raise UsageError("--dilate must be non-negative")
    try:
        mask = load_mask(args.mask, shape=f.shape, dilation=args.dilate)
    except MaskShapeError as exc:
        raise UsageError(str(exc))
    if cfg.scheme == "fe":
        _check_fe(cfg, masked_drifts(f, mask, args.h))
    rep = shadow_evolution(f, mask, cfg, args.h, threads=args.threads)
    save_image(rep.final.without_offset(), args.out)
    save_image(Image(mask.pixels.astype(float)), args.out + ".mask.pgm")
    write_manifest(args.out + ".manifest.csv", args, argv)
    with open(args.out + ".diagnostics.txt", "w") as fh:
        m0 = rep.means[0]
        for c in range(f.channels):
            drift = np.max(np.abs(rep.means[:, c] - m0[c])) / abs(m0[c])
            fh.write(f"channel {c}: mean_in {float(m0[c])!r} mean_out {float(rep.means[-1, c])!r} "
                     f"max_rel_mean_drift {drift:.3e} min_value {float(rep.mins[:, c].min())!r}\n")
        neg = rep.first_negative_step
        fh.write(f"steps {rep.steps}\nfirst_negative_step {'none' if neg is None else neg}\n")
        fh.write(f"factor_time_s {rep.factor_time:.6f}\nstep_time_s {rep.step_time:.6f}\n")
    return 0


def cmd_replay(args, argv) -> int:
    man = read_manifest(args.manifest)
    if "argv" not in man:
        raise UsageError(f"{args.manifest} has no argv entry")
    return main(shlex.split(man["argv"]))


COMMANDS = {
    "solve": cmd_solve,
    "order-study": cmd_order_study,
    "bench": cmd_bench,
    "shadow": cmd_shadow,
    "replay": cmd_replay,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"osmosis-adi: error: {exc}", file=sys.stderr)
        return 2
    except StepSizeError as exc:
        print(f"osmosis-adi: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ImageFormatError, OracleCapError, RuntimeError, ArithmeticError) as exc:
        print(f"osmosis-adi: {args.command} failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
