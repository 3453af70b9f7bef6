"""Command-line front end: ``splinekit <command> [options]``.

Every command prints flat ``key=value`` text or CSV; ``--out`` redirects the
main artifact to a file (a directory for ``lkb build``).  Exit status is 0 on
success, 1 on usage errors and 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import constraints, dimension, fit, functions, kst, lsq, mesh, pde

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _kv(pairs) -> str:
    return "".join(f"{k}={_fmt(v)}\n" for k, v in pairs)


# ----------------------------------------------------------------- inputs

def resolve_mesh(spec: str) -> mesh.Triangulation:
    """A mesh file path, or a built-in name with optional ``:param`` (``square_grid:4``)."""
    if Path(spec).is_file():
        return mesh.load_mesh(spec)
    name, _, param = spec.partition(":")
    if name not in mesh.BUILTIN_MESHES:
        raise UsageError(f"--mesh {spec!r} is neither a file nor one of {sorted(mesh.BUILTIN_MESHES)}")
    return mesh.builtin_mesh(name, param or None)


def _target(name):
    try:
        return functions.target(name)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None


def _solution(name):
    try:
        return functions.solution(name)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None


def _read_xy(path, columns: int) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#", skiprows=_header_rows(path))
    if data.shape[1] < columns:
        raise UsageError(f"{path}: expected {columns} comma-separated columns")
    return data[:, :columns]


def _header_rows(path) -> int:
    with open(path) as fh:
        for line in fh:
            if line.strip() and not line.startswith("#"):
                try:
                    [float(t) for t in line.split(",")]
                    return 0
                except ValueError:
                    return 1
    return 0


def _samples(args, space):
    """Data points and values from ``--data`` or from ``--target`` at random points."""
    if args.data:
        xyz = _read_xy(args.data, 3)
        return xyz[:, :2], xyz[:, 2], None
    f = _target(args.target)
    rng = np.random.default_rng(args.seed)
    tri = space.tri
    t = rng.integers(0, tri.n_triangles, args.samples)
    b = rng.dirichlet(np.ones(3), args.samples)
    pts = np.einsum("nk,nkj->nj", b, tri.vertices[tri.triangles[t]])
    z = f(pts[:, 0], pts[:, 1])
    if args.noise > 0:
        z = z + rng.normal(0.0, args.noise, len(z))
    return pts, z, f


def _emit(args, text: str, out=None) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        (out or sys.stdout).write(text)


def _spline_report(s: fit.Spline, extra=()):
    pairs = [("n_coeffs", s.space.n_coeffs), ("smoothness_residual", s.smoothness_residual)]
    if s.report is not None:
        pairs += [("iterations", s.report.iterations), ("constraint_violation", s.report.constraint_violation)]
    return _kv(pairs + list(extra))


def _finish_spline(args, s: fit.Spline, report: str, out):
    """Coefficients go to ``--out`` (report to stdout) or to stdout (report to stderr)."""
    if args.out:
        s.to_csv(args.out)
        out.write(report)
    else:
        s.to_csv(out)
        sys.stderr.write(report)


# --------------------------------------------------------------- commands

def cmd_dim(args, out):
    space = constraints.SplineSpace(resolve_mesh(args.mesh), args.d, args.r)
    rep = dimension.dimension_report(space, with_rank=not args.no_rank)
    _emit(args, rep.as_text(), out)


def cmd_fit(args, out):
    space = constraints.SplineSpace(resolve_mesh(args.mesh), args.d, args.r)
    pts, z, f = _samples(args, space)
    lam = 1.0 if args.lam is None else args.lam
    s = fit.fit_penalized(space, pts, z, lam)
    extra = [("lambda", lam)]
    if f is not None:
        extra.append(("rmse_to_target", _rmse_to(s, f, args.grid)))
    _finish_spline(args, s, _spline_report(s, extra), out)


def cmd_interp(args, out):
    space = constraints.SplineSpace(resolve_mesh(args.mesh), args.d, args.r)
    pts, z, f = _samples(args, space)
    s = fit.interpolate_min_energy(space, pts, z)
    extra = [("max_interp_error", float(np.max(np.abs(s(pts) - z))))]
    if f is not None:
        extra.append(("rmse_to_target", _rmse_to(s, f, args.grid)))
    _finish_spline(args, s, _spline_report(s, extra), out)


def _rmse_to(s, f, grid_n):
    rmse, _ = pde.grid_errors(s, f, grid_n)
    return rmse


def cmd_levelset(args, out):
    space = constraints.SplineSpace(resolve_mesh(args.mesh), args.d, args.r)
    default_circle = args.cloud is None
    cloud = fit.circle_points(args.samples) if default_circle else _read_xy(args.cloud, 2)
    lo, hi = space.tri.bounding_box()
    outer = _read_xy(args.outer, 2) if args.outer else fit.square_boundary_points(25, lo[0], hi[0])
    holes = _read_xy(args.holes, 2) if args.holes else np.zeros((0, 2))
    lam = 1e-3 if args.lam is None else args.lam
    s = fit.solve_levelset(fit.LevelSetProblem(cloud, outer, holes, lam), space)
    curves = fit.extract_contour(s, fit.LevelSetProblem.CLOUD_VALUE, args.grid)
    pairs = [("curves", len(curves)), ("smoothness_residual", s.smoothness_residual)]
    if default_circle and curves:
        pairs.append(("hausdorff_to_circle", fit.hausdorff(np.vstack(curves), fit.circle_points(2000))))
    _contours_out(args, curves, pairs, out)


def _contours_out(args, curves, pairs, out):
    if args.out:
        fit.write_contours(curves, args.out)
        out.write(_kv(pairs))
    else:
        fit.write_contours(curves, out)
        sys.stderr.write(_kv(pairs))


def _load_spline(args):
    if not args.coeffs:
        raise UsageError("--coeffs is required")
    space = constraints.SplineSpace(resolve_mesh(args.mesh), args.d, args.r)
    return fit.Spline(space, fit.read_coefficients(args.coeffs, space))


def cmd_contour(args, out):
    s = _load_spline(args)
    curves = fit.extract_contour(s, args.level, args.grid)
    _contours_out(args, curves, [("curves", len(curves)), ("level", args.level)], out)


def cmd_sample(args, out):
    s = _load_spline(args)
    Z = fit.sample_grid(s, args.grid, (args.order[0], args.order[1]))
    fit.write_grid(Z, args.out or out)


_SOLVE_FIELDS = ("exact", "d", "r", "dprime", "n_triangles", "RMSE", "max_error", "L2_error", "grad_L2_error", "epsilon1")


def _solve_and_report(args, problem, exact, out):
    tri = resolve_mesh(args.mesh)
    space = constraints.SplineSpace(tri, args.d, args.r)
    s, rep = pde.solve_elliptic(space, problem, args.dprime)
    rmse, mx = pde.grid_errors(s, exact.u, args.grid)
    l2, h1 = pde.l2_errors(s, exact)
    dprime = args.d if args.dprime is None else args.dprime
    row = [args.exact, args.d, args.r, dprime, tri.n_triangles, rmse, mx, l2, h1, rep.epsilon1]
    _emit(args, ",".join(_SOLVE_FIELDS) + "\n" + ",".join(_fmt(v) for v in row) + "\n", out)


def cmd_poisson(args, out):
    exact = _solution(args.exact)
    _solve_and_report(args, pde.poisson_problem(exact, args.exact), exact, out)


def cmd_elliptic(args, out):
    exact = _solution(args.exact)
    coeffs = {k: getattr(args, k) for k in ("a11", "a12", "a22", "b1", "b2", "c0")}
    _solve_and_report(args, pde.manufactured_problem(exact, args.exact, **coeffs), exact, out)


def cmd_converge(args, out):
    exact = _solution(args.exact)
    res = pde.convergence_study(
        exact, resolve_mesh(args.mesh), args.d, args.r, args.levels, dprime=args.dprime, grid_n=args.grid
    )
    _emit(args, res.as_csv(), out)


def _workers(args):
    return args.threads or int(os.environ.get("SPLINEKIT_THREADS", "1"))


def cmd_lkb(args, out):
    if args.action == "build":
        if not args.out:
            raise UsageError("lkb build needs --out DIR")
        inner = kst.build_inner_functions(args.resolution)
        lam = 1.0 if args.lam is None else args.lam
        lkb = kst.lkb_build(kst.KBBasis(inner, args.n, args.k), args.grid, lam, workers=_workers(args))
        lkb.save(args.out)
        certified = max(s.smoothness_residual for s in lkb.smoothed) if lkb.size <= 64 else float("nan")
        out.write(_kv([("basis_size", lkb.size), ("directory", args.out), ("max_smoothness_residual", certified)]))
    else:
        if not args.basis:
            raise UsageError("lkb fit needs --basis DIR")
        lkb = kst.load_lkb(args.basis)
        _, train, test = kst.dls_fit(lkb, _target(args.target), lkb.grid_n)
        _emit(args, _kv([("target", args.target), ("basis_size", lkb.size), ("rmse_train", train), ("rmse_test", test)]), out)


def cmd_bench(args, out):
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s]
    except ValueError:
        raise UsageError(f"--sizes must be comma-separated integers, got {args.sizes!r}") from None
    names = args.names.split(",") if args.names else None
    for nm in names or []:
        _target(nm)
    inner = kst.build_inner_functions(args.resolution)
    lam = 1.0 if args.lam is None else args.lam
    table = kst.benchmark_suite(sizes, names, inner, args.k, lam=lam, workers=_workers(args))
    _emit(args, table.as_csv(), out)


COMMANDS = {
    "dim": cmd_dim,
    "fit": cmd_fit,
    "interp": cmd_interp,
    "levelset": cmd_levelset,
    "contour": cmd_contour,
    "sample": cmd_sample,
    "poisson": cmd_poisson,
    "elliptic": cmd_elliptic,
    "converge": cmd_converge,
    "lkb": cmd_lkb,
    "bench": cmd_bench,
}


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--mesh", default="square_grid:4", help="mesh file or built-in name[:param] (default square_grid:4)")
    common.add_argument("--d", type=int, default=5, help="polynomial degree (default 5)")
    common.add_argument("--r", type=int, default=1, help="smoothness (default 1)")
    common.add_argument("--lambda", dest="lam", type=float, default=None, help="penalty weight (command default)")
    common.add_argument("--grid", type=int, default=101, help="sampling grid size per axis (default 101)")
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--out", default=None, help="output file (directory for lkb build); stdout if omitted")
    common.add_argument("--threads", type=int, default=None, help="worker cap (env SPLINEKIT_THREADS)")
    common.add_argument("--dry-run", action="store_true", help="print the resolved configuration and exit")

    data = _Parser(add_help=False)
    data.add_argument("--data", default=None, help="CSV of x,y,z samples")
    data.add_argument("--target", default="f6", help="named target sampled when --data is absent (default f6)")
    data.add_argument("--samples", type=int, default=500, help="number of random samples (default 500)")
    data.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sigma added to samples")

    spline_in = _Parser(add_help=False)
    spline_in.add_argument("--coeffs", default=None, help="coefficient CSV (tri,a1,a2,a3,coef)")

    solve = _Parser(add_help=False)
    solve.add_argument("--exact", default="sinpi", help=f"manufactured solution {sorted(functions.SOLUTIONS)}")
    solve.add_argument("--dprime", type=int, default=None, help="collocation degree (default d)")

    kstp = _Parser(add_help=False)
    kstp.add_argument("--k", type=int, default=3, help="B-spline degree (default 3)")
    kstp.add_argument("--resolution", type=int, default=kst.DEFAULT_RESOLUTION, help="inner-function digits")

    p = _Parser(prog="splinekit", description="Bivariate splines over triangulations.")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    sub.add_parser("dim", parents=[common], help="dimension bounds and exact dimension").add_argument(
        "--no-rank", action="store_true", help="skip the rank computation"
    )
    sub.add_parser("fit", parents=[common, data], help="penalized least-squares fit (lambda default 1)")
    sub.add_parser("interp", parents=[common, data], help="minimal-energy interpolation")
    ls = sub.add_parser("levelset", parents=[common], help="level-set curve through a point cloud")
    ls.add_argument("--cloud", default=None, help="CSV x,y of curve points (default: circle of radius 0.3)")
    ls.add_argument("--outer", default=None, help="CSV x,y of outer boundary points")
    ls.add_argument("--holes", default=None, help="CSV x,y of hole boundary points")
    ls.add_argument("--samples", type=int, default=100, help="points on the default circle")
    sub.add_parser("contour", parents=[common, spline_in], help="level curves of a stored spline").add_argument(
        "--level", type=float, default=0.0
    )
    sub.add_parser("sample", parents=[common, spline_in], help="grid samples of a stored spline").add_argument(
        "--order", type=int, nargs=2, default=(0, 0), metavar=("PX", "PY")
    )
    sub.add_parser("poisson", parents=[common, solve], help="-Laplace(u) = f collocation solve")
    el = sub.add_parser("elliptic", parents=[common, solve], help="general elliptic collocation solve")
    for key, default in (("a11", 1.0), ("a12", 0.0), ("a22", 1.0), ("b1", 0.0), ("b2", 0.0), ("c0", 0.0)):
        el.add_argument(f"--{key}", type=float, default=default)
    cv = sub.add_parser("converge", parents=[common, solve], help="refinement study with fitted rates")
    cv.add_argument("--levels", type=int, default=3)
    lk = sub.add_parser("lkb", parents=[common, kstp], help="build or fit with an LKB basis")
    lk.add_argument("action", choices=["build", "fit"])
    lk.add_argument("--n", type=int, default=10, help="basis size is 2n (default 10)")
    lk.add_argument("--basis", default=None, help="LKB directory for fit")
    lk.add_argument("--target", default="f1")
    bench = sub.add_parser("bench", parents=[common, kstp], help="DLS benchmark over f1..f10")
    bench.add_argument("--sizes", default="10,100", help="comma-separated n values (default 10,100)")
    bench.add_argument("--names", default=None, help="comma-separated subset of targets")
    return p


def run(argv=None, stdout=None) -> int:
    out = stdout or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        if args.dry_run:
            out.write(_kv(sorted((k, v) for k, v in vars(args).items() if k != "dry_run")))
            return EXIT_OK
        if args.threads:
            os.environ["SPLINEKIT_THREADS"] = str(args.threads)
        COMMANDS[args.command](args, out)
        return EXIT_OK
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except BrokenPipeError:
        # reader closed early (e.g. piped into head); not an error
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK
    except (lsq.InfeasibleError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError, IndexError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run())


if __name__ == "__main__":
    main()
