"""Command-line front end: ``mmphase <subcommand> [options]``.

Every table is written as CSV (or JSON with ``--format json``) headed by a
comment line recording the parameters, tool version and tolerance.  Numbers
use the shortest round-trip decimal form, so reruns are byte-identical.
Exit status: 0 success, 1 computation error, 2 bad arguments.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .concavity import inflection_locus, table1_audit
from .entry import gamma1_entry
from .errors import FitError, InadmissibleParameters, MMPhaseError
from .fraser import fraser_iterate, h_curve
from .integrate import integrate_time
from .isoclines import F, H, V, alpha
from .kinetics import Parameters, RateConstants, nondimensionalize, spectrum
from .manifold import compute_manifold, manifold_rows, origin_tail, verify_fences
from .series import infinity_coefficients, origin_coefficients
from .verify import run_verification

COMMANDS = ("spectral", "isoclines", "series", "portrait", "manifold", "classify",
            "loci", "entry", "fraser", "verify")


class UsageError(Exception):
    pass


# -- formatting -----------------------------------------------------------------

def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def jsonable(v):
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [jsonable(x) for x in v.tolist()]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def dump_json(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def table_text(meta: dict, header, rows, form: str, extra: dict | None = None) -> str:
    if form == "json":
        doc = {"meta": meta, "columns": list(header), "rows": [list(r) for r in rows]}
        if extra:
            doc.update(extra)
        return dump_json(doc)
    buf = io.StringIO()
    buf.write("# " + " ".join(f"{k}={fmt(v)}" for k, v in meta.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".mmphase-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        mask = os.umask(0)
        os.umask(mask)
        os.chmod(tmp, 0o666 & ~mask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- arguments ------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    c = argparse.ArgumentParser(add_help=False)
    g = c.add_argument_group("parameters (give --eps/--eta or all of --k1 --k-1 --k2 --e0)")
    g.add_argument("--eps", type=float)
    g.add_argument("--eta", type=float)
    g.add_argument("--k1", type=float)
    g.add_argument("--k-1", dest="k_minus1", type=float)
    g.add_argument("--k2", type=float)
    g.add_argument("--e0", type=float)
    c.add_argument("--tol", type=float, default=1e-10, help="relative tolerance (default 1e-10)")
    c.add_argument("--out", help="output path (default: standard output)")
    c.add_argument("--format", choices=("csv", "json"), default="csv")
    return c


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmphase", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mmphase {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text)

    add("spectral", "eigenvalues, eigenvectors, kappa and sigma (JSON)")

    p = add("isoclines", "H, V, alpha and optional slope-c isoclines on a grid")
    _grid_args(p, 1e-2, 10.0, 200)
    p.add_argument("--slopes", default="", help="comma-separated extra isocline slopes c")

    p = add("series", "coefficients at the origin (sigma_n) or at infinity (rho_n)")
    which = p.add_mutually_exclusive_group()
    which.add_argument("--infinity", dest="where", action="store_const", const="infinity")
    which.add_argument("--origin", dest="where", action="store_const", const="origin")
    p.set_defaults(where="infinity")
    p.add_argument("--n", type=int, default=8, help="highest coefficient index")

    p = add("portrait", "time trajectories from a list of starts")
    _start_args(p)
    p.add_argument("--t-end", type=float, default=50.0)

    p = add("manifold", "slow manifold M, M', M'' on a log grid, plus fence report")
    _grid_args(p, 1e-3, 1e3, 600)
    p.add_argument("--n", type=int, default=5, help="series order used at the outer end")

    p = add("classify", "concavity-table audit along integrated solutions (JSON)")
    p.add_argument("--n", type=int, default=100, help="samples per region")
    p.add_argument("--seed", type=int, default=0)

    p = add("loci", "inflection loci branches")
    _grid_args(p, 1e-2, 5.0, 200)

    p = add("entry", "Gamma1 entry classification for a list of starts (JSON)")
    _start_args(p)
    p.add_argument("--horizon", type=float, default=100.0)

    p = add("fraser", "Fraser-Roussel iterates from y0 = H")
    _grid_args(p, 1e-3, 1e2, 400)
    p.add_argument("--n", type=int, default=4, help="number of iterations")

    p = add("verify", "run the invariant suite; exit 0 iff every check passes")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _grid_args(p, x_min, x_max, n):
    p.add_argument("--x-min", type=float, default=x_min)
    p.add_argument("--x-max", type=float, default=x_max)
    p.add_argument("--grid", type=int, default=n, help="number of grid points")


def _start_args(p):
    p.add_argument("--starts", help="CSV file of start points x,y")
    p.add_argument("--seed", type=int, default=0, help="seed for random starts in [0,2]^2")
    p.add_argument("--n", type=int, default=20, help="number of random starts")


def parameters_from(args) -> Parameters:
    rate = [args.k1, args.k_minus1, args.k2, args.e0]
    has_dimless = args.eps is not None or args.eta is not None
    has_rate = any(v is not None for v in rate)
    if has_dimless and has_rate:
        raise UsageError("give either --eps/--eta or the rate constants, not both")
    if has_dimless:
        if args.eps is None or args.eta is None:
            raise UsageError("--eps and --eta must be given together")
        return Parameters(args.eps, args.eta)
    if has_rate:
        if any(v is None for v in rate):
            raise UsageError("--k1, --k-1, --k2 and --e0 must all be given")
        return nondimensionalize(RateConstants(*rate))[0]
    raise UsageError("parameters required: --eps/--eta or --k1 --k-1 --k2 --e0")


def read_starts(path: str):
    pts = []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read starts file: {exc}")
    with fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                pts.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                if pts:
                    raise UsageError(f"bad start row {row!r} in {path}")
    if not pts:
        raise UsageError(f"no start points in {path}")
    return pts


def _starts(args):
    if args.starts:
        return read_starts(args.starts)
    if args.n < 1:
        raise UsageError("--n must be positive")
    rng = np.random.default_rng(args.seed)
    return [tuple(map(float, s)) for s in rng.uniform(0.0, 2.0, size=(args.n, 2))]


def _grid(args):
    if not (args.grid >= 2 and args.x_max > args.x_min >= 0):
        raise UsageError("need --grid >= 2 and 0 <= --x-min < --x-max")
    if args.x_min > 0:
        return np.geomspace(args.x_min, args.x_max, args.grid)
    return np.linspace(args.x_min, args.x_max, args.grid)


# -- commands -------------------------------------------------------------------

def _meta(p: Parameters, args) -> dict:
    return {"eps": float(p.eps), "eta": float(p.eta), "version": __version__, "tol": args.tol}


def _emit(args, text: str, sidecars: dict | None = None) -> None:
    if args.out:
        write_atomic(args.out, text)
        for suffix, obj in (sidecars or {}).items():
            write_atomic(f"{args.out}.{suffix}.json", dump_json(obj))
    else:
        sys.stdout.write(text)


def cmd_spectral(p, args):
    doc = {"meta": _meta(p, args), **spectrum(p).as_dict()}
    _emit(args, dump_json(doc))
    return 0


def cmd_isoclines(p, args):
    xs = _grid(args)
    try:
        slopes = [float(c) for c in args.slopes.split(",") if c.strip()]
    except ValueError:
        raise UsageError("--slopes must be comma-separated numbers")
    header = ["x", "H", "V", "alpha"] + [f"F_c={fmt(c)}" for c in slopes]
    sigma = spectrum(p).sigma
    cols = [xs, H(xs), V(p, xs), alpha(p, xs, sigma)] + [np.asarray(F(p, xs, c)) for c in slopes]
    _emit(args, table_text(_meta(p, args), header, zip(*cols), args.format))
    return 0


def cmd_series(p, args):
    if args.n < (1 if args.where == "origin" else 0):
        raise UsageError("--n too small")
    if args.where == "infinity":
        coeffs = infinity_coefficients(p, args.n).coeffs
        extra = None
    else:
        s = origin_coefficients(p, args.n)
        coeffs = s.coeffs
        extra = {"resonant": s.resonant, "order": s.order, "near_resonant": s.near_resonant}
    rows = [(n, float(c)) for n, c in enumerate(coeffs)]
    name = "rho" if args.where == "infinity" else "sigma"
    meta = _meta(p, args)
    if extra and args.format == "csv":
        meta.update(extra)
    _emit(args, table_text(meta, ["n", name], rows, args.format, extra))
    return 0


def cmd_portrait(p, args):
    rows, events = [], []
    for i, s in enumerate(_starts(args)):
        tr = integrate_time(p, s, args.t_end, rtol=args.tol, atol=args.tol * 1e-2)
        rows += [(i, t, x, y) for t, x, y in zip(tr.t, tr.x, tr.y)]
        events.append({"start_id": i, "start": list(s), "stats": tr.stats,
                       "events": [{"kind": e.kind, "t": e.t, "x": e.x, "y": e.y} for e in tr.events]})
    text = table_text(_meta(p, args), ["start_id", "t", "x", "y"], rows, args.format,
                      {"trajectories": events})
    _emit(args, text, {"events": events})
    return 0


def cmd_manifold(p, args):
    m = compute_manifold(p, args.x_min, args.x_max, args.tol, seed_order=args.n, n_grid=args.grid)
    report = {"fences": verify_fences(p, m).as_dict(), "fence_margin": m.fence_margin,
              "x_join": m.x_join, "seed_order": m.seed_order}
    try:
        tf = origin_tail(p, m)
        report["tail"] = {"C": tf.C, "kappa_fit": tf.kappa_fit, "fit_window": list(tf.fit_window),
                          "residual_norm": tf.residual_norm, "kappa": spectrum(p).kappa}
    except (FitError, MMPhaseError) as exc:
        report["tail"] = {"error": exc.code, "message": str(exc)}
    text = table_text(_meta(p, args), ["x", "M", "dM", "d2M"], manifold_rows(p, m), args.format,
                      {"report": report})
    _emit(args, text, {"fences": report})
    return 0


def cmd_classify(p, args):
    m = compute_manifold(p, tol=args.tol)
    rep = table1_audit(p, m, n_per_region=args.n, seed=args.seed)
    _emit(args, dump_json({"meta": _meta(p, args), **rep.as_dict()}))
    return 0


def cmd_loci(p, args):
    xs = _grid(args)
    if xs[0] <= 0:
        raise UsageError("loci need --x-min > 0")
    m = None
    if xs[0] >= 1e-3 and xs[-1] <= 1e3:
        m = compute_manifold(p, tol=args.tol)
    L = inflection_locus(p, xs, m)
    _emit(args, table_text(_meta(p, args), ["x", "y", "branch"], L.rows(), args.format,
                           {"warnings": L.warnings}))
    return 0


def cmd_entry(p, args):
    results = [gamma1_entry(p, s, args.horizon, rtol=args.tol).as_dict() for s in _starts(args)]
    _emit(args, dump_json({"meta": _meta(p, args), "results": results}))
    return 0


def cmd_fraser(p, args):
    xs = _grid(args)
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    if xs[0] <= 0:
        raise UsageError("fraser needs --x-min > 0")
    m = compute_manifold(p, min(1e-3, xs[0]), max(1e3, xs[-1]), args.tol)
    it = fraser_iterate(p, h_curve(xs), args.n, reference=m)
    header = ["x"] + [f"y{k}" for k in range(args.n + 1)]
    dist = {"window": list(it.window), "sup_distance": it.distances,
            "pole_points": [len(a) for a in it.pole_points]}
    text = table_text(_meta(p, args), header, it.table(), args.format, {"distances": dist})
    _emit(args, text, {"distances": dist})
    return 0


def cmd_verify(p, args):
    rep = run_verification(p, seed=args.seed, tol=args.tol)
    _emit(args, dump_json({"meta": _meta(p, args), **rep.as_dict()}))
    return 0 if rep.passed else 1


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def _fail(code: str, message: str, status: int) -> int:
    sys.stderr.write(json.dumps({"error": code, "message": message}) + "\n")
    return status


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on malformed input
    try:
        p = parameters_from(args)
        if not 1e-13 <= args.tol < 1e-2:
            raise UsageError("--tol must lie in [1e-13, 1e-2)")
        return HANDLERS[args.command](p, args)
    except UsageError as exc:
        return _fail("bad_arguments", str(exc), 2)
    except InadmissibleParameters as exc:
        return _fail(exc.code, str(exc), 2)
    except OSError as exc:
        return _fail("io_error", str(exc), 1)
    except MMPhaseError as exc:
        return _fail(exc.code, str(exc), 1)


if __name__ == "__main__":
    sys.exit(main())
