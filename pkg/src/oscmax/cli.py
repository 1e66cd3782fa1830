"""Command line front end: ``oscmax <subcommand> ...``.

Machine-readable output goes to stdout (or ``--out``), a one-line summary to
stderr. Exit status is 0 when everything passed, 1 when a check failed and 2
for a bad configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, bases, funcs, grid, kernels, operators as ops, verify
from .bases import BasisError, BasisSpec
from .expr import ExprError
from .grid import Box, GridError


class ConfigError(ValueError):
    pass


# -- argument helpers ---------------------------------------------------------------


def _res(text: str, ndim: int) -> list[int]:
    parts = [p for p in text.replace("x", ",").split(",") if p.strip()]
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise ConfigError(f"--res: expected integers like 256 or 256,128, got {text!r}") from None
    if len(vals) == 1:
        vals = vals * ndim
    if len(vals) != ndim:
        raise ConfigError(f"--res: {len(vals)} values for a {ndim}-dimensional domain")
    return vals


def _split(text: str | None):
    if text is None:
        return None
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise ConfigError(f"--split: expected integers like 1,1, got {text!r}") from None


def _domain(args) -> Box:
    try:
        return Box.parse(args.domain)
    except (GridError, ValueError) as exc:
        raise ConfigError(f"--domain: {exc}") from None


def _basis(text: str) -> BasisSpec:
    try:
        return BasisSpec.parse(text)
    except (BasisError, OSError) as exc:
        raise ConfigError(f"--basis: {exc}") from None


def _function(args) -> grid.GridFunction:
    if getattr(args, "grid", None):
        return grid.load(args.grid, clip=args.clip)
    dom = _domain(args)
    res = _res(args.res, dom.ndim)
    if args.fn is not None and args.fn_name is not None:
        raise ConfigError("give either --fn or --fn-name, not both")
    if args.fn_name is not None:
        e = funcs.catalog_expr(args.fn_name, dom.ndim)
    elif args.fn is not None:
        e = args.fn
    elif getattr(args, "seed", None) is not None:
        return funcs.function_from_config({"random": {"seed": args.seed}}, dom, res, clip=args.clip)
    else:
        raise ConfigError("no function: give --fn, --fn-name, --grid or --seed")
    return funcs.sample(e, dom, res, clip=args.clip)


def _add_function(p, seed=True):
    g = p.add_argument_group("function")
    g.add_argument("--fn", help="expression in x1..xn (or x, y, z), e.g. 'abs(x - y)'")
    g.add_argument("--fn-name", help=f"catalog function: {', '.join(sorted(funcs.CATALOG))}")
    g.add_argument("--grid", help="load sampled values from a JSON or CSV dump instead")
    g.add_argument("--domain", default="0,1x0,1", help="box as lo,hi per axis joined by 'x' (default 0,1x0,1)")
    g.add_argument("--res", default="64", help="cells per axis: one integer or a comma list (default 64)")
    g.add_argument("--clip", type=float, default=None,
                   help="clip samples to [-clip, clip] instead of rejecting non-finite values")
    if seed:
        g.add_argument("--seed", type=int, default=None, help="use a seeded random smooth function")


def _add_output(p):
    g = p.add_argument_group("output")
    g.add_argument("--out", help="write to this file instead of stdout")
    g.add_argument("--format", choices=("json", "csv"), default="json")
    g.add_argument("--no-meta", action="store_true", help="omit runtimes, versions and timestamps")
    g.add_argument("--threads", type=int, default=None, help="worker threads (default: OSC_THREADS or all cores)")


# -- output ------------------------------------------------------------------------


def _meta(t0: float) -> dict:
    return {
        "version": __version__,
        "backend": kernels.BACKEND,
        "runtime_ms": round((time.perf_counter() - t0) * 1e3, 3),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }


def _rows_csv(rows: list[dict]) -> str:
    keys = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in r.items()})
    return buf.getvalue()


def _emit(args, payload, rows=None):
    if args.format == "csv" and rows is not None:
        text = _rows_csv(rows)
    else:
        text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _say(msg: str):
    print(msg, file=sys.stderr)


def _report_rows(reports: list[dict], prefix="") -> list[dict]:
    rows = []
    for r in reports:
        cid = prefix + r["check_id"]
        rows.append({k: r.get(k) for k in ("check_id", "passed", "lhs", "rhs", "tol", "empirical_constant")} | {"check_id": cid})
        for s in r.get("values", {}).get("series", []):
            rows.append({"check_id": cid + ".series", "L": s["L"], "value": s["value"]})
        rows.extend(_report_rows(r.get("parts", []), cid + "/"))
    return rows


# -- subcommands ---------------------------------------------------------------------


def cmd_norm(args) -> int:
    t0 = time.perf_counter()
    f = _function(args)
    if args.kind not in ops.KINDS:
        raise ConfigError(f"--kind: expected one of {', '.join(ops.KINDS)}")
    kw = {"threads": args.threads}
    if args.kind == "bmo" and args.direct:
        kw["direct"] = True
    rep = ops.norm(f, args.kind, _basis(args.basis), p=args.p, split=_split(args.split), factor=args.factor, **kw)
    out = rep.to_dict(f, meta=not args.no_meta)
    out["domain"] = {"lo": list(f.domain.lo), "hi": list(f.domain.hi)}
    if not args.no_meta:
        out["meta"] = _meta(t0)
    rows = [{"kind": rep.kind, "value": rep.value, "argmax_index": rep.argmax_index}]
    rows += [{"kind": "trail", "value": v, "argmax_index": i} for i, v in rep.trail]
    _emit(args, out, rows)
    _say(f"{rep.kind} = {rep.value:.10g} over {rep.shapes} shapes")
    return 0


def cmd_maximal(args) -> int:
    f = _function(args)
    M = ops.maximal(f, _basis(args.basis), args.mode, threads=args.threads)
    text = grid.to_csv(M) if args.format == "csv" else grid.to_json(M)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    _say(f"maximal function: min {M.values.min():.6g}, max {M.values.max():.6g}, mean {M.values.mean():.6g}")
    return 0


def _verify_configs(args) -> list[dict]:
    if args.manifest:
        try:
            return verify.load_manifest(args.manifest)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"--manifest: {exc}") from None
    if not args.check:
        raise ConfigError("give --manifest or --check")
    extra = {"basis": json.loads(args.basis) if args.basis.strip().startswith("{") else args.basis}
    if args.split:
        extra["split"] = list(_split(args.split))
    if args.p is not None:
        extra["p"] = args.p
    if args.clip is not None:
        extra["clip"] = args.clip
    res = [int(r) for r in args.res.replace("x", ",").split(",")]
    res = res[0] if len(res) == 1 else res
    if args.random:
        return verify.random_suite(args.check, args.random, res, args.domain, args.seed or 0, **extra)
    cfg = {"check": args.check, "domain": args.domain, "res": res, **extra}
    if args.fn_name:
        cfg["f"] = {"fn_name": args.fn_name}
    elif args.fn:
        cfg["f"] = args.fn
    elif args.seed is not None:
        cfg["f"] = {"random": {"seed": args.seed}}
    else:
        raise ConfigError("no function: give --fn, --fn-name, --seed or --random N")
    if args.g:
        cfg["g"] = args.g
    elif args.check.startswith("semilattice"):
        cfg["g"] = {"random": {"seed": (args.seed or 0) + 1}}
    return [cfg]


def cmd_verify(args) -> int:
    t0 = time.perf_counter()
    configs = _verify_configs(args)
    try:
        reports = verify.run_suite(configs, args.threads, args.failures_dir)
    except KeyError as exc:
        raise ConfigError(f"config is missing field {exc}") from None
    dicts = [r.to_dict() for r in reports]
    payload = {"reports": dicts}
    if not args.no_meta:
        payload["meta"] = _meta(t0)
    _emit(args, payload, _report_rows(dicts))
    failed = [r for r in reports if not r.passed and not r.degenerate]
    _say(f"{len(reports) - len(failed)}/{len(reports)} checks passed")
    return 1 if failed else 0


def cmd_engulf(args) -> int:
    t0 = time.perf_counter()
    spec = _basis(args.basis)
    payload = {}
    if args.witness_H:
        ws = [bases.rectangle_witness(H) for H in args.witness_H]
        payload["witness"] = ws
        payload["passed"] = False
        payload["kind"] = spec.kind
        payload["note"] = "any rectangle holding S = [0,1]x[0,H] and T = [0,H]x[0,1] has area >= H^2, so the ratio grows like H"
        rows = [{"H": w["H"], "ratio": w["ratio"]} for w in ws]
        _say("witness ratios: " + ", ".join(f"H={w['H']}: {w['ratio']:g}" for w in ws))
        code = 1
    else:
        dom = _domain(args)
        gf = grid.make_grid(dom, _res(args.res, dom.ndim))
        rep = bases.check_engulfing(spec, gf, budget=args.budget, seed=args.seed,
                                    cap_d=args.cap_d, cap_e=args.cap_e)
        payload = rep.to_dict()
        rows = [{k: v for k, v in payload.items() if not isinstance(v, (dict, list))}]
        _say(f"{spec.kind}: c_d = {rep.c_d_emp:.6g}, c_e = {rep.c_e_emp:.6g}, "
             f"{rep.pairs_checked} pairs, {'passed' if rep.passed else 'FAILED'}")
        code = 0 if rep.passed else 1
    if not args.no_meta:
        payload["meta"] = _meta(t0)
    _emit(args, _clean(payload), rows)
    return code


def _clean(v):
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, np.generic):
        return _clean(v.item())
    return v


def cmd_reproduce(args) -> int:
    t0 = time.perf_counter()
    reports = verify.reproduce_examples(args.res)
    dicts = [r.to_dict() for r in reports]
    payload = {"reports": dicts}
    if not args.no_meta:
        payload["meta"] = _meta(t0)
    _emit(args, _clean(payload), _report_rows(dicts))
    for r in reports:
        _say(f"{'PASS' if r.passed else 'FAIL'}  {r.check_id}")
    return 0 if all(r.passed for r in reports) else 1


def cmd_dump(args) -> int:
    f = _function(args)
    text = grid.to_csv(f) if args.format == "csv" else grid.to_json(f)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    _say(f"sampled {f.size} cells on {f.domain}")
    return 0


# -- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oscmax", description="Maximal functions and oscillation norms over shape bases.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("norm", help="oscillation norm of a sampled function",
                       description="Supremum over a basis of shapes of a per-shape oscillation: mean oscillation "
                       "(bmo, p-th power), lower oscillation against the minimum (blo), their lower-dimensional "
                       "slice versions, and the rectangular variants over product shapes.")
    _add_function(p)
    p.add_argument("--kind", default="bmo", help=f"one of {', '.join(ops.KINDS)} (default bmo)")
    p.add_argument("--basis", default="rectangles", help="basis spec: a kind name, inline JSON or @file.json")
    p.add_argument("--p", type=float, default=1.0, help="exponent of the mean oscillation (default 1)")
    p.add_argument("--split", help="factor split such as 1,1 or 2,1 (rectangular and lower kinds)")
    p.add_argument("--factor", type=int, help="factor index for lower_bmo / lower_blo (0-based)")
    p.add_argument("--direct", action="store_true", help="p = 2 by a per-shape pass instead of the variance identity")
    _add_output(p)
    p.set_defaults(run=cmd_norm)

    p = sub.add_parser("maximal", help="geometric maximal function as a grid dump",
                       description="Pointwise maximum, over all basis shapes containing a cell, of the mean of |f| "
                       "(or of f with --mode signed).")
    _add_function(p)
    p.add_argument("--basis", default="rectangles", help="basis spec: a kind name, inline JSON or @file.json")
    p.add_argument("--mode", choices=("abs", "signed"), default="abs")
    _add_output(p)
    p.set_defaults(run=cmd_maximal)

    p = sub.add_parser("verify", help="run inequality checks",
                       description="Checks between norms: the BLO semilattice bound, Jensen, BLO inside BMO, maximal "
                       "function into BLO (empirical constant), product-basis chains, rectangular inclusions and the "
                       "strong product bound. Exit status 1 if any non-degenerate check fails.")
    _add_function(p, seed=False)
    p.add_argument("--check", choices=verify.CHECKS)
    p.add_argument("--manifest", help="JSON list of check configs")
    p.add_argument("--random", type=int, metavar="N", help="run N seeded random functions")
    p.add_argument("--seed", type=int, default=None, help="random function seed (or the first seed with --random)")
    p.add_argument("--g", help="second function for semilattice checks")
    p.add_argument("--basis", default="rectangles")
    p.add_argument("--split")
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--failures-dir", help="write each failing config here as standalone JSON")
    _add_output(p)
    p.set_defaults(run=cmd_verify)

    p = sub.add_parser("engulf", help="doubling and engulfing constants of a basis",
                       description="For every pair of shapes S, T with T meeting S but leaving the double of S, the "
                       "smallest basis shape holding both, and the worst volume ratios.")
    p.add_argument("--basis", default="cubes")
    p.add_argument("--domain", default="0,1x0,1")
    p.add_argument("--res", default="32")
    p.add_argument("--budget", type=int, default=2 * 10**8, help="check all pairs up to this many, else sample")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap-d", type=float, default=None, help="doubling cap (default 2^n)")
    p.add_argument("--cap-e", type=float, default=None, help="engulfing cap (default 6^n)")
    p.add_argument("--witness-H", type=int, nargs="+", help="rectangle witness sizes instead of a pair scan")
    _add_output(p)
    p.set_defaults(run=cmd_engulf)

    p = sub.add_parser("reproduce", help="run the worked examples",
                       description="Rectangular BMO of |x - y| (slope pi/18), the absolute-value BLO variant of "
                       "max(x, y) (slope 1/3) against rectangular BLO (zero), the -log|x - y| lower bound, "
                       "single-variable zero norms, and engulfing constants with the rectangle witness.")
    p.add_argument("--res", type=int, default=1024, help="resolution of the example grids (default 1024)")
    _add_output(p)
    p.set_defaults(run=cmd_reproduce)

    p = sub.add_parser("dump", help="sample a function and write the grid",
                       description="Cell-centred samples as JSON ({domain, res, values}) or CSV.")
    _add_function(p)
    _add_output(p)
    p.set_defaults(run=cmd_dump)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        _say("error: --threads must be at least 1")
        return 2
    if getattr(args, "threads", None) is not None:
        os.environ["OSC_THREADS"] = str(args.threads)
    try:
        return args.run(args)
    except (ConfigError, BasisError, ExprError, GridError, ValueError, OSError) as exc:
        _say(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
