"""Numerical checks of the inequalities between the norms and operators.

Each check returns a VerifyReport with ``passed == (lhs <= rhs + tol)``.
Bundled checks carry their sub-reports in ``parts``; the bundle's lhs is the
worst margin ``max(lhs_i - rhs_i)`` against rhs 0.

Constants that depend on the unknown operator norm of M are replaced by an
empirical constant: the smallest c that makes the inequality hold over every
enumerated shape. Those checks pass when c is finite; resolution stability is
judged by comparing reports from two grids.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bases, funcs, operators as ops
from .bases import BasisSpec, FactorSplit, _as_spec, factor_specs, product_spec
from .grid import Box, GridError, GridFunction

TOL_IDENTITY = 1e-12
TOL_INEQ = 1e-9
TOL_QUAD = 0.01


@dataclass
class VerifyReport:
    check_id: str
    lhs: float
    rhs: float
    passed: bool
    tol: float = TOL_INEQ
    empirical_constant: float | None = None
    degenerate: bool = False
    witness: dict | None = None
    config: dict = field(default_factory=dict)
    seed: int | None = None
    note: str | None = None
    values: dict = field(default_factory=dict)
    parts: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "check_id": self.check_id,
            "passed": self.passed,
            "lhs": _num(self.lhs),
            "rhs": _num(self.rhs),
            "tol": self.tol,
        }
        if self.empirical_constant is not None:
            out["empirical_constant"] = _num(self.empirical_constant)
        if self.degenerate:
            out["degenerate"] = True
        if self.values:
            out["values"] = {k: _jsonable(v) for k, v in self.values.items()}
        if self.witness is not None:
            out["witness"] = self.witness
        if self.note:
            out["note"] = self.note
        if self.config:
            out["config"] = self.config
        if self.seed is not None:
            out["seed"] = self.seed
        if self.parts:
            out["parts"] = [p.to_dict() for p in self.parts]
        return out


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else str(v)


def _jsonable(v):
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (float, np.floating)):
        return _num(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def _check(check_id, lhs, rhs, tol=TOL_INEQ, **kw) -> VerifyReport:
    lhs, rhs = float(lhs), float(rhs)
    return VerifyReport(check_id, lhs, rhs, bool(lhs <= rhs + tol), tol, **kw)


def _bundle(check_id, parts, **kw) -> VerifyReport:
    margin = max(p.lhs - p.rhs for p in parts)
    return VerifyReport(check_id, margin, 0.0, all(p.passed for p in parts), max(p.tol for p in parts),
                        parts=list(parts), **kw)


def _factor_list(f: GridFunction, split, factor_bases) -> tuple[FactorSplit, list[BasisSpec]]:
    split = FactorSplit.of(split).check(f.ndim)
    if isinstance(factor_bases, (list, tuple)):
        specs = [_as_spec(s) for s in factor_bases]
    else:
        specs = factor_specs(_as_spec(factor_bases), split)
    if len(specs) != split.k:
        raise bases.BasisError(f"{len(specs)} factor bases for a {split.k}-factor split")
    return split, specs


def _arg(rep: ops.OscReport, f=None) -> dict | None:
    return rep.argmax.describe(f) if rep.argmax is not None else None


# -- semilattice -------------------------------------------------------------------


def verify_semilattice(f: GridFunction, g: GridFunction, basis, rectangular: bool = False,
                       split=None, tol: float = TOL_INEQ) -> VerifyReport:
    """||max(f, g)|| <= ||f|| + ||g|| in BLO, or in rectangular BLO."""
    if not f.same_grid(g):
        raise GridError("f and g must live on the same grid")
    h = f.with_values(np.maximum(f.values, g.values))
    if rectangular:
        if split is None:
            raise bases.BasisError("the rectangular semilattice check needs a split")
        split, specs = _factor_list(f, split, basis)
        norm = lambda u: ops.rec_blo(u, split, specs)
        cid = "semilattice_rec_blo"
    else:
        norm = lambda u: ops.blo_norm(u, basis)
        cid = "semilattice_blo"
    rh, rf, rg = norm(h), norm(f), norm(g)
    return _check(cid, rh.value, rf.value + rg.value, tol,
                  values={"max_fg": rh.value, "f": rf.value, "g": rg.value}, witness=_arg(rh, f))


# -- elementary invariants -------------------------------------------------------------


def verify_jensen(f: GridFunction, basis, ps=(1.5, 2.0, 3.0), tol: float = TOL_INEQ) -> VerifyReport:
    """The p = 1 oscillation never exceeds the p > 1 oscillation."""
    b1 = ops.bmo_norm(f, basis, 1.0).value
    parts = []
    for p in ps:
        bp = ops.bmo_norm(f, basis, p).value
        parts.append(_check(f"jensen_p{p:g}", b1, bp, tol, values={"bmo1": b1, f"bmo{p:g}": bp}))
    return _bundle("jensen", parts)


def verify_blo_in_bmo(f: GridFunction, basis, tol: float = TOL_INEQ) -> VerifyReport:
    """||f||_BMO <= 2 ||f||_BLO."""
    bmo = ops.bmo_norm(f, basis, 1.0)
    blo = ops.blo_norm(f, basis)
    return _check("blo_in_bmo", bmo.value, 2 * blo.value, tol, values={"bmo": bmo.value, "blo": blo.value},
                  witness=_arg(bmo, f))


# -- maximal function into BLO -------------------------------------------------------------


def _empirical(check_id, gap: ops.OscReport, norm: ops.OscReport, f, extra=None, note=None) -> VerifyReport:
    values = {"lhs_norm": gap.value, "bmo": norm.value}
    values.update(extra or {})
    if norm.value == 0.0:
        return VerifyReport(check_id, gap.value, gap.value, True, TOL_INEQ, None, degenerate=True,
                            values=values, note="f has zero oscillation; the constant is undefined")
    c = gap.value / norm.value
    return VerifyReport(check_id, gap.value, c * norm.value, bool(math.isfinite(c)), TOL_INEQ, c,
                        witness=_arg(gap, f), values=values, note=note)


_FINITE_NOTE = "on a finite grid the right-hand side is finite for every shape, so that hypothesis holds trivially"


def verify_bennett(f: GridFunction, basis, p: float = 2.0) -> VerifyReport:
    """mean_S Mf - min_S Mf <= c ||f||_BMO^p for every shape S.

    Equivalently ||Mf||_BLO <= c ||f||_BMO^p; c is reported as the empirical
    constant ``||Mf||_BLO / ||f||_BMO^p``.
    """
    spec = _as_spec(basis)
    if spec.kind not in bases.ENGULFING_KINDS:
        raise bases.BasisError(f"basis kind {spec.kind!r} is not engulfing")
    M = ops.maximal(f, spec)
    gap = ops.blo_norm(M, spec)
    norm = ops.bmo_norm(f, spec, p)
    return _empirical("bennett", gap, norm, f, note=_FINITE_NOTE)


def verify_strong_product(f: GridFunction, split, factor_bases, p: float = 2.0) -> VerifyReport:
    """mean_S Mf <= c ||f||_BMO^p + mean_S max_i min_{S_i} (Mf) slice, for every product S.

    Equivalently ||Mf||_recBLO <= c ||f||_BMO^p.
    """
    split, specs = _factor_list(f, split, factor_bases)
    prod = product_spec(specs, split)
    M = ops.maximal(f, prod)
    gap = ops.rec_blo(M, split, specs)
    norm = ops.bmo_norm(f, prod, p)
    return _empirical("strong_product", gap, norm, f, note=_FINITE_NOTE)


# -- product bases ---------------------------------------------------------------------


def verify_product_bmo(f: GridFunction, split, factor_bases, p: float = 1.0, tol: float = TOL_INEQ) -> VerifyReport:
    """Upper bound by the sum of lower-dimensional norms, and the reverse
    bound with constant 2^(k-1) (1 when p = 2)."""
    split, specs = _factor_list(f, split, factor_bases)
    prod = product_spec(specs, split)
    full = ops.bmo_norm(f, prod, p).value
    lows = [ops.lower_bmo(f, split, i, specs[i], p).value for i in range(split.k)]
    const = 1.0 if p == 2 else float(2 ** (split.k - 1))
    vals = {"product": full, "lower": lows, "constant_b": const}
    return _bundle("product_bmo", [
        _check("product_bmo_a", full, sum(lows), tol, values=vals),
        _check("product_bmo_b", max(lows), const * full, tol, values=vals),
    ])


def verify_product_blo(f: GridFunction, split, factor_bases, tol: float = TOL_INEQ) -> VerifyReport:
    """max_i ||f||_BLO_i <= ||f||_BLO <= sum_i ||f||_BLO_i."""
    split, specs = _factor_list(f, split, factor_bases)
    prod = product_spec(specs, split)
    full = ops.blo_norm(f, prod).value
    lows = [ops.lower_blo(f, split, i, specs[i]).value for i in range(split.k)]
    vals = {"product": full, "lower": lows}
    return _bundle("product_blo", [
        _check("product_blo_a", full, sum(lows), tol, values=vals),
        _check("product_blo_b", max(lows), full, tol, values=vals),
    ])


def verify_rec_inclusions(f: GridFunction, split, factor_bases, p: float = 1.0, tol: float = TOL_INEQ) -> VerifyReport:
    """Rectangular norms against lower-dimensional and full norms.

    With two factors: recBMO <= 2 min_i ||f||_BMO_i, recBMO <= 3 ||f||_BMO and
    recBMO <= 4 ||f||_BMO. For any number of factors: recBLO <= min_i
    ||f||_BLO_i and recBLO <= ||f||_BLO.
    """
    split, specs = _factor_list(f, split, factor_bases)
    prod = product_spec(specs, split)
    parts = []
    rblo = ops.rec_blo(f, split, specs).value
    blo_low = [ops.lower_blo(f, split, i, specs[i]).value for i in range(split.k)]
    blo = ops.blo_norm(f, prod).value
    if split.k == 2:
        rbmo = ops.rec_bmo(f, split, specs).value
        bmo_low = [ops.lower_bmo(f, split, i, specs[i], p).value for i in range(2)]
        bmo = ops.bmo_norm(f, prod, p).value
        v = {"rec_bmo": rbmo, "lower_bmo": bmo_low, "bmo": bmo}
        parts += [
            _check("rec_bmo_le_2_min_lower", rbmo, 2 * min(bmo_low), tol, values=v),
            _check("rec_bmo_le_3_bmo", rbmo, 3 * bmo, tol, values=v),
            _check("rec_bmo_le_4_bmo", rbmo, 4 * bmo, tol, values=v),
        ]
    v = {"rec_blo": rblo, "lower_blo": blo_low, "blo": blo}
    parts += [
        _check("rec_blo_le_min_lower", rblo, min(blo_low), tol, values=v),
        _check("rec_blo_le_blo", rblo, blo, tol, values=v),
    ]
    return _bundle("rec_inclusions", parts)


# -- worked examples ---------------------------------------------------------------------


def _square(expr: str, L: float, res: int, offset=(0.0, 0.0)) -> GridFunction:
    dom = Box([offset[0], offset[1]], [offset[0] + L, offset[1] + L])
    return funcs.sample(expr, dom, (res, res))


def _full(f: GridFunction):
    return bases.Shape(tuple((0, r) for r in f.res))


def _slope(Ls, vals) -> float:
    return float(np.polyfit(np.asarray(Ls, float), np.asarray(vals, float), 1)[0])


def _closed_form(check_id, value, target, rel=TOL_QUAD, **kw) -> VerifyReport:
    err = abs(value - target) / abs(target)
    return VerifyReport(check_id, err, rel, bool(err <= rel), 0.0, values={"value": value, "target": target}, **kw)


def example_rec_bmo_abs_diff(res: int = 1024, Ls=(1, 2, 4)) -> VerifyReport:
    """|x - y| on the square [0, L]^2: the rectangular BMO statistic is pi L / 18."""
    vals = [ops.shape_statistic(f, _full(f), "rec_bmo", split=(1, 1)) for f in (_square("abs(x - y)", L, res) for L in Ls)]
    target = math.pi / 18
    series = [{"L": L, "value": v} for L, v in zip(Ls, vals)]
    return _bundle("rec_bmo_abs_diff", [
        _closed_form("rec_bmo_abs_diff_L1", vals[list(Ls).index(1)], target),
        _closed_form("rec_bmo_abs_diff_slope", _slope(Ls, vals), target, rel=0.02),
    ], values={"series": series, "target_slope": target}, config={"res": res, "L": list(Ls)})


def example_rec_bmo_diff(res: int = 256) -> VerifyReport:
    """x - y has identically zero rectangular BMO integrand."""
    f = _square("x - y", 1.0, res)
    r = ops.rec_bmo(f, (1, 1), {"kind": "rectangles", "granularity": "dyadic"})
    return _check("rec_bmo_diff_zero", r.value, 0.0, TOL_IDENTITY, values={"rec_bmo": r.value},
                  config={"res": res, "basis": "rectangles dyadic"})


def example_naive_blo(res: int = 1024, Ls=(1, 2, 4)) -> VerifyReport:
    """max(x, y) on [0, L]^2: the absolute-value variant gives L / 3 while
    rectangular BLO vanishes; x and y alone give 0 in both."""
    dy = {"kind": "rectangles", "granularity": "dyadic"}
    vals = [ops.shape_statistic(f, _full(f), "rec_blo_naive", split=(1, 1))
            for f in (_square("max(x, y)", L, res) for L in Ls)]
    h = _square("max(x, y)", 1.0, res)
    parts = [
        _closed_form("naive_max_L1", vals[list(Ls).index(1)], 1 / 3),
        _closed_form("naive_max_slope", _slope(Ls, vals), 1 / 3, rel=0.02),
        _check("rec_blo_max_stat_zero", ops.shape_statistic(h, _full(h), "rec_blo", split=(1, 1)), 0.0),
        _check("rec_blo_max_norm_zero", ops.rec_blo(h, (1, 1), dy).value, 0.0),
    ]
    for e in ("x", "y"):
        g = _square(e, 1.0, res)
        parts.append(_check(f"naive_{e}_zero", ops.rec_blo_naive(g, (1, 1), dy).value, 0.0))
    return _bundle("naive_blo_max", parts, values={"series": [{"L": L, "value": v} for L, v in zip(Ls, vals)]},
                   config={"res": res, "L": list(Ls)})


def example_single_variable(res: int = 256) -> VerifyReport:
    """Functions of one coordinate, and maxima of two such, have zero rectangular BLO."""
    dy = {"kind": "rectangles", "granularity": "dyadic"}
    dom = Box([0, 0, 0], [1, 1, 1])
    n3 = max(8, res // 8)
    parts = []
    for e in ("exp(x) * x", "abs(y - 0.3)", "max(exp(x) * x, abs(y - 0.3))"):
        f = _square(e, 1.0, res)
        parts.append(_check(f"rec_blo_zero[{e}]", ops.rec_blo(f, (1, 1), dy).value, 0.0))
    f3 = funcs.sample("max(-log(x), z^2)", dom, (n3, n3, n3))
    parts.append(_check("rec_blo_zero_k3[max(-log(x), z^2)]", ops.rec_blo(f3, (1, 1, 1), dy).value, 0.0))
    return _bundle("single_variable_zero", parts, config={"res": res, "res3": n3})


def example_log_lower_bound(res: int = 1024) -> VerifyReport:
    """-log|x - y| on [0,1] x [1,2]: rectangular BLO statistic at least 2 log 2 - 1."""
    f = funcs.sample("-log(abs(x - y))", Box([0, 1], [1, 2]), (res, res))
    v = ops.shape_statistic(f, _full(f), "rec_blo", split=(1, 1))
    bound = 2 * math.log(2) - 1
    rhs = bound * (1 - TOL_QUAD)
    return VerifyReport("rec_blo_log_lower_bound", rhs, v, bool(v >= rhs), 0.0,
                        values={"value": v, "bound": bound},
                        note="only the lower bound is asserted; the computed average is reported as is",
                        config={"res": res})


def example_engulfing(res: int = 32, Hs=(2, 4, 8, 16)) -> VerifyReport:
    """Doubling and engulfing constants for cubes and intervals, and the
    rectangle witness family whose ratio grows like H."""
    parts = []
    for kind, n, r in (("cubes", 2, res), ("intervals", 1, 2 * res)):
        gf = GridFunction(Box([0] * n, [1] * n), np.zeros((r,) * n))
        e = bases.check_engulfing({"kind": kind}, gf)
        parts.append(_check(f"{kind}_c_d", e.c_d_emp, 2.0**n, values=e.to_dict()))
        parts.append(_check(f"{kind}_c_e", e.c_e_emp, 6.0**n if kind == "cubes" else 4.0, values=e.to_dict()))
    ratios = [bases.rectangle_witness(H)["ratio"] for H in Hs]
    for H, r in zip(Hs, ratios):
        parts.append(VerifyReport(f"rectangle_witness_H{H}", float(H), r, bool(r >= H), 0.0, values={"ratio": r}))
    inc = all(b > a for a, b in zip(ratios, ratios[1:]))
    parts.append(VerifyReport("rectangle_witness_increasing", 0.0 if inc else 1.0, 0.0, inc, 0.0,
                              values={"ratios": ratios}))
    return _bundle("engulfing", parts, config={"res": res, "H": list(Hs)})


def reproduce_examples(res: int = 1024) -> list[VerifyReport]:
    """The worked examples at their canonical configurations."""
    return [
        example_rec_bmo_abs_diff(res),
        example_rec_bmo_diff(min(res, 256)),
        example_naive_blo(res),
        example_single_variable(min(res, 256)),
        example_log_lower_bound(res),
        example_engulfing(),
    ]


# -- config-driven suites ------------------------------------------------------------


CHECKS = ("semilattice", "semilattice_rec", "jensen", "blo_in_bmo", "bennett", "strong_product",
          "product_bmo", "product_blo", "rec_inclusions")


def _function(cfg: dict, key: str, domain: Box, res) -> GridFunction:
    sub = cfg.get(key)
    if sub is None:
        raise ValueError(f"config is missing {key!r}")
    if isinstance(sub, str):
        sub = {"fn": sub}
    elif isinstance(sub, (int, float)):
        sub = {"random": {"seed": int(sub)}}
    return funcs.function_from_config(sub, domain, res, clip=cfg.get("clip"))


def run_check(cfg: dict) -> VerifyReport:
    """Run one check described by a JSON-style config.

    Keys: ``check``, ``domain`` ("0,1x0,1"), ``res`` (int or list), ``basis``,
    ``split``, ``p``, ``f`` and optionally ``g`` (an expression string, a
    ``{"fn_name": ...}`` object, or a ``{"random": {"seed": s}}`` object),
    ``clip``.
    """
    check = cfg.get("check")
    if check not in CHECKS:
        raise ValueError(f"unknown check {check!r}; expected one of {', '.join(CHECKS)}")
    domain = cfg["domain"] if isinstance(cfg["domain"], Box) else Box.parse(str(cfg["domain"]))
    res = cfg["res"]
    res = [int(res)] * domain.ndim if isinstance(res, int) else [int(r) for r in res]
    f = _function(cfg, "f", domain, res)
    basis = cfg.get("basis", "rectangles")
    if isinstance(basis, list):
        basis = [_as_spec(b) for b in basis]
    else:
        basis = _as_spec(basis)
    split = cfg.get("split")
    p = float(cfg.get("p", 1.0))
    if check in ("semilattice", "semilattice_rec"):
        g = _function(cfg, "g", domain, res)
        rep = verify_semilattice(f, g, basis, check == "semilattice_rec", split)
    elif check == "jensen":
        rep = verify_jensen(f, basis)
    elif check == "blo_in_bmo":
        rep = verify_blo_in_bmo(f, basis)
    elif check == "bennett":
        rep = verify_bennett(f, basis, float(cfg.get("p", 2.0)))
    elif check == "strong_product":
        rep = verify_strong_product(f, split, basis, float(cfg.get("p", 2.0)))
    elif check == "product_bmo":
        rep = verify_product_bmo(f, split, basis, p)
    elif check == "product_blo":
        rep = verify_product_blo(f, split, basis)
    else:
        rep = verify_rec_inclusions(f, split, basis, p)
    rep.config = _portable(cfg)
    rep.seed = _seed(cfg)
    return rep


def _seed(cfg):
    for key in ("f", "g"):
        sub = cfg.get(key)
        if isinstance(sub, dict) and "random" in sub:
            return int(sub["random"]["seed"])
    return cfg.get("seed")


def _portable(cfg: dict) -> dict:
    out = {}
    for k, v in cfg.items():
        if isinstance(v, BasisSpec):
            v = v.to_dict()
        elif isinstance(v, list) and v and isinstance(v[0], BasisSpec):
            v = [b.to_dict() for b in v]
        elif isinstance(v, Box):
            v = "x".join(f"{a:g},{b:g}" for a, b in zip(v.lo, v.hi))
        out[k] = v
    return out


def random_suite(check: str, n: int, res, domain: str = "0,1x0,1", seed: int = 0, **extra) -> list[dict]:
    """``n`` configs for ``check`` on seeded random smooth functions."""
    out = []
    for i in range(n):
        cfg = {"check": check, "domain": domain, "res": res, "f": {"random": {"seed": seed + 2 * i}}}
        if check.startswith("semilattice"):
            cfg["g"] = {"random": {"seed": seed + 2 * i + 1}}
        cfg.update(extra)
        out.append(cfg)
    return out


def run_suite(configs: list[dict], threads: int | None = None, failures_dir=None) -> list[VerifyReport]:
    """Run configs in parallel; reports come back in config order.

    A failing config is written to ``failures_dir`` as a standalone JSON file
    that reproduces it alone.
    """
    threads = ops._threads(threads)
    if threads > 1 and len(configs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            reports = list(ex.map(run_check, configs))
    else:
        reports = [run_check(c) for c in configs]
    if failures_dir is not None:
        bad = [(i, r) for i, r in enumerate(reports) if not r.passed]
        if bad:
            os.makedirs(failures_dir, exist_ok=True)
        for i, r in bad:
            path = Path(failures_dir) / f"{r.check_id}_{i:03d}.json"
            path.write_text(json.dumps(r.config, indent=2, sort_keys=True) + "\n")
    return reports


def load_manifest(path) -> list[dict]:
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = [data]
    if not isinstance(data, list) or not all(isinstance(c, dict) for c in data):
        raise ValueError("a suite manifest is a JSON list of check configs")
    return data


def stability(values, factor: float = 2.0) -> dict:
    """Whether successive empirical constants stay within ``factor`` of each other."""
    vals = [float(v) for v in values]
    ratios = [max(a, b) / min(a, b) if min(a, b) > 0 else math.inf for a, b in zip(vals, vals[1:])]
    return {"constants": vals, "ratios": ratios, "stable": bool(all(r <= factor for r in ratios))}
