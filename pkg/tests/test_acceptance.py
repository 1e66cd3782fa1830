"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line (collected again in the terminal
summary) and then asserts. Tolerances are the ones the criteria state.
"""

import itertools
import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

import oracle
from conftest import random_grid, unit
from oscmax import funcs, verify
from oscmax import operators as ops
from oscmax.bases import Shape, check_engulfing, rectangle_witness
from oscmax.grid import Box, GridFunction

pytestmark = pytest.mark.slow

RECT = {"kind": "rectangles"}
DYADIC_RECT = {"kind": "rectangles", "granularity": "dyadic"}
DYADIC_CUBES = {"kind": "cubes", "granularity": "dyadic"}


def whole(f):
    return Shape(tuple((0, r) for r in f.res))


def square(expr, L, res=1024, lo=(0.0, 0.0)):
    return funcs.sample(expr, Box(list(lo), [lo[0] + L, lo[1] + L]), (res, res))


def slope(Ls, vals):
    return float(np.polyfit(Ls, vals, 1)[0])


def smooth(res, seed):
    dom = unit(len(res))
    return GridFunction(dom, funcs.random_smooth_values(dom, res, seed))


def test_criterion_01_abs_diff_rectangular_bmo(criterion):
    t0 = time.perf_counter()
    Ls = [1, 2, 4]
    vals = [ops.shape_statistic(f, whole(f), "rec_bmo", split=(1, 1)) for f in (square("abs(x - y)", L) for L in Ls)]
    elapsed = time.perf_counter() - t0
    target = math.pi / 18
    err, s = abs(vals[0] - target) / target, slope(Ls, vals)
    serr = abs(s - target) / target
    ok = err <= 0.01 and serr <= 0.02 and elapsed < 30
    assert criterion(1, ok, f"L=1 value {vals[0]:.6f} (rel err {err:.2e}), slope {s:.6f} (rel err {serr:.2e}), {elapsed:.1f}s")


def test_criterion_02_naive_blo_of_max(criterion):
    Ls = [1, 2, 4]
    vals = [ops.shape_statistic(f, whole(f), "rec_blo_naive", split=(1, 1)) for f in (square("max(x, y)", L) for L in Ls)]
    h = square("max(x, y)", 1)
    fixed = ops.shape_statistic(h, whole(h), "rec_blo", split=(1, 1))
    sup = ops.rec_blo(h, (1, 1), DYADIC_RECT).value
    err, s = abs(vals[0] - 1 / 3) * 3, slope(Ls, vals)
    serr = abs(s - 1 / 3) * 3
    ok = err <= 0.01 and serr <= 0.02 and fixed <= 1e-9 and sup <= 1e-9
    assert criterion(2, ok, f"naive L=1 {vals[0]:.6f}, slope {s:.6f}; rectangular BLO statistic {fixed:.1e}, "
                            f"dyadic sup {sup:.1e}")


def test_criterion_03_log_lower_bound(criterion):
    f = square("-log(abs(x - y))", 1, lo=(0.0, 1.0))
    v = ops.shape_statistic(f, whole(f), "rec_blo", split=(1, 1))
    bound = (2 * math.log(2) - 1) * 0.99
    assert criterion(3, v >= bound, f"statistic {v:.6f} >= {bound:.4f}")


def test_criterion_04_engulfing(criterion):
    rep = check_engulfing({"kind": "cubes"}, GridFunction(unit(2), np.zeros((32, 32))))
    ratios = {H: rectangle_witness(H)["ratio"] for H in (2, 4, 8, 16)}
    ok = rep.exhaustive and rep.c_d_emp <= 4 and rep.c_e_emp <= 36 and all(r >= H for H, r in ratios.items())
    assert criterion(4, ok, f"cubes 32^2 exhaustive={rep.exhaustive} pairs={rep.pairs_checked} c_d={rep.c_d_emp:.3g} "
                            f"c_e={rep.c_e_emp:.4g}; witness ratios {ratios}")


CORPUS = [smooth((64, 64), 1000 + i) for i in range(30)]
CUBE3 = smooth((16, 16, 16), 77)


def test_criterion_05_product_blo_chain(criterion):
    worst, fails = -math.inf, 0
    for f in CORPUS:
        r = verify.verify_product_blo(f, (1, 1), RECT)
        worst = max(worst, r.lhs)
        fails += not r.passed
    r3 = verify.verify_product_blo(CUBE3, (1, 1, 1), RECT)
    ok = fails == 0 and worst <= 1e-9 and r3.passed
    assert criterion(5, ok, f"30 grids at 64^2: {fails} failures, worst margin {worst:.2e}; 16^3 k=3 margin {r3.lhs:.2e}")


def test_criterion_06_product_bmo_chain(criterion):
    worst, fails = -math.inf, 0
    for f in CORPUS:
        for p in (1.0, 2.0):
            r = verify.verify_product_bmo(f, (1, 1), RECT, p)
            worst = max(worst, r.lhs)
            fails += not r.passed
    r3 = [verify.verify_product_bmo(CUBE3, (1, 1, 1), RECT, p) for p in (1.0, 2.0)]
    ok = fails == 0 and worst <= 1e-9 and all(r.passed for r in r3)
    assert criterion(6, ok, f"30 grids x p in (1, 2): {fails} failures, worst margin {worst:.2e}; "
                            f"16^3 k=3 margins {[f'{r.lhs:.2e}' for r in r3]}")


def test_criterion_07_rectangular_and_semilattice_suites(criterion):
    suites = {
        "rec_inclusions": verify.random_suite("rec_inclusions", 50, 32, seed=5000, split=[1, 1], basis="rectangles"),
        "semilattice": verify.random_suite("semilattice", 50, 32, seed=6000, basis="rectangles"),
        "semilattice_rec": verify.random_suite("semilattice_rec", 50, 32, seed=7000, split=[1, 1], basis="rectangles"),
    }
    summary, ok = [], True
    for name, cfgs in suites.items():
        reps = verify.run_suite(cfgs)
        bad = sum(not r.passed for r in reps)
        margin = max(r.lhs - r.rhs for r in reps)
        ok &= bad == 0 and margin <= 1e-9
        summary.append(f"{name} {50 - bad}/50 (worst margin {margin:.2e})")
    assert criterion(7, ok, "; ".join(summary))


def _stable_constants(make, basis, check, resolutions, **kw):
    consts = []
    for res in resolutions:
        f = make(res)
        r = check(f, basis, **kw)
        assert r.passed and not r.degenerate
        consts.append(r.empirical_constant)
    return verify.stability(consts)


def test_criterion_08_maximal_into_blo_constant(criterion):
    log = lambda n: funcs.sample("log(sqrt((x - 0.3)^2 + (y - 0.7)^2))", unit(2), (n, n))
    makers = [("log", log)] + [(f"smooth{s}", (lambda s: lambda n: smooth((n, n), s))(s)) for s in range(10)]
    rows, ok, slowest = [], True, 0.0
    for name, make in makers:
        t0 = time.perf_counter()
        st = _stable_constants(make, DYADIC_CUBES, verify.verify_bennett, (64, 128), p=2.0)
        slowest = max(slowest, time.perf_counter() - t0)
        finite = all(math.isfinite(c) for c in st["constants"])
        ok &= finite and st["stable"]
        rows.append(f"{name} {st['constants'][0]:.3g}->{st['constants'][1]:.3g}")
    ok &= slowest < 120
    assert criterion(8, ok, f"{', '.join(rows)}; slowest {slowest:.1f}s")


def _reasserted(rep):
    d = json.loads(json.dumps(rep.to_dict()))
    v = d["values"]
    return v["lhs_norm"] <= d["empirical_constant"] * v["bmo"] + 1e-9


def test_criterion_09_strong_product_constant(criterion):
    cyl = {"kind": "cylinders", "p": 2, "split": [2, 1], "granularity": "dyadic"}
    cases = [
        ("rect -log|x-y|", lambda n: funcs.sample("-log(abs(x - y))", unit(2), (n, n), clip=20.0),
         (1, 1), DYADIC_RECT, (64, 128)),
        ("rect smooth", lambda n: smooth((n, n), 31), (1, 1), DYADIC_RECT, (64, 128)),
        ("cylinders smooth", lambda n: smooth((n, n, n), 32), (2, 1), cyl, (16, 32)),
    ]
    rows, ok = [], True
    for name, make, split, basis, ladder in cases:
        consts = []
        for n in ladder:
            rep = verify.verify_strong_product(make(n), split, basis, p=2.0)
            ok &= rep.passed and not rep.degenerate and math.isfinite(rep.empirical_constant) and _reasserted(rep)
            consts.append(rep.empirical_constant)
        st = verify.stability(consts)
        ok &= st["stable"]
        rows.append(f"{name} {ladder[0]}->{ladder[1]}: {consts[0]:.3g}->{consts[1]:.3g}")
    assert criterion(9, ok, "; ".join(rows))


def test_criterion_10_oracle_equivalence(criterion):
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        res = tuple(int(r) for r in rng.integers(3, 9, 2))
        f = random_grid(res, 900 + seed)
        v = f.values
        shapes = oracle.boxes(res)
        diffs = [
            np.max(np.abs(ops.maximal(f, RECT).values - oracle.maximal(v, shapes))),
            abs(ops.bmo_norm(f, RECT, 1).value - oracle.bmo(v, shapes)),
            abs(ops.blo_norm(f, RECT).value - oracle.blo(v, shapes)),
            abs(ops.rec_bmo(f, (1, 1), RECT).value - oracle.rec_bmo(v, shapes)),
            abs(ops.rec_blo(f, (1, 1), RECT).value - oracle.rec_blo(v, shapes)),
        ]
        worst = max(worst, max(diffs))
    g = random_grid((16,), 1)
    ivl = oracle.boxes((16,))
    worst = max(worst, np.max(np.abs(ops.maximal(g, {"kind": "intervals"}).values - oracle.maximal(g.values, ivl))),
                abs(ops.bmo_norm(g, {"kind": "intervals"}, 1).value - oracle.bmo(g.values, ivl)))
    assert criterion(10, worst <= 1e-9, f"20 grids up to 8x8 plus a 16-cell line: worst difference {worst:.2e}")


def test_criterion_11_jensen_and_blo_in_bmo(criterion):
    summary, ok = [], True
    for check, seed in (("jensen", 8000), ("blo_in_bmo", 9000)):
        reps = verify.run_suite(verify.random_suite(check, 50, 16, seed=seed, basis="rectangles"))
        bad = sum(not r.passed for r in reps)
        margin = max(r.lhs - r.rhs for r in reps)
        ok &= bad == 0 and margin <= 1e-9
        summary.append(f"{check} {50 - bad}/50 (worst margin {margin:.2e})")
    assert criterion(11, ok, "; ".join(summary))


def test_criterion_12_reproduce_is_deterministic(criterion):
    cmd = [sys.executable, "-m", "oscmax.cli", "reproduce", "--no-meta"]
    runs = [subprocess.run(cmd, capture_output=True, check=False) for _ in range(2)]
    same = runs[0].stdout == runs[1].stdout and len(runs[0].stdout) > 0
    codes = [r.returncode for r in runs]
    assert criterion(12, same and codes == [0, 0], f"two runs byte-identical={same}, exit codes {codes}, "
                                                   f"{len(runs[0].stdout)} bytes")
