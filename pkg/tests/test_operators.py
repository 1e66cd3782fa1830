import itertools
import math

import numpy as np
import pytest

import oracle
from conftest import random_grid, unit
from oscmax import funcs
from oscmax import operators as ops
from oscmax.bases import Basis, BasisError, CoverError
from oscmax.grid import Box, GridFunction

RECT = {"kind": "rectangles"}
IVL = {"kind": "intervals"}


def on(expr, res, lo=None, hi=None, **kw):
    n = len(res)
    dom = Box(lo or [0.0] * n, hi or [1.0] * n)
    return funcs.sample(expr, dom, res, **kw)


# -- agreement with the brute-force oracle ----------------------------------------------


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("kind,res", [("rectangles", (5, 4)), ("cubes", (5, 5)), ("intervals", (9,)), ("rectangles", (3, 3, 2))])
def test_norms_match_oracle(kind, res, seed):
    f = random_grid(res, seed)
    shapes = oracle.boxes(res, kind)
    spec = {"kind": kind}
    assert len(shapes) == len(Basis.of(spec, f))
    v = f.values
    for p in (1.0, 1.5, 2.0, 3.0):
        assert ops.bmo_norm(f, spec, p).value == pytest.approx(oracle.bmo(v, shapes, p), rel=1e-9, abs=1e-12)
    assert ops.bmo_norm(f, spec, 2.0, direct=True).value == pytest.approx(oracle.bmo(v, shapes, 2.0), rel=1e-12)
    assert ops.blo_norm(f, spec).value == pytest.approx(oracle.blo(v, shapes), rel=1e-12)
    for mode in ("abs", "signed"):
        got = ops.maximal(f, spec, mode).values
        np.testing.assert_allclose(got, oracle.maximal(v, shapes, mode == "signed"), rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("seed", range(3))
def test_rectangular_norms_match_oracle(seed):
    f = random_grid((6, 5), seed)
    shapes = list(itertools.product(oracle.intervals(6), oracle.intervals(5)))
    assert ops.rec_bmo(f, (1, 1), RECT).value == pytest.approx(oracle.rec_bmo(f.values, shapes), rel=1e-9)
    assert ops.rec_blo(f, (1, 1), RECT).value == pytest.approx(oracle.rec_blo(f.values, shapes), rel=1e-9)


def test_rec_blo_three_factors_matches_oracle():
    f = random_grid((4, 3, 4), 5)
    shapes = oracle.boxes((4, 3, 4))
    assert ops.rec_blo(f, (1, 1, 1), RECT).value == pytest.approx(oracle.rec_blo(f.values, shapes), rel=1e-9)


def test_ball_norms_match_shape_statistics():
    f = random_grid((9, 9), 2)
    spec = {"kind": "p_balls", "p": 2}
    basis = Basis.of(spec, f)
    shapes = list(basis.shapes())
    for p in (1.0, 2.0):
        ref = max(ops.shape_statistic(f, s, "bmo", p) for s in shapes)
        assert ops.bmo_norm(f, spec, p).value == pytest.approx(ref, rel=1e-9)
    ref = max(ops.shape_statistic(f, s, "blo") for s in shapes)
    assert ops.blo_norm(f, spec).value == pytest.approx(ref, rel=1e-12)
    M = ops.maximal(f, spec).values
    ref = np.full(f.res, -np.inf)
    a = np.abs(f.values)
    for s in shapes:
        m = s.cells(f.res)
        ref[m] = np.maximum(ref[m], a[m].mean())
    np.testing.assert_allclose(M, ref, rtol=1e-12)


# -- maximal function -------------------------------------------------------------------


@pytest.mark.parametrize("spec", [RECT, {"kind": "cubes", "granularity": "dyadic"}, {"kind": "p_balls", "p": 1}])
def test_maximal_of_constant(spec):
    f = GridFunction(unit(2), np.full((8, 8), -2.5))
    np.testing.assert_allclose(ops.maximal(f, spec).values, 2.5, rtol=1e-12)
    np.testing.assert_allclose(ops.maximal(f, spec, "signed").values, -2.5, rtol=1e-12)


def test_maximal_of_half_indicator():
    f = GridFunction(unit(1), (np.arange(1024) < 512).astype(float))
    M = ops.maximal(f, IVL).values
    x = f.centers()[0]
    h = 1 / 1024
    assert np.max(np.abs(M - np.minimum(1, 1 / (2 * x)))) <= 2 * h / (2 * 0.5**2) + 1e-12
    small = GridFunction(unit(1), (np.arange(64) < 32).astype(float))
    np.testing.assert_allclose(ops.maximal(small, IVL).values, oracle.maximal(small.values, oracle.boxes((64,))), rtol=1e-12)


def test_maximal_of_log_keeps_growing():
    means = []
    for n in (64, 128, 256):
        f = on("-log(sqrt(x^2 + y^2))", [n, n], [-1.0, -1.0], [1.0, 1.0])
        means.append(ops.maximal(f, {"kind": "cubes"}).values.mean())
    assert means[0] < means[1] < means[2]


def test_maximal_invariants(rng):
    f = random_grid((12, 12), 4)
    full = ops.maximal(f, RECT).values
    dyadic = ops.maximal(f, {"kind": "rectangles", "granularity": "dyadic"}).values
    assert (dyadic <= full + 1e-12).all()
    assert (full >= np.abs(f.values) - 1e-12).all()
    c = -3.7
    scaled = ops.maximal(GridFunction(f.domain, c * f.values), RECT).values
    np.testing.assert_allclose(scaled, abs(c) * full, rtol=1e-12)


def test_maximal_cover_error():
    f = random_grid((8, 8), 0)
    with pytest.raises(CoverError) as exc:
        ops.maximal(f, {"kind": "rectangles", "granularity": "stride:3"})
    assert "cell" in str(exc.value)
    with pytest.raises(ValueError):
        ops.maximal(f, RECT, "median")


# -- closed-form examples ---------------------------------------------------------------


def test_constants_have_zero_norms():
    f = GridFunction(unit(2), np.full((8, 8), 4.0))
    assert ops.bmo_norm(f, RECT, 1).value == 0
    assert ops.bmo_norm(f, RECT, 2).value == 0
    assert ops.blo_norm(f, RECT).value == 0
    for fn in (ops.rec_bmo, ops.rec_blo, ops.rec_blo_naive):
        assert fn(f, (1, 1), RECT).value == pytest.approx(0, abs=1e-12)


def test_bmo_and_blo_of_identity():
    f = on("x", [1024])
    assert ops.bmo_norm(f, IVL, 1).value == pytest.approx(0.25, abs=1e-3)
    assert ops.blo_norm(f, IVL).value == pytest.approx(0.5, abs=1e-3)


def test_lower_norms_examples():
    f = on("x^2 - 3 * x", [16, 16])
    assert ops.lower_bmo(f, (1, 1), 1, IVL).value == 0
    assert ops.lower_blo(f, (1, 1), 1, IVL).value == 0
    g = on("x - y", [64, 64])
    # each slice is an affine function of x with unit slope
    assert ops.lower_blo(g, (1, 1), 0, IVL).value == pytest.approx((1 - 1 / 64) / 2, rel=1e-12)
    small = on("x - y", [16, 16])
    ref = max(oracle.blo(small.values[:, j], oracle.boxes((16,))) for j in range(16))
    assert ops.lower_blo(small, (1, 1), 0, IVL).value == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_lower_bmo_bounded_by_product_bmo(seed):
    f = random_grid((8, 8), 100 + seed)
    b = ops.bmo_norm(f, RECT, 1).value
    for r in ops.lower_norms(f, RECT, (1, 1), "bmo", 1.0):
        assert r.value <= 2 * b + 1e-9


def test_rec_bmo_examples():
    f = on("x - y", [64, 64])
    assert ops.rec_bmo(f, (1, 1), RECT).value <= 1e-12
    g = on("abs(x - y)", [1024, 1024])
    s = ops.shape_statistic(g, g_box(1024), "rec_bmo", split=(1, 1))
    assert s == pytest.approx(math.pi / 18, rel=0.01)


def g_box(n):
    from oscmax.bases import Shape

    return Shape.box([(0, n), (0, n)])


def test_rec_blo_examples():
    for expr in ("exp(x)", "sqrt(y)", "max(exp(x), y^2)", "max(x^2, 1 - y)"):
        f = on(expr, [32, 32])
        assert ops.rec_blo(f, (1, 1), RECT).value == pytest.approx(0, abs=1e-12), expr
    f = on("-log(abs(x - y))", [1024, 1024], [0.0, 1.0], [1.0, 2.0])
    s = ops.shape_statistic(f, g_box(1024), "rec_blo", split=(1, 1))
    assert s >= (2 * math.log(2) - 1) * 0.99


def test_rec_blo_naive_examples():
    for expr in ("x", "y"):
        assert ops.rec_blo_naive(on(expr, [32, 32]), (1, 1), RECT).value == pytest.approx(0, abs=1e-12)
    h = on("max(x, y)", [1024, 1024])
    s = ops.shape_statistic(h, g_box(1024), "rec_blo_naive", split=(1, 1))
    assert s == pytest.approx(1 / 3, rel=0.01)


# -- invariants -------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(4))
def test_translation_and_scaling(seed):
    f = random_grid((10, 10), seed, smooth=True)
    c = 2.5
    moved = GridFunction(f.domain, f.values + 1e3)
    scaled = GridFunction(f.domain, -c * f.values)
    cases = [
        (lambda g: ops.bmo_norm(g, RECT, 1).value, True),
        (lambda g: ops.bmo_norm(g, RECT, 2).value, True),
        (lambda g: ops.rec_bmo(g, (1, 1), RECT).value, True),
        (lambda g: ops.blo_norm(g, RECT).value, False),
        (lambda g: ops.rec_blo(g, (1, 1), RECT).value, False),
    ]
    for fn, symmetric in cases:
        base = fn(f)
        assert fn(moved) == pytest.approx(base, abs=1e-12 * 1e3)
        if symmetric:
            assert fn(scaled) == pytest.approx(c * base, rel=1e-12, abs=1e-14)
        assert fn(GridFunction(f.domain, c * f.values)) == pytest.approx(c * base, rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_variance_path_matches_direct(seed):
    f = random_grid((12, 10), seed)
    for spec in (RECT, {"kind": "p_balls", "p": 2}):
        if spec["kind"] == "p_balls":
            f = random_grid((10, 10), seed)
        a = ops.bmo_norm(f, spec, 2).value
        b = ops.bmo_norm(f, spec, 2, direct=True).value
        assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_jensen_and_blo_bound(seed):
    f = random_grid((10, 10), seed)
    b1 = ops.bmo_norm(f, RECT, 1).value
    for p in (1.5, 2, 3):
        assert b1 <= ops.bmo_norm(f, RECT, p).value + 1e-12
    assert b1 <= 2 * ops.blo_norm(f, RECT).value + 1e-12


def test_argmax_recomputes():
    f = random_grid((12, 12), 8, smooth=True)
    for p in (1.0, 2.0, 2.5):
        r = ops.bmo_norm(f, RECT, p)
        assert ops.shape_statistic(f, r.argmax, "bmo", p) == pytest.approx(r.value, rel=1e-9)
    r = ops.blo_norm(f, {"kind": "p_balls", "p": 2})
    assert ops.shape_statistic(f, r.argmax, "blo") == pytest.approx(r.value, rel=1e-9)
    for kind in ("rec_bmo", "rec_blo", "rec_blo_naive"):
        r = ops.norm(f, kind, RECT, split=(1, 1))
        assert ops.shape_statistic(f, r.argmax, kind, split=(1, 1)) == pytest.approx(r.value, rel=1e-9)
    r = ops.norm(f, "lower_blo", RECT, split=(1, 1), factor=1)
    assert ops.shape_statistic(f, r.argmax, "lower_blo") == pytest.approx(r.value, rel=1e-9)


def test_argmax_ties_go_to_first_shape():
    f = GridFunction(unit(1), np.array([0.0, 1.0, 0.0, 1.0]))
    r = ops.blo_norm(f, IVL)
    vals = [oracle.blo(f.values, [s.ranges]) for s in Basis.of(IVL, f).shapes()]
    assert r.argmax_index == int(np.argmax(vals))


def test_rec_blo_integrand_is_nonnegative():
    f = random_grid((6, 6), 3)
    for s in Basis.of(RECT, f).shapes():
        assert ops.rec_integrand_min(f, s, (1, 1)) >= -1e-12


def test_cylinder_rec_blo_matches_statistics():
    f = random_grid((5, 5, 4), 1, smooth=True)
    spec = {"kind": "cylinders", "p": 2, "split": [2, 1]}
    r = ops.rec_blo(f, (2, 1), spec)
    assert ops.shape_statistic(f, r.argmax, "rec_blo", split=(2, 1)) == pytest.approx(r.value, rel=1e-9)


def test_report_serialises():
    f = random_grid((6, 6), 0)
    d = ops.bmo_norm(f, RECT, 1).to_dict(f)
    assert {"kind", "p", "value", "argmax", "basis", "res", "runtime_ms"} <= set(d)
    assert d["argmax"]["index_hi"][0] > d["argmax"]["index_lo"][0]


# -- errors -----------------------------------------------------------------------------


def test_errors():
    f = random_grid((6, 6), 0)
    with pytest.raises(BasisError):
        ops.rec_bmo(random_grid((3, 3, 3), 0), (1, 1, 1), RECT)
    with pytest.raises(BasisError):
        ops.norm(f, "rec_blo", RECT)
    with pytest.raises(ops.ComplexityError):
        ops.bmo_norm(f, RECT, 1, work_limit=10)
    with pytest.raises(ops.ComplexityError):
        ops.rec_blo(f, (1, 1), RECT, work_limit=10)
    with pytest.raises(ValueError):
        ops.norm(f, "sup", RECT)
    with pytest.raises(BasisError):
        ops.lower_bmo(f, (1, 1), 2, IVL)
