import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracle
from conftest import unit
from oscmax import operators as ops
from oscmax.grid import GridFunction
from oscmax.tables import MinTable, PrefixTable

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def grids(max_side=5):
    shape = st.tuples(st.integers(1, max_side), st.integers(1, max_side))
    return shape.flatmap(lambda s: arrays(np.float64, s, elements=finite))


@settings(max_examples=60, deadline=None)
@given(grids())
def test_norms_agree_with_oracle(v):
    f = GridFunction(unit(2), v)
    shapes = oracle.boxes(v.shape)
    tol = 1e-9 * (1 + np.abs(v).max())
    assert abs(ops.bmo_norm(f, {"kind": "rectangles"}, 1).value - oracle.bmo(v, shapes)) <= tol
    assert abs(ops.blo_norm(f, {"kind": "rectangles"}).value - oracle.blo(v, shapes)) <= tol
    np.testing.assert_allclose(ops.maximal(f, {"kind": "rectangles"}).values, oracle.maximal(v, shapes), atol=tol)


@settings(max_examples=60, deadline=None)
@given(grids(), st.floats(-50, 50))
def test_norm_relations(v, c):
    f = GridFunction(unit(2), v)
    spec = {"kind": "rectangles"}
    b1 = ops.bmo_norm(f, spec, 1).value
    b2 = ops.bmo_norm(f, spec, 2).value
    bl = ops.blo_norm(f, spec).value
    scale = 1 + np.abs(v).max() + abs(c)
    assert b1 >= 0 and bl >= 0
    assert b1 <= b2 + 1e-9 * scale
    assert b1 <= 2 * bl + 1e-9 * scale
    g = GridFunction(f.domain, v + c)
    assert abs(ops.bmo_norm(g, spec, 1).value - b1) <= 1e-9 * scale
    assert abs(ops.blo_norm(g, spec).value - bl) <= 1e-9 * scale


@settings(max_examples=60, deadline=None)
@given(grids(4))
def test_rectangular_norms_agree_with_oracle(v):
    f = GridFunction(unit(2), v)
    shapes = oracle.boxes(v.shape)
    tol = 1e-9 * (1 + np.abs(v).max())
    assert abs(ops.rec_bmo(f, (1, 1), {"kind": "rectangles"}).value - oracle.rec_bmo(v, shapes)) <= tol
    rb = ops.rec_blo(f, (1, 1), {"kind": "rectangles"}).value
    assert abs(rb - oracle.rec_blo(v, shapes)) <= tol
    # the rectangular BLO norm is below every lower norm and below the full BLO norm
    lows = ops.lower_norms(f, {"kind": "rectangles"}, (1, 1), "blo")
    assert rb <= min(r.value for r in lows) + tol
    assert rb <= ops.blo_norm(f, {"kind": "rectangles"}).value + tol


@settings(max_examples=100, deadline=None)
@given(grids(6), st.data())
def test_table_queries(v, data):
    P, M = PrefixTable(v), MinTable(v)
    a0 = data.draw(st.integers(0, v.shape[0] - 1))
    b0 = data.draw(st.integers(a0 + 1, v.shape[0]))
    a1 = data.draw(st.integers(0, v.shape[1] - 1))
    b1 = data.draw(st.integers(a1 + 1, v.shape[1]))
    from oscmax.tables import as_boxes

    box = as_boxes([[(a0, b0), (a1, b1)]], v.shape)
    blk = v[a0:b0, a1:b1]
    assert abs(P.means(box)[0] - blk.mean()) <= 1e-9 * (1 + np.abs(v).max())
    assert M.mins(box)[0] == blk.min()
