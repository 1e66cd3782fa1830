import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oscmax.expr import (
    Bin, Call, Const, ExprArityError, ExprNameError, ExprSyntaxError, Neg, Num, Var, parse, pretty,
)

CORPUS = [
    "1", "2.5", ".5", "1e3", "2.5E-2", "x", "y", "z", "x1", "x3", "pi", "e",
    "x + y", "x - y", "x * y", "x / y", "x ^ y", "-x", "--x", "-x ^ 2", "(-x) ^ 2", "-(x ^ 2)",
    "2 ^ 3 ^ 2", "(2 ^ 3) ^ 2", "x - (y - z)", "(x - y) - z", "x / (y / z)", "x / y / z",
    "x - y + z", "x * (y + z)", "(x + y) * z", "abs(x - y)", "-log(abs(x - y))", "log(x)",
    "exp(-x ^ 2)", "sqrt(x ^ 2 + y ^ 2)", "min(x, y)", "max(x, y)", "max(min(x, y), z)",
    "max(x, y) - min(x, y)", "abs(-x)", "-abs(x)", "2 * pi * x", "e ^ x", "x ^ -1",
    "(x / abs(x) + 1) / 2", "-log(sqrt(x1 ^ 2 + x2 ^ 2))", "1 - -1", "x * -y", "((((x))))",
]


def test_corpus_size():
    assert len(CORPUS) == 50


@pytest.mark.parametrize("src", CORPUS)
def test_round_trip(src):
    e = parse(src)
    again = parse(str(e))
    assert again == e
    assert str(again) == str(e)


def test_examples():
    assert parse("2^3")() == 8
    assert parse("-log(abs(x-y))")(0.0, 1.0) == 0.0
    assert parse("min(x,y)")(0.2, 0.7) == 0.2


def test_power_right_associative():
    assert parse("2^3^2")() == 512
    assert parse("(2^3)^2")() == 64


def test_unary_minus_binds_tighter_than_power_base():
    # unary sits below power in the grammar, so -2^2 is (-2)^2
    assert parse("-2^2")() == 4
    assert parse("-(2^2)")() == -4
    assert parse("2^-1")() == 0.5


def test_precedence():
    assert parse("1 + 2 * 3")() == 7
    assert parse("8 / 4 / 2")() == 1
    assert parse("1 - 2 - 3")() == -4


def test_aliases_and_arity():
    assert parse("x").root == Var(0)
    assert parse("z").arity == 3
    assert parse("x2 + 1").arity == 2
    assert parse("pi").arity == 0


def test_syntax_error_offsets():
    with pytest.raises(ExprSyntaxError) as exc:
        parse("x + * y")
    assert exc.value.offset == 4
    with pytest.raises(ExprSyntaxError) as exc:
        parse("log(x")
    assert exc.value.offset == 5
    with pytest.raises(ExprSyntaxError) as exc:
        parse("x $ y")
    assert exc.value.offset == 2


def test_offset_is_in_bytes():
    with pytest.raises(ExprSyntaxError) as exc:
        parse("x + π")
    assert exc.value.offset == 4
    with pytest.raises(ExprSyntaxError) as exc:
        parse("x + πy")
    assert exc.value.offset == 4
    with pytest.raises(ExprSyntaxError) as exc:
        parse("x + y ä")
    assert exc.value.offset == 6


def test_no_implicit_multiplication():
    with pytest.raises(ExprSyntaxError):
        parse("2x")
    with pytest.raises(ExprSyntaxError):
        parse("2 (x)")


def test_unknown_names():
    with pytest.raises(ExprNameError):
        parse("w + 1")
    with pytest.raises(ExprNameError):
        parse("sin(x)")
    with pytest.raises(ExprNameError):
        parse("x0")


def test_wrong_arity():
    with pytest.raises(ExprArityError):
        parse("min(x)")
    with pytest.raises(ExprArityError):
        parse("abs(x, y)")
    with pytest.raises(ExprSyntaxError):
        parse("log")


def test_log_non_positive_is_signalled():
    assert parse("log(x)")(0.0) == -math.inf
    assert math.isnan(parse("log(x)")(-1.0))
    assert math.isnan(parse("sqrt(x)")(-1.0))


def test_vectorised():
    x = np.linspace(0, 1, 5)
    np.testing.assert_allclose(parse("x^2 + 1")(x), x**2 + 1)


def test_thread_safe_evaluation():
    e = parse("-log(abs(x - y)) + exp(x) * y")
    pts = np.random.default_rng(0).uniform(0.01, 1, (200, 2))
    ref = [float(e(a, b)) for a, b in pts]
    with ThreadPoolExecutor(4) as ex:
        got = list(ex.map(lambda ab: float(e(*ab)), pts))
    assert got == ref


def nodes():
    leaves = st.one_of(
        st.integers(0, 99).map(lambda v: Num(float(v))),
        st.sampled_from([Const("pi"), Const("e")]),
        st.integers(0, 2).map(Var),
    )

    def extend(child):
        return st.one_of(
            child.map(Neg),
            st.tuples(st.sampled_from("+-*/^"), child, child).map(lambda t: Bin(*t)),
            st.tuples(st.sampled_from(["abs", "log", "exp", "sqrt"]), child).map(lambda t: Call(t[0], (t[1],))),
            st.tuples(st.sampled_from(["min", "max"]), child, child).map(lambda t: Call(t[0], (t[1], t[2]))),
        )

    return st.recursive(leaves, extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(nodes())
def test_pretty_reparses_to_same_tree(tree):
    assert parse(pretty(tree)).root == tree
