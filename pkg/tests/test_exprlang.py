import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gvstar.exprlang import (
    ArityError,
    DomainError,
    ExprSyntaxError,
    UnknownIdentifierError,
    evaluate,
    parse,
    to_source,
)
from gvstar.scenario import bundled_names, load_scenario

XYZ = ("x", "y", "z")


def at(src, x=0.0, y=0.0, z=0.0, coords=XYZ, constants=None):
    return float(parse(src, coords, constants)(np.array([[x], [y], [z]])).val[0])


@pytest.mark.parametrize(
    "src,want",
    [
        ("-x^2", -4.0),
        ("2^3^2", 512.0),
        ("1 + 2*3", 7.0),
        ("(1 + 2)*3", 9.0),
        ("8/4/2", 1.0),
        ("2^-1", 0.5),
        ("x - -x", 4.0),
        ("sqrt(x^2 + 5)", 3.0),
        ("exp(0) + log(1) + sin(0) + cos(0)", 2.0),
        ("1e-3*1000", 1.0),
        (".5 + 0.5", 1.0),
    ],
)
def test_values_and_precedence(src, want):
    assert at(src, x=2.0) == pytest.approx(want, rel=1e-15)


def test_constants_substituted():
    assert at("c*x", x=3.0, constants={"c": 2.0}) == 6.0


@pytest.mark.parametrize(
    "src,exc,offset",
    [
        ("1 +", ExprSyntaxError, 3),
        ("(x", ExprSyntaxError, 2),
        ("x $ y", ExprSyntaxError, 2),
        ("x y", ExprSyntaxError, 2),
        ("w + 1", UnknownIdentifierError, 0),
        ("1 + foo(x)", UnknownIdentifierError, 4),
        ("sin(x, y)", ArityError, 0),
        ("x^y", ExprSyntaxError, None),
    ],
)
def test_parse_errors_carry_offsets(src, exc, offset):
    with pytest.raises(exc) as info:
        parse(src, XYZ)
    if offset is not None:
        assert info.value.offset == offset


@pytest.mark.parametrize("src,x", [("log(x)", -1.0), ("sqrt(x)", -2.0), ("1/x", 0.0), ("x^0.5", -1.0)])
def test_domain_errors(src, x):
    with pytest.raises(DomainError):
        at(src, x=x)


def test_jet_matches_closed_form():
    e = parse("x^2*sin(y) + exp(z*x)", XYZ)
    p = np.array([[0.3], [0.7], [-0.4]])
    j = e(p)
    x, y, z = p[:, 0]
    assert j.val[0] == pytest.approx(x**2 * math.sin(y) + math.exp(z * x))
    want_grad = [2 * x * math.sin(y) + z * math.exp(z * x), x**2 * math.cos(y), x * math.exp(z * x)]
    np.testing.assert_allclose(j.grad[:, 0], want_grad, rtol=1e-14)
    H = j.hessian[:, :, 0]
    assert H[0, 0] == pytest.approx(2 * math.sin(y) + z * z * math.exp(z * x))
    assert H[0, 1] == pytest.approx(2 * x * math.cos(y))
    assert H[0, 2] == pytest.approx(math.exp(z * x) * (1 + z * x))
    assert H[2, 2] == pytest.approx(x * x * math.exp(z * x))


# -- random expressions ---------------------------------------------------

LEAVES = st.one_of(
    st.sampled_from(["x", "y", "z"]),
    st.floats(min_value=0.1, max_value=3.0, allow_nan=False).map(lambda v: repr(round(v, 3))),
)


def _node(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(children, children).map(lambda t: f"({t[0]})/(2 + ({t[1]})^2)"),
        children.map(lambda c: f"-{c}"),
        children.map(lambda c: f"sin({c})"),
        children.map(lambda c: f"cos({c})"),
        children.map(lambda c: f"exp(0.3*{c})"),
        children.map(lambda c: f"sqrt(1 + ({c})^2)"),
        st.tuples(children, st.sampled_from(["2", "3"])).map(lambda t: f"({t[0]})^{t[1]}"),
    )


EXPRS = st.recursive(LEAVES, _node, max_leaves=8)
POINTS = np.array([[0.3, -0.8, 1.1], [0.5, 0.2, -0.6], [-0.7, 0.9, 0.4]])


@settings(max_examples=200, deadline=None)
@given(EXPRS)
def test_round_trip_is_equivalent(src):
    e = parse(src, XYZ)
    e2 = parse(to_source(e), XYZ)
    np.testing.assert_allclose(evaluate(e2, POINTS), evaluate(e, POINTS), rtol=1e-13, atol=1e-13)


def _python_eval(src, x, y, z):
    """Independent evaluator: Python's own parser on the translated source."""
    env = {"x": x, "y": y, "z": z, "sin": math.sin, "cos": math.cos, "exp": math.exp, "sqrt": math.sqrt,
           "log": math.log, "tan": math.tan}
    return eval(src.replace("^", "**"), {"__builtins__": {}}, env)


@settings(max_examples=50, deadline=None, derandomize=True)
@given(EXPRS)
def test_agrees_with_independent_evaluator(src):
    e = parse(src, XYZ)
    got = evaluate(e, POINTS)
    # Python's ** binds tighter than unary minus exactly as in exprlang
    want = [_python_eval(src, *POINTS[:, i]) for i in range(POINTS.shape[1])]
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(EXPRS)
def test_jet_value_matches_plain_evaluation(src):
    e = parse(src, XYZ)
    np.testing.assert_allclose(e(POINTS).val, evaluate(e, POINTS), rtol=1e-14, atol=1e-14)


def _d4(f, p, a, h):
    e = np.zeros((3, 1))
    e[a] = h
    return (-f(p + 2 * e) + 8 * f(p + e) - 8 * f(p - e) + f(p - 2 * e)) / (12 * h)


def _fd_check(e, p, h=1e-3):
    """Grad and Hessian from nested 4th-order central differences."""
    j = e(p)

    def f(q):
        return evaluate(e, q)

    grad = np.stack([_d4(f, p, a, h) for a in range(3)])
    hess = np.stack([np.stack([_d4(lambda q: _d4(f, q, a, h), p, b, h) for b in range(3)]) for a in range(3)])
    return j, grad, hess


def _rel(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1.0)


@pytest.mark.parametrize("name", bundled_names())
def test_scenario_expression_derivatives(name):
    sc = load_scenario(name)
    rng = np.random.default_rng(7)
    box = sc.box.shrink(0.05)
    lo, hi = np.array(box.lo), np.array(box.hi)
    pts = lo[:, None] + rng.random((3, 20)) * (hi - lo)[:, None]
    for key, src in sc.expressions().items():
        e = parse(src, sc.coords, sc.constants)
        j, grad, hess = _fd_check(e, pts)
        assert _rel(j.grad, grad) <= 1e-6, key
        assert _rel(j.hessian, hess) <= 1e-6, key
