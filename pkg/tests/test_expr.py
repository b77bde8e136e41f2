import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singular_plap.expr import (
    BinOp,
    Call,
    DomainError,
    ExprSyntaxError,
    Neg,
    Num,
    Var,
    evaluate,
    ko_g,
    parse,
    parse_radial_fn,
    parse_scalar_fn,
    to_text,
)


def test_polynomial_value():
    assert parse_radial_fn("1 - r^2")(0.5) == pytest.approx(0.75, abs=0)


def test_annihilation():
    f = parse_radial_fn("exp(r)*0")
    assert np.all(f(np.linspace(0, 1, 11)) == 0)


def test_ln_of_negative_is_domain_error():
    with pytest.raises(DomainError):
        parse_radial_fn("ln(r - 2)")(0.5)


def test_division_by_zero_is_domain_error():
    with pytest.raises(DomainError):
        parse_radial_fn("1/r")(np.array([0.0, 0.5]))


def test_singular_power_is_domain_error():
    f = parse_radial_fn("(1 - r^2)^-0.5")
    assert f(0.0) == 1.0
    with pytest.raises(DomainError):
        f(1.0)


@pytest.mark.parametrize(
    "text, value",
    [("2^3^2", 512.0), ("-2^2", -4.0), ("2*3+4", 10.0), ("8/4/2", 1.0), ("1-2-3", -4.0), ("abs(-3)", 3.0),
     ("2*(3+4)", 14.0), ("1e-3*1000", 1.0), (".5+.5", 1.0)],
)
def test_precedence_and_associativity(text, value):
    assert float(evaluate(parse(text), {})) == value


@pytest.mark.parametrize(
    "text, position",
    [("1 + * r", 4), ("sin(r)", 0), ("(1 + r", 6), ("1 $ r", 2), ("", 0), ("exp(r, r)", 0)],
)
def test_syntax_errors_carry_position(text, position):
    with pytest.raises(ExprSyntaxError) as info:
        parse_radial_fn(text)
    assert info.value.position == position


def test_unknown_variable_in_radial_fn():
    with pytest.raises(ExprSyntaxError, match="unknown identifier 'u'"):
        parse_radial_fn("u + 1")


def test_ko_only_in_scalar_fn():
    with pytest.raises(ExprSyntaxError):
        parse_radial_fn("ko(20)")
    g = parse_scalar_fn("ko(20)", 0.25)
    u = np.linspace(0, 10, 101)
    np.testing.assert_allclose(g(u), ko_g(u, 20.0, 0.25), rtol=1e-15)


@pytest.mark.parametrize("alpha", [5.0, 10.0, 20.0])
def test_ko_is_zero_at_origin_and_nondecreasing(alpha):
    u = np.linspace(0.0, 50.0, 5001)
    g = ko_g(u, alpha, 0.25)
    assert g[0] == 0.0
    assert np.all(g >= 0)
    assert np.all(np.diff(g) >= 0)


def test_ko_series_branch_is_continuous():
    # the series branch below 1e-6 must match the closed form just above it
    lo = ko_g(np.array([1e-6 * (1 - 1e-9)]), 20.0, 0.25)[0]
    hi = ko_g(np.array([1e-6]), 20.0, 0.25)[0]
    assert abs(lo - hi) <= 1e-9 * hi


def test_ko_closed_form_value():
    u, alpha, delta = 2.0, 20.0, 0.25
    expected = (np.exp(alpha * u / (alpha + u)) - 1.0) / u**delta
    assert ko_g(u, alpha, delta) == pytest.approx(expected, rel=1e-14)


_leaf = st.one_of(
    st.floats(min_value=0.0, max_value=1e3, allow_nan=False).map(Num),
    st.just(Var("r")),
)


def _extend(children):
    ops = st.sampled_from(["+", "-", "*", "/", "^"])
    return st.one_of(
        children.map(Neg),
        st.builds(BinOp, ops, children, children),
        st.builds(lambda a: Call("exp", (a,)), children),
        st.builds(lambda a: Call("abs", (a,)), children),
    )


@given(st.recursive(_leaf, _extend, max_leaves=12))
@settings(max_examples=300, deadline=None)
def test_pretty_print_round_trips(node):
    assert parse(to_text(node), ("r",)) == node


@given(st.recursive(_leaf, _extend, max_leaves=8), st.floats(0.0, 1.0))
@settings(max_examples=200, deadline=None)
def test_evaluation_never_returns_nonfinite(node, r):
    try:
        out = evaluate(node, {"r": np.array([r])})
    except DomainError:
        return
    assert np.all(np.isfinite(out))
