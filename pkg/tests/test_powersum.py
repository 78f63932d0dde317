from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from lyapflow.powersum import PowerSum, Radical, ScalePoly, Weight, as_fraction

small_q = st.fractions(min_value=-5, max_value=5, max_denominator=6)
exps = st.fractions(min_value=-3, max_value=3, max_denominator=4)
sums = st.lists(st.tuples(small_q, exps), max_size=4).map(PowerSum)

t = sp.Symbol("t", positive=True)


def to_sympy(ps):
    return sum((sp.Rational(c.numerator, c.denominator) * t ** sp.Rational(p.numerator, p.denominator)
                for c, p in ps.terms), sp.Integer(0))


@given(sums)
def test_canonical_form_is_sorted_merged_and_nonzero(ps):
    es = [p for _, p in ps.terms]
    assert es == sorted(set(es))
    assert all(c != 0 for c, _ in ps.terms)


@given(sums, sums)
def test_addition_commutes_and_cancels(a, b):
    assert a + b == b + a
    assert (a - a).is_zero()
    assert (a + b) - b == a


@given(sums, sums, sums)
@settings(max_examples=50)
def test_multiplication_distributes(a, b, c):
    assert a * (b + c) == a * b + a * c


@given(sums, sums)
@settings(max_examples=50)
def test_product_rule(a, b):
    assert (a * b).derivative() == a.derivative() * b + a * b.derivative()


@given(sums)
@settings(max_examples=50)
def test_derivative_matches_sympy(ps):
    assert sp.simplify(to_sympy(ps.derivative()) - sp.diff(to_sympy(ps), t)) == 0


@given(sums)
@settings(max_examples=50)
def test_antiderivative_inverts_derivative(ps):
    assert ps.antiderivative().derivative() == ps


@given(sums, st.floats(min_value=0.1, max_value=20))
@settings(max_examples=50)
def test_float_evaluation_matches_exact(ps, x):
    exact = float(to_sympy(ps).subs(t, sp.Float(x, 30)).evalf(30))
    assert ps(x) == pytest.approx(exact, rel=1e-12, abs=1e-12)


@given(sums)
def test_json_round_trip(ps):
    assert PowerSum.from_json(ps.to_json()) == ps


def test_derivative_of_monomial():
    assert PowerSum.monomial(2, Fraction(-1, 2)).derivative() == PowerSum.monomial(-1, Fraction(-3, 2))
    assert PowerSum.monomial(7, 0).derivative().is_zero()


def test_printing():
    ps = PowerSum([(1, -1), (Fraction(-1, 2), Fraction(-3, 2))])
    assert str(ps) == "t^(-1) - 1/2*t^(-3/2)"


def test_reciprocal_antiderivative_is_logarithmic():
    w = PowerSum.monomial(4, -1).antiderivative()
    assert w == Weight(PowerSum.zero(), 4)
    assert w(np.e) == pytest.approx(4.0)


def test_as_fraction_inputs():
    assert as_fraction("2/3") == Fraction(2, 3)
    assert as_fraction(0.1) == Fraction(1, 10)
    assert as_fraction(3) == 3
    with pytest.raises(TypeError):
        as_fraction(True)
    with pytest.raises(ValueError):
        as_fraction(float("nan"))


def test_scale_poly_grading():
    s = ScalePoly.scale()
    assert (s * s - 2 * s).at(3) == 3
    assert (s * s - 2 * s).coeffs == {1: -2, 2: 1}


def test_radical_equality_and_powers():
    assert Radical(8, 2) == Radical(2, Fraction(2, 3))
    assert Radical(8, 2).power(2) == 8
    assert Radical(8, 2).power(1) is None
    assert float(Radical(2, 2)) == pytest.approx(np.sqrt(2), rel=1e-15)
    assert Radical.from_json(Radical(18, 3).to_json()) == Radical(18, 3)
