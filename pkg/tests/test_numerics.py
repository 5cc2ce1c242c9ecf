import math
from fractions import Fraction

import gmpy2
import mpmath
import pytest
import sympy
from hypothesis import given, strategies as st

from skewfatou.errors import SingularSystem, UsageError
from skewfatou.numerics import (BigComplex, GaussianRational, Jet, exact_solve_linear, format_complex,
                                format_decimal, format_real, is_exact, jet_compose_poly, parse_scalar,
                                precision_for_depth, simplify_exact, to_big)

fractions = st.fractions(min_value=-1000, max_value=1000, max_denominator=1000)
gaussians = st.builds(lambda a, b: simplify_exact(GaussianRational(a, b)), fractions, fractions)


def test_precision_policy_matches_formula():
    assert precision_for_depth(40, 8) == 240 + 64
    assert precision_for_depth(40, 8, 0) == 240
    assert precision_for_depth(10, 3) == math.ceil(20 * math.log2(3)) + 64
    with pytest.raises(UsageError):
        precision_for_depth(0, 8)
    with pytest.raises(UsageError):
        precision_for_depth(5, 1)


@given(st.integers(1, 500), st.floats(1.01, 100))
def test_precision_policy_monotone(n, lam):
    assert precision_for_depth(n + 1, lam) >= precision_for_depth(n, lam)


@pytest.mark.parametrize("text,value", [
    ("-641/4165", Fraction(-641, 4165)),
    ("0.125", Fraction(1, 8)),
    ("3", Fraction(3)),
    ("1e-3", Fraction(1, 1000)),
    ("1/2+3/4i", GaussianRational(Fraction(1, 2), Fraction(3, 4))),
    ("-2i", GaussianRational(0, -2)),
    ("i", GaussianRational(0, 1)),
])
def test_parse_scalar(text, value):
    assert parse_scalar(text) == value


def test_parse_scalar_rejects_garbage():
    with pytest.raises(UsageError):
        parse_scalar("one half")


@given(gaussians)
def test_exact_format_roundtrip(x):
    assert parse_scalar(format_complex(x)) == x


@given(gaussians, gaussians)
def test_gaussian_field_ops_match_sympy(a, b):
    sa = sympy.Rational(*exact_parts_pair(a)[0]) + sympy.I * sympy.Rational(*exact_parts_pair(a)[1])
    sb = sympy.Rational(*exact_parts_pair(b)[0]) + sympy.I * sympy.Rational(*exact_parts_pair(b)[1])
    for got, want in ((a + b, sa + sb), (a - b, sa - sb), (a * b, sa * sb)):
        assert to_sympy(got) == sympy.expand(want)
    if b != 0:
        assert to_sympy(simplify_exact(a / b)) == sympy.simplify(sa / sb)


def exact_parts_pair(x):
    if isinstance(x, GaussianRational):
        return (x.re.numerator, x.re.denominator), (x.im.numerator, x.im.denominator)
    x = Fraction(x)
    return (x.numerator, x.denominator), (0, 1)


def to_sympy(x):
    (a, b), (c, d) = exact_parts_pair(x)
    return sympy.Rational(a, b) + sympy.I * sympy.Rational(c, d)


def test_bigcomplex_against_mpmath():
    mpmath.mp.prec = 300
    a = BigComplex("1/3+2/7i", 300)
    b = BigComplex("-5/11+1/13i", 300)
    ma = mpmath.mpc(mpmath.mpf(1) / 3, mpmath.mpf(2) / 7)
    mb = mpmath.mpc(mpmath.mpf(-5) / 11, mpmath.mpf(1) / 13)
    for got, want in ((a * b, ma * mb), (a / b, ma / mb), (a - b, ma - mb), (a ** 7, ma ** 7)):
        err = abs(complex(got) - complex(want))
        assert err < 1e-15
        diff = mpmath.mpc(str(got.real), str(got.imag)) - want
        assert abs(diff) < mpmath.mpf(2) ** -290
    r = a.root(4, 1)
    assert abs(r ** 4 - a) < 2.0 ** -280
    assert abs(BigComplex.exp_i(1, 4, 128) - BigComplex("i", 128)) < 2.0 ** -120


def test_bigcomplex_mixed_precision_rounds_to_smaller():
    a = BigComplex(1, 200)
    b = BigComplex(3, 100)
    assert (a / b).precision_bits == 100
    assert (a + Fraction(1, 3)).precision_bits == 200


@given(st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False), st.integers(64, 400))
def test_bigcomplex_hex_roundtrip(z, bits):
    x = BigComplex(z, bits)
    y = BigComplex.from_hex(x.to_hex(), bits)
    assert y == x and y.precision_bits == bits


def test_bigcomplex_minimum_precision():
    with pytest.raises(UsageError):
        BigComplex(1, 32)


def test_formatting():
    assert format_real(gmpy2.mpfr(0)) == "0"
    assert format_real(0.5) == "5e-01"
    assert format_real(-1234.5, 6) == "-1.2345e+03"
    assert format_decimal(gmpy2.context(precision=256).div(2, 3), 20) == "0.66666666666666666667"
    assert format_decimal(-0.00123) == "-0.00123"
    assert format_decimal(1e-9).endswith("e-09")
    assert format_complex(Fraction(-641, 4165)) == "-641/4165"
    assert format_complex(complex(1, -2)) == "1e+00-2e+00j"


def test_jet_arithmetic_against_sympy():
    w = sympy.symbols("w")
    a = Jet([Fraction(1), Fraction(2), Fraction(-3), Fraction(1, 2)])
    b = Jet([Fraction(2), Fraction(0), Fraction(5), Fraction(7)])
    sa = sum(sympy.Rational(c.numerator, c.denominator) * w ** k for k, c in enumerate(a.coeffs))
    sb = sum(sympy.Rational(c.numerator, c.denominator) * w ** k for k, c in enumerate(b.coeffs))
    for got, want in ((a * b, sa * sb), (a / 4, sa / 4), (a ** 3, sa ** 3)):
        ser = sympy.series(want, w, 0, 4).removeO()
        for k in range(4):
            c = ser.coeff(w, k)
            assert got[k] == Fraction(int(c.p), int(c.q))


@given(st.lists(fractions, min_size=1, max_size=6), fractions)
def test_jet_compose_gives_taylor_coefficients(coeffs, x):
    from skewfatou.dynamics import Polynomial
    p = Polynomial(coeffs)
    jet = jet_compose_poly(p, Jet.variable(3, x, Fraction(1)))
    d, fact = p, 1
    for k in range(4):
        assert jet[k] == Fraction(d(x)) / fact
        d = d.derivative()
        fact *= k + 1


@given(st.lists(st.lists(st.integers(-9, 9), min_size=4, max_size=4), min_size=4, max_size=4),
       st.lists(fractions, min_size=4, max_size=4))
def test_exact_solve_matches_sympy(rows, rhs):
    M = sympy.Matrix(rows)
    if M.det() == 0:
        with pytest.raises(SingularSystem):
            exact_solve_linear(rows, rhs)
        return
    got = exact_solve_linear(rows, rhs)
    want = M.LUsolve(sympy.Matrix([sympy.Rational(r.numerator, r.denominator) for r in rhs]))
    assert [sympy.Rational(g.numerator, g.denominator) for g in got] == list(want)


def test_exact_solve_gaussian_system():
    i = GaussianRational(0, 1)
    A = [[1, i], [i, 2]]
    x = exact_solve_linear(A, [1 + i, 0])
    assert simplify_exact(A[0][0] * x[0] + A[0][1] * x[1]) == simplify_exact(1 + i)
    assert simplify_exact(A[1][0] * x[0] + A[1][1] * x[1]) == 0


def test_to_big_and_is_exact():
    assert is_exact(Fraction(1, 3)) and not is_exact(0.5)
    x = to_big(Fraction(1, 3), 128)
    assert x.precision_bits == 128 and to_big(x, 128) is x
