from fractions import Fraction

import pytest
import sympy
from hypothesis import given, settings, strategies as st

from skewfatou.dynamics import Polynomial, SkewProduct, critical_data, example_family
from skewfatou.errors import DegenerateSamples, NotResonant, UsageError
from skewfatou.numerics import is_exact
from skewfatou.resonance import (build_resonant_map, closed_form_residual, coefficient_report,
                                 default_samples, fit_X, full_jet, jet_coefficients, solve_b,
                                 verify_degenerate, x1_of_b)

P = Polynomial.parse("2*(z+1)^4-2")
# closed-form constants at b = 0, frozen after checking them against the sympy expansion below
X_AT_B0 = (Fraction(961, 296352), Fraction(-1923, 100156), Fraction(-496, 9261), Fraction(0),
           Fraction(-16384, 676053))


def sympy_jet(F, x0, n, j):
    """Coefficients of w and w^2 in pi_2 F^j(w / lam^n, x0), by direct truncated expansion."""
    w = sympy.symbols("w")
    lam = sympy.Rational(F.lam.numerator, F.lam.denominator)
    mu = sympy.Rational(F.mu.numerator, F.mu.denominator)
    coeffs = {k: sympy.Rational(c.numerator, c.denominator) for k, c in F.g_coeffs.items()}
    t = w / lam ** n
    z = sympy.Rational(x0.numerator, x0.denominator)
    for _ in range(j):
        z = sum(c * t ** i * z ** jj for (i, jj), c in coeffs.items())
        poly = sympy.Poly(sympy.expand(z), w)
        z = sum(poly.coeff_monomial(w ** k) * w ** k for k in range(3))
        t = t * mu
    poly = sympy.Poly(z, w)
    return poly.coeff_monomial(w), poly.coeff_monomial(w ** 2)


def as_fraction(x):
    return Fraction(int(x.p), int(x.q))


@pytest.mark.parametrize("n,j", [(3, 2), (4, 3), (5, 5), (8, 7)])
def test_jet_coefficients_match_sympy(untuned, crit, n, j):
    c_ref, d_ref = sympy_jet(untuned, crit.x0, n, j)
    for method in ("recursion", "full"):
        jd = jet_coefficients(untuned, crit, n, j, method=method)
        assert jd.C_coeff == as_fraction(c_ref)
        assert jd.D_coeff == as_fraction(d_ref)


def test_full_jet_reports_cubic_term(tuned, crit):
    jd = jet_coefficients(tuned, crit, 6, 4, method="full")
    assert jd.E_norm is not None and jd.E_norm > 0
    assert jet_coefficients(tuned, crit, 6, 4).E_norm is None
    with pytest.raises(UsageError):
        jet_coefficients(tuned, crit, 6, 1)
    with pytest.raises(UsageError):
        jet_coefficients(tuned, crit, 6, 4, method="magic")


def test_floating_jets_agree_with_exact(tuned, crit):
    exact = jet_coefficients(tuned, crit, 10, 9)
    approx = jet_coefficients(tuned, crit, 10, 9, precision=200)
    assert abs(approx.D_coeff - exact.D_coeff) <= 1e-50 * abs(exact.D_coeff)
    jet = full_jet(tuned, crit.x0, 10, 9, order=2)
    assert jet[2] == exact.D_coeff


def test_frozen_X_at_b0(untuned, crit):
    sol = fit_X(untuned, crit)
    assert sol.X == X_AT_B0
    assert sol.fit_residual == 0
    # the frozen constants predict the independent expansion at unseen (n, j)
    for n, j in [(5, 4), (7, 6), (9, 3)]:
        _, d_ref = sympy_jet(untuned, crit.x0, n, j)
        assert sol.predict_D(untuned.lam, n, j) == as_fraction(d_ref)


def test_linear_constants_by_hand(untuned, crit):
    # C_{n,j+1} = lam C + a lam^-(n+j): particular part gives Ym1 = -a lam / (lam^2 - 1);
    # C_{n,2} = p'(-2) a / lam^n + a / lam^(n+1) fixes Y1.
    lam, a = Fraction(8), Fraction(1)
    ym1 = -a * lam / (lam ** 2 - 1)
    y1 = (-8 * a + a / lam - ym1 / lam ** 2) / lam ** 2
    sol = fit_X(untuned, crit)
    assert (sol.Y1, sol.Ym1) == (y1, ym1)


def test_example_b_value():
    assert solve_b(P, 1, 0) == Fraction(-641, 4165)
    assert solve_b(P, 1, 0, trials=(Fraction(3), Fraction(-5, 2))) == Fraction(-641, 4165)
    assert solve_b(P, 2, 0) == Fraction(-2564, 4165)


@settings(max_examples=10)
@given(st.fractions(min_value=-3, max_value=3, max_denominator=7).filter(lambda a: a != 0))
def test_b_scales_with_a_squared(a):
    assert solve_b(P, a, 0) == a * a * Fraction(-641, 4165)


@settings(max_examples=10)
@given(st.fractions(min_value=-2, max_value=2, max_denominator=11))
def test_x1_is_affine_in_b(b):
    crit = critical_data(P)
    x_lo, x_hi, x_b = (x1_of_b(P, 1, 0, crit, v) for v in (Fraction(0), Fraction(1), b))
    assert x_b == x_lo + b * (x_hi - x_lo)


def test_tau_changes_b():
    b_tau = solve_b(P, 1, Fraction(1, 3))
    assert is_exact(b_tau) and b_tau != Fraction(-641, 4165)
    crit = critical_data(P)
    assert verify_degenerate(build_resonant_map(P, 1, Fraction(1, 3), b_tau), crit)[0]


def test_verify_degenerate(tuned, untuned, crit):
    ok, x1 = verify_degenerate(tuned, crit)
    assert ok and x1 == 0
    ok, x1 = verify_degenerate(untuned, crit)
    assert not ok and x1 == X_AT_B0[1]
    ok, x1 = verify_degenerate(tuned, crit, precision=256)
    assert ok and abs(x1) < 1e-60
    ok, _ = verify_degenerate(untuned, crit, precision=256)
    assert not ok


def test_float_solve_b_close_to_exact():
    b = solve_b(P, 1, 0, precision=256)
    assert abs(b - Fraction(-641, 4165)) < 1e-60


def test_held_out_residual_zero(tuned, crit):
    pairs = [(10 + i, 2 + (3 * i) % 9) for i in range(10)]
    sol = fit_X(tuned, crit)
    assert closed_form_residual(tuned, crit, sol, pairs) == 0
    held = fit_X(tuned, crit, default_samples(crit)[:5] + pairs)
    assert held.fit_residual == 0 and len(held.held_out) == 10


def test_degenerate_samples(tuned, crit):
    with pytest.raises(DegenerateSamples):
        fit_X(tuned, crit, [(8, 2)] * 5)
    with pytest.raises(DegenerateSamples):
        fit_X(tuned, crit, [(8, 2), (8, 3)])


def test_not_resonant(crit):
    F = SkewProduct.split(P, [0, 1], Fraction(1, 4))
    with pytest.raises(NotResonant):
        fit_X(F, crit)


def test_report_is_json_ready(tuned, crit):
    import json
    rep = coefficient_report(fit_X(tuned, crit))
    assert rep["X1"]["exact"] == "0"
    json.dumps(rep)
