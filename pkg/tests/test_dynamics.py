from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from skewfatou.dynamics import (OrbitEngine, Polynomial, SkewProduct, VectorOrbitEngine, critical_data,
                                critical_points, eval_map, example_family, landing_chain, load_map_config,
                                map_to_config, orbit, parse_polynomial_expr, resonant_form, scalar_lift,
                                squarefree_factorization, vertical_derivative_product)
from skewfatou.errors import (NotCriticallyFinite, NotSplit, PreconditionError, UsageError)
from skewfatou.numerics import BigComplex

small = st.fractions(min_value=-20, max_value=20, max_denominator=50)
polys = st.lists(small, min_size=1, max_size=6).map(Polynomial)


def test_parse_example_polynomial():
    p = Polynomial.parse("2*(z+1)^4-2")
    assert p.coeffs == (0, 8, 12, 8, 2)
    assert p.to_text() == "8*z + 12*z^2 + 8*z^3 + 2*z^4"
    terms = parse_polynomial_expr("t^2*z - 3/2*t + z**2")
    assert terms == {(2, 1): 1, (1, 0): Fraction(-3, 2), (0, 2): 1}


def test_parse_errors():
    with pytest.raises(UsageError):
        Polynomial.parse("z^(1/2)")
    with pytest.raises(UsageError):
        parse_polynomial_expr("2*x+1")


@given(polys, polys, small)
def test_polynomial_ring_evaluation(p, q, x):
    assert (p * q)(x) == p(x) * q(x)
    assert (p + q)(x) == p(x) + q(x)
    assert (p - q)(x) == p(x) - q(x)


@given(polys, small, small)
def test_taylor_shift(p, beta, d):
    assert p.taylor_shift(beta)(d) == p(beta + d)


@given(polys)
def test_text_roundtrip(p):
    assert Polynomial.parse(p.to_text()) == p


@given(polys, polys.filter(lambda q: not q.is_zero()))
def test_divmod(p, q):
    quo, rem = p.divmod(q)
    assert quo * q + rem == p
    assert rem.is_zero() or rem.degree < q.degree


def test_squarefree_factorization():
    p = Polynomial([1, 1]) ** 3 * Polynomial([-2, 0, 1])
    parts = squarefree_factorization(p)
    prod = Polynomial([1])
    for f, m in parts:
        prod = prod * f ** m
    assert prod.monic() == p.monic()
    assert sorted(m for _, m in parts) == [1, 3]


def test_example_family_shape():
    F = example_family(4, 1, Fraction(-641, 4165))
    assert F.mu == Fraction(1, 8) and F.lam == 8 and F.is_resonant and F.is_split
    assert F.g(Fraction(1, 2), Fraction(-1)) == -2 + Fraction(1, 2) + Fraction(-641, 4165) / 4
    form = resonant_form(F)
    assert (form.lam, form.a, form.gamma, form.tau, form.b) == (8, 1, 12, 0, Fraction(-641, 4165))
    assert eval_map(F, (8, 0)) == (1, 8 + 64 * Fraction(-641, 4165))


def test_critical_data_of_example():
    crit = critical_data(example_family().p)
    assert crit.x0 == -1 and crit.k == 2
    assert crit.crit_order == 3 and crit.local_degree == 4
    assert crit.chain == (-1, -2, 0)
    assert crit.multiplier == 8
    assert landing_chain(example_family().p, Fraction(-1)) == (-1, -2, 0)


def test_critical_points_multiplicity():
    pts = critical_points(Polynomial.parse("z^3 - 3*z"))
    assert sorted((complex(c).real, m) for c, m in pts) == [(-1.0, 1), (1.0, 1)]
    pts = critical_points(Polynomial.parse("2*(z+1)^4-2"))
    assert [(c, m) for c, m in pts] == [(-1, 3)]


def test_critical_data_preconditions():
    with pytest.raises(PreconditionError):
        critical_data(Polynomial.parse("z^2 + 1"))
    with pytest.raises(PreconditionError):
        critical_data(Polynomial.parse("z/2 + z^2"))
    with pytest.raises(NotCriticallyFinite):
        critical_data(Polynomial.parse("3*z + z^2"), k_max=4)


def test_mu_must_contract():
    with pytest.raises(PreconditionError):
        SkewProduct(2, {(0, 1): 2})


def test_split_check():
    F = SkewProduct.parse("2*z + z^2 + t*z", Fraction(1, 2))
    assert not F.is_split
    with pytest.raises(NotSplit):
        F.require_split()


def _naive_orbit(F, t, z, steps, prec=2000):
    mpmath.mp.prec = prec
    t = mpmath.mpc(t.real, t.imag) if isinstance(t, complex) else mpmath.mpf(t.numerator) / t.denominator
    z = mpmath.mpf(z.numerator) / z.denominator
    mu = mpmath.mpf(F.mu.numerator) / F.mu.denominator
    out = [z]
    coeffs = {k: mpmath.mpf(v.numerator) / v.denominator for k, v in F.g_coeffs.items()}
    for _ in range(steps):
        z = sum(c * t ** i * z ** j for (i, j), c in coeffs.items())
        t = t * mu
        out.append(z)
    return out


@pytest.mark.parametrize("start", [Fraction(-1), Fraction(-3, 4), Fraction(1, 5), Fraction(-17, 16)])
def test_orbit_engine_matches_naive_iteration(tuned, crit, start):
    t0 = Fraction(7, 8 ** 6)
    rec = orbit(tuned, (t0, start), 12, precision=256, crit=crit)
    ref = _naive_orbit(tuned, t0, start, 12)
    for (_, z), r in zip(rec.points, ref):
        assert abs(complex(z) - complex(r)) <= 1e-60 * max(1, abs(complex(r)))


def test_engine_preserves_tiny_offsets(tuned, crit):
    """Offsets far below the working precision relative to x0 survive the chain."""
    eng = OrbitEngine(tuned, crit.chain, lift=scalar_lift(128))
    d = BigComplex("1e-60", 128)
    state = eng.start_offset(d)
    t = BigComplex(0, 128)
    for _ in range(2):
        state = eng.step(t, state)
    assert state[0] == 2
    # p(-1 + d) = -2 + 2 d^4, then p(-2 + e) = 0 - 8 e + ... ; offset ~ -16 d^4
    assert abs(complex(state[1]) / -16e-240 - 1) < 1e-10


def test_vector_engine_agrees_with_scalar(tuned, crit):
    rng = np.random.default_rng(5)
    Z = -1 + 0.3 * (rng.random(64) - 0.5) + 0.3j * (rng.random(64) - 0.5)
    veng = VectorOrbitEngine(tuned, crit.chain)
    seng = OrbitEngine(tuned, crit.chain, lift=scalar_lift(None))
    state = veng.start(Z)
    sstates = [seng.start(complex(z)) for z in Z]
    t = 1e-3
    for _ in range(6):
        state = veng.step(t, state)
        sstates = [seng.step(t, s) for s in sstates]
        t /= 8
    got = veng.value(state)
    want = np.array([seng.value(s) for s in sstates])
    ok = np.isfinite(want) & (np.abs(want) < 1e6)
    assert np.allclose(got[ok], want[ok], rtol=1e-9, atol=1e-12)


def test_orbit_escape_and_derivatives(tuned, crit):
    rec = orbit(tuned, (Fraction(0), Fraction(1)), 20, crit=crit)
    assert rec.escaped and rec.escape_index is not None
    rec = orbit(tuned, (Fraction(0), Fraction(-1)), 5, precision=128, crit=crit)
    assert not rec.escaped
    assert rec.vertical_factors[0] == 0  # critical point
    prod = vertical_derivative_product(rec, 1, 4, tuned)
    assert complex(prod) == -8 * 8 * 8  # p'(-2) p'(0) p'(0)


def test_map_config_roundtrip(tuned):
    F, _ = load_map_config(map_to_config(tuned))
    assert F == tuned
    F, _ = load_map_config("[map]\np = 2*(z+1)^4-2\nq = t - 641/4165*t^2\nmu = 1/8\ndegree = 4\n")
    assert F == tuned
    with pytest.raises(UsageError):
        load_map_config("[map]\np = z^2\n")
    with pytest.raises(UsageError):
        load_map_config("[map]\np = 2*(z+1)^4-2\nmu = 1/8\ndegree = 3\n")
