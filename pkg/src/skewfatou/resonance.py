"""Linear and quadratic jet coefficients of phi_{n,j} in the resonant case mu = 1/lambda.

For j >= k the orbit of the base point sits at the fixed point 0 and

    C_{n,j+1} = lam C_{n,j} + a / lam^(n+j)
    D_{n,j+1} = lam D_{n,j} + gamma C_{n,j}^2 + tau C_{n,j} / lam^(n+j) + b / lam^(2n+2j)

(coefficients of w and w^2).  Their closed forms

    C = Y1 lam^(j-n) + Ym1 lam^(-n-j)
    D = X2 lam^(2j-2n) + X1 lam^(j-2n) + X0 lam^(-2n) + Xm1 lam^(-2n-j) + Xm2 lam^(-2n-2j)

are fitted exactly from a handful of (n, j) samples.  X1 is affine in b, and
``solve_b`` returns its root.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .dynamics import Polynomial, SkewProduct, critical_data, resonant_form
from .errors import (DegenerateSamples, NoDegenerateForm, NotResonant, SingularSystem,
                     UsageError)
from .numerics import (BigComplex, Jet, exact_solve_linear, format_complex, is_exact,
                       jet_compose_poly, simplify_exact, to_big)

X_NAMES = ("X2", "X1", "X0", "Xm1", "Xm2")
X_EXPONENTS = (2, 1, 0, -1, -2)


@dataclass(frozen=True)
class JetDecomposition:
    n: int
    j: int
    C_coeff: object
    D_coeff: object
    E_norm: object = None


@dataclass
class CoefficientSolution:
    Y1: object
    Ym1: object
    X2: object
    X1: object
    X0: object
    Xm1: object
    Xm2: object
    fit_residual: object
    samples: list = field(default_factory=list)
    held_out: list = field(default_factory=list)

    @property
    def X(self):
        return (self.X2, self.X1, self.X0, self.Xm1, self.Xm2)

    def predict_C(self, lam, n, j):
        return self.Y1 * _lam_pow(lam, j - n) + self.Ym1 * _lam_pow(lam, -n - j)

    def predict_D(self, lam, n, j):
        acc = 0
        for coef, e in zip(self.X, X_EXPONENTS):
            acc = acc + coef * _lam_pow(lam, -2 * n + e * j)
        return acc


def _lam_pow(lam, e):
    if is_exact(lam):
        return simplify_exact(Fraction(1) * lam ** e) if e >= 0 else simplify_exact(Fraction(1) / lam ** (-e))
    return lam ** e


def _lifter(precision):
    if precision is None:
        return lambda c: simplify_exact(c) if is_exact(c) else c
    return lambda c: to_big(c, precision)


def _check_resonant(F):
    if not F.is_resonant:
        raise NotResonant(f"mu = {format_complex(F.mu)} is not 1/lambda (lambda = {format_complex(F.lam)})")


def full_jet(F, x0, n, j, order=2, precision=None):
    """Jet of ``phi_{n,j}(w)`` in ``w`` by composing g on jets for all j steps."""
    lift = _lifter(precision)
    lam = lift(F.lam)
    mu = lift(F.mu)
    polys = [F.z_poly(i).map_coeffs(lift) for i in range(F.t_degree + 1)]
    one = lift(1)
    zero = one * 0
    z = Jet.constant(lift(x0), order)
    t_scale = one / lam ** n if not is_exact(lam) else lift(_lam_pow(F.lam, -n))
    for _ in range(j):
        t = Jet.variable(order, zero, t_scale)
        acc = None
        for i in range(len(polys) - 1, -1, -1):
            ai = jet_compose_poly(polys[i], z)
            acc = ai if acc is None else acc * t + ai
        z = acc
        t_scale = t_scale * mu
    return z


def jet_coefficients(F, crit, n, j, precision=None, method="recursion"):
    """C_{n,j} and D_{n,j} (coefficients of w and w^2 in phi_{n,j}).

    The first ``crit.k`` steps use full jet composition; the rest follow the
    C/D recursions.  ``method="full"`` propagates jets for every step instead and
    also reports ``E_norm = |coefficient of w^3|``.
    """
    _check_resonant(F)
    if j < crit.k:
        raise UsageError(f"j = {j} precedes the recursion regime (k = {crit.k})")
    if method == "full":
        jet = full_jet(F, crit.x0, n, j, order=3, precision=precision)
        return JetDecomposition(n, j, jet[1], jet[2], abs(jet[3]))
    if method != "recursion":
        raise UsageError(f"unknown method {method!r}")
    lift = _lifter(precision)
    form = resonant_form(F)
    lam, a, gamma, tau, b = (lift(v) for v in (form.lam, form.a, form.gamma, form.tau, form.b))
    jet = full_jet(F, crit.x0, n, crit.k, order=2, precision=precision)
    C, D = jet[1], jet[2]
    for s in range(crit.k, j):
        inv = lift(_lam_pow(F.lam, -(n + s)))
        C, D = lam * C + a * inv, lam * D + gamma * C * C + tau * C * inv + b * inv * inv
    return JetDecomposition(n, j, C, D)


def default_samples(crit):
    n = crit.k + 6
    return [(n, crit.k + i) for i in range(6)]


def _solve(A, y):
    if all(is_exact(v) for row in A for v in row) and all(is_exact(v) for v in y):
        try:
            return [simplify_exact(v) for v in exact_solve_linear(A, y)]
        except SingularSystem as exc:
            raise DegenerateSamples(str(exc)) from exc
    return _pivot_solve(A, y)


def _pivot_solve(A, y):
    """Gaussian elimination with partial pivoting for float-path scalars."""
    n = len(A)
    M = [list(row) + [rhs] for row, rhs in zip(A, y)]
    for k in range(n):
        piv = max(range(k, n), key=lambda r: float(abs(M[r][k])))
        if not M[piv][k]:
            raise DegenerateSamples("design matrix is singular")
        M[k], M[piv] = M[piv], M[k]
        for i in range(k + 1, n):
            f = M[i][k] / M[k][k]
            M[i] = [u - f * v for u, v in zip(M[i], M[k])]
    x = [None] * n
    for i in range(n - 1, -1, -1):
        s = M[i][n]
        for jj in range(i + 1, n):
            s = s - M[i][jj] * x[jj]
        x[i] = s / M[i][i]
    return x


def fit_X(F, crit, samples=None, precision=None):
    """Fit Y1, Ym1 (from two samples) and X2..Xm2 (from five) exactly.

    Samples beyond the first five are held out; ``fit_residual`` is the largest
    mismatch of the closed forms there (exactly zero on the exact path).
    """
    samples = list(samples or default_samples(crit))
    if len(samples) < 5:
        raise DegenerateSamples("need at least 5 (n, j) samples")
    for n, j in samples:
        if j < crit.k:
            raise UsageError(f"sample j = {j} precedes the recursion regime (k = {crit.k})")
    lift = _lifter(precision)
    lam_exact = F.lam
    lam = lift(lam_exact)

    def lp(e):
        return lift(_lam_pow(lam_exact, e))

    decomp = {s: jet_coefficients(F, crit, s[0], s[1], precision) for s in samples}
    fit_y, fit_x, held = samples[:2], samples[:5], samples[5:]
    Y = _solve([[lp(j - n), lp(-n - j)] for n, j in fit_y], [decomp[s].C_coeff for s in fit_y])
    X = _solve([[lp(-2 * n + e * j) for e in X_EXPONENTS] for n, j in fit_x],
               [decomp[s].D_coeff for s in fit_x])
    sol = CoefficientSolution(Y[0], Y[1], *X, fit_residual=0, samples=samples[:5], held_out=held)
    residual = 0
    checks = held if held else samples[2:5]
    for n, j in checks:
        d = decomp[(n, j)]
        rc = abs(sol.predict_C(lam, n, j) - d.C_coeff)
        rd = abs(sol.predict_D(lam, n, j) - d.D_coeff)
        residual = max(residual, rc, rd)
    sol.fit_residual = residual
    return sol


def closed_form_residual(F, crit, sol, pairs, precision=None):
    """Largest |closed form - recursion| over ``pairs`` for both C and D."""
    lam = _lifter(precision)(F.lam)
    worst = 0
    for n, j in pairs:
        d = jet_coefficients(F, crit, n, j, precision)
        worst = max(worst, abs(sol.predict_C(lam, n, j) - d.C_coeff),
                    abs(sol.predict_D(lam, n, j) - d.D_coeff))
    return worst


def build_resonant_map(p, a, tau=0, b=0, lam=None):
    """Skew-product with ``g = p(z) + a t + tau z t + b t^2`` and ``mu = 1/lambda``."""
    p = p if isinstance(p, Polynomial) else Polynomial(p)
    lam = p.derivative()(0) if lam is None else lam
    if lam == 0:
        raise UsageError("p'(0) must be nonzero")
    coeffs = {(0, j): c for j, c in enumerate(p.coeffs)}
    coeffs[(1, 0)] = a
    coeffs[(1, 1)] = tau
    coeffs[(2, 0)] = b
    mu = simplify_exact(Fraction(1) / lam) if is_exact(lam) else 1 / lam
    return SkewProduct(mu, coeffs)


def x1_of_b(p, a, tau, crit, b, samples=None, precision=None):
    F = build_resonant_map(p, a, tau, b)
    return fit_X(F, crit, samples, precision).X1


def solve_b(p, a, tau, crit=None, trials=(0, 1), samples=None, precision=None):
    """The unique b making X1 vanish, from X1 at two trial values of b."""
    p = p if isinstance(p, Polynomial) else Polynomial(p)
    if crit is None:
        crit = critical_data(p)
    b0, b1 = (simplify_exact(Fraction(v)) if isinstance(v, (int, Fraction)) else v for v in trials)
    if b0 == b1:
        raise UsageError("trial values of b must differ")
    x0 = x1_of_b(p, a, tau, crit, b0, samples, precision)
    x1 = x1_of_b(p, a, tau, crit, b1, samples, precision)
    slope = (x1 - x0) / (b1 - b0)
    if _zeroish(slope, precision):
        raise NoDegenerateForm("X1 does not depend on b for this p and x0")
    b = b0 - x0 / slope
    return simplify_exact(b) if is_exact(b) else b


def _zeroish(x, precision):
    if is_exact(x):
        return x == 0
    if precision is None:
        return abs(complex(x)) < 1e-12
    return float(abs(x)) < 2.0 ** (16 - precision / 2)


def verify_degenerate(F, crit, samples=None, precision=None):
    """``(is_degenerate, X1)``: exact zero test, or ``|X1| < 2^(16 - P/2)`` at P bits."""
    x1 = fit_X(F, crit, samples, precision).X1
    if is_exact(x1):
        return x1 == 0, x1
    return _zeroish(x1, precision or 53), x1


def coefficient_report(sol):
    out = {}
    for name in ("Y1", "Ym1") + X_NAMES:
        v = getattr(sol, name)
        entry = {"decimal": format_complex(v, 30) if not is_exact(v) else format_complex(to_big(v, 128), 30)}
        if is_exact(v):
            entry["exact"] = format_complex(v)
        out[name] = entry
    out["fit_residual"] = format_complex(sol.fit_residual) if is_exact(sol.fit_residual) else str(float(sol.fit_residual))
    out["samples"] = [list(s) for s in sol.samples]
    out["held_out"] = [list(s) for s in sol.held_out]
    return out
