"""Skew-Koenigs approximants phi_{n,j}(w) = pi_2 F^j(w / lambda^n, x0) and their limit.

The limit Phi satisfies Phi(lambda w) = p(Phi(w)).  Everything here is measured:
convergence is detected from successive differences and the reported error
bounds are geometric-tail estimates from the observed difference ratios.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import gmpy2
import numpy as np

from .dynamics import OrbitEngine, landing_chain, scalar_lift, t_at
from .errors import EscapedOrbit, NoConvergence, OutOfDomain, PrecisionExhausted, UsageError
from .numerics import (GaussianRational, Jet, format_complex, format_real, is_exact,
                       precision_for_depth, simplify_exact)
from .parallel import pmap

DEFAULT_N_MAX = 96
ESCAPE_RADIUS = 1e6


def lambda_abs(F):
    return abs(complex(F.lam))


def default_domain_radius(F):
    return 1.0 / (4.0 * lambda_abs(F))


@functools.lru_cache(maxsize=64)
def _engine(F, x0, precision):
    chain = landing_chain(F.p, x0, 0) if is_exact(x0) else None
    return OrbitEngine(F, chain, lift=scalar_lift(precision))


def engine_for(F, x0, precision):
    key = simplify_exact(x0) if is_exact(x0) else x0
    return _engine(F, key, precision)


def _magnitude(x):
    x = getattr(x, "coeffs", (x,))[0]
    return abs(complex(x))


def _scaled_start(w, lam, n, lift):
    """``w / lam**n`` lifted to the working scalar type, exact before rounding when possible."""
    if isinstance(w, Jet):
        return w * lift(simplify_exact(Fraction(1) / lam ** n) if is_exact(lam) else 1 / complex(lam) ** n)
    if is_exact(w) and is_exact(lam):
        return lift(simplify_exact(w / lam ** n))
    if is_exact(lam):
        return lift(w) * lift(simplify_exact(Fraction(1) / lam ** n))
    return lift(w) / lift(lam) ** n


def phi_nj(F, x0, n, j, w, precision=None, engine=None):
    """``pi_2 F^j(w / lambda^n, x0)``.

    ``w`` may be an exact scalar, a BigComplex, a complex, or a :class:`Jet`
    whose coefficients are of one of those types (then the result is the jet of
    phi_{n,j} around the jet's base value).
    """
    if j < 0 or n < 0:
        raise UsageError("n and j must be non-negative")
    lam_abs = lambda_abs(F)
    if precision is None and not isinstance(w, complex):
        precision = precision_for_depth(max(n, 1), lam_abs)
    if engine is None:
        engine = engine_for(F, x0, precision)
    lift = engine.lift
    t0 = _scaled_start(w, F.lam, n, lift)
    zero = t0 * 0
    if engine.exact_chain and is_exact(x0) and simplify_exact(x0 - engine.exact_chain[0]) == 0:
        state = engine.start_offset(zero)
    else:
        state = engine.start(lift(x0) + zero)
    for s in range(j):
        t = t_at(t0, F.mu, s, lift)
        state = engine.step(t, state)
        if not _magnitude(engine.value(state)) < ESCAPE_RADIUS:
            raise EscapedOrbit(f"phi_{{{n},{j}}}({format_complex(w) if not isinstance(w, Jet) else 'jet'}) "
                               f"escaped at step {s + 1}", index=s + 1)
    return engine.value(state)


def phi_n(F, x0, n, w, precision=None, engine=None):
    return phi_nj(F, x0, n, n, w, precision=precision, engine=engine)


@dataclass
class KoenigsTable:
    """Sampled values of phi_{n,j} and, optionally, its jet at w = 0."""

    n: int
    j: int
    x0: object
    values: dict
    jet: Jet | None = None
    precision: int | None = None


def koenigs_table(F, x0, n, j, ws, precision=None, jet_order=None, threads=None):
    if precision is None:
        precision = precision_for_depth(max(n, 1), lambda_abs(F))
    engine = engine_for(F, x0, precision)
    ws = list(ws)
    vals = pmap(lambda w: phi_nj(F, x0, n, j, w, precision, engine), ws, threads)
    jet = None
    if jet_order is not None:
        one = engine.lift(1)
        jet = phi_nj(F, x0, n, j, Jet.variable(jet_order, one * 0, one), precision, engine)
    return KoenigsTable(n=n, j=j, x0=x0, values=dict(zip(ws, vals)), jet=jet, precision=precision)


def _floor(value, precision):
    """Rounding floor for differences of values of size ``value``."""
    if precision is None:
        return 2.0 ** -44 * max(1.0, float(abs(value)))
    mag = abs(value)
    one = gmpy2.mpfr(1, precision)
    return gmpy2.mul_2exp(one, -(precision - 8)) * max(mag, one)


@dataclass
class KoenigsValue:
    value: object
    error_bound: object
    n: int
    differences: list = field(default_factory=list)


def koenigs_limit(F, x0, w, tol, precision=None, n_min=2, n_max=DEFAULT_N_MAX, engine=None):
    """phi_n(w) for the smallest n whose successive difference is below ``tol``.

    The error bound is the geometric tail ``d * rho / (1 - rho)`` with ``rho`` twice
    the largest of the last two observed difference ratios (capped at ``(1 + r)/2``),
    so slowly drifting ratios do not make the bound optimistic.
    """
    if not lambda_abs(F) > 1:
        raise UsageError("koenigs_limit needs |lambda| > 1")
    if precision is None:
        precision = precision_for_depth(n_max, lambda_abs(F))
    if engine is None:
        engine = engine_for(F, x0, precision)
    tol = float(tol)
    prev = phi_n(F, x0, n_min, w, precision, engine)
    diffs = []
    for n in range(n_min, n_max):
        cur = phi_n(F, x0, n + 1, w, precision, engine)
        d = abs(cur - prev)
        diffs.append(d)
        floor = _floor(cur, precision)
        if d == 0 or d <= floor:
            return KoenigsValue(cur, floor if d else d, n + 1, diffs)
        if d < tol and len(diffs) >= 3:
            r = max(diffs[-1] / diffs[-2], diffs[-2] / diffs[-3])
            if r < 1:
                rho = min(2 * r, (1 + r) / 2)
                return KoenigsValue(cur, d * rho / (1 - rho), n + 1, diffs)
        prev = cur
    raise NoConvergence(f"no convergence to {tol:g} by n = {n_max}", diffs)


@dataclass
class KoenigsLimit:
    """Depth-n approximant of Phi with samples on |w| < domain_radius."""

    F: object
    x0: object
    n: int
    precision: int
    domain_radius: float
    samples: list
    error_bound: object

    def evaluate(self, w):
        return phi_n(self.F, self.x0, self.n, w, self.precision)

    @property
    def lam(self):
        return self.F.lam


def koenigs_approximant(F, x0, n, precision=None, domain_radius=None, sample_points=None,
                        threads=None):
    """Build a :class:`KoenigsLimit` at depth ``n``.

    The error bound is a geometric-tail estimate from phi_{n-2}, phi_{n-1}, phi_n
    taken as the maximum over the sample points.
    """
    if n < 3:
        raise UsageError("depth must be >= 3 to estimate an error bound")
    if precision is None:
        precision = precision_for_depth(n, lambda_abs(F))
    if domain_radius is None:
        domain_radius = default_domain_radius(F)
    if sample_points is None:
        sample_points = circle_samples(Fraction(domain_radius).limit_denominator(2**20) / 2, 8)
    engine = engine_for(F, x0, precision)

    def one(w):
        v = [phi_n(F, x0, m, w, precision, engine) for m in (n - 2, n - 1, n)]
        d1, d2 = abs(v[1] - v[0]), abs(v[2] - v[1])
        if d1 == 0 or d2 == 0:
            return v[2], d2
        r = min(d2 / d1, gmpy2.mpfr("0.999"))
        return v[2], d2 * r / (1 - r)

    results = pmap(one, sample_points, threads)
    samples = [(w, v) for w, (v, _) in zip(sample_points, results)]
    bound = max((b for _, b in results), default=0)
    return KoenigsLimit(F=F, x0=x0, n=n, precision=precision, domain_radius=float(domain_radius),
                        samples=samples, error_bound=bound)


def circle_samples(radius, count, phase=Fraction(1, 7)):
    """Exact-rational points on a circle, via rational parametrization of the unit circle."""
    out = []
    radius = Fraction(radius)
    for k in range(count):
        # angle-like parameter s -> ((1-s^2)/(1+s^2), 2s/(1+s^2)), s = tan(theta/2)
        theta = 2 * math.pi * (k + float(phase)) / count
        s = Fraction(math.tan(theta / 2)).limit_denominator(1000)
        den = 1 + s * s
        out.append(simplify_exact(GaussianRational(radius * (1 - s * s) / den, radius * 2 * s / den)))
    return out


def functional_residual(approx, p, w):
    """``|Phi_hat(lambda w) - p(Phi_hat(w))|`` for the depth-n approximant.

    Both sides evaluate the polynomial approximant directly, so the check is not
    circular (extend_global would make it vanish identically).
    """
    lam = approx.lam
    lw = simplify_exact(lam * w) if is_exact(w) and is_exact(lam) else w * lam
    return abs(approx.evaluate(lw) - p(approx.evaluate(w)))


def extend_global(approx, F, w, k_max=64, k=None):
    """``p^k(Phi_hat(w / lambda^k))`` for the least k with ``|w / lambda^k| < domain_radius``."""
    lam = F.lam
    lam_abs = abs(complex(lam))
    w_abs = abs(complex(w))
    if k is None:
        k = 0
        while w_abs / lam_abs ** k >= approx.domain_radius:
            k += 1
            if k > k_max:
                raise OutOfDomain(f"|w| = {w_abs:g} needs more than {k_max} pullbacks")
    if is_exact(w) and is_exact(lam):
        inner = simplify_exact(w / lam ** k)
    else:
        inner = w / lam ** k
    v = approx.evaluate(inner)
    p = F.p
    for _ in range(k):
        v = p(v)
    return v


@dataclass
class SlopeFit:
    rho: float
    intercept: float
    ns: list
    differences: list
    values: list
    fit_ns: list


def difference_sequence(F, x0, w, n_range, precision=None, threads=None):
    """``(values, diffs)`` with ``diffs[i] = |phi_{n+1}(w) - phi_n(w)|`` over ``n_range``."""
    n0, n1 = n_range
    if precision is None:
        precision = precision_for_depth(n1 + 1, lambda_abs(F))
    engine = engine_for(F, x0, precision)
    values = pmap(lambda n: phi_n(F, x0, n, w, precision, engine), range(n0, n1 + 2), threads)
    diffs = [abs(b - a) for a, b in zip(values, values[1:])]
    return values, diffs


def convergence_slope(F, x0, w, n_range=(16, 40), precision=None, threads=None):
    """Least-squares slope of ``log|phi_{n+1}(w) - phi_n(w)|`` against ``n log|lambda|``.

    Only the second half of ``n_range`` enters the fit.
    """
    n0, n1 = n_range
    if n1 - n0 < 2:
        raise UsageError("n_range must span at least 3 depths")
    if precision is None:
        precision = precision_for_depth(n1 + 1, lambda_abs(F))
    values, diffs = difference_sequence(F, x0, w, n_range, precision, threads)
    ns = list(range(n0, n1 + 1))
    for n, v, d in zip(ns, values[1:], diffs):
        if d == 0 or d <= _floor(v, precision):
            raise PrecisionExhausted(f"difference at n = {n} is below the {precision}-bit rounding floor")
    half = len(ns) // 2
    fit_ns = ns[half:]
    log_lam = math.log(lambda_abs(F))
    xs = np.array([n * log_lam for n in fit_ns])
    ys = np.array([float(gmpy2.log(d)) for d in diffs[half:]])
    rho, intercept = np.polyfit(xs, ys, 1)
    return SlopeFit(rho=float(rho), intercept=float(intercept), ns=ns, differences=diffs,
                    values=values[1:], fit_ns=fit_ns)


def residual_profile(F, x0, ws, ns, precision=None, threads=None):
    """Functional-equation residuals ``res[i][m]`` at depth ``ns[m]`` for sample ``ws[i]``."""
    if precision is None:
        precision = precision_for_depth(max(ns), lambda_abs(F))
    p = F.p

    def one(w):
        row = []
        for n in ns:
            approx = KoenigsLimit(F=F, x0=x0, n=n, precision=precision,
                                  domain_radius=default_domain_radius(F), samples=[], error_bound=0)
            row.append(functional_residual(approx, p, w))
        return row

    return pmap(one, ws, threads)


def slope_report(F, x0, w, fit):
    return {
        "x0": format_complex(x0),
        "w": format_complex(w),
        "n": fit.ns,
        "phi": [format_complex(v, 40) for v in fit.values],
        "diff": [format_real(d, 17) for d in fit.differences],
        "slope": round(fit.rho, 12),
        "fit_n": fit.fit_ns,
    }
