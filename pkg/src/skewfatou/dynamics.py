"""Polynomials, skew-products F(t, z) = (mu*t, g(t, z)), orbits and critical data.

Orbits near the critical point lose information to cancellation: a point
``x0 + d`` maps to ``p(x0) + O(d**s)`` and the small correction disappears into
the rounding of ``p(x0)``.  :class:`OrbitEngine` avoids this by carrying an
orbit that shadows the exact critical orbit ``x0 -> p(x0) -> ... -> fixed point``
as ``(base index, offset)`` pairs and stepping the offset with Taylor-shifted
coefficients.  Away from that chain it iterates plainly.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (EscapedOrbit, NotCriticallyFinite, NotNormalized, NotSplit,
                     PreconditionError, UsageError)
from .numerics import (BigComplex, GaussianRational, format_complex, is_exact,
                       parse_scalar, simplify_exact, to_big)


def _zero_like(x):
    return x * 0


def _is_zero(x):
    if isinstance(x, BigComplex):
        return not x
    return x == 0


# ---------------------------------------------------------------------------
# Polynomials


class Polynomial:
    """Univariate polynomial, coefficients stored constant term first."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        cs = [simplify_exact(c) if is_exact(c) else c for c in coeffs]
        while len(cs) > 1 and _is_zero(cs[-1]):
            cs.pop()
        if not cs:
            cs = [Fraction(0)]
        object.__setattr__(self, "coeffs", tuple(cs))

    def __setattr__(self, name, value):
        raise AttributeError("Polynomial is immutable")

    @classmethod
    def parse(cls, text, var="z"):
        terms = parse_polynomial_expr(text, variables=(var,))
        deg = max((k[0] for k in terms), default=0)
        cs = [Fraction(0)] * (deg + 1)
        for (e,), c in terms.items():
            cs[e] = c
        return cls(cs)

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def is_zero(self):
        return self.degree == 0 and _is_zero(self.coeffs[0])

    @property
    def is_exact(self):
        return all(is_exact(c) for c in self.coeffs)

    def __call__(self, x):
        cs = self.coeffs
        acc = cs[-1]
        for c in reversed(cs[:-1]):
            acc = acc * x + c
        if len(cs) == 1:
            acc = acc + _zero_like(x)
        return acc

    def derivative(self, order=1):
        cs = list(self.coeffs)
        for _ in range(order):
            cs = [k * c for k, c in enumerate(cs)][1:] or [Fraction(0)]
        return Polynomial(cs)

    def taylor_shift(self, beta):
        """Coefficients of ``p(beta + d)`` as a polynomial in ``d``."""
        cs = list(self.coeffs)
        n = len(cs)
        # repeated synthetic division
        for i in range(n - 1):
            for j in range(n - 2, i - 1, -1):
                cs[j] = cs[j] + beta * cs[j + 1]
        return Polynomial(cs)

    def map_coeffs(self, fn):
        out = object.__new__(Polynomial)
        object.__setattr__(out, "coeffs", tuple(fn(c) for c in self.coeffs))
        return out

    def _binop(self, other, op):
        if not isinstance(other, Polynomial):
            other = Polynomial([other])
        n = max(len(self.coeffs), len(other.coeffs))
        a = list(self.coeffs) + [Fraction(0)] * (n - len(self.coeffs))
        b = list(other.coeffs) + [Fraction(0)] * (n - len(other.coeffs))
        return Polynomial([op(x, y) for x, y in zip(a, b)])

    def __add__(self, other):
        return self._binop(other, lambda x, y: x + y)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binop(other, lambda x, y: x - y)

    def __rsub__(self, other):
        return Polynomial([other]) - self

    def __neg__(self):
        return Polynomial([-c for c in self.coeffs])

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            return Polynomial([c * other for c in self.coeffs])
        out = [Fraction(0)] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, x in enumerate(self.coeffs):
            for j, y in enumerate(other.coeffs):
                out[i + j] = out[i + j] + x * y
        return Polynomial(out)

    __rmul__ = __mul__

    def __pow__(self, k):
        result = Polynomial([Fraction(1)])
        for _ in range(k):
            result = result * self
        return result

    def divmod(self, other):
        """Exact polynomial long division (exact coefficients only)."""
        if other.is_zero():
            raise ZeroDivisionError("polynomial division by zero")
        rem = list(self.coeffs)
        dq = other.degree
        lead = other.coeffs[-1]
        quot = [Fraction(0)] * max(1, len(rem) - dq)
        for i in range(len(rem) - 1, dq - 1, -1):
            c = rem[i] / lead
            quot[i - dq] = c
            if c != 0:
                for j in range(dq + 1):
                    rem[i - dq + j] = rem[i - dq + j] - c * other.coeffs[j]
        return Polynomial(quot), Polynomial(rem[:dq] or [Fraction(0)])

    def monic(self):
        lead = self.coeffs[-1]
        return Polynomial([c / lead for c in self.coeffs])

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self):
        return hash(self.coeffs)

    def __repr__(self):
        return f"Polynomial({[format_complex(c) for c in self.coeffs]})"

    def to_text(self, var="z"):
        parts = []
        for k, c in enumerate(self.coeffs):
            if _is_zero(c):
                continue
            mono = "" if k == 0 else (var if k == 1 else f"{var}^{k}")
            coef = format_complex(c)
            if "+" in coef[1:] or "-" in coef[1:] and "e" not in coef:
                coef = f"({coef})"
            parts.append(f"{coef}*{mono}" if mono else coef)
        return " + ".join(parts) if parts else "0"


def poly_gcd(a, b):
    """Monic gcd over the rationals (exact coefficients)."""
    while not b.is_zero():
        a, b = b, a.divmod(b)[1]
    return a.monic() if not a.is_zero() else a


def squarefree_factorization(p):
    """Yun's algorithm: list of ``(factor, multiplicity)`` with monic squarefree factors."""
    if p.degree < 1:
        return []
    out = []
    dp = p.derivative()
    a = poly_gcd(p, dp)
    b = p.divmod(a)[0]
    c = dp.divmod(a)[0]
    d = c - b.derivative()
    i = 1
    while b.degree > 0:
        a = poly_gcd(b, d)
        if a.degree > 0:
            out.append((a, i))
        b = b.divmod(a)[0]
        c = d.divmod(a)[0]
        d = c - b.derivative()
        i += 1
    return out


# ---------------------------------------------------------------------------
# Expression parsing for config files and the CLI

_TOKEN = re.compile(r"\s*(?:(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|(\*\*|[-+*/^()])|([A-Za-z_]\w*))")


def _tokenize(text):
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise UsageError(f"cannot parse expression near {text[pos:]!r}")
        num, op, name = m.groups()
        out.append(("num", num) if num else ("op", "^" if op == "**" else op) if op else ("name", name))
        pos = m.end()
    return out


class _ExprParser:
    """Recursive-descent parser producing ``{exponent tuple: exact coefficient}``."""

    def __init__(self, text, variables):
        self.toks = _tokenize(text)
        self.pos = 0
        self.vars = variables

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else (None, None)

    def take(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def parse(self):
        out = self.expr()
        if self.pos != len(self.toks):
            raise UsageError(f"unexpected token {self.peek()[1]!r}")
        return {k: simplify_exact(v) for k, v in out.items() if v != 0}

    def const(self, c):
        return {(0,) * len(self.vars): c}

    def add(self, a, b, sign=1):
        out = dict(a)
        for k, v in b.items():
            out[k] = out.get(k, Fraction(0)) + sign * v
        return out

    def mul(self, a, b):
        out = {}
        for ka, va in a.items():
            for kb, vb in b.items():
                k = tuple(x + y for x, y in zip(ka, kb))
                out[k] = out.get(k, Fraction(0)) + va * vb
        return out

    def expr(self):
        val = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            sign = 1 if self.take()[1] == "+" else -1
            val = self.add(val, self.term(), sign)
        return val

    def term(self):
        val = self.unary()
        while True:
            kind, tok = self.peek()
            if (kind, tok) == ("op", "*"):
                self.take()
                val = self.mul(val, self.unary())
            elif (kind, tok) == ("op", "/"):
                self.take()
                den = self.unary()
                if set(den) != {(0,) * len(self.vars)} or den[(0,) * len(self.vars)] == 0:
                    raise UsageError("division only by nonzero constants")
                c = den[(0,) * len(self.vars)]
                val = {k: v / c for k, v in val.items()}
            elif kind in ("num", "name") or (kind, tok) == ("op", "("):
                val = self.mul(val, self.unary())
            else:
                return val

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return {k: -v for k, v in self.unary().items()}
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            kind, tok = self.take()
            if kind != "num" or not tok.isdigit():
                raise UsageError("exponents must be non-negative integer literals")
            result = self.const(Fraction(1))
            for _ in range(int(tok)):
                result = self.mul(result, base)
            return result
        return base

    def atom(self):
        kind, tok = self.take()
        if kind == "num":
            return self.const(Fraction(tok))
        if kind == "name":
            if tok in self.vars:
                e = [0] * len(self.vars)
                e[self.vars.index(tok)] = 1
                return {tuple(e): Fraction(1)}
            if tok in ("i", "I", "j"):
                return self.const(GaussianRational(0, 1))
            raise UsageError(f"unknown name {tok!r} (variables: {', '.join(self.vars)})")
        if (kind, tok) == ("op", "("):
            val = self.expr()
            if self.take() != ("op", ")"):
                raise UsageError("missing ')'")
            return val
        raise UsageError(f"unexpected token {tok!r}")


def parse_polynomial_expr(text, variables=("t", "z")):
    """Parse an exact polynomial expression such as ``"2*(z+1)^4 - 2 + t"``."""
    return _ExprParser(text, tuple(variables)).parse()


# ---------------------------------------------------------------------------
# Skew-products


@dataclass(frozen=True)
class ResonantForm:
    lam: object
    a: object
    gamma: object
    tau: object
    b: object


class SkewProduct:
    """``F(t, z) = (mu*t, g(t, z))`` with ``g = sum c[i, j] t**i z**j``."""

    __slots__ = ("mu", "g_coeffs", "_cache")

    def __init__(self, mu, g_coeffs):
        mu = simplify_exact(mu) if is_exact(mu) else mu
        coeffs = {}
        for (i, j), c in dict(g_coeffs).items():
            if i < 0 or j < 0:
                raise UsageError("negative exponent in g")
            c = simplify_exact(c) if is_exact(c) else c
            if not _is_zero(c):
                coeffs[(int(i), int(j))] = c
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "g_coeffs", dict(sorted(coeffs.items())))
        object.__setattr__(self, "_cache", {})
        if not 0 < abs(complex(mu)) < 1:
            raise PreconditionError(f"need 0 < |mu| < 1, got {mu}")

    def __setattr__(self, name, value):
        raise AttributeError("SkewProduct is immutable")

    # -- constructors
    @classmethod
    def split(cls, p, q, mu):
        """``g(t, z) = p(z) + q(t)`` from coefficient lists (constant first)."""
        p = p if isinstance(p, Polynomial) else Polynomial(p)
        q = q if isinstance(q, Polynomial) else Polynomial(q)
        coeffs = {(0, j): c for j, c in enumerate(p.coeffs)}
        for i, c in enumerate(q.coeffs):
            if i == 0:
                coeffs[(0, 0)] = coeffs.get((0, 0), 0) + c
            else:
                coeffs[(i, 0)] = c
        return cls(mu, coeffs)

    @classmethod
    def linear(cls, lam, a, mu):
        return cls(mu, {(0, 1): lam, (1, 0): a})

    @classmethod
    def parse(cls, g_expr, mu):
        terms = parse_polynomial_expr(g_expr, variables=("t", "z"))
        return cls(parse_scalar(mu) if isinstance(mu, str) else mu, terms)

    # -- derived data
    def _cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def t_degree(self):
        return max((i for i, _ in self.g_coeffs), default=0)

    def z_poly(self, i):
        """Coefficient polynomial a_i(z) of t**i."""
        def build():
            deg = max((j for (ii, j) in self.g_coeffs if ii == i), default=0)
            cs = [Fraction(0)] * (deg + 1)
            for (ii, j), c in self.g_coeffs.items():
                if ii == i:
                    cs[j] = c
            return Polynomial(cs)
        return self._cached(("z_poly", i), build)

    @property
    def p(self):
        return self.z_poly(0)

    @property
    def q(self):
        """t-only part ``q(t) = sum_{i>=1} c[i, 0] t**i``."""
        def build():
            deg = self.t_degree
            cs = [Fraction(0)] * (deg + 1)
            for (i, j), c in self.g_coeffs.items():
                if j == 0 and i > 0:
                    cs[i] = c
            return Polynomial(cs)
        return self._cached("q", build)

    @property
    def is_split(self):
        return all(i == 0 or j == 0 for (i, j) in self.g_coeffs)

    @property
    def lam(self):
        return self.g_coeffs.get((0, 1), Fraction(0))

    @property
    def a(self):
        return self.g_coeffs.get((1, 0), Fraction(0))

    @property
    def is_resonant(self):
        lam = self.lam
        if is_exact(lam) and is_exact(self.mu):
            return lam != 0 and simplify_exact(self.mu * lam) == 1
        return abs(complex(self.mu) * complex(lam) - 1) < 1e-12

    def require_split(self):
        if not self.is_split:
            raise NotSplit("operation requires g(t, z) = p(z) + q(t)")

    def with_coeff(self, i, j, value):
        coeffs = dict(self.g_coeffs)
        coeffs[(i, j)] = value
        return SkewProduct(self.mu, coeffs)

    def with_b(self, b):
        return self.with_coeff(2, 0, b)

    def g(self, t, z):
        acc = None
        for i in range(self.t_degree, -1, -1):
            ai = self.z_poly(i)(z)
            acc = ai if acc is None else acc * t + ai
        return acc

    def dg_dz(self, t, z):
        acc = None
        for i in range(self.t_degree, -1, -1):
            ai = self.z_poly(i).derivative()(z)
            acc = ai if acc is None else acc * t + ai
        return acc

    def canonical_text(self):
        items = ";".join(f"{i},{j}:{format_complex(c)}" for (i, j), c in self.g_coeffs.items())
        return f"mu={format_complex(self.mu)};g={items}"

    def map_hash(self):
        return hashlib.sha256(self.canonical_text().encode()).digest()

    def __eq__(self, other):
        if not isinstance(other, SkewProduct):
            return NotImplemented
        return self.canonical_text() == other.canonical_text()

    def __hash__(self):
        return hash(self.canonical_text())

    def __repr__(self):
        return f"SkewProduct({self.canonical_text()})"


def example_family(d=4, a=1, b=0):
    """``F(t, z) = (t/(2d), 2(z+1)**d - 2 + a t + b t**2)`` for even ``d >= 4``."""
    p = Polynomial([Fraction(2)]) * Polynomial([Fraction(1), Fraction(1)]) ** d - 2
    return SkewProduct.split(p, [0, a, b], Fraction(1, 2 * d))


def eval_map(F, point):
    t, z = point
    return F.mu * t, F.g(t, z)


def resonant_form(F):
    if not _is_zero(F.g_coeffs.get((0, 0), 0)):
        raise NotNormalized("g(0, 0) must vanish")
    c = F.g_coeffs
    z = Fraction(0)
    return ResonantForm(lam=c.get((0, 1), z), a=c.get((1, 0), z), gamma=c.get((0, 2), z),
                        tau=c.get((1, 1), z), b=c.get((2, 0), z))


# ---------------------------------------------------------------------------
# Critical data


@dataclass(frozen=True)
class CriticalData:
    x0: object
    crit_order: int
    k: int
    fixed_point: object
    multiplier: object
    chain: tuple = ()

    @property
    def local_degree(self):
        return self.crit_order + 1


def _snap_exact(root, poly, max_den=10**6):
    """Return an exact rational/Gaussian root near ``root`` if one exists."""
    c = complex(root)
    re_ = Fraction(c.real).limit_denominator(max_den)
    im_ = Fraction(c.imag).limit_denominator(max_den)
    cand = simplify_exact(GaussianRational(re_, im_))
    if poly(cand) == 0:
        return cand
    return None


def _numeric_roots(poly, bits):
    cs = [complex(c) for c in poly.coeffs]
    if len(cs) <= 1:
        return []
    guesses = np.roots(cs[::-1])
    dp = poly.derivative()
    out = []
    eps = 2.0 ** (-bits + 4)
    for g in guesses:
        z = BigComplex(complex(g), bits)
        for _ in range(200):
            d = dp(z)
            if not d:
                break
            step = poly(z) / d
            z = z - step
            if not step or abs(step) <= eps * max(1.0, float(abs(z))):
                break
        out.append(z)
    return out


def critical_points(p, bits=256):
    """Critical points of ``p`` with their orders (multiplicity as roots of p')."""
    dp = p.derivative()
    if dp.degree < 1:
        return []
    if p.is_exact:
        found = []
        for factor, mult in squarefree_factorization(dp):
            for r in _numeric_roots(factor, bits):
                exact = _snap_exact(r, factor)
                found.append((exact if exact is not None else r, mult))
        return found
    # float coefficients: multiplicity from successive derivatives
    found = []
    thresh = 2.0 ** (-bits / 2)
    for r in _numeric_roots(dp, bits):
        if any(abs(complex(r) - complex(s)) < 1e-8 for s, _ in found):
            continue
        order, deriv = 0, dp
        scale = max(1.0, max(abs(complex(c)) for c in dp.coeffs))
        while deriv.degree >= 0 and abs(complex(deriv(r))) <= thresh * scale and order < dp.degree + 1:
            order += 1
            deriv = deriv.derivative()
        found.append((r, max(order, 1)))
    return found


def critical_data(p, fixed_point=0, k_max=16, bits=256):
    """Locate a critical point of ``p`` whose orbit lands on the repelling ``fixed_point``."""
    p = p if isinstance(p, Polynomial) else Polynomial(p)
    fixed_point = simplify_exact(fixed_point) if is_exact(fixed_point) else fixed_point
    fp_val = p(fixed_point)
    if is_exact(fixed_point) and p.is_exact:
        if simplify_exact(fp_val - fixed_point) != 0:
            raise PreconditionError(f"{fixed_point} is not a fixed point of p")
    elif abs(complex(fp_val) - complex(fixed_point)) > 1e-12:
        raise PreconditionError(f"{fixed_point} is not a fixed point of p")
    mult = p.derivative()(fixed_point)
    if not abs(complex(mult)) > 1:
        raise PreconditionError(f"fixed point {fixed_point} is not repelling (|p'| = {abs(complex(mult))})")
    tol = 2.0 ** (-bits / 2)
    candidates = []
    for x0, order in critical_points(p, bits):
        z = x0
        chain = [z]
        for k in range(0, k_max + 1):
            if is_exact(z) and is_exact(fixed_point):
                landed = simplify_exact(z - fixed_point) == 0
            else:
                landed = abs(complex(z) - complex(fixed_point)) < tol
            if landed:
                chain[-1] = fixed_point
                candidates.append((-order, k, x0, order, tuple(chain)))
                break
            z = p(z)
            if is_exact(z) and max(abs(c.numerator).bit_length() for c in _parts(z)) > 4096:
                z = to_big(z, bits)
            chain.append(z)
    if not candidates:
        raise NotCriticallyFinite(f"no critical orbit lands on {fixed_point} within {k_max} steps")
    candidates.sort(key=lambda c: (c[0], c[1], complex(c[2]).real, complex(c[2]).imag))
    _, k, x0, order, chain = candidates[0]
    return CriticalData(x0=x0, crit_order=order, k=k, fixed_point=fixed_point,
                        multiplier=mult, chain=chain)


def landing_chain(p, x0, fixed_point=0, k_max=16):
    """Exact orbit ``x0, p(x0), ..., fixed_point`` if ``x0`` lands within ``k_max`` steps.

    Returns ``None`` for inexact data or when the orbit does not land.
    """
    if not (is_exact(x0) and is_exact(fixed_point) and p.is_exact):
        return None
    z = simplify_exact(x0)
    chain = [z]
    for _ in range(k_max + 1):
        if simplify_exact(z - fixed_point) == 0:
            return tuple(chain)
        z = simplify_exact(p(z))
        if max(abs(c.numerator).bit_length() + c.denominator.bit_length() for c in _parts(z)) > 4096:
            return None
        chain.append(z)
    return None


def _parts(z):
    if isinstance(z, GaussianRational):
        return (z.re, z.im)
    return (Fraction(z),)


# ---------------------------------------------------------------------------
# Orbits


def default_bailout(p):
    return max(2.0, 2.0 * sum(abs(complex(c)) for c in p.coeffs))


class OrbitEngine:
    """Stepper that shadows the exact critical chain with offsets.

    States are ``(base, value)``.  ``base == -1`` means ``value`` is the plain z
    coordinate.  ``base == i >= 0`` means ``z = chain[i] + value``; the offset is
    advanced with ``g(t, chain[i] + d) - chain[i+1]`` expanded in ``d``.  The last
    chain entry is the fixed point, which is its own successor.
    """

    def __init__(self, F, chain=None, lift=None, rebase_radius=Fraction(1, 16),
                 release_radius=Fraction(1, 4)):
        if isinstance(chain, CriticalData):
            chain = chain.chain
        self.F = F
        self.lift = lift or (lambda c: c)
        self.rebase_radius = float(rebase_radius)
        self.release_radius = float(release_radius)
        self.t_deg = F.t_degree
        zp = [F.z_poly(i) for i in range(self.t_deg + 1)]
        self.z_polys = [poly.map_coeffs(self.lift) for poly in zp]
        self.dz_polys = [poly.derivative().map_coeffs(self.lift) for poly in zp]
        self.chain = ()
        self.exact_chain = tuple(chain) if chain else ()
        self.tables = []
        self.dtables = []
        if chain:
            chain = list(chain)
            self.chain = tuple(self.lift(b) for b in chain)
            for idx, beta in enumerate(chain):
                nxt = chain[idx + 1] if idx + 1 < len(chain) else chain[idx]
                row, drow = [], []
                for i, poly in enumerate(zp):
                    shifted = poly.taylor_shift(beta)
                    cs = list(shifted.coeffs)
                    if i == 0:
                        cs[0] = cs[0] - nxt
                    row.append(Polynomial(cs).map_coeffs(self.lift))
                    drow.append(shifted.derivative().map_coeffs(self.lift))
                self.tables.append(row)
                self.dtables.append(drow)

    @property
    def x0(self):
        return self.chain[0] if self.chain else None

    def _eval_t(self, polys, t, x):
        acc = None
        for i in range(len(polys) - 1, -1, -1):
            ai = polys[i](x)
            acc = ai if acc is None else acc * t + ai
        return acc

    def start(self, z):
        if self.chain:
            d = z - self.chain[0]
            if _is_zero(d) or _small(d, self.rebase_radius):
                return (0, d)
        return (-1, z)

    def start_offset(self, d):
        """State for ``x0 + d`` with ``d`` kept exactly as given."""
        if not self.chain:
            raise PreconditionError("offset start requires critical data")
        return (0, d)

    def value(self, state):
        base, v = state
        return v if base < 0 else self.chain[base] + v

    def offset_from_x0(self, state):
        base, v = state
        if base == 0:
            return v
        return self.value(state) - self.chain[0]

    def step(self, t, state):
        base, v = state
        if base < 0:
            z = self._eval_t(self.z_polys, t, v)
            if self.chain:
                d = z - self.chain[0]
                if _small(d, self.rebase_radius):
                    return (0, d)
            return (-1, z)
        d = self._eval_t(self.tables[base], t, v)
        last = len(self.chain) - 1
        nb = min(base + 1, last)
        if nb == last and not _small(d, self.release_radius):
            z = self.chain[last] + d
            e = z - self.chain[0]
            if _small(e, self.rebase_radius):
                return (0, e)
            return (-1, z)
        return (nb, d)

    def dz(self, t, state):
        base, v = state
        if base < 0:
            return self._eval_t(self.dz_polys, t, v)
        return self._eval_t(self.dtables[base], t, v)


def _small(x, radius):
    x = getattr(x, "coeffs", (x,))[0]
    try:
        return abs(complex(x)) < radius
    except OverflowError:
        return False


@dataclass
class OrbitRecord:
    points: list
    vertical_factors: list
    vertical_products: list
    distances_to_x0: list
    distances_to_fixed: list
    escaped: bool = False
    escape_index: int | None = None
    states: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.points)

    @property
    def z_values(self):
        return [z for _, z in self.points]


def t_at(t0, mu, j, lift):
    """t after j steps: ``t0 * mu**j`` with the power formed exactly when possible."""
    if j == 0:
        return t0
    if is_exact(mu):
        return t0 * lift(simplify_exact(mu ** j))
    return t0 * lift(mu) ** j


def scalar_lift(precision):
    if precision is None:
        return lambda c: complex(c) if not isinstance(c, complex) else c
    return lambda c: to_big(c, precision)


def orbit(F, start, steps, precision=None, crit=None, bailout=None, engine=None,
          start_state=None, raise_on_escape=False):
    """Record ``steps`` iterates of F from ``start = (t, z)``.

    With ``precision`` the orbit is computed with BigComplex at that many bits,
    otherwise in double precision.  Escaping orbits are truncated with
    ``escaped = True`` (or raise :class:`EscapedOrbit` if requested).
    """
    if steps < 0:
        raise UsageError("steps must be >= 0")
    lift = scalar_lift(precision)
    if engine is None:
        engine = OrbitEngine(F, crit.chain if crit is not None else None, lift=lift)
    bailout = default_bailout(F.p) if bailout is None else float(bailout)
    t0 = lift(start[0])
    state = start_state if start_state is not None else engine.start(lift(start[1]))
    x0 = engine.x0
    fixed = lift(crit.fixed_point) if crit is not None else lift(0)
    one = lift(1)
    rec = OrbitRecord(points=[], vertical_factors=[], vertical_products=[one],
                      distances_to_x0=[], distances_to_fixed=[])
    for j in range(steps + 1):
        t = t_at(t0, F.mu, j, lift)
        z = engine.value(state)
        rec.points.append((t, z))
        rec.states.append(state)
        rec.distances_to_x0.append(abs(engine.offset_from_x0(state)) if x0 is not None else abs(z))
        rec.distances_to_fixed.append(abs(z - fixed))
        if not _small(z, bailout):
            rec.escaped = True
            rec.escape_index = j
            if raise_on_escape:
                raise EscapedOrbit(f"orbit escaped at step {j}", index=j, record=rec)
            break
        if j == steps:
            break
        dz = engine.dz(t, state)
        rec.vertical_factors.append(dz)
        rec.vertical_products.append(rec.vertical_products[-1] * dz)
        state = engine.step(t, state)
    return rec


def vertical_derivative_product(record, start, stop, F=None):
    """``prod p'(z_i)`` for ``start <= i < stop`` along a recorded orbit."""
    if F is not None:
        F.require_split()
    if not 0 <= start <= stop <= len(record.vertical_factors):
        raise UsageError(f"index range [{start}, {stop}) outside the recorded orbit")
    acc = None
    for f in record.vertical_factors[start:stop]:
        acc = f if acc is None else acc * f
    if acc is None:
        return record.vertical_products[0]
    return acc


class VectorOrbitEngine:
    """Double-precision, numpy-vectorised counterpart of :class:`OrbitEngine`.

    States are pairs of arrays ``(base, value)`` with the same meaning as the
    scalar engine.  All operations are elementwise, so results do not depend on
    how a grid is split into chunks.
    """

    def __init__(self, F, chain=None, rebase_radius=Fraction(1, 16), release_radius=Fraction(1, 4)):
        scalar = OrbitEngine(F, chain, lift=complex, rebase_radius=rebase_radius,
                             release_radius=release_radius)
        self.F = F
        self.rebase_radius = scalar.rebase_radius
        self.release_radius = scalar.release_radius
        self.plain = [list(p.coeffs) for p in scalar.z_polys]
        self.tables = [[list(p.coeffs) for p in row] for row in scalar.tables]
        self.chain = np.array(scalar.chain, dtype=complex)

    @staticmethod
    def _horner(coeffs, x):
        acc = np.full_like(x, coeffs[-1] if coeffs else 0)
        for c in reversed(coeffs[:-1]):
            acc = acc * x + c
        return acc

    def _eval(self, rows, t, x):
        acc = None
        for coeffs in reversed(rows):
            ai = self._horner(coeffs, x)
            acc = ai if acc is None else acc * t + ai
        return acc

    def start(self, z):
        z = np.asarray(z, dtype=complex)
        base = np.full(z.shape, -1, dtype=np.int8)
        v = z.copy()
        if len(self.chain):
            d = z - self.chain[0]
            near = np.abs(d) < self.rebase_radius
            base[near] = 0
            v[near] = d[near]
        return base, v

    def start_offset(self, d):
        d = np.asarray(d, dtype=complex)
        return np.zeros(d.shape, dtype=np.int8), d.copy()

    def value(self, state):
        base, v = state
        out = v.copy()
        if len(self.chain):
            based = base >= 0
            out[based] = self.chain[base[based]] + v[based]
        return out

    def step(self, t, state):
        base, v = state
        t = np.broadcast_to(np.asarray(t, dtype=complex), v.shape)
        nbase = base.copy()
        nv = np.empty_like(v)
        last = len(self.chain) - 1
        with np.errstate(all="ignore"):
            for b in np.unique(base):
                m = base == b
                if b < 0:
                    z = self._eval(self.plain, t[m], v[m])
                    nb = np.full(z.shape, -1, dtype=np.int8)
                    if last >= 0:
                        d = z - self.chain[0]
                        near = np.abs(d) < self.rebase_radius
                        nb[near] = 0
                        z = np.where(near, d, z)
                else:
                    z = self._eval(self.tables[b], t[m], v[m])
                    nb = np.full(z.shape, min(b + 1, last), dtype=np.int8)
                    if b + 1 >= last:
                        far = ~(np.abs(z) < self.release_radius)
                        nb[far] = -1
                        z = np.where(far, self.chain[last] + z, z)
                        e = z - self.chain[0]
                        near = far & (np.abs(e) < self.rebase_radius)
                        nb[near] = 0
                        z = np.where(near, e, z)
                nbase[m] = nb
                nv[m] = z
        return nbase, nv


# ---------------------------------------------------------------------------
# Config files


def load_map_config(path_or_text, section="map"):
    """Read a map definition from an INI-style ``key = value`` file.

    Recognised keys in ``[map]``: ``g`` (bivariate expression in t, z) or
    ``p`` (in z) with optional ``q`` (in t); ``p_coeffs``/``q_coeffs`` as comma
    separated scalars; ``mu``; optional ``degree`` cross-check.
    """
    cp = configparser.ConfigParser(interpolation=None)
    if "\n" in str(path_or_text) or "=" in str(path_or_text):
        cp.read_string(str(path_or_text))
    else:
        with open(path_or_text) as fh:
            cp.read_file(fh)
    if section not in cp:
        raise UsageError(f"config has no [{section}] section")
    sec = cp[section]
    return map_from_options(dict(sec)), cp


def map_from_options(opts):
    if "mu" not in opts:
        raise UsageError("map definition needs mu")
    mu = parse_scalar(opts["mu"])
    if "g" in opts:
        F = SkewProduct.parse(opts["g"], mu)
    else:
        if "p" in opts:
            p = Polynomial.parse(opts["p"])
        elif "p_coeffs" in opts:
            p = Polynomial([parse_scalar(c) for c in opts["p_coeffs"].split(",")])
        else:
            raise UsageError("map definition needs g, p or p_coeffs")
        if "q" in opts:
            q = Polynomial.parse(opts["q"], var="t")
        elif "q_coeffs" in opts:
            q = Polynomial([parse_scalar(c) for c in opts["q_coeffs"].split(",")])
        else:
            q = Polynomial([0])
        F = SkewProduct.split(p, q, mu)
    if "degree" in opts and int(opts["degree"]) != F.p.degree:
        raise UsageError(f"degree {opts['degree']} does not match p (degree {F.p.degree})")
    return F


def map_to_config(F):
    lines = ["[map]", f"mu = {format_complex(F.mu)}"]
    if F.is_split:
        lines.append("p_coeffs = " + ", ".join(format_complex(c) for c in F.p.coeffs))
        lines.append("q_coeffs = " + ", ".join(format_complex(c) for c in F.q.coeffs))
    else:
        lines.append("g = " + " + ".join(f"({format_complex(c)})*t^{i}*z^{j}" for (i, j), c in F.g_coeffs.items()))
    return "\n".join(lines) + "\n"
