"""Arithmetic substrate: big complex floats, exact rationals, jets, exact solves.

Two arithmetic paths are supported.  The exact path uses :class:`fractions.Fraction`
for real rationals and :class:`GaussianRational` for complex ones.  The float path
uses :class:`BigComplex`, an immutable MPFR-backed complex number that carries its
own precision, so no computation ever depends on a global precision setting.
"""

from __future__ import annotations

import functools
import math
import re
from fractions import Fraction
from numbers import Rational

import gmpy2
from gmpy2 import mpc, mpfr, mpq, mpz

from .errors import PrecisionExhausted, SingularSystem, UsageError

DEFAULT_PRECISION = 128
MIN_PRECISION = 64
DEFAULT_GUARD_BITS = 64


@functools.lru_cache(maxsize=None)
def _context(bits):
    return gmpy2.context(precision=bits)


def precision_for_depth(n, lambda_abs, guard_bits=DEFAULT_GUARD_BITS):
    """Working precision for a depth-``n`` computation with multiplier ``lambda_abs``.

    One factor of |lambda| of error growth per step is paid twice: once reaching
    depth n and once more in derivative products along the same orbit.
    """
    if n < 1:
        raise UsageError(f"depth must be >= 1, got {n}")
    lam = float(lambda_abs)
    if not lam > 1:
        raise UsageError(f"|lambda| must exceed 1, got {lambda_abs}")
    bits = 2 * n * math.log2(lam)
    # powers of two give integral bit counts; don't let 383.99999 round to 384 + 1
    nearest = round(bits)
    if abs(bits - nearest) < 1e-9:
        bits = nearest
    return int(math.ceil(bits)) + int(guard_bits)


# ---------------------------------------------------------------------------
# Exact complex rationals


class GaussianRational:
    """Exact complex number ``re + im*i`` with Fraction parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        object.__setattr__(self, "re", Fraction(re))
        object.__setattr__(self, "im", Fraction(im))

    def __setattr__(self, name, value):
        raise AttributeError("GaussianRational is immutable")

    @staticmethod
    def _lift(other):
        if isinstance(other, GaussianRational):
            return other
        if isinstance(other, (int, Fraction)):
            return GaussianRational(other, 0)
        return None

    def __add__(self, other):
        o = self._lift(other)
        if o is None:
            return NotImplemented
        return GaussianRational(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        if o is None:
            return NotImplemented
        return GaussianRational(self.re - o.re, self.im - o.im)

    def __rsub__(self, other):
        o = self._lift(other)
        if o is None:
            return NotImplemented
        return o - self

    def __mul__(self, other):
        o = self._lift(other)
        if o is None:
            return NotImplemented
        return GaussianRational(self.re * o.re - self.im * o.im,
                                self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        if o is None:
            return NotImplemented
        den = o.re * o.re + o.im * o.im
        if den == 0:
            raise ZeroDivisionError("GaussianRational division by zero")
        num = self * o.conjugate()
        return GaussianRational(num.re / den, num.im / den)

    def __rtruediv__(self, other):
        o = self._lift(other)
        if o is None:
            return NotImplemented
        return o / self

    def __neg__(self):
        return GaussianRational(-self.re, -self.im)

    def __pos__(self):
        return self

    def __pow__(self, k):
        if not isinstance(k, int) or k < 0:
            return NotImplemented
        result = GaussianRational(1)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def conjugate(self):
        return GaussianRational(self.re, -self.im)

    def abs2(self):
        return self.re * self.re + self.im * self.im

    def __abs__(self):
        return math.sqrt(self.abs2())

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __eq__(self, other):
        o = self._lift(other)
        if o is None:
            return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        if self.im == 0:
            return hash(self.re)
        return hash((self.re, self.im))

    def __repr__(self):
        return f"GaussianRational({self.re}, {self.im})"

    def __str__(self):
        return format_exact(self)


# exact rationals are plain Fractions (always reduced, denominator > 0)
ExactRational = Fraction


def is_exact(x):
    return isinstance(x, (int, Fraction, GaussianRational))


def exact_parts(x):
    """Return ``(re, im)`` as Fractions for an exact scalar."""
    if isinstance(x, GaussianRational):
        return x.re, x.im
    if isinstance(x, (int, Fraction)):
        return Fraction(x), Fraction(0)
    raise TypeError(f"not an exact scalar: {x!r}")


def simplify_exact(x):
    """Collapse a GaussianRational with zero imaginary part to a Fraction."""
    if isinstance(x, GaussianRational) and x.im == 0:
        return x.re
    if isinstance(x, int) and not isinstance(x, bool):
        return Fraction(x)
    return x


def format_exact(x):
    re_, im_ = exact_parts(x)
    if im_ == 0:
        return str(re_)
    sign = "+" if im_ >= 0 else "-"
    return f"{re_}{sign}{abs(im_)}i"


_UNSIGNED = r"(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?(?:/\d+)?"
_COMPLEX_RE = re.compile(
    rf"^\s*(?P<re>[+-]?{_UNSIGNED})?\s*(?P<im>[+-]?\s*(?:{_UNSIGNED})?)\s*[ij]\s*$")


def _parse_real(s):
    s = s.replace(" ", "")
    if "/" in s:
        num, den = s.split("/")
        return Fraction(num) / Fraction(den)
    return Fraction(s)


def parse_scalar(text):
    """Parse ``"p/q"``, a decimal, or a complex ``"a+bi"`` exactly.

    Decimals are read as their exact decimal value.
    """
    if isinstance(text, (int, Fraction, GaussianRational)):
        return simplify_exact(text)
    s = str(text).strip()
    try:
        return _parse_real(s)
    except (ValueError, ZeroDivisionError):
        pass
    m = _COMPLEX_RE.match(s)
    if m is None:
        raise UsageError(f"cannot parse scalar {text!r}")
    re_txt = m.group("re")
    im_txt = m.group("im").replace(" ", "")
    if im_txt == "" and re_txt:
        re_txt, im_txt = None, re_txt
    re_part = _parse_real(re_txt) if re_txt else Fraction(0)
    if im_txt in ("", "+", "-"):
        im_txt += "1"
    return simplify_exact(GaussianRational(re_part, _parse_real(im_txt)))


# ---------------------------------------------------------------------------
# Big complex floats


def _to_mpc(value, bits):
    if isinstance(value, BigComplex):
        return value._v
    if isinstance(value, GaussianRational):
        return mpc(mpq(value.re.numerator, value.re.denominator),
                   mpq(value.im.numerator, value.im.denominator), precision=bits)
    if isinstance(value, Rational):
        value = Fraction(value)
        return mpc(mpq(value.numerator, value.denominator), precision=bits)
    if isinstance(value, (float, complex)):
        return mpc(complex(value), precision=bits)
    if isinstance(value, type(mpc(0))):
        return mpc(value, precision=bits)
    if isinstance(value, type(mpfr(0))):
        return mpc(value, precision=bits)
    if isinstance(value, str):
        return _to_mpc(parse_scalar(value), bits)
    raise TypeError(f"cannot convert {type(value).__name__} to BigComplex")


class BigComplex:
    """Immutable complex number with explicit binary precision.

    Arithmetic between two BigComplex values rounds to the smaller of the two
    precisions.  Exact operands (int, Fraction, GaussianRational) and Python
    floats are converted at the BigComplex operand's precision.
    """

    __slots__ = ("_v", "precision_bits")

    def __init__(self, value=0, precision_bits=DEFAULT_PRECISION):
        if precision_bits < MIN_PRECISION:
            raise UsageError(f"precision_bits must be >= {MIN_PRECISION}")
        if isinstance(value, BigComplex) and value.precision_bits == precision_bits:
            v = value._v
        elif isinstance(value, BigComplex):
            v = mpc(value._v, precision=precision_bits)
        else:
            v = _to_mpc(value, precision_bits)
        object.__setattr__(self, "_v", v)
        object.__setattr__(self, "precision_bits", int(precision_bits))

    @classmethod
    def _wrap(cls, v, bits):
        obj = object.__new__(cls)
        object.__setattr__(obj, "_v", v)
        object.__setattr__(obj, "precision_bits", bits)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("BigComplex is immutable")

    def __reduce__(self):
        return (BigComplex.from_hex, (self.to_hex(), self.precision_bits))

    # -- coercion
    def _coerce(self, other):
        if isinstance(other, BigComplex):
            bits = min(self.precision_bits, other.precision_bits)
            return other._v, bits
        try:
            return _to_mpc(other, self.precision_bits), self.precision_bits
        except TypeError:
            return None, None

    def __add__(self, other):
        o, bits = self._coerce(other)
        if o is None:
            return NotImplemented
        return BigComplex._wrap(_context(bits).add(self._v, o), bits)

    __radd__ = __add__

    def __sub__(self, other):
        o, bits = self._coerce(other)
        if o is None:
            return NotImplemented
        return BigComplex._wrap(_context(bits).sub(self._v, o), bits)

    def __rsub__(self, other):
        o, bits = self._coerce(other)
        if o is None:
            return NotImplemented
        return BigComplex._wrap(_context(bits).sub(o, self._v), bits)

    def __mul__(self, other):
        o, bits = self._coerce(other)
        if o is None:
            return NotImplemented
        return BigComplex._wrap(_context(bits).mul(self._v, o), bits)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o, bits = self._coerce(other)
        if o is None:
            return NotImplemented
        if o == 0:
            raise ZeroDivisionError("BigComplex division by zero")
        return BigComplex._wrap(_context(bits).div(self._v, o), bits)

    def __rtruediv__(self, other):
        o, bits = self._coerce(other)
        if o is None:
            return NotImplemented
        if self._v == 0:
            raise ZeroDivisionError("BigComplex division by zero")
        return BigComplex._wrap(_context(bits).div(o, self._v), bits)

    def __neg__(self):
        return BigComplex._wrap(-self._v, self.precision_bits)

    def __pos__(self):
        return self

    def __pow__(self, k):
        if isinstance(k, int):
            if k < 0:
                return 1 / (self ** (-k))
            ctx = _context(self.precision_bits)
            result = mpc(1, precision=self.precision_bits)
            base = self._v
            while k:
                if k & 1:
                    result = ctx.mul(result, base)
                base = ctx.mul(base, base)
                k >>= 1
            return BigComplex._wrap(result, self.precision_bits)
        o, bits = self._coerce(k)
        if o is None:
            return NotImplemented
        return BigComplex._wrap(_context(bits).pow(self._v, o), bits)

    def __abs__(self):
        """Modulus as an mpfr at this precision (may be far below float range)."""
        return _context(self.precision_bits).abs(self._v)

    def __eq__(self, other):
        o, _ = self._coerce(other)
        if o is None:
            return NotImplemented
        return self._v == o

    def __hash__(self):
        return hash((self.precision_bits, self.to_hex()))

    def __complex__(self):
        return complex(self._v)

    def __bool__(self):
        return not gmpy2.is_zero(self._v)

    @property
    def real(self):
        return self._v.real

    @property
    def imag(self):
        return self._v.imag

    re = real
    im = imag

    def conjugate(self):
        return BigComplex._wrap(self._v.conjugate(), self.precision_bits)

    def with_precision(self, bits):
        return BigComplex(self, bits)

    def sqrt(self):
        return BigComplex._wrap(_context(self.precision_bits).sqrt(self._v), self.precision_bits)

    def root(self, d, branch=0):
        """The ``branch``-th of the ``d`` complex d-th roots (principal root times e^(2 pi i branch/d))."""
        ctx = _context(self.precision_bits)
        if gmpy2.is_zero(self._v):
            return BigComplex._wrap(mpc(0, precision=self.precision_bits), self.precision_bits)
        r = ctx.exp(ctx.div(ctx.log(self._v), d))
        if branch % d:
            r = ctx.mul(r, ctx.root_of_unity(d, branch % d))
        return BigComplex._wrap(r, self.precision_bits)

    @classmethod
    def exp_i(cls, angle_num, angle_den, precision_bits):
        """exp(2 pi i * angle_num / angle_den), computed at full precision."""
        ctx = _context(precision_bits)
        v = ctx.root_of_unity(angle_den, angle_num % angle_den) if angle_den > 0 else mpc(1)
        return cls._wrap(mpc(v, precision=precision_bits), precision_bits)

    # -- serialization
    def to_hex(self):
        """Exact encoding ``"<mant>p<exp>,<mant>p<exp>"`` (hex mantissa, decimal exponent)."""
        parts = []
        for x in (self._v.real, self._v.imag):
            if not gmpy2.is_finite(x):
                raise PrecisionExhausted(f"non-finite value {x} cannot be encoded")
            m, e = x.as_mantissa_exp()
            parts.append(f"{format(int(m), 'x')}p{int(e)}")
        return ",".join(parts)

    @classmethod
    def from_hex(cls, text, precision_bits):
        vals = []
        for part in text.split(","):
            m, e = part.split("p")
            vals.append(_context(precision_bits).mul_2exp(mpfr(mpz(int(m, 16)), precision_bits), int(e)))
        return cls._wrap(mpc(vals[0], vals[1], precision=precision_bits), precision_bits)

    def format(self, digits=None):
        return format_complex(self, digits)

    def __repr__(self):
        return f"BigComplex({self.format(20)!r}, precision_bits={self.precision_bits})"

    def __str__(self):
        return self.format()


def bits_to_digits(bits):
    return max(1, int(bits * math.log10(2)))


def format_real(x, digits=17):
    """Deterministic scientific notation ``d.ddd...e+XX`` for an mpfr or float."""
    if not isinstance(x, type(mpfr(0))):
        x = mpfr(x, 64 if isinstance(x, float) else 256)
    if gmpy2.is_zero(x):
        return "0"
    if not gmpy2.is_finite(x):
        return str(x)
    mant, exp, _ = x.digits(10, digits)
    sign = ""
    if mant.startswith("-"):
        sign, mant = "-", mant[1:]
    head, tail = mant[0], mant[1:].rstrip("0")
    e = int(exp) - 1
    body = head + ("." + tail if tail else "")
    return f"{sign}{body}e{e:+03d}"


def format_decimal(x, digits=17):
    """Positional notation (``0.000123...``) for moderate magnitudes, scientific otherwise."""
    if not isinstance(x, type(mpfr(0))):
        x = mpfr(x, 64 if isinstance(x, float) else 256)
    if gmpy2.is_zero(x) or not gmpy2.is_finite(x) or not 1e-6 <= abs(x) < 1e15:
        return format_real(x, digits)
    mant, exp, _ = x.digits(10, digits)
    sign = ""
    if mant.startswith("-"):
        sign, mant = "-", mant[1:]
    exp = int(exp)
    if exp <= 0:
        body = "0." + "0" * (-exp) + mant
    else:
        body = mant[:exp] + "." + mant[exp:]
    body = body.rstrip("0").rstrip(".")
    return sign + body


def format_complex(z, digits=None):
    if isinstance(z, BigComplex):
        if digits is None:
            digits = bits_to_digits(z.precision_bits)
        re_, im_ = z.real, z.imag
    elif is_exact(z):
        return format_exact(z)
    else:
        z = complex(z)
        digits = digits or 17
        re_, im_ = z.real, z.imag
    if im_ == 0:
        return format_real(re_, digits)
    im_txt = format_real(im_, digits)
    sign = "" if im_txt.startswith("-") else "+"
    return f"{format_real(re_, digits)}{sign}{im_txt}j"


def to_big(x, bits):
    """Lift any supported scalar to a BigComplex at ``bits``."""
    if isinstance(x, BigComplex):
        return x if x.precision_bits == bits else x.with_precision(bits)
    return BigComplex(x, bits)


# ---------------------------------------------------------------------------
# Jets


class Jet:
    """Truncated power series in one variable ``w``.

    ``coeffs[k]`` is the coefficient of ``w**k``; ``order = len(coeffs) - 1``.
    Scalars may be any ring elements supported by the rest of the package.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        coeffs = tuple(coeffs)
        if not coeffs:
            raise UsageError("a jet needs at least one coefficient")
        object.__setattr__(self, "coeffs", coeffs)

    def __setattr__(self, name, value):
        raise AttributeError("Jet is immutable")

    @classmethod
    def constant(cls, value, order):
        zero = value * 0
        return cls((value,) + (zero,) * order)

    @classmethod
    def variable(cls, order, value=0, scale=1):
        """The jet of ``value + scale*w``."""
        zero = value * 0
        if order == 0:
            return cls((value,))
        return cls((value, scale * 1) + (zero,) * (order - 1))

    @property
    def order(self):
        return len(self.coeffs) - 1

    @property
    def value(self):
        return self.coeffs[0]

    def __getitem__(self, k):
        return self.coeffs[k]

    def __len__(self):
        return len(self.coeffs)

    def __iter__(self):
        return iter(self.coeffs)

    def _check(self, other):
        if other.order != self.order:
            raise UsageError(f"jet order mismatch: {self.order} vs {other.order}")

    def __add__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return Jet(a + b for a, b in zip(self.coeffs, other.coeffs))
        return Jet((self.coeffs[0] + other,) + self.coeffs[1:])

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return Jet(a - b for a, b in zip(self.coeffs, other.coeffs))
        return Jet((self.coeffs[0] - other,) + self.coeffs[1:])

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Jet(-a for a in self.coeffs)

    def __mul__(self, other):
        if isinstance(other, Jet):
            return jet_mul(self, other)
        return Jet(a * other for a in self.coeffs)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return NotImplemented
        return Jet(a / other for a in self.coeffs)

    def __pow__(self, k):
        if not isinstance(k, int) or k < 0:
            return NotImplemented
        result = Jet.constant(self.coeffs[0] * 0 + 1, self.order)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other):
        if not isinstance(other, Jet):
            return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self):
        return hash(self.coeffs)

    def __repr__(self):
        return f"Jet({list(self.coeffs)!r})"


def _is_zero(x):
    if isinstance(x, BigComplex):
        return not x
    return x == 0


def jet_mul(a, b):
    """Cauchy product of two jets of equal order, truncated at that order."""
    if not (isinstance(a, Jet) and isinstance(b, Jet)):
        raise UsageError("jet_mul expects two jets")
    a._check(b)
    n = a.order
    out = [a.coeffs[0] * 0 for _ in range(n + 1)]
    for i, x in enumerate(a.coeffs):
        if _is_zero(x):
            continue
        for j in range(n + 1 - i):
            y = b.coeffs[j]
            if not _is_zero(y):
                out[i + j] = out[i + j] + x * y
    return Jet(out)


def jet_compose_poly(p, a):
    """``p(a)`` truncated at ``a.order``, by Horner's rule on jets.

    ``p`` is anything with a ``coeffs`` sequence (constant term first) or a plain
    coefficient sequence.
    """
    coeffs = list(getattr(p, "coeffs", p))
    if not coeffs:
        return Jet.constant(a.value * 0, a.order)
    acc = Jet.constant(coeffs[-1] + a.value * 0, a.order)
    for c in reversed(coeffs[:-1]):
        acc = acc * a + c
    return acc


# ---------------------------------------------------------------------------
# Exact linear solves


def _lcm(a, b):
    return a * b // math.gcd(a, b)


def exact_solve_linear(A, y):
    """Solve ``A x = y`` exactly.

    Rational systems are cleared of denominators row by row and reduced with
    Bareiss fraction-free elimination on integers; Gaussian-rational systems use
    ordinary elimination over the exact field.
    """
    n = len(A)
    if n == 0 or any(len(row) != n for row in A) or len(y) != n:
        raise UsageError("exact_solve_linear needs a square system")
    if n > 8:
        raise UsageError("exact_solve_linear supports systems up to 8x8")
    entries = [x for row in A for x in row] + list(y)
    if all(isinstance(x, (int, Fraction)) for x in entries):
        return _bareiss_solve(A, y)
    return _field_solve(A, y)


def _bareiss_solve(A, y):
    n = len(A)
    M = []
    for row, rhs in zip(A, y):
        vals = [Fraction(v) for v in row] + [Fraction(rhs)]
        den = 1
        for v in vals:
            den = _lcm(den, v.denominator)
        M.append([int(v * den) for v in vals])
    prev = 1
    for k in range(n):
        piv = next((r for r in range(k, n) if M[r][k] != 0), None)
        if piv is None:
            raise SingularSystem("matrix is singular")
        if piv != k:
            M[k], M[piv] = M[piv], M[k]
        for i in range(k + 1, n):
            for j in range(k + 1, n + 1):
                M[i][j] = (M[i][j] * M[k][k] - M[i][k] * M[k][j]) // prev
            M[i][k] = 0
        prev = M[k][k]
    x = [Fraction(0)] * n
    for i in range(n - 1, -1, -1):
        s = Fraction(M[i][n])
        for j in range(i + 1, n):
            s -= M[i][j] * x[j]
        x[i] = s / M[i][i]
    return x


def _field_solve(A, y):
    n = len(A)
    M = [[simplify_exact(v) for v in row] + [simplify_exact(rhs)] for row, rhs in zip(A, y)]
    for k in range(n):
        piv = next((r for r in range(k, n) if M[r][k] != 0), None)
        if piv is None:
            raise SingularSystem("matrix is singular")
        M[k], M[piv] = M[piv], M[k]
        for i in range(k + 1, n):
            f = M[i][k] / M[k][k]
            if f != 0:
                M[i] = [a - f * b for a, b in zip(M[i], M[k])]
    x = [Fraction(0)] * n
    for i in range(n - 1, -1, -1):
        s = M[i][n]
        for j in range(i + 1, n):
            s = s - M[i][j] * x[j]
        x[i] = simplify_exact(s / M[i][i])
    return x
