"""Exact sparse multivariate polynomials and rational functions over Q.

These are the coefficients of everything downstream: Groebner bases of
differential operators are numerically unstable in floating point, so all
symbolic computation runs over arbitrary-precision rationals.  The heavy
lifting (sparse arithmetic, multivariate gcd) is delegated to sympy's
polynomial rings; the classes here fix the canonical forms and the string
format used for serialization.
"""

from __future__ import annotations

import math
from fractions import Fraction

from sympy.polys.domains import QQ
from sympy.polys.fields import xfield
from sympy.polys.orderings import grlex

#: default guard for "denominator too close to zero" during evaluation
DEFAULT_GUARD = 1e-8


class VarTableMismatch(ValueError):
    """Operands built over different variable tables."""


class DenominatorNearZero(ArithmeticError):
    """Evaluation hit a point too close to a denominator's zero set."""

    def __init__(self, denominator, point, value):
        self.denominator = denominator
        self.point = tuple(point)
        self.value = value
        super().__init__(
            "denominator %s evaluates to %.3e at %s" % (denominator, value, self.point)
        )


class VarTable:
    """Ordered variable names; owns the underlying sympy ring and field.

    The order is significant: it fixes the graded-lex term order used for
    canonical polynomial strings and the priority of the derivative
    variables in the operator ring.
    """

    __slots__ = ("names", "index", "field", "ring")

    def __init__(self, names):
        names = tuple(names)
        if not names:
            raise ValueError("variable table must not be empty")
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique")
        for nm in names:
            if not nm or not nm[0].isalpha():
                raise ValueError("bad variable name: %r" % (nm,))
        self.names = names
        self.index = {nm: i for i, nm in enumerate(names)}
        self.field, _ = xfield(",".join(names), QQ, grlex)
        self.ring = self.field.ring

    def __len__(self):
        return len(self.names)

    def __eq__(self, other):
        return isinstance(other, VarTable) and self.names == other.names

    def __hash__(self):
        return hash(self.names)

    def __repr__(self):
        return "VarTable(%s)" % (" ".join(self.names))

    # -- constructors ------------------------------------------------------

    def poly(self, coeffs) -> "Polynomial":
        """Polynomial from {exponent-tuple: rational} (zeros dropped)."""
        d = {}
        for exps, c in coeffs.items():
            q = _to_qq(c)
            if q:
                d[tuple(exps)] = q
        return Polynomial(self, self.ring.from_dict(d))

    def poly_const(self, c) -> "Polynomial":
        return Polynomial(self, self.ring.from_dict({(0,) * len(self.names): _to_qq(c)}))

    def poly_var(self, name, power=1) -> "Polynomial":
        i = self._var_index(name)
        exps = [0] * len(self.names)
        exps[i] = power
        return Polynomial(self, self.ring.from_dict({tuple(exps): QQ(1)}))

    def rat(self, num, den=None) -> "RationalFunction":
        num = num if isinstance(num, Polynomial) else self.poly_const(num)
        if den is None:
            return RationalFunction(self, self.field.new(num._p, self.ring.one))
        den = den if isinstance(den, Polynomial) else self.poly_const(den)
        return RationalFunction(self, self.field.new(num._p, den._p))

    def rat_const(self, c) -> "RationalFunction":
        return self.rat(self.poly_const(c))

    def rat_var(self, name, power=1) -> "RationalFunction":
        return self.rat(self.poly_var(name, power))

    def zero(self) -> "RationalFunction":
        return self.rat_const(0)

    def one(self) -> "RationalFunction":
        return self.rat_const(1)

    def _var_index(self, name):
        try:
            return self.index[name]
        except KeyError:
            raise ValueError("unknown variable %r (have %s)" % (name, " ".join(self.names)))


def _to_qq(c):
    if isinstance(c, Fraction):
        return QQ(c.numerator, c.denominator)
    return QQ(c)


def _check_same(a, b):
    if a.vars != b.vars:
        raise VarTableMismatch("operands use different variable tables")


def _eval_terms(terms, point):
    total = 0.0
    for exps, coeff in terms:
        v = float(coeff)
        for x, e in zip(point, exps):
            if e:
                v *= x ** e
        total += v
    return total


class Polynomial:
    """Sparse multivariate polynomial with exact rational coefficients."""

    __slots__ = ("vars", "_p")

    def __init__(self, vars: VarTable, p):
        self.vars = vars
        self._p = p

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        other = self._coerce(other)
        return Polynomial(self.vars, self._p + other._p)

    def __sub__(self, other):
        other = self._coerce(other)
        return Polynomial(self.vars, self._p - other._p)

    def __mul__(self, other):
        other = self._coerce(other)
        return Polynomial(self.vars, self._p * other._p)

    __radd__ = __add__
    __rmul__ = __mul__

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __neg__(self):
        return Polynomial(self.vars, -self._p)

    def __pow__(self, k):
        if not isinstance(k, int) or k < 0:
            raise ValueError("polynomial powers must be non-negative integers")
        return Polynomial(self.vars, self._p ** k)

    def _coerce(self, other):
        if isinstance(other, Polynomial):
            _check_same(self, other)
            return other
        if isinstance(other, (int, Fraction)):
            return self.vars.poly_const(other)
        return NotImplemented

    # -- queries -----------------------------------------------------------

    @property
    def is_zero(self):
        return not self._p

    @property
    def is_one(self):
        return self._p == self.vars.ring.one

    def is_constant(self):
        return self._p.is_ground

    def total_degree(self):
        if self.is_zero:
            return -1
        return max(sum(m) for m in self._p.monoms())

    def terms(self):
        """Terms sorted descending in graded-lex order, as (exps, Fraction)."""
        return [(m, Fraction(int(c.numerator), int(c.denominator))) for m, c in self._p.terms()]

    def leading_coeff(self) -> Fraction:
        c = self._p.LC
        return Fraction(int(c.numerator), int(c.denominator))

    def degree_in(self, name):
        i = self.vars._var_index(name)
        if self.is_zero:
            return -1
        return max(m[i] for m in self._p.monoms())

    # -- operations --------------------------------------------------------

    def diff(self, name) -> "Polynomial":
        i = self.vars._var_index(name)
        return Polynomial(self.vars, self._p.diff(self.vars.ring.gens[i]))

    def eval(self, point) -> float:
        if len(point) != len(self.vars):
            raise ValueError("point length %d != %d variables" % (len(point), len(self.vars)))
        return _eval_terms(self._p.terms(), point)

    def gcd(self, other) -> "Polynomial":
        other = self._coerce(other)
        return Polynomial(self.vars, self._p.gcd(other._p))

    def quo(self, other) -> "Polynomial":
        """Exact quotient; other must divide self."""
        other = self._coerce(other)
        q, r = self._p.div(other._p)
        if r:
            raise ValueError("inexact polynomial division")
        return Polynomial(self.vars, q)

    def content_primitive(self):
        """Split into (content, primitive part): self = content * primitive.

        The content is the rational making the primitive part have integer
        coefficients with gcd 1 and positive leading coefficient.
        """
        if self.is_zero:
            return Fraction(0), self
        nums = [int(c.numerator) for _, c in self._p.terms()]
        dens = [int(c.denominator) for _, c in self._p.terms()]
        content = Fraction(math.gcd(*nums), math.lcm(*dens))
        if self._p.LC < 0:
            content = -content
        prim = Polynomial(self.vars, self._p * _to_qq(1 / content))
        return content, prim

    # -- identity ----------------------------------------------------------

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = self.vars.poly_const(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.vars == other.vars and self._p == other._p

    def __hash__(self):
        return hash((self.vars, frozenset(self._p.items())))

    def __str__(self):
        return format_polynomial(self)

    def __repr__(self):
        return "Polynomial(%s)" % self


class RationalFunction:
    """Quotient of polynomials in reduced canonical form.

    Canonical form: numerator and denominator share no factor, both have
    integer coefficients with overall gcd 1, and the denominator's leading
    coefficient (graded-lex) is positive.
    """

    __slots__ = ("vars", "_f")

    def __init__(self, vars: VarTable, f):
        self.vars = vars
        self._f = f

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return RationalFunction(self.vars, self._f + other._f)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return RationalFunction(self.vars, self._f - other._f)

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return RationalFunction(self.vars, self._f * other._f)

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        if other.is_zero:
            raise ZeroDivisionError("division by zero rational function")
        return RationalFunction(self.vars, self._f / other._f)

    __radd__ = __add__
    __rmul__ = __mul__

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __neg__(self):
        return RationalFunction(self.vars, -self._f)

    def __pow__(self, k):
        if not isinstance(k, int):
            raise ValueError("rational function powers must be integers")
        if k < 0 and self.is_zero:
            raise ZeroDivisionError("negative power of zero")
        return RationalFunction(self.vars, self._f ** k)

    def _coerce(self, other):
        if isinstance(other, RationalFunction):
            _check_same(self, other)
            return other
        if isinstance(other, Polynomial):
            _check_same(self, other)
            return self.vars.rat(other)
        if isinstance(other, (int, Fraction)):
            return self.vars.rat_const(other)
        return NotImplemented

    # -- queries -----------------------------------------------------------

    @property
    def is_zero(self):
        return not self._f.numer

    @property
    def is_one(self):
        return self._f == self.vars.field.one

    def is_constant(self):
        return self._f.numer.is_ground and self._f.denom.is_ground

    def as_fraction(self) -> Fraction:
        if not self.is_constant():
            raise ValueError("not a constant rational function")
        n, d = self._f.numer.LC, self._f.denom.LC
        return Fraction(int(n.numerator), int(n.denominator)) / Fraction(
            int(d.numerator), int(d.denominator)
        )

    @property
    def num(self) -> Polynomial:
        return self._pair()[0]

    @property
    def den(self) -> Polynomial:
        return self._pair()[1]

    def _pair(self):
        """Canonical (num, den): joint integer coefficients, jointly primitive,
        positive graded-lex leading coefficient on the denominator."""
        numer, denom = self._f.numer, self._f.denom
        if not numer:
            return self.vars.poly_const(0), self.vars.poly_const(1)
        coeffs = [c for _, c in numer.terms()] + [c for _, c in denom.terms()]
        scale = Fraction(
            math.lcm(*[int(c.denominator) for c in coeffs]),
            math.gcd(*[int(c.numerator) for c in coeffs]),
        )
        if denom.LC < 0:
            scale = -scale
        q = _to_qq(scale)
        return Polynomial(self.vars, numer * q), Polynomial(self.vars, denom * q)

    def is_negative_lead(self):
        """True when the canonical numerator's leading coefficient is negative."""
        if self.is_zero:
            return False
        return self.num._p.LC < 0

    # -- operations --------------------------------------------------------

    def diff(self, name) -> "RationalFunction":
        i = self.vars._var_index(name)
        return RationalFunction(self.vars, self._f.diff(self.vars.field.gens[i]))

    def eval(self, point, guard=DEFAULT_GUARD) -> float:
        """Evaluate at a float point; raise DenominatorNearZero near poles."""
        num, den = self._pair()
        dv = den.eval(point)
        if abs(dv) < guard:
            raise DenominatorNearZero(den, point, dv)
        return num.eval(point) / dv

    # -- identity ----------------------------------------------------------

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self._f == other._f

    def __hash__(self):
        return hash((self.vars, self._f))

    def __str__(self):
        return format_rational(self)

    def __repr__(self):
        return "RationalFunction(%s)" % self


# -- canonical string form --------------------------------------------------


def _format_coeff_mono(coeff: Fraction, exps, names):
    """One polynomial term without sign, e.g. '2*x11^2*y1'; coeff > 0."""
    parts = []
    for nm, e in zip(names, exps):
        if e == 1:
            parts.append(nm)
        elif e > 1:
            parts.append("%s^%d" % (nm, e))
    if not parts:
        return str(coeff)
    if coeff != 1:
        parts.insert(0, str(coeff))
    return "*".join(parts)


def format_polynomial(p: Polynomial) -> str:
    """Canonical string: terms sorted graded-lex descending."""
    terms = p.terms()
    if not terms:
        return "0"
    names = p.vars.names
    out = []
    for k, (exps, coeff) in enumerate(terms):
        neg = coeff < 0
        body = _format_coeff_mono(abs(coeff), exps, names)
        if k == 0:
            out.append("-" + body if neg else body)
        else:
            out.append(" - " + body if neg else " + " + body)
    return "".join(out)


def format_rational(r: RationalFunction) -> str:
    """Canonical string, e.g. '(2*x11^2*y1 - 1)/(3*x12)'."""
    num, den = r._pair()
    if den.is_one:
        return format_polynomial(num)
    return "(%s)/(%s)" % (format_polynomial(num), format_polynomial(den))
