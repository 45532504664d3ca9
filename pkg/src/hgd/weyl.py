"""Differential operators with rational-function coefficients.

Implements the ring R = C(x1..xd)<d1..dd> with the commutation rule
di*a(x) = a(x)*di + da/dxi: normally ordered arithmetic, the division
(normal form) algorithm, Buchberger's algorithm under graded reverse
lexicographic order on the derivative exponents, standard monomials /
holonomic rank, elimination to ordinary differential operators, and the
operator text grammar.

Note on the division example used in the tests: for f = d1*d2^3 against
g1 = d1*d2 + 1, g2 = 2*x2*d2^2 - d1 + 3*d2 + 2*x1 the second quotient is
-1/(2*x2); a printed source gives -1/(2*x1), which does not satisfy the
defining identity f = q1*g1 + q2*g2 + r and is taken to be a typo.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction

from sympy.polys.domains import QQ

from .ratpoly import (
    Polynomial,
    RationalFunction,
    VarTable,
    VarTableMismatch,
    format_rational,
)


class InfiniteRank(ValueError):
    """The ideal is not zero-dimensional: infinitely many standard monomials."""


class OperatorSyntaxError(ValueError):
    """Parse failure in the operator grammar, with position information."""

    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        where = ""
        if line is not None:
            where = " at line %d" % line
            if col is not None:
                where += ", column %d" % col
        super().__init__(message + where)


# -- term order --------------------------------------------------------------


def grevlex_key(beta):
    """Sort key realizing graded reverse lexicographic order (larger = greater)."""
    return (sum(beta), tuple(-b for b in reversed(beta)))


def monom_divides(a, b):
    """Does the monomial with exponents a divide the one with exponents b?"""
    return all(ai <= bi for ai, bi in zip(a, b))


def _monom_mul(a, b):
    return tuple(ai + bi for ai, bi in zip(a, b))


def _monom_sub(a, b):
    return tuple(ai - bi for ai, bi in zip(a, b))


def _monom_lcm(a, b):
    return tuple(max(ai, bi) for ai, bi in zip(a, b))


@dataclass
class LeadingTerm:
    """Leading coefficient and the commutative image of the leading monomial."""

    coeff: RationalFunction
    xi: tuple


class DiffOperator:
    """Normally ordered element of R: sparse map d-exponents -> coefficients."""

    __slots__ = ("vars", "terms")

    def __init__(self, vars: VarTable, terms=None):
        self.vars = vars
        self.terms = {}
        if terms:
            for beta, c in terms.items():
                if not isinstance(c, RationalFunction):
                    c = vars.rat_const(c)
                if not c.is_zero:
                    self.terms[tuple(beta)] = c

    # -- constructors --------------------------------------------------------

    @classmethod
    def zero(cls, vars):
        return cls(vars)

    @classmethod
    def from_coeff(cls, coeff: RationalFunction):
        return cls(coeff.vars, {(0,) * len(coeff.vars): coeff})

    @classmethod
    def d(cls, vars, name, power=1):
        """The derivative operator d<name>^power."""
        i = vars._var_index(name)
        beta = [0] * len(vars)
        beta[i] = power
        return cls(vars, {tuple(beta): vars.one()})

    # -- ring operations -----------------------------------------------------

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for beta, c in other.terms.items():
            s = out.get(beta)
            s = c if s is None else s + c
            if s.is_zero:
                out.pop(beta, None)
            else:
                out[beta] = s
        return DiffOperator(self.vars, out)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __radd__(self, other):
        return self + other

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return DiffOperator(self.vars, {b: -c for b, c in self.terms.items()})

    def __mul__(self, other):
        """Normally ordered product; applies the Leibniz commutation rule."""
        other = self._coerce(other)
        out = {}
        for alpha, ca in self.terms.items():
            for beta, c in _conjugate_terms(alpha, other.terms, self.vars):
                c = ca * c
                if c.is_zero:
                    continue
                s = out.get(beta)
                s = c if s is None else s + c
                if s.is_zero:
                    out.pop(beta, None)
                else:
                    out[beta] = s
        return DiffOperator(self.vars, out)

    def __rmul__(self, other):
        # scalars commute out front without Leibniz corrections
        if isinstance(other, (int, Fraction)):
            other = self.vars.rat_const(other)
        if isinstance(other, RationalFunction):
            return DiffOperator(
                self.vars, {b: other * c for b, c in self.terms.items()}
            )
        return NotImplemented

    def __pow__(self, k):
        if not isinstance(k, int) or k < 0:
            raise ValueError("operator powers must be non-negative integers")
        out = DiffOperator.from_coeff(self.vars.one())
        for _ in range(k):
            out = out * self
        return out

    def _coerce(self, other):
        if isinstance(other, DiffOperator):
            if self.vars != other.vars:
                raise VarTableMismatch("operands use different variable tables")
            return other
        if isinstance(other, RationalFunction):
            return DiffOperator.from_coeff(other)
        if isinstance(other, int):
            return DiffOperator.from_coeff(self.vars.rat_const(other))
        raise TypeError("cannot combine DiffOperator with %r" % type(other))

    # -- queries ---------------------------------------------------------------

    @property
    def is_zero(self):
        return not self.terms

    def order(self):
        """Total order (max derivative degree); -1 for the zero operator."""
        if not self.terms:
            return -1
        return max(sum(b) for b in self.terms)

    def leading_term(self) -> LeadingTerm:
        if not self.terms:
            raise ValueError("zero operator has no leading term")
        beta = max(self.terms, key=grevlex_key)
        return LeadingTerm(self.terms[beta], beta)

    def coeff(self, beta) -> RationalFunction:
        return self.terms.get(tuple(beta), self.vars.zero())

    def monic(self) -> "DiffOperator":
        lc = self.leading_term().coeff
        return DiffOperator(self.vars, {b: c / lc for b, c in self.terms.items()})

    def map_coeffs(self, fn) -> "DiffOperator":
        return DiffOperator(self.vars, {b: fn(c) for b, c in self.terms.items()})

    def __eq__(self, other):
        if not isinstance(other, DiffOperator):
            return NotImplemented
        return self.vars == other.vars and self.terms == other.terms

    def __hash__(self):
        return hash((self.vars, frozenset(self.terms.items())))

    def __str__(self):
        return format_operator(self)

    def __repr__(self):
        return "DiffOperator(%s)" % self


def _conjugate_terms(alpha, terms, vars):
    """Yield the normally ordered expansion of d^alpha composed with terms.

    Uses d_i^k a = sum_j C(k,j) (d^j a/dx_i^j) d_i^(k-j), one variable at a
    time; coefficients stay exact rational functions.
    """
    work = [(beta, c) for beta, c in terms.items()]
    for i, k in enumerate(alpha):
        if k == 0:
            continue
        name = vars.names[i]
        nxt = {}
        for beta, c in work:
            dc = c
            for j in range(k + 1):
                if j > 0:
                    dc = dc.diff(name)
                    if dc.is_zero:
                        break
                b = list(beta)
                b[i] += k - j
                b = tuple(b)
                piece = dc if j == 0 else math.comb(k, j) * dc
                s = nxt.get(b)
                s = piece if s is None else s + piece
                nxt[b] = s
        work = [(b, c) for b, c in nxt.items() if not c.is_zero]
    return work


def op_mul(a: DiffOperator, b: DiffOperator) -> DiffOperator:
    """Normally ordered product in R."""
    return a * b


def leading_term(f: DiffOperator) -> LeadingTerm:
    return f.leading_term()


# -- division ----------------------------------------------------------------


def w_normal_form(f, G, reducer="first"):
    """Reduce the leading term of f by G while possible.

    Returns (r, quotients) with f = sum q_i g_i + r and in(r) irreducible.
    `reducer` picks among applicable basis elements ("first" = lowest index,
    "last" = highest); for a Groebner basis the eventual normal form does
    not depend on the choice.
    """
    lts = [g.leading_term() for g in G]
    q = [DiffOperator.zero(f.vars) for _ in G]
    r = f
    while not r.is_zero:
        lt_r = r.leading_term()
        candidates = [i for i, lt in enumerate(lts) if monom_divides(lt.xi, lt_r.xi)]
        if not candidates:
            return r, q
        i = candidates[0] if reducer == "first" else candidates[-1]
        beta = _monom_sub(lt_r.xi, lts[i].xi)
        c = lt_r.coeff / lts[i].coeff
        mono = DiffOperator(f.vars, {beta: c})
        r = r - mono * G[i]
        q[i] = q[i] + mono
    return r, q


def normal_form(f, G, reducer="first"):
    """Full division of f by G = [g_1..g_m].

    Returns (r, [q_1..q_m]) with f = sum q_i g_i + r exactly, f >= q_i g_i,
    and no term of r divisible by any leading monomial of G.  Structured as
    repeated leading-term reduction followed by peeling the irreducible
    leading term into the remainder.
    """
    if any(g.is_zero for g in G):
        raise ValueError("division by a zero operator")
    r_acc = DiffOperator.zero(f.vars)
    q_acc = [DiffOperator.zero(f.vars) for _ in G]
    work = f
    while not work.is_zero:
        r1, q1 = w_normal_form(work, G, reducer=reducer)
        q_acc = [a + b for a, b in zip(q_acc, q1)]
        if r1.is_zero:
            break
        lt = r1.leading_term()
        r_acc = r_acc + DiffOperator(f.vars, {lt.xi: lt.coeff})
        work = r1 - DiffOperator(f.vars, {lt.xi: lt.coeff})
    return r_acc, q_acc


# -- fraction-free core for Buchberger ----------------------------------------
#
# During basis computation operators are kept with polynomial coefficients
# (denominators cleared, content removed); reduction scales by leading
# coefficients instead of dividing, which avoids a rational-function gcd per
# arithmetic step.  Remainders are only determined up to a nonzero polynomial
# factor, which is all Buchberger's algorithm needs.


def _ff_from_op(op: DiffOperator):
    ring = op.vars.ring
    den_lcm = ring.one
    pairs = []
    for beta, c in op.terms.items():
        n, d = c._f.numer, c._f.denom
        pairs.append((beta, n, d))
        den_lcm = den_lcm.lcm(d)
    terms = {}
    for beta, n, d in pairs:
        terms[beta] = n * den_lcm.quo(d)
    return _ff_primitive(terms, op.vars)


def _ff_primitive(terms, vars):
    """Divide out the common polynomial/rational content; fix the sign."""
    if not terms:
        return terms
    g = None
    for p in terms.values():
        g = p if g is None else g.gcd(p)
        if g.is_ground:
            break
    out = {}
    if not g.is_ground:
        for beta, p in terms.items():
            out[beta] = p.quo(g)
    else:
        out = dict(terms)
    # rational content -> integer coefficients, overall gcd 1
    nums, dens = [], []
    for p in out.values():
        for _, c in p.terms():
            nums.append(int(c.numerator))
            dens.append(int(c.denominator))
    scale = QQ(math.lcm(*dens), math.gcd(*nums))
    lead_beta = max(out, key=grevlex_key)
    if out[lead_beta].LC * scale < 0:
        scale = -scale
    return {beta: p * scale for beta, p in out.items()}


def _ff_lt(terms):
    beta = max(terms, key=grevlex_key)
    return beta, terms[beta]


def _ff_conjugate(e, terms, vars):
    """d^e composed with polynomial-coefficient terms (Leibniz, exact)."""
    ring = vars.ring
    work = terms
    for i, k in enumerate(e):
        if k == 0:
            continue
        gen = ring.gens[i]
        nxt = {}
        for beta, c in work.items():
            dc = c
            for j in range(k + 1):
                if j > 0:
                    dc = dc.diff(gen)
                    if not dc:
                        break
                b = list(beta)
                b[i] += k - j
                b = tuple(b)
                piece = dc if j == 0 else math.comb(k, j) * dc
                s = nxt.get(b)
                nxt[b] = piece if s is None else s + piece
        work = {b: c for b, c in nxt.items() if c}
    return work


def _ff_combine(cf, f_terms, cg, g_terms):
    """cf*f - cg*g on polynomial-coefficient term dicts."""
    out = {}
    for beta, c in f_terms.items():
        out[beta] = c * cf
    for beta, c in g_terms.items():
        s = out.get(beta)
        s = -(c * cg) if s is None else s - c * cg
        if s:
            out[beta] = s
        else:
            out.pop(beta, None)
    return out


def _ff_reduce(f_terms, basis, lts, vars, head_only=False):
    """Fraction-free normal form of f against the basis.

    Returns the remainder up to a nonzero polynomial left factor, content
    reduced.  Empty dict means f reduces to zero.  With head_only, stop as
    soon as the leading term is irreducible (tail terms untouched).
    """
    done = {}
    work = dict(f_terms)
    steps = 0
    while work:
        beta, c = _ff_lt(work)
        hit = None
        for i, (lb, lc) in enumerate(lts):
            if monom_divides(lb, beta):
                hit = i
                break
        if hit is None:
            if head_only:
                done.update(work)
                break
            done[beta] = c
            del work[beta]
            continue
        lb, lc = lts[hit]
        delta = c.gcd(lc)
        mf, mg = lc.quo(delta), c.quo(delta)
        shifted = _ff_conjugate(_monom_sub(beta, lb), basis[hit], vars)
        work = _ff_combine(mf, work, mg, shifted)
        if not mf.is_ground:
            for b in done:
                done[b] = done[b] * mf
        steps += 1
        if steps % 8 == 0 and work:
            merged = dict(work)
            for b, p in done.items():
                merged[b] = merged.get(b, vars.ring.zero) + p  # keys disjoint in fact
            merged = _ff_primitive(merged, vars)
            work = {b: merged[b] for b in work if b in merged}
            done = {b: merged[b] for b in done if b in merged}
    if not done:
        return {}
    return _ff_primitive(done, vars)


def _spair_ff(fi, fj, lti, ltj, vars):
    lcm = _monom_lcm(lti[0], ltj[0])
    delta = lti[1].gcd(ltj[1])
    ci, cj = lti[1].quo(delta), ltj[1].quo(delta)
    a = _ff_conjugate(_monom_sub(lcm, lti[0]), fi, vars)
    b = _ff_conjugate(_monom_sub(lcm, ltj[0]), fj, vars)
    return _ff_combine(cj, a, ci, b)


# -- Groebner bases ------------------------------------------------------------


class GroebnerBasis:
    """Reduced, monic Groebner basis with its standard monomials."""

    def __init__(self, vars, generators, standard_monomials):
        self.vars = vars
        self.generators = list(generators)
        self.standard_monomials = list(standard_monomials)

    @property
    def rank(self):
        return len(self.standard_monomials)

    def normal_form(self, f, reducer="first"):
        return normal_form(f, self.generators, reducer=reducer)

    def contains(self, f) -> bool:
        r, _ = self.normal_form(f)
        return r.is_zero

    def coords(self, f):
        """Coordinates of the normal form of f in the standard monomials."""
        r, _ = self.normal_form(f)
        index = {beta: k for k, beta in enumerate(self.standard_monomials)}
        out = [self.vars.zero() for _ in self.standard_monomials]
        for beta, c in r.terms.items():
            out[index[beta]] = c
        return out

    def __iter__(self):
        return iter(self.generators)

    def __len__(self):
        return len(self.generators)


def buchberger(gens, interreduce=True) -> GroebnerBasis:
    """Groebner basis of the left ideal generated by gens.

    Normal selection strategy (smallest lcm in grevlex first) with the chain
    criterion.  The coprime-leading-monomial shortcut is deliberately NOT
    used: with rational-function coefficients the S-pair of operators with
    coprime leading monomials need not reduce to zero (e.g. d1 - x2 and d2
    generate the unit ideal), so skipping those pairs would be unsound.

    With interreduce (default) the result is the canonical reduced monic
    basis.  With interreduce=False, S-pair remainders are only head-reduced
    and elements are kept denominator-free and content-normalized, which
    reproduces classically printed (non-reduced) bases verbatim.
    """
    gens = [g for g in gens if not g.is_zero]
    if not gens:
        raise ValueError("cannot compute a basis for the zero ideal")
    vars = gens[0].vars
    for g in gens:
        if g.vars != vars:
            raise VarTableMismatch("generators use different variable tables")

    if interreduce:
        ops = _buchberger_monic(gens, vars)
    else:
        ops = _buchberger_verbatim(gens, vars)
    return _finalize(ops, vars, interreduce)


def _pair_loop(xi_list, spair, reduce_head, on_new):
    """Shared normal-strategy pair loop with the chain criterion.

    xi_list holds the leading exponents and grows as elements are added;
    reduce_head returns None for a zero remainder, on_new stores the new
    element and returns its leading exponent.
    """
    pairs = {}

    def register(k):
        for i in range(k):
            pairs[(i, k)] = _monom_lcm(xi_list[i], xi_list[k])

    for k in range(len(xi_list)):
        register(k)
    while pairs:
        (i, j) = min(pairs, key=lambda ij: (grevlex_key(pairs[ij]), ij))
        lcm = pairs.pop((i, j))
        # chain criterion: some other element divides the lcm and both side
        # pairs were already handled
        skip = False
        for k in range(len(xi_list)):
            if k in (i, j):
                continue
            if monom_divides(xi_list[k], lcm):
                a = (min(i, k), max(i, k))
                b = (min(j, k), max(j, k))
                if a not in pairs and b not in pairs:
                    skip = True
                    break
        if skip:
            continue
        s = spair(i, j)
        red = reduce_head(s) if s is not None else None
        if red is not None:
            xi_list.append(on_new(red))
            register(len(xi_list) - 1)


# Coefficients in the monic main loop are kept as numerator / factored
# denominator pairs: the denominator is a dict of (polynomial factor ->
# exponent) and is never expanded.  Arithmetic then needs no multivariate
# gcd at all -- cancellation is trial division by the known factors -- which
# is what makes the larger systems tractable.


class _FRat:
    __slots__ = ("num", "den")  # num: PolyElement; den: {key: (factor, exp)}

    def __init__(self, num, den):
        self.num = num
        self.den = den


def _factor_key(p):
    return frozenset(p.items())


def _fr_canon_factor(p):
    """Make a factor integer-primitive with positive leading coefficient.

    Returns (content, factor): p = content * factor.
    """
    nums = [int(c.numerator) for _, c in p.terms()]
    dens = [int(c.denominator) for _, c in p.terms()]
    content = QQ(math.gcd(*nums), math.lcm(*dens))
    if p.LC < 0:
        content = -content
    return content, p * (1 / content)


def _fr_cancel(num, den):
    if not num:
        return num, {}
    out = {}
    for key, (f, e) in den.items():
        while e > 0:
            q, r = num.div(f)
            if r:
                break
            num = q
            e -= 1
        if e > 0:
            out[key] = (f, e)
    return num, out


def _fr_expand(den, ring):
    p = ring.one
    for f, e in den.values():
        for _ in range(e):
            p = p * f
    return p


def _fr_from_rational(c: RationalFunction, ring):
    numer, denom = c._f.numer, c._f.denom
    if denom.is_ground:
        return _FRat(numer * (1 / denom.LC), {})
    content, f = _fr_canon_factor(denom)
    return _FRat(numer * (1 / content), {_factor_key(f): (f, 1)})


def _fr_to_rational(a: _FRat, vars):
    return RationalFunction(vars, vars.field.new(a.num, _fr_expand(a.den, vars.ring)))


def _fr_mul(a, b):
    num = a.num * b.num
    if not num:
        return _FRat(num, {})
    den = dict(a.den)
    for key, (f, e) in b.den.items():
        if key in den:
            den[key] = (f, den[key][1] + e)
        else:
            den[key] = (f, e)
    num, den = _fr_cancel(num, den)
    return _FRat(num, den)


def _fr_add(a, b):
    den = dict(a.den)
    for key, (f, e) in b.den.items():
        if key in den:
            den[key] = (f, max(den[key][1], e))
        else:
            den[key] = (f, e)
    na, nb = a.num, b.num
    for key, (f, e) in den.items():
        ea = e - (a.den[key][1] if key in a.den else 0)
        eb = e - (b.den[key][1] if key in b.den else 0)
        for _ in range(ea):
            na = na * f
        for _ in range(eb):
            nb = nb * f
    num = na + nb
    num, den = _fr_cancel(num, den)
    return _FRat(num, den)


def _fr_neg(a):
    return _FRat(-a.num, a.den)


def _fr_recip(a, ring):
    if not a.num:
        raise ZeroDivisionError("reciprocal of zero")
    num = _fr_expand(a.den, ring)
    if a.num.is_ground:
        return _FRat(num * (1 / a.num.LC), {})
    content, f = _fr_canon_factor(a.num)
    return _FRat(num * (1 / content), {_factor_key(f): (f, 1)})


def _fr_diff(a, gen, ring):
    if not a.num:
        return a
    if not a.den:
        return _FRat(a.num.diff(gen), {})
    support = ring.one
    for f, _ in a.den.values():
        support = support * f
    num = a.num.diff(gen) * support
    for f, e in a.den.values():
        df = f.diff(gen)
        if df:
            num = num - e * df * support.quo(f) * a.num
    den = {key: (f, e + 1) for key, (f, e) in a.den.items()}
    num, den = _fr_cancel(num, den)
    return _FRat(num, den)


def _frop_from_op(op: DiffOperator, ring):
    return {beta: _fr_from_rational(c, ring) for beta, c in op.terms.items()}


def _frop_to_op(terms, vars):
    return DiffOperator(
        vars, {beta: _fr_to_rational(c, vars) for beta, c in terms.items()}
    )


def _frop_conjugate(e, terms, vars):
    """d^e composed with factored-coefficient terms."""
    ring = vars.ring
    work = terms
    for i, k in enumerate(e):
        if k == 0:
            continue
        gen = ring.gens[i]
        nxt = {}
        for beta, c in work.items():
            dc = c
            for j in range(k + 1):
                if j > 0:
                    dc = _fr_diff(dc, gen, ring)
                    if not dc.num:
                        break
                b = list(beta)
                b[i] += k - j
                b = tuple(b)
                piece = dc if j == 0 else _FRat(math.comb(k, j) * dc.num, dc.den)
                s = nxt.get(b)
                nxt[b] = piece if s is None else _fr_add(s, piece)
        work = {b: c for b, c in nxt.items() if c.num}
    return work


def _frop_scale(c: _FRat, terms):
    out = {}
    for beta, a in terms.items():
        s = _fr_mul(c, a)
        if s.num:
            out[beta] = s
    return out


def _frop_sub(f, g):
    out = dict(f)
    for beta, c in g.items():
        s = out.get(beta)
        s = _fr_neg(c) if s is None else _fr_add(s, _fr_neg(c))
        if s.num:
            out[beta] = s
        else:
            out.pop(beta, None)
    return out


def _frop_monic(terms, vars):
    beta = max(terms, key=grevlex_key)
    inv = _fr_recip(terms[beta], vars.ring)
    return _frop_scale(inv, terms)


def _buchberger_monic(gens, vars):
    """Main loop over monic operators with factored-denominator coefficients.

    Keeping every basis element monic means a reduction step never scales
    the whole remainder, so coefficient size tracks the true reduced
    fractions instead of snowballing.
    """
    ring = vars.ring
    basis = []
    xi_list = []

    def head_reduce(f):
        r = f
        while r:
            beta = max(r, key=grevlex_key)
            hit = next(
                (i for i, xi in enumerate(xi_list) if monom_divides(xi, beta)), None
            )
            if hit is None:
                return _frop_monic(r, vars)
            shifted = _frop_conjugate(_monom_sub(beta, xi_list[hit]), basis[hit], vars)
            r = _frop_sub(r, _frop_scale(r[beta], shifted))
        return None

    def spair(i, j):
        lcm = _monom_lcm(xi_list[i], xi_list[j])
        a = _frop_conjugate(_monom_sub(lcm, xi_list[i]), basis[i], vars)
        b = _frop_conjugate(_monom_sub(lcm, xi_list[j]), basis[j], vars)
        s = _frop_sub(a, b)
        return s if s else None

    def on_new(red):
        basis.append(red)
        return max(red, key=grevlex_key)

    for g in gens:
        red = head_reduce(_frop_from_op(g.monic(), ring))
        if red is not None:
            basis.append(red)
            xi_list.append(max(red, key=grevlex_key))

    _pair_loop(xi_list, spair, head_reduce, on_new)
    return [_frop_to_op(terms, vars) for terms in basis]


def _buchberger_verbatim(gens, vars):
    """Fraction-free variant keeping integer-primitive coefficients.

    Reproduces classically printed bases: elements are denominator-free and
    content-normalized, S-pair remainders only head-reduced.
    """
    basis = []
    lts = []
    xi_list = []

    for g in gens:
        red = (
            _ff_reduce(_ff_from_op(g), basis, lts, vars, head_only=True)
            if basis
            else _ff_primitive(_ff_from_op(g), vars)
        )
        if red:
            basis.append(red)
            lts.append(_ff_lt(red))
            xi_list.append(lts[-1][0])

    def spair(i, j):
        s = _spair_ff(basis[i], basis[j], lts[i], lts[j], vars)
        return s or None

    def reduce_head(s):
        red = _ff_reduce(s, basis, lts, vars, head_only=True)
        return red or None

    def on_new(red):
        basis.append(red)
        lts.append(_ff_lt(red))
        return lts[-1][0]

    _pair_loop(xi_list, spair, reduce_head, on_new)
    return [
        DiffOperator(
            vars, {beta: vars.rat(Polynomial(vars, p)) for beta, p in terms.items()}
        )
        for terms in basis
    ]


def _finalize(ops, vars, interreduce):
    """Minimalize (and by default inter-reduce to the monic canonical form)."""
    lead = [g.leading_term().xi for g in ops]
    order = sorted(range(len(ops)), key=lambda k: grevlex_key(lead[k]))
    keep = []
    for k in order:
        if not any(monom_divides(lead[m], lead[k]) for m in keep):
            keep.append(k)
    ops = [ops[k] for k in keep]

    if interreduce:
        reduced = []
        for i, g in enumerate(ops):
            others = ops[:i] + ops[i + 1 :]
            if others:
                r, _ = normal_form(g, others)
                g = r.monic()
            reduced.append(g)
        ops = reduced

    lead = [g.leading_term().xi for g in ops]
    smons = standard_monomials_of(lead, len(vars))
    return GroebnerBasis(vars, ops, smons)


def standard_monomials_of(lead_exponents, d):
    """Monomials not divisible by any leading exponent, ascending grevlex.

    Raises InfiniteRank when the staircase is unbounded, i.e. some variable
    has no pure power among the leading exponents.
    """
    bounds = []
    for i in range(d):
        pure = [
            b[i]
            for b in lead_exponents
            if all(bj == 0 for j, bj in enumerate(b) if j != i)
        ]
        if not pure:
            raise InfiniteRank(
                "no pure power of derivative variable #%d in the initial ideal" % i
            )
        bounds.append(min(pure))
    candidates = [()]
    for i in range(d):
        candidates = [c + (e,) for c in candidates for e in range(bounds[i])]
    out = [
        beta
        for beta in candidates
        if not any(monom_divides(b, beta) for b in lead_exponents)
    ]
    out.sort(key=grevlex_key)
    return out


def standard_monomials(basis: GroebnerBasis):
    """Ordered standard monomials of a basis (first one is 1)."""
    return list(basis.standard_monomials)


def eliminate_to_ode(basis: GroebnerBasis, name) -> DiffOperator:
    """A nonzero member of the ideal involving only d<name>.

    Reduces 1, d, d^2, ... to standard-monomial coordinates and returns the
    first rational-function linear dependence as an operator, cleared of
    denominators and content-normalized.
    """
    vars = basis.vars
    m = basis.rank
    rows = []  # (pivot index, normalized row, combination over powers)
    for k in range(m + 1):
        vec = basis.coords(DiffOperator.d(vars, name, k) if k else
                           DiffOperator.from_coeff(vars.one()))
        combo = [vars.zero() for _ in range(m + 1)]
        combo[k] = vars.one()
        for piv, rvec, rcombo in rows:
            factor = vec[piv]
            if factor.is_zero:
                continue
            vec = [a - factor * b for a, b in zip(vec, rvec)]
            combo = [a - factor * b for a, b in zip(combo, rcombo)]
        piv = next((j for j, a in enumerate(vec) if not a.is_zero), None)
        if piv is None:
            op = DiffOperator.zero(vars)
            for j, c in enumerate(combo):
                if not c.is_zero:
                    op = op + c * DiffOperator.d(vars, name, j)
            ff = _ff_primitive(_ff_from_op(op), vars)
            return DiffOperator(
                vars, {b: vars.rat(Polynomial(vars, p)) for b, p in ff.items()}
            )
        inv = vars.one() / vec[piv]
        rows.append(
            (piv, [inv * a for a in vec], [inv * a for a in combo])
        )
    raise InfiniteRank("no dependence found; ideal is not zero-dimensional")


# -- text grammar --------------------------------------------------------------
#
# Declaration line:   vars: x11 x12 x22 y1 y2 r
# Operator lines:     one operator each, e.g.  x12*dx11 + 2*(x22-x11)*dx12 - 1
# Tokens: integer literals, variable names, d<name> for derivatives,
# + - * / ^ and parentheses.  '/' requires a derivative-free divisor.
# '#' starts a comment; blank lines are skipped.

_TOKEN_RE = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z0-9_]*)|([-+*/^()]))")


def _tokenize(text, lineno):
    pos, out = 0, []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos and not text[pos:].strip():
            break
        if not m.group(0).strip():
            pos = m.end()
            continue
        if m.lastindex is None:
            raise OperatorSyntaxError("bad character %r" % text[pos], lineno, pos + 1)
        kind = ("num", "name", "sym")[m.lastindex - 1]
        out.append((kind, m.group(m.lastindex), m.start(m.lastindex) + 1))
        pos = m.end()
    rest = text[pos:].strip()
    if rest:
        raise OperatorSyntaxError("bad character %r" % rest[0], lineno, pos + 1)
    return out


class _Parser:
    def __init__(self, tokens, vars, lineno):
        self.toks = tokens
        self.vars = vars
        self.lineno = lineno
        self.k = 0

    def peek(self):
        return self.toks[self.k] if self.k < len(self.toks) else (None, None, None)

    def next(self):
        t = self.peek()
        self.k += 1
        return t

    def fail(self, msg, tok=None):
        col = (tok or self.peek())[2]
        raise OperatorSyntaxError(msg, self.lineno, col)

    def parse(self):
        e = self.expr()
        if self.k != len(self.toks):
            self.fail("unexpected token %r" % self.peek()[1])
        return e

    def expr(self):
        left = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.next()[1]
            right = self.term()
            left = left + right if op == "+" else left - right
        return left

    def term(self):
        left = self.factor()
        while self.peek()[1] in ("*", "/"):
            op, _, col = self.next()[1], None, self.peek()[2]
            right = self.factor()
            if op == "*":
                left = left * right
            else:
                c = _as_scalar(right)
                if c is None:
                    self.fail("divisor must be free of derivative symbols")
                if c.is_zero:
                    self.fail("division by zero")
                left = (self.vars.one() / c) * left
        return left

    def factor(self):
        kind, val, col = self.peek()
        if val == "-":
            self.next()
            return -self.factor()
        if val == "+":
            self.next()
            return self.factor()
        base = self.atom()
        if self.peek()[1] == "^":
            self.next()
            kind, val, col = self.next()
            if kind != "num":
                self.fail("exponent must be an integer literal")
            base = base ** int(val)
        return base

    def atom(self):
        kind, val, col = self.next()
        if kind == "num":
            return DiffOperator.from_coeff(self.vars.rat_const(int(val)))
        if kind == "name":
            if val in self.vars.index:
                return DiffOperator.from_coeff(self.vars.rat_var(val))
            if val[0] == "d" and val[1:] in self.vars.index:
                return DiffOperator.d(self.vars, val[1:])
            self.fail("unknown symbol %r" % val, (kind, val, col))
        if val == "(":
            e = self.expr()
            kind, val, col = self.next()
            if val != ")":
                self.fail("expected ')'")
            return e
        self.fail("expected a value" if val is None else "unexpected token %r" % val,
                  (kind, val, col))


def _as_scalar(op: DiffOperator):
    """The operator as a rational function, or None if it involves d's."""
    zero = (0,) * len(op.vars)
    if op.is_zero:
        return op.vars.zero()
    if set(op.terms) == {zero}:
        return op.terms[zero]
    return None


def parse_operator(text, vars, lineno=None) -> DiffOperator:
    """Parse one operator expression over an existing variable table."""
    tokens = _tokenize(text, lineno)
    if not tokens:
        raise OperatorSyntaxError("empty operator expression", lineno)
    return _Parser(tokens, vars, lineno).parse()


def parse_ideal(text):
    """Parse a full ideal file: 'vars:' line then one operator per line.

    Returns (VarTable, [DiffOperator]).
    """
    vars = None
    ops = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if vars is None:
            if not line.startswith("vars:"):
                raise OperatorSyntaxError("expected a 'vars:' declaration line", lineno)
            names = line[len("vars:"):].split()
            if not names:
                raise OperatorSyntaxError("empty variable list", lineno)
            vars = VarTable(names)
            continue
        ops.append(parse_operator(line, vars, lineno))
    if vars is None:
        raise OperatorSyntaxError("missing 'vars:' declaration")
    if not ops:
        raise OperatorSyntaxError("ideal file contains no operators")
    return vars, ops


# -- canonical operator strings -------------------------------------------------


def format_d_monomial(beta, names):
    parts = []
    for nm, e in zip(names, beta):
        if e == 1:
            parts.append("d" + nm)
        elif e > 1:
            parts.append("d%s^%d" % (nm, e))
    return "*".join(parts)


def _coeff_prefix(c: RationalFunction):
    """Coefficient as a string safe to prefix to '*dmon'; sign split off."""
    neg = c.is_negative_lead()
    if neg:
        c = -c
    num, den = c.num, c.den
    s = format_rational(c)
    if den.is_one and len(num.terms()) > 1:
        s = "(%s)" % s
    return neg, s


def format_operator(op: DiffOperator) -> str:
    """Canonical string: derivative terms sorted grevlex descending."""
    if op.is_zero:
        return "0"
    names = op.vars.names
    pieces = []
    for beta in sorted(op.terms, key=grevlex_key, reverse=True):
        c = op.terms[beta]
        dmon = format_d_monomial(beta, names)
        neg, cs = _coeff_prefix(c)
        if not dmon:
            body = cs
        elif cs == "1":
            body = dmon
        else:
            body = "%s*%s" % (cs, dmon)
        if not pieces:
            pieces.append("-" + body if neg else body)
        else:
            pieces.append((" - " if neg else " + ") + body)
    return "".join(pieces)
