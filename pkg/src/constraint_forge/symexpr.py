"""Exact multivariate rational functions over a fixed, ordered variable table.

Every scalar in the package is an :class:`Expr`: a quotient of two
polynomials with rational coefficients, kept in a canonical form so that
mathematical equality coincides with structural equality.

Canonical form:

* numerator and denominator share no common polynomial factor;
* the denominator is monic under graded-lexicographic order (so a
  constant denominator is always ``1``);
* zero is ``0/1``.

Polynomial arithmetic is delegated to sympy's sparse ``PolyRing`` over
``QQ``; everything above that (canonicalisation, substitution, parsing,
printing, float evaluation) lives here.
"""
from __future__ import annotations

import functools
import math
import re
from fractions import Fraction
from numbers import Rational

from sympy.polys.domains import QQ
from sympy.polys.orderings import grlex
from sympy.polys.rings import PolyRing

__all__ = [
    "ROLES",
    "VarTable",
    "Expr",
    "ParseError",
    "parse_expr",
    "normalize",
    "differentiate",
    "substitute",
    "primitive",
]

ROLES = ("q", "p", "z", "v", "multiplier")


@functools.lru_cache(maxsize=None)
def _ring(names):
    return PolyRing(list(names), QQ, grlex)


class VarTable:
    """Ordered registry of variable names with their roles.

    The order is fixed at creation; monomial ordering and every pivot
    choice in the package derive from it.
    """

    def __init__(self, names, roles=None):
        names = tuple(names)
        if roles is None:
            roles = ("q",) * len(names)
        roles = tuple(roles)
        if len(roles) != len(names):
            raise ValueError("one role per variable required")
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique")
        for name in names:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", name):
                raise ValueError(f"invalid variable name {name!r}")
        for role in roles:
            if role not in ROLES:
                raise ValueError(f"unknown role {role!r}")
        self.names = names
        self.roles = roles
        self.ring = _ring(names)
        self._index = {n: i for i, n in enumerate(names)}

    @classmethod
    def for_system(cls, n, contact=False, n_multipliers=None, multiplier_prefix=None):
        """Standard layout ``q1..qn, p1..pn, [z], v1..vn, multipliers``."""
        if n < 1:
            raise ValueError("configuration dimension must be >= 1")
        if n_multipliers is None:
            n_multipliers = 2 * n + (1 if contact else 0)
        if multiplier_prefix is None:
            multiplier_prefix = "u" if contact else "lam"
        names, roles = [], []
        for prefix, role in (("q", "q"), ("p", "p")):
            names += [f"{prefix}{i}" for i in range(1, n + 1)]
            roles += [role] * n
        if contact:
            names.append("z")
            roles.append("z")
        names += [f"v{i}" for i in range(1, n + 1)]
        roles += ["v"] * n
        names += [f"{multiplier_prefix}{i}" for i in range(1, n_multipliers + 1)]
        roles += ["multiplier"] * n_multipliers
        return cls(names, roles)

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self._index

    def __eq__(self, other):
        return isinstance(other, VarTable) and self.names == other.names and self.roles == other.roles

    def __hash__(self):
        return hash((self.names, self.roles))

    def __repr__(self):
        return f"VarTable({list(self.names)!r})"

    def index(self, name):
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown variable {name!r}") from None

    def role(self, name):
        return self.roles[self.index(name)]

    def by_role(self, *roles):
        return [n for n, r in zip(self.names, self.roles) if r in roles]

    def __getitem__(self, name):
        i = self.index(name)
        return Expr._raw(self, self.ring.gens[i], self.ring.one)

    def const(self, value):
        return Expr.const(self, value)

    def zero(self):
        return Expr._raw(self, self.ring.zero, self.ring.one)

    def one(self):
        return Expr._raw(self, self.ring.one, self.ring.one)

    def parse(self, text):
        return parse_expr(text, self)


def _qq(value):
    if isinstance(value, Fraction):
        return QQ(value.numerator, value.denominator)
    if isinstance(value, int):
        return QQ(value)
    if isinstance(value, Rational):
        return QQ(int(value.numerator), int(value.denominator))
    raise TypeError(f"exact rational required, got {type(value).__name__}")


def _frac(c):
    return Fraction(int(c.numerator), int(c.denominator))


class Expr:
    """Immutable exact rational function in canonical form."""

    __slots__ = ("vars", "num", "den", "_hash")

    def __init__(self, *args, **kwargs):
        raise TypeError("use VarTable.parse, VarTable[name] or Expr.const")

    @classmethod
    def _raw(cls, vars, num, den):
        self = object.__new__(cls)
        self.vars = vars
        self.num = num
        self.den = den
        self._hash = None
        return self

    @classmethod
    def _make(cls, vars, num, den):
        ring = vars.ring
        if not den:
            raise ZeroDivisionError("denominator is identically zero")
        if not num:
            return cls._raw(vars, ring.zero, ring.one)
        if den.is_ground:
            c = den.LC
            if c != 1:
                num = num.quo_ground(c)
            return cls._raw(vars, num, ring.one)
        p, q = num.cancel(den)
        lc = q.LC
        if lc != 1:
            p = p.quo_ground(lc)
            q = q.quo_ground(lc)
        return cls._raw(vars, p, q)

    @classmethod
    def const(cls, vars, value):
        return cls._raw(vars, vars.ring.ground_new(_qq(value)), vars.ring.one)

    # -- coercion -------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Expr):
            if other.vars is not self.vars and other.vars != self.vars:
                raise ValueError("expressions belong to different variable tables")
            return other
        if isinstance(other, (int, Fraction)) or isinstance(other, Rational):
            return Expr.const(self.vars, other)
        return NotImplemented

    # -- predicates -----------------------------------------------------
    @property
    def is_poly(self):
        return self.den.is_one

    def is_zero(self):
        return not self.num

    def __bool__(self):
        return bool(self.num)

    def is_constant(self):
        return self.num.is_ground and self.den.is_one

    def constant_value(self):
        if not self.is_constant():
            raise ValueError(f"{self} is not constant")
        return _frac(self.num.LC) if self.num else Fraction(0)

    def free_vars(self):
        """Names of variables occurring in the expression, in table order."""
        used = set()
        for poly in (self.num, self.den):
            for monom in poly.itermonoms():
                used.update(i for i, e in enumerate(monom) if e)
        return [self.vars.names[i] for i in sorted(used)]

    def degree(self, name):
        """Degree of the numerator in ``name`` (-1 for zero); den must not involve it."""
        i = self.vars.index(name)
        if self.den.degree(i) > 0:
            raise ValueError(f"{name} occurs in the denominator")
        return self.num.degree(i) if self.num else -1

    def numerator(self):
        return Expr._raw(self.vars, self.num, self.vars.ring.one)

    def denominator(self):
        return Expr._raw(self.vars, self.den, self.vars.ring.one)

    # -- arithmetic -----------------------------------------------------
    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.den.is_one and other.den.is_one:
            return Expr._raw(self.vars, self.num + other.num, self.den)
        if self.den == other.den:
            return Expr._make(self.vars, self.num + other.num, self.den)
        return Expr._make(self.vars, self.num * other.den + other.num * self.den, self.den * other.den)

    __radd__ = __add__

    def __neg__(self):
        return Expr._raw(self.vars, -self.num, self.den)

    def __pos__(self):
        return self

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.den.is_one and other.den.is_one:
            return Expr._raw(self.vars, self.num * other.num, self.den)
        return Expr._make(self.vars, self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if not other.num:
            raise ZeroDivisionError("division by zero expression")
        if other.is_constant():
            return Expr._raw(self.vars, self.num.quo_ground(other.num.LC), self.den)
        return Expr._make(self.vars, self.num * other.den, self.den * other.num)

    def __rtruediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other / self

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("only integer exponents are supported")
        if n < 0:
            if not self.num:
                raise ZeroDivisionError("zero to a negative power")
            return Expr._make(self.vars, self.den ** (-n), self.num ** (-n))
        if self.den.is_one:
            return Expr._raw(self.vars, self.num**n, self.den)
        return Expr._raw(self.vars, self.num**n, self.den**n)

    # -- equality -------------------------------------------------------
    def __eq__(self, other):
        if isinstance(other, Expr):
            return self.vars == other.vars and self.num == other.num and self.den == other.den
        if isinstance(other, (int, Fraction)):
            return self.is_constant() and self.constant_value() == other
        return NotImplemented

    def __ne__(self, other):
        r = self.__eq__(other)
        return r if r is NotImplemented else not r

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.vars.names, frozenset(self.num.items()), frozenset(self.den.items())))
        return self._hash

    # -- calculus -------------------------------------------------------
    def diff(self, name):
        i = self.vars.index(name)
        x = self.vars.ring.gens[i]
        if self.den.is_one:
            return Expr._raw(self.vars, self.num.diff(x), self.den)
        n, d = self.num, self.den
        return Expr._make(self.vars, n.diff(x) * d - n * d.diff(x), d * d)

    def subs(self, bindings):
        """Simultaneous substitution ``{name: Expr | rational}``."""
        if not bindings:
            return self
        vals = {}
        for name, value in bindings.items():
            value = self._coerce(value)
            if value is NotImplemented:
                raise TypeError(f"cannot substitute {type(bindings[name]).__name__}")
            vals[self.vars.index(name)] = value
        ring = self.vars.ring
        if all(v.den.is_one for v in vals.values()):
            pairs = [(ring.gens[i], v.num) for i, v in vals.items()]
            num = self.num.compose(pairs)
            den = self.den.compose(pairs) if not self.den.is_one else self.den
            if not den:
                raise ZeroDivisionError(f"substitution makes the denominator of {self} vanish")
            return Expr._make(self.vars, num, den)
        num = _eval_poly(self.vars, self.num, vals)
        den = _eval_poly(self.vars, self.den, vals)
        if not den:
            raise ZeroDivisionError(f"substitution makes the denominator of {self} vanish")
        return num / den

    # -- numerics -------------------------------------------------------
    def evaluate(self, point):
        """Float value at ``point`` (mapping name -> float)."""
        if self.is_constant():
            return float(self.constant_value())
        missing = [n for n in self.free_vars() if n not in point]
        if missing:
            raise KeyError(f"unbound variable(s): {', '.join(missing)}")
        names = self.vars.names
        num = _float_poly(self.num, names, point)
        if self.den.is_one:
            return num
        den = _float_poly(self.den, names, point)
        if abs(den) <= 1e-300:
            raise ZeroDivisionError(f"denominator of {self} vanishes at the given point")
        return num / den

    def to_python(self, index_of):
        """Python source evaluating the expression from ``x[index_of[name]]``."""
        num = _py_poly(self.num, self.vars.names, index_of)
        if self.den.is_one:
            return num
        return f"({num})/({_py_poly(self.den, self.vars.names, index_of)})"

    # -- printing -------------------------------------------------------
    def __str__(self):
        if self.den.is_one:
            return _format_poly(self.num, self.vars.names)
        return f"({_format_poly(self.num, self.vars.names)})/({_format_poly(self.den, self.vars.names)})"

    def __repr__(self):
        return f"Expr({str(self)!r})"


def _eval_poly(vars, poly, vals):
    ring = vars.ring
    total = vars.zero()
    powers = {}
    for monom, coeff in poly.iterterms():
        rest = list(monom)
        term = None
        for i, e in enumerate(monom):
            if e and i in vals:
                rest[i] = 0
                key = (i, e)
                if key not in powers:
                    powers[key] = vals[i] ** e
                term = powers[key] if term is None else term * powers[key]
        mono = Expr._raw(vars, ring({tuple(rest): coeff}), ring.one)
        total = total + (mono if term is None else mono * term)
    return total


def _float_poly(poly, names, point):
    total = 0.0
    for monom, coeff in poly.iterterms():
        t = float(_frac(coeff))
        for i, e in enumerate(monom):
            if e:
                t *= float(point[names[i]]) ** e
        total += t
    return total


def _py_poly(poly, names, index_of):
    if not poly:
        return "0.0"
    parts = []
    for monom, coeff in poly.terms():
        factors = [repr(float(_frac(coeff)))]
        for i, e in enumerate(monom):
            if e:
                ref = f"x[{index_of[names[i]]}]"
                factors.append(ref if e == 1 else f"{ref}**{e}")
        parts.append("*".join(factors))
    return " + ".join(parts)


def _format_coeff(c):
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def _format_poly(poly, names):
    if not poly:
        return "0"
    out = []
    for k, (monom, coeff) in enumerate(poly.terms()):
        c = _frac(coeff)
        neg = c < 0
        c = abs(c)
        mono = "*".join(names[i] if e == 1 else f"{names[i]}^{e}" for i, e in enumerate(monom) if e)
        if not mono:
            body = _format_coeff(c)
        elif c == 1:
            body = mono
        elif c.denominator == 1:
            body = f"{c.numerator}*{mono}"
        else:
            body = f"({c.numerator}/{c.denominator})*{mono}"
        if k == 0:
            out.append(("-" if neg else "") + body)
        else:
            out.append((" - " if neg else " + ") + body)
    return "".join(out)


# -- module-level operations --------------------------------------------

def normalize(e):
    """Canonical form of ``e``. Expr values are always canonical, so this is the identity."""
    if e.den.is_one:
        return e
    return Expr._make(e.vars, e.num, e.den)


def differentiate(e, name):
    return e.diff(name)


def substitute(e, bindings):
    return e.subs(bindings)


def primitive(e):
    """Scale-free representative of the zero set of ``e``.

    The numerator is made an integer polynomial with coprime coefficients;
    its sign makes a nonzero constant term positive, otherwise the leading
    (graded-lexicographic) coefficient. ``primitive(c * e) == primitive(e)``
    for every nonzero rational ``c``.
    """
    num = e.num
    if not num:
        return e
    coeffs = [_frac(c) for c in num.coeffs()]
    lcm = 1
    for c in coeffs:
        lcm = lcm * c.denominator // math.gcd(lcm, c.denominator)
    g = 0
    for c in coeffs:
        g = math.gcd(g, int(c * lcm))
    scale = Fraction(lcm, g)
    const = num.coeff(1) if hasattr(num, "coeff") else 0
    lead = _frac(const) if const else _frac(num.LC)
    if lead < 0:
        scale = -scale
    return Expr._raw(e.vars, num.mul_ground(_qq(scale)), e.vars.ring.one)


# -- parser -------------------------------------------------------------

class ParseError(ValueError):
    """Malformed expression text; ``position`` is a 0-based character offset."""

    def __init__(self, message, position, text=""):
        super().__init__(f"{message} at offset {position}")
        self.message = message
        self.position = position
        self.text = text


_TOKEN = re.compile(r"\s*(?:(?P<num>\d+(?:\.\d*)?|\.\d+)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>\*\*|[-+*/^()]))")


def _tokenize(text):
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
        start = m.start(m.lastgroup)
        kind = m.lastgroup
        value = m.group(kind)
        if value == "**":
            value = "^"
        tokens.append((kind, value, start))
        pos = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, text, vars):
        self.text = text
        self.vars = vars
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message, tok=None):
        tok = tok or self.peek()
        raise ParseError(message, tok[2], self.text)

    def parse(self):
        if self.peek()[0] == "end":
            self.fail("empty expression")
        e = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected {self.peek()[1]!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self):
        e = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in ("*", "/"):
            op = self.take()
            rhs = self.unary()
            if op[1] == "*":
                e = e * rhs
            else:
                if rhs.is_zero():
                    raise ParseError("division by zero", op[2], self.text)
                e = e / rhs
        return e

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("+", "-"):
            self.take()
            e = self.unary()
            return -e if tok[1] == "-" else e
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.take()
            start = self.peek()
            exponent = self.unary()
            if not exponent.is_constant():
                self.fail("symbolic exponents are not supported", start)
            k = exponent.constant_value()
            if k.denominator != 1:
                self.fail("non-integer exponents are not supported", start)
            k = int(k)
            if k < 0 and base.is_zero():
                raise ParseError("division by zero", start[2], self.text)
            return base**k
        return base

    def atom(self):
        tok = self.take()
        kind, value, pos = tok
        if kind == "num":
            return Expr.const(self.vars, Fraction(value))
        if kind == "name":
            if value not in self.vars:
                raise ParseError(f"unknown variable {value!r}", pos, self.text)
            return self.vars[value]
        if kind == "op" and value == "(":
            e = self.expr()
            if self.peek()[1] != ")" or self.peek()[0] != "op":
                self.fail("expected ')'")
            self.take()
            return e
        if kind == "end":
            raise ParseError("unexpected end of input", pos, self.text)
        raise ParseError(f"unexpected {value!r}", pos, self.text)


def parse_expr(text, vars):
    """Parse ``text`` into a canonical :class:`Expr` over ``vars``."""
    return _Parser(text, vars).parse()
