"""Exterior calculus and exact linear algebra over the rational-function field.

Everything lives in one global chart. A form or vector field carries the
tuple of ambient coordinate names it is expressed over; two objects can
only be combined when these tuples agree.

Ranks are generic ranks over the field of rational functions. Points
where the rank drops are not detected.
"""
from __future__ import annotations

import functools
import itertools

from .symexpr import Expr

__all__ = [
    "UnsolvableConstraint",
    "InconsistentConstraints",
    "SurfaceChart",
    "chart_for",
    "SymMatrix",
    "nullspace",
    "VectorField",
    "DifferentialForm",
    "wedge",
    "exterior_derivative",
    "interior_product",
    "Distribution",
    "tangent_distribution",
    "form_kernel",
    "orthogonal_complement",
    "pullback_to_surface",
]

PIVOT_ROLES = ("q", "p", "z")


# ---------------------------------------------------------------------------
# surfaces given by solvable constraints


class UnsolvableConstraint(ValueError):
    """A constraint is not affine in any admissible pivot variable."""

    def __init__(self, constraint):
        super().__init__(f"constraint {constraint} is not affine in any eliminable variable")
        self.constraint = constraint


class InconsistentConstraints(ValueError):
    """The constraint set reduces a member to a nonzero constant."""

    def __init__(self, constraint, residual):
        super().__init__(f"constraint {constraint} reduces to the nonzero constant {residual}")
        self.constraint = constraint
        self.residual = residual


class SurfaceChart:
    """Parameterisation of a constraint surface by linear pivot elimination.

    Constraints are processed in order. Each one, after substituting the
    pivots found so far, is solved for the first variable (table order)
    in which it is affine with a constant coefficient, falling back to the
    first affine variable with a non-constant coefficient. Constraints
    that reduce to zero are dependent and skipped.
    """

    def __init__(self, constraints, vars=None):
        constraints = tuple(constraints)
        if vars is None:
            if not constraints:
                raise ValueError("variable table required for an empty constraint set")
            vars = constraints[0].vars
        self.vars = vars
        self.constraints = constraints
        self.candidates = [n for n, r in zip(vars.names, vars.roles) if r in PIVOT_ROLES]
        solved = {}
        order = []
        for c in constraints:
            r = c.subs(solved) if solved else c
            if r.is_zero():
                continue
            r = r.numerator()
            if r.is_constant():
                raise InconsistentConstraints(c, r)
            pivot = self._choose_pivot(r)
            if pivot is None:
                raise UnsolvableConstraint(c)
            a = r.diff(pivot)
            sol = -(r - a * vars[pivot]) / a
            solved = {k: v.subs({pivot: sol}) for k, v in solved.items()}
            solved[pivot] = sol
            order.append(pivot)
        self.solved = {k: solved[k] for k in order}
        self.pivots = tuple(order)

    def _choose_pivot(self, r):
        fallback = None
        free = set(r.free_vars())
        for name in self.candidates:
            if name not in free or r.degree(name) != 1:
                continue
            if r.diff(name).is_constant():
                return name
            if fallback is None:
                fallback = name
        return fallback

    @property
    def free(self):
        return [n for n in self.candidates if n not in self.solved]

    def reduce(self, e):
        if not self.solved:
            return e
        return e.subs(self.solved)

    def __call__(self, e):
        return self.reduce(e)


@functools.lru_cache(maxsize=512)
def _chart(constraints, vars):
    return SurfaceChart(constraints, vars)


def chart_for(constraints, vars=None):
    """Cached :class:`SurfaceChart` for a constraint tuple."""
    constraints = tuple(constraints)
    if vars is None and constraints:
        vars = constraints[0].vars
    return _chart(constraints, vars)


def _identity(e):
    return e


# ---------------------------------------------------------------------------
# matrices


class SymMatrix:
    """Rectangular matrix of :class:`Expr` entries."""

    def __init__(self, rows, vars=None):
        rows = [list(r) for r in rows]
        if rows and any(len(r) != len(rows[0]) for r in rows):
            raise ValueError("matrix rows must have equal length")
        if vars is None:
            vars = next((e.vars for r in rows for e in r if isinstance(e, Expr)), None)
        if vars is None:
            raise ValueError("cannot infer the variable table of a matrix without Expr entries")
        self.vars = vars
        self.rows = [[e if isinstance(e, Expr) else vars.const(e) for e in r] for r in rows]

    @classmethod
    def identity(cls, n, vars):
        return cls([[vars.const(int(i == j)) for j in range(n)] for i in range(n)], vars)

    @property
    def shape(self):
        return (len(self.rows), len(self.rows[0]) if self.rows else 0)

    def __getitem__(self, ij):
        i, j = ij
        return self.rows[i][j]

    def __eq__(self, other):
        if not isinstance(other, SymMatrix):
            return NotImplemented
        return self.rows == other.rows

    def __repr__(self):
        return "SymMatrix(" + repr([[str(e) for e in r] for r in self.rows]) + ")"

    def tolist(self):
        return [[str(e) for e in r] for r in self.rows]

    def map(self, fn):
        return SymMatrix([[fn(e) for e in r] for r in self.rows], self.vars)

    def transpose(self):
        n, m = self.shape
        return SymMatrix([[self.rows[i][j] for i in range(n)] for j in range(m)], self.vars)

    T = property(transpose)

    def __matmul__(self, other):
        n, k = self.shape
        k2, m = other.shape
        if k != k2:
            raise ValueError("shape mismatch")
        zero = self.vars.zero()
        out = []
        for i in range(n):
            row = []
            for j in range(m):
                acc = zero
                for t in range(k):
                    a = self.rows[i][t]
                    if a:
                        b = other.rows[t][j]
                        if b:
                            acc = acc + a * b
                row.append(acc)
            out.append(row)
        return SymMatrix(out, self.vars)

    def echelon(self):
        """Fraction-free (Bareiss) row echelon form and pivot columns.

        Pivot choice: lowest column first, then the lowest row holding a
        nonzero entry in that column.
        """
        rows = [list(r) for r in self.rows]
        n, m = self.shape
        pivots = []
        prev = self.vars.one()
        r = 0
        for c in range(m):
            if r >= n:
                break
            k = next((i for i in range(r, n) if rows[i][c]), None)
            if k is None:
                continue
            if k != r:
                rows[r], rows[k] = rows[k], rows[r]
            piv = rows[r][c]
            for i in range(r + 1, n):
                a = rows[i][c]
                for j in range(c + 1, m):
                    v = piv * rows[i][j]
                    if a and rows[r][j]:
                        v = v - a * rows[r][j]
                    rows[i][j] = v / prev if v else v
                rows[i][c] = self.vars.zero()
            prev = piv
            pivots.append(c)
            r += 1
        return rows, pivots

    def rank(self):
        if not self.rows or not self.rows[0]:
            return 0
        return len(self.echelon()[1])

    def nullspace(self, left=False):
        return nullspace(self, left=left)

    def inverse(self):
        n, m = self.shape
        if n != m:
            raise ValueError("only square matrices are invertible")
        one, zero = self.vars.one(), self.vars.zero()
        aug = [list(r) + [one if i == j else zero for j in range(n)] for i, r in enumerate(self.rows)]
        for c in range(n):
            k = next((i for i in range(c, n) if aug[i][c]), None)
            if k is None:
                raise ZeroDivisionError("matrix is singular over the rational-function field")
            aug[c], aug[k] = aug[k], aug[c]
            piv = aug[c][c]
            aug[c] = [e / piv for e in aug[c]]
            for i in range(n):
                if i != c and aug[i][c]:
                    f = aug[i][c]
                    aug[i] = [a - f * b for a, b in zip(aug[i], aug[c])]
        return SymMatrix([r[n:] for r in aug], self.vars)


def nullspace(M, left=False):
    """Basis of the right (or left) nullspace of ``M``.

    One vector per free column; each vector is scaled so that its first
    nonzero entry is 1. Returns a list of lists of Expr.
    """
    if left:
        M = M.transpose()
    n, m = M.shape
    vars = M.vars
    zero, one = vars.zero(), vars.one()
    if n == 0:
        return [[one if i == j else zero for i in range(m)] for j in range(m)]
    rows, pivots = M.echelon()
    free = [c for c in range(m) if c not in pivots]
    basis = []
    for f in free:
        x = [zero] * m
        x[f] = one
        for r in range(len(pivots) - 1, -1, -1):
            pc = pivots[r]
            s = zero
            for j in range(pc + 1, m):
                if rows[r][j] and x[j]:
                    s = s + rows[r][j] * x[j]
            x[pc] = -s / rows[r][pc] if s else zero
        lead = next(e for e in x if e)
        if lead != 1:
            x = [e / lead for e in x]
        basis.append(x)
    return basis


# ---------------------------------------------------------------------------
# vector fields and forms


def _join_terms(pairs):
    """Render ``[(coeff, basis)]`` as a signed sum."""
    out = []
    for k, (e, basis) in enumerate(pairs):
        text = str(e)
        neg = False
        if not basis:
            body = text
        elif e == 1:
            body = basis
        elif e == -1:
            body, neg = basis, True
        elif not any(t in text[1:] for t in (" + ", " - ", "/")):
            neg = text.startswith("-")
            body = f"{text.lstrip('-')}*{basis}"
        else:
            body = f"({text})*{basis}"
        if k == 0:
            out.append(("-" if neg else "") + body)
        else:
            out.append((" - " if neg else " + ") + body)
    return "".join(out)


def _check_coords(vars, coords):
    coords = tuple(coords)
    idx = [vars.index(c) for c in coords]
    if idx != sorted(idx) or len(set(idx)) != len(idx):
        raise ValueError("coordinates must be distinct and in variable-table order")
    return coords


class VectorField:
    """Vector field ``sum X^k d/dx^k``; absent components are zero."""

    def __init__(self, vars, coords, comps=None):
        self.vars = vars
        self.coords = _check_coords(vars, coords)
        comps = dict(comps or {})
        for name in comps:
            if name not in self.coords:
                raise ValueError(f"{name} is not an ambient coordinate")
        self.comps = {
            c: (comps[c] if isinstance(comps[c], Expr) else vars.const(comps[c]))
            for c in self.coords
            if c in comps
        }
        self.comps = {c: e for c, e in self.comps.items() if e}

    @classmethod
    def basis(cls, vars, coords, name):
        return cls(vars, coords, {name: vars.one()})

    @classmethod
    def from_list(cls, vars, coords, values):
        return cls(vars, coords, dict(zip(coords, values)))

    def __getitem__(self, name):
        return self.comps.get(name, self.vars.zero())

    def as_list(self):
        return [self[c] for c in self.coords]

    def _same(self, other):
        if self.coords != other.coords or self.vars != other.vars:
            raise ValueError("vector fields live on different ambient spaces")

    def __call__(self, f):
        acc = self.vars.zero()
        for c, a in self.comps.items():
            df = f.diff(c)
            if df:
                acc = acc + a * df
        return acc

    def __add__(self, other):
        self._same(other)
        comps = dict(self.comps)
        for c, e in other.comps.items():
            comps[c] = comps[c] + e if c in comps else e
        return VectorField(self.vars, self.coords, comps)

    def __neg__(self):
        return VectorField(self.vars, self.coords, {c: -e for c, e in self.comps.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, f):
        return VectorField(self.vars, self.coords, {c: f * e for c, e in self.comps.items()})

    def __rmul__(self, f):
        return self.scale(f if isinstance(f, Expr) else self.vars.const(f))

    def map(self, fn):
        return VectorField(self.vars, self.coords, {c: fn(e) for c, e in self.comps.items()})

    def lie_bracket(self, other):
        self._same(other)
        return VectorField(self.vars, self.coords, {c: self(other[c]) - other(self[c]) for c in self.coords})

    def is_zero(self):
        return not self.comps

    def __eq__(self, other):
        if not isinstance(other, VectorField):
            return NotImplemented
        return self.coords == other.coords and self.comps == other.comps

    def __str__(self):
        if not self.comps:
            return "0"
        return _join_terms([(e, f"d/d{c}") for c, e in self.comps.items()])

    __repr__ = __str__


def _sort_sign(idx):
    """Sign of the permutation sorting ``idx`` (0 if an index repeats) and the sorted tuple."""
    if len(set(idx)) != len(idx):
        return 0, None
    inversions = sum(1 for a, b in itertools.combinations(idx, 2) if a > b)
    return (-1 if inversions % 2 else 1), tuple(sorted(idx))


class DifferentialForm:
    """k-form ``sum_I c_I dx^I`` with strictly increasing index tuples."""

    def __init__(self, vars, coords, degree, terms=None):
        self.vars = vars
        self.coords = _check_coords(vars, coords)
        if degree < 0:
            raise ValueError("degree must be non-negative")
        self.degree = degree
        clean = {}
        for key, e in (terms or {}).items():
            key = tuple(key)
            if len(key) != degree:
                raise ValueError("index tuple length must equal the degree")
            if list(key) != sorted(set(key)):
                raise ValueError("index tuples must be strictly increasing")
            if not isinstance(e, Expr):
                e = vars.const(e)
            if e:
                clean[key] = e
        self.terms = clean

    @classmethod
    def function(cls, f, coords):
        return cls(f.vars, coords, 0, {(): f})

    @classmethod
    def differential(cls, name, vars, coords):
        coords = tuple(coords)
        return cls(vars, coords, 1, {(coords.index(name),): vars.one()})

    @classmethod
    def from_dict(cls, vars, coords, entries):
        """Build from ``{("q1", "p1"): coeff, ...}``; name tuples in any order."""
        coords = tuple(coords)
        degrees = {len(k) for k in entries}
        if len(degrees) > 1:
            raise ValueError("mixed degrees")
        degree = degrees.pop() if degrees else 0
        out = cls(vars, coords, degree)
        for names, coeff in entries.items():
            sign, key = _sort_sign(tuple(coords.index(n) for n in names))
            if sign:
                coeff = coeff if isinstance(coeff, Expr) else vars.const(coeff)
                out = out + cls(vars, coords, degree, {key: coeff * sign})
        return out

    def _same(self, other):
        if self.coords != other.coords or self.vars != other.vars:
            raise ValueError("forms live on different ambient spaces")

    def is_zero(self):
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    def __eq__(self, other):
        if not isinstance(other, DifferentialForm):
            return NotImplemented
        if self.is_zero() and other.is_zero():
            return self.coords == other.coords
        return self.coords == other.coords and self.degree == other.degree and self.terms == other.terms

    def __add__(self, other):
        self._same(other)
        if self.is_zero():
            return other
        if other.is_zero():
            return self
        if self.degree != other.degree:
            raise ValueError("cannot add forms of different degree")
        terms = dict(self.terms)
        for k, e in other.terms.items():
            terms[k] = terms[k] + e if k in terms else e
        return DifferentialForm(self.vars, self.coords, self.degree, terms)

    def __neg__(self):
        return DifferentialForm(self.vars, self.coords, self.degree, {k: -e for k, e in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, f):
        f = f if isinstance(f, Expr) else self.vars.const(f)
        return DifferentialForm(self.vars, self.coords, self.degree, {k: f * e for k, e in self.terms.items()})

    def __rmul__(self, f):
        return self.scale(f)

    def map(self, fn):
        return DifferentialForm(self.vars, self.coords, self.degree, {k: fn(e) for k, e in self.terms.items()})

    def wedge(self, other):
        return wedge(self, other)

    def d(self):
        return exterior_derivative(self)

    def evaluate(self, *vectors):
        """Full contraction ``a(X1, ..., Xk)``."""
        if len(vectors) != self.degree:
            raise ValueError(f"a {self.degree}-form needs {self.degree} vectors")
        out = self
        for X in vectors:
            out = interior_product(X, out)
        return out.terms.get((), self.vars.zero())

    def as_function(self):
        if self.degree != 0:
            raise ValueError("not a 0-form")
        return self.terms.get((), self.vars.zero())

    def matrix(self, vectors, reduce=None):
        """Gram matrix ``[a(X_i, X_j)]`` of a 2-form."""
        reduce = reduce or _identity
        return SymMatrix([[reduce(self.evaluate(X, Y)) for Y in vectors] for X in vectors], self.vars)

    def __str__(self):
        if not self.terms:
            return "0"
        return _join_terms(
            [(e, "^".join("d" + self.coords[i] for i in key)) for key, e in sorted(self.terms.items())]
        )

    __repr__ = __str__


def wedge(a, b):
    a._same(b)
    degree = a.degree + b.degree
    out = {}
    for ka, ea in a.terms.items():
        for kb, eb in b.terms.items():
            sign, key = _sort_sign(ka + kb)
            if not sign:
                continue
            t = ea * eb if sign > 0 else -(ea * eb)
            out[key] = out[key] + t if key in out else t
    return DifferentialForm(a.vars, a.coords, degree, out)


def exterior_derivative(a):
    out = {}
    for key, e in a.terms.items():
        for k, name in enumerate(a.coords):
            if k in key:
                continue
            de = e.diff(name)
            if not de:
                continue
            sign, new = _sort_sign((k,) + key)
            t = de if sign > 0 else -de
            out[new] = out[new] + t if new in out else t
    return DifferentialForm(a.vars, a.coords, a.degree + 1, out)


def interior_product(X, a):
    if a.degree == 0:
        raise ValueError("interior product of a 0-form is undefined")
    if X.coords != a.coords or X.vars != a.vars:
        raise ValueError("vector field and form live on different ambient spaces")
    out = {}
    for key, e in a.terms.items():
        for j, k in enumerate(key):
            comp = X.comps.get(a.coords[k])
            if comp is None:
                continue
            t = comp * e
            if j % 2:
                t = -t
            new = key[:j] + key[j + 1:]
            out[new] = out[new] + t if new in out else t
    return DifferentialForm(a.vars, a.coords, a.degree - 1, out)


def differential(f, coords):
    """Exact 1-form ``df`` over ``coords``."""
    return exterior_derivative(DifferentialForm.function(f, coords))


# ---------------------------------------------------------------------------
# distributions


class Distribution:
    """Span of linearly independent vector fields on a constraint surface."""

    def __init__(self, generators, context=(), vars=None, coords=None):
        generators = list(generators)
        if generators:
            vars = generators[0].vars
            coords = generators[0].coords
            for g in generators:
                g_ok = g.coords == coords and g.vars == vars
                if not g_ok:
                    raise ValueError("generators live on different ambient spaces")
        if vars is None or coords is None:
            raise ValueError("an empty distribution needs vars and coords")
        self.vars = vars
        self.coords = tuple(coords)
        self.context = tuple(context)
        self.generators = generators
        if generators:
            M = SymMatrix([g.as_list() for g in generators], vars)
            if M.rank() != len(generators):
                raise ValueError("distribution generators are linearly dependent")

    @classmethod
    def full(cls, vars, coords, context=()):
        return cls([VectorField.basis(vars, coords, c) for c in coords], context, vars, coords)

    @property
    def dim(self):
        return len(self.generators)

    def reducer(self):
        if not self.context:
            return _identity
        return chart_for(self.context, self.vars).reduce

    def spans_same(self, other, reduce=None):
        """Equal spans over the function field (mutual rank test)."""
        reduce = reduce or _identity
        if self.dim != other.dim:
            return False
        if not self.generators:
            return True
        rows = [[reduce(e) for e in g.as_list()] for g in self.generators + other.generators]
        return SymMatrix(rows, self.vars).rank() == self.dim

    def contains(self, X, reduce=None):
        reduce = reduce or _identity
        rows = [[reduce(e) for e in g.as_list()] for g in self.generators]
        base = SymMatrix(rows, self.vars).rank() if rows else 0
        rows.append([reduce(e) for e in X.as_list()])
        return SymMatrix(rows, self.vars).rank() == base

    def __iter__(self):
        return iter(self.generators)

    def __len__(self):
        return len(self.generators)

    def __repr__(self):
        return "Distribution<" + ", ".join(str(g) for g in self.generators) + ">"


def _combine(ambient, coeff_vectors, reduce):
    out = []
    for cvec in coeff_vectors:
        acc = None
        for c, g in zip(cvec, ambient.generators):
            if not c:
                continue
            term = g.scale(c)
            acc = term if acc is None else acc + term
        out.append(acc.map(reduce))
    return out


def tangent_distribution(constraints, vars, coords, reduce=None):
    """Joint kernel of the differentials of ``constraints`` on their zero set."""
    constraints = tuple(constraints)
    coords = tuple(coords)
    if reduce is None:
        reduce = chart_for(constraints, vars).reduce if constraints else _identity
    if not constraints:
        return Distribution.full(vars, coords)
    M = SymMatrix([[reduce(c.diff(x)) for x in coords] for c in constraints], vars)
    gens = [VectorField.from_list(vars, coords, v) for v in nullspace(M)]
    return Distribution(gens, constraints, vars, coords)


def _pairing(form):
    if form.degree == 2:
        return lambda w, v: form.evaluate(w, v)
    if form.degree == 1:
        deta = exterior_derivative(form)
        return lambda w, v: deta.evaluate(w, v) + form.evaluate(w) * form.evaluate(v)
    raise ValueError("pairing needs a 2-form (symplectic) or a 1-form (contact)")


def orthogonal_complement(D, form, ambient=None, reduce=None):
    """Right orthogonal of ``D`` inside ``ambient``.

    ``form`` of degree 2 pairs by ``w, v -> form(w, v)``; a 1-form ``eta``
    pairs by ``w, v -> d eta(w, v) + eta(w) eta(v)``. The result is every
    ``v`` in ``ambient`` (default: all coordinate directions) with
    ``pairing(w, v) == 0`` for each generator ``w`` of ``D``.
    """
    if ambient is None:
        ambient = Distribution.full(D.vars, D.coords, D.context)
    if reduce is None:
        reduce = D.reducer() if D.context else ambient.reducer()
    pair = _pairing(form)
    if not ambient.generators:
        return Distribution([], D.context, D.vars, D.coords)
    if not D.generators:
        return Distribution([g.map(reduce) for g in ambient.generators], D.context, D.vars, D.coords)
    M = SymMatrix([[reduce(pair(w, a)) for a in ambient.generators] for w in D.generators], D.vars)
    gens = _combine(ambient, nullspace(M), reduce)
    return Distribution(gens, D.context or ambient.context, D.vars, D.coords)


def form_kernel(forms, ambient, reduce=None):
    """Vectors ``v`` of ``ambient`` annihilated by every given form.

    A 2-form contributes ``form(w, v) = 0`` for all ``w`` in ``ambient``;
    a 1-form contributes ``form(v) = 0``. Passing ``[eta, d eta]`` yields
    the characteristic distribution of ``eta``.
    """
    if isinstance(forms, DifferentialForm):
        forms = [forms]
    reduce = reduce or ambient.reducer()
    rows = []
    for form in forms:
        if form.degree == 1:
            rows.append([reduce(form.evaluate(a)) for a in ambient.generators])
        elif form.degree == 2:
            for w in ambient.generators:
                rows.append([reduce(form.evaluate(w, a)) for a in ambient.generators])
        else:
            raise ValueError("form_kernel handles 1- and 2-forms")
    if not ambient.generators:
        return Distribution([], ambient.context, ambient.vars, ambient.coords)
    M = SymMatrix(rows, ambient.vars)
    gens = _combine(ambient, nullspace(M), reduce)
    return Distribution(gens, ambient.context, ambient.vars, ambient.coords)


def pullback_to_surface(a, solved):
    """Pull ``a`` back along the parameterisation ``x_elim = solved[x_elim]``.

    Coefficients are substituted and each ``d x_elim`` is replaced by the
    differential of its solved expression. The result lives on the
    surviving coordinates.
    """
    solved = dict(solved)
    for name in solved:
        if name not in a.coords:
            raise ValueError(f"{name} is not an ambient coordinate")
    # resolve chains, rejecting cycles
    for _ in range(len(solved) + 1):
        changed = False
        for k, v in list(solved.items()):
            hits = [n for n in v.free_vars() if n in solved]
            if k in v.free_vars():
                raise ValueError(f"solved bindings are cyclic at {k}")
            if hits:
                solved[k] = v.subs({n: solved[n] for n in hits})
                changed = True
        if not changed:
            break
    else:
        raise ValueError("solved bindings are cyclic")
    coords = tuple(c for c in a.coords if c not in solved)
    vars = a.vars
    one_forms = []
    for c in a.coords:
        if c in solved:
            one_forms.append(differential(solved[c], coords))
        else:
            one_forms.append(DifferentialForm.differential(c, vars, coords))
    out = DifferentialForm(vars, coords, a.degree)
    for key, e in a.terms.items():
        term = DifferentialForm.function(e.subs(solved) if solved else e, coords)
        for k in key:
            term = wedge(term, one_forms[k])
        out = out + term
    return out
