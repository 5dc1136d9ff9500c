"""Constraint generation, weak reduction, classification and coisotropy checks.

Three engines build the chain of constraint surfaces:

* :func:`stabilize_dirac_bergmann` demands that every constraint be
  preserved by the primary Hamiltonian ``H_P = H0 + lam_a phi^a``;
* :func:`stabilize_geometric_symplectic` pairs ``dH0`` with the kernel of
  the pulled-back symplectic form, then with symplectic orthogonals;
* :func:`stabilize_geometric_contact` does the same with
  ``alpha = dH0 - (R(H0) + H0) eta`` and the contact pairing
  ``(w, v) -> d eta(w, v) + eta(w) eta(v)``.

Weak equality is decided by linear pivot elimination (see
:class:`~constraint_forge.exterior.SurfaceChart`).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .exterior import (
    Distribution,
    InconsistentConstraints,
    SymMatrix,
    UnsolvableConstraint,
    chart_for,
    exterior_derivative,
    form_kernel,
    nullspace,
    orthogonal_complement,
    tangent_distribution,
)
from .mechanics import DiracBracket, bracket
from .symexpr import Expr, primitive

__all__ = [
    "ORIGINS",
    "STATUSES",
    "Constraint",
    "ConstraintLedger",
    "ClassificationResult",
    "CoisotropyResult",
    "weak_reduce",
    "canonical_constraint",
    "stabilize_dirac_bergmann",
    "stabilize_geometric_symplectic",
    "stabilize_geometric_contact",
    "stabilize_geometric",
    "default_stage_cap",
    "classify",
    "coisotropy_check",
    "UnsolvableConstraint",
    "InconsistentConstraints",
]

ORIGINS = ("legendre", "consistency", "geometric-kernel", "geometric-tangency")
CLASSES = ("unclassified", "first", "second")
STATUSES = ("stabilized", "inconsistent", "exceeded-iterations")
AMBIENTS = ("primary", "current")


@dataclass(frozen=True)
class Constraint:
    expr: Expr
    stage: int
    origin: str
    classification: str = "unclassified"

    def __post_init__(self):
        if self.expr.is_zero():
            raise ValueError("a constraint must be a nonzero function")
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")
        if self.classification not in CLASSES:
            raise ValueError(f"unknown classification {self.classification!r}")
        if (self.stage == 0) != (self.origin == "legendre"):
            raise ValueError("stage 0 is reserved for primary (legendre) constraints")


@dataclass
class ConstraintLedger:
    constraints: list
    multiplier_fixings: dict
    status: str
    stages_run: int
    engine: str = "algebraic"
    H0: Expr | None = None
    residual: Expr | None = None
    diagnostics: list = field(default_factory=list)
    frozen: bool = False

    def exprs(self):
        return [c.expr for c in self.constraints]

    def at_stage(self, k):
        return [c.expr for c in self.constraints if c.stage == k]

    def primaries(self):
        return self.at_stage(0)

    def secondaries(self):
        return [c.expr for c in self.constraints if c.stage > 0]

    def reduce(self, e):
        return weak_reduce(e, self.exprs())

    def generates_same_ideal(self, other):
        """Mutual weak reduction: each set vanishes on the other's surface."""
        a, b = self.exprs(), other.exprs()
        return all(not weak_reduce(x, b) for x in a) and all(not weak_reduce(x, a) for x in b)


def weak_reduce(e, constraints):
    """Eliminate the pivots of ``constraints`` from ``e``."""
    constraints = tuple(constraints)
    if not constraints:
        return e
    return chart_for(constraints, e.vars).reduce(e)


def canonical_constraint(e):
    """Primitive integer numerator with a fixed sign; see :func:`~constraint_forge.symexpr.primitive`."""
    return primitive(e.numerator())


def default_stage_cap(space):
    return 2 * space.dim + 1


class _Builder:
    """Mutable working state shared by the engines."""

    def __init__(self, primaries, space, engine, H0):
        self.space = space
        self.engine = engine
        self.H0 = H0
        self.items = []
        self.diagnostics = []
        self.status = "stabilized"
        self.residual = None
        for c in primaries:
            c = canonical_constraint(c)
            if c.is_constant():
                raise ValueError(f"primary constraint {c} is constant")
            if not self._known(c):
                self.items.append(Constraint(c, 0, "legendre"))

    def exprs(self):
        return [c.expr for c in self.items]

    def _known(self, c):
        return any(c == k.expr for k in self.items)

    def reduce(self, e):
        return weak_reduce(e, self.exprs())

    def offer(self, residual, stage, origin, source):
        """Dispatch a reduced residual: discard, inconsistency or new constraint."""
        r = self.reduce(residual)
        if r.is_zero():
            return False
        if r.is_constant():
            self.status = "inconsistent"
            self.residual = r
            self.diagnostics.append(f"stage {stage}: condition from {source} reduces to {r} != 0")
            return False
        c = canonical_constraint(r)
        if self._known(c):
            return False
        self.items.append(Constraint(c, stage, origin))
        try:
            chart_for(tuple(self.exprs()), c.vars)
        except UnsolvableConstraint:
            self.items.pop()
            raise
        return True

    def ledger(self, stages_run, fixings=None):
        exprs = self.exprs()
        frozen = False
        if exprs and self.status == "stabilized":
            jac = SymMatrix([[self.reduce(c.diff(x)) for x in self.space.coords] for c in exprs], self.space.vars)
            frozen = jac.rank() == self.space.dim
        return ConstraintLedger(
            list(self.items),
            dict(fixings or {}),
            self.status,
            stages_run,
            self.engine,
            self.H0,
            self.residual,
            list(self.diagnostics),
            frozen,
        )


def _consistency(c, H, space):
    """Time derivative of ``c`` generated by ``H`` (contact: ``{c,H} - c R(H)``)."""
    out = bracket(c, H, space)
    if space.contact:
        out = out - c * H.diff("z")
    return out


def stabilize_dirac_bergmann(H0, primaries, space, max_stages=None):
    """Dirac-Bergmann consistency loop on the primary Hamiltonian.

    Every round recomputes the time derivative of every constraint known
    so far. A residual that reduces to zero is discarded; a nonzero
    constant makes the system inconsistent; a residual containing
    multipliers is solved for its lowest-indexed multiplier; anything
    else is a new constraint of the current stage. The loop ends after a
    round without new constraints. Secondary constraints get no
    multipliers of their own. On contact spaces the derivative is
    ``{c, H_P}_J - c R(H_P)`` with ``R = d/dz``.
    """
    b = _Builder(primaries, space, "algebraic", H0)
    if not b.items:
        return b.ledger(0)
    cap = default_stage_cap(space) if max_stages is None else max_stages
    vars = space.vars
    mults = space.multipliers
    if len(b.items) > len(mults):
        raise ValueError("more primary constraints than multiplier names")
    HP = H0
    for lam, c in zip(mults, b.exprs()):
        HP = HP + vars[lam] * c
    fixings = {}
    stage = 0
    while True:
        stage += 1
        if stage > cap:
            b.status = "exceeded-iterations"
            b.diagnostics.append(f"no stabilization within {cap} stages")
            return b.ledger(cap, fixings)
        added = False
        for item in list(b.items):
            r = _consistency(item.expr, HP, space)
            if fixings:
                r = r.subs(fixings)
            r = b.reduce(r)
            if r.is_zero():
                continue
            present = [m for m in mults if m in r.free_vars()]
            if present:
                lam = present[0]
                num = r.numerator()
                if num.degree(lam) != 1:
                    raise ValueError(f"condition {r} is not linear in {lam}")
                a = num.diff(lam)
                sol = b.reduce(-(num - a * vars[lam]) / a)
                fixings = {k: b.reduce(v.subs({lam: sol})) for k, v in fixings.items()}
                fixings[lam] = sol
                continue
            if b.offer(r, stage, "consistency", f"d/dt({item.expr})"):
                added = True
            if b.status == "inconsistent":
                return b.ledger(stage, fixings)
        if not added:
            fixings = {k: b.reduce(v) for k, v in fixings.items()}
            return b.ledger(stage, fixings)


def _primary_tangent(b, primaries):
    """``TM0`` restricted to the current surface."""
    chart = chart_for(tuple(b.exprs()), b.space.vars)
    return tangent_distribution(primaries, b.space.vars, b.space.coords, reduce=chart.reduce)


def _geometric(H0, primaries, space, max_stages, ambient, pairing_form, residual, kernel_forms):
    if ambient not in AMBIENTS:
        raise ValueError(f"ambient must be one of {AMBIENTS}")
    b = _Builder(primaries, space, "geometric", H0)
    if not b.items:
        return b.ledger(0)
    cap = default_stage_cap(space) if max_stages is None else max_stages
    prim = tuple(b.exprs())
    vars, coords = space.vars, space.coords
    stage = 0
    while True:
        stage += 1
        if stage > cap:
            b.status = "exceeded-iterations"
            b.diagnostics.append(f"no stabilization within {cap} stages")
            return b.ledger(cap)
        current = tuple(b.exprs())
        reduce = chart_for(current, vars).reduce
        TM0 = _primary_tangent(b, prim)
        if stage == 1:
            gens = form_kernel(kernel_forms, TM0, reduce)
            origin = "geometric-kernel"
        else:
            TMk = tangent_distribution(current, vars, coords, reduce=reduce)
            amb = TMk if ambient == "current" else TM0
            gens = orthogonal_complement(TMk, pairing_form, ambient=amb, reduce=reduce)
            origin = "geometric-tangency"
        added = False
        for X in gens:
            if b.offer(residual(X), stage, origin, f"<alpha, {X}>"):
                added = True
            if b.status == "inconsistent":
                return b.ledger(stage)
        if not added:
            return b.ledger(stage)


def stabilize_geometric_symplectic(H0, primaries, space, max_stages=None, ambient="primary"):
    """Presymplectic constraint algorithm.

    Stage 1 pairs ``dH0`` with ``ker omega_0`` (vectors of ``TM0`` that are
    ``omega``-orthogonal to all of ``TM0``). Stage ``k+1`` pairs ``dH0``
    with the orthogonal of ``TM_k``, taken inside ``TM0`` restricted to
    ``M_k`` (``ambient="primary"``) or inside ``TM_k`` itself
    (``ambient="current"``).
    """
    if space.contact:
        raise ValueError("use stabilize_geometric_contact on contact spaces")
    omega = space.canonical_form()
    return _geometric(H0, primaries, space, max_stages, ambient, omega, lambda X: X(H0), omega)


def stabilize_geometric_contact(H0, primaries, space, max_stages=None, ambient="primary", reeb=None):
    """Pre-contact constraint algorithm.

    With ``alpha = dH0 - (R(H0) + H0) eta`` (``R = d/dz`` unless given),
    stage 1 pairs ``alpha`` with the characteristic distribution
    ``ker eta ^ ker d eta`` inside ``TP0``; later stages pair it with the
    right orthogonal of ``TP_k`` under ``(w, v) -> d eta(w, v) + eta(w) eta(v)``,
    taken inside ``TP0`` (``ambient="primary"``) or ``TP_k`` (``"current"``).
    """
    if not space.contact:
        raise ValueError("use stabilize_geometric_symplectic on symplectic spaces")
    eta = space.canonical_form()
    R = reeb if reeb is not None else space.reeb()
    coeff = R(H0) + H0

    def residual(X):
        return X(H0) - coeff * eta.evaluate(X)

    return _geometric(H0, primaries, space, max_stages, ambient, eta, residual, [eta, exterior_derivative(eta)])


def stabilize_geometric(H0, primaries, space, max_stages=None, ambient="primary"):
    if space.contact:
        return stabilize_geometric_contact(H0, primaries, space, max_stages, ambient)
    return stabilize_geometric_symplectic(H0, primaries, space, max_stages, ambient)


# ---------------------------------------------------------------------------
# classification


@dataclass
class ClassificationResult:
    constraints: list
    first: list
    second: list
    Jmatrix: SymMatrix
    Cmatrix: SymMatrix | None
    Cinverse: SymMatrix | None
    kernel_vectors: list
    complement_vectors: list
    labels: list

    def dirac(self, space):
        return DiracBracket(self.second, space, self.Cinverse)


def _exprs_of(ledger):
    return ledger.exprs() if isinstance(ledger, ConstraintLedger) else list(ledger)


def classify(ledger, space):
    """Split the final constraints into first- and second-class families.

    ``J[a][b] = {phi_a, phi_b}`` (Jacobi bracket on contact spaces) is
    weakly reduced; each left null vector ``v`` gives a first-class
    ``Omega = v . phi``. Standard basis vectors, in constraint order, that
    raise the rank of the null basis select the second-class ``chi``.
    """
    if isinstance(ledger, ConstraintLedger) and ledger.status != "stabilized":
        raise ValueError(f"cannot classify a ledger with status {ledger.status}")
    phis = _exprs_of(ledger)
    vars = space.vars
    red = lambda e: weak_reduce(e, phis)  # noqa: E731
    N = len(phis)
    if N == 0:
        return ClassificationResult([], [], [], SymMatrix([[0]], vars), None, None, [], [], [])
    J = SymMatrix([[red(bracket(a, c, space)) for c in phis] for a in phis], vars)
    kernel = nullspace(J, left=True)
    first = []
    for v in kernel:
        acc = vars.zero()
        for coef, phi in zip(v, phis):
            if coef:
                acc = acc + coef * phi
        first.append(canonical_constraint(acc))
    zero, one = vars.zero(), vars.one()
    complement, chosen = [], []
    basis = [list(v) for v in kernel]
    rank = len(basis)
    for k in range(N):
        e = [one if i == k else zero for i in range(N)]
        trial = basis + [e]
        if SymMatrix(trial, vars).rank() > rank:
            basis = trial
            rank += 1
            complement.append(e)
            chosen.append(k)
        if rank == N:
            break
    second = [phis[k] for k in chosen]
    C = Cinv = None
    if second:
        C = SymMatrix([[red(bracket(a, c, space)) for c in second] for a in second], vars)
        try:
            Cinv = C.inverse().map(red)
        except ZeroDivisionError as exc:
            raise ValueError("second-class bracket matrix is singular; classification is inconsistent") from exc
    for om in first:
        for phi in phis:
            if red(bracket(om, phi, space)):
                raise ValueError(f"first-class candidate {om} does not weakly commute with {phi}")
    labels = ["first" if not any(row) else "second" for row in J.rows]
    constraints = phis
    if isinstance(ledger, ConstraintLedger):
        constraints = [replace(c, classification=lab) for c, lab in zip(ledger.constraints, labels)]
    return ClassificationResult(constraints, first, second, J, C, Cinv, kernel, complement, labels)


@dataclass
class CoisotropyResult:
    ok: bool
    witness: tuple | None = None
    reason: str = ""

    def __bool__(self):
        return self.ok


def coisotropy_check(first, chi, space):
    """Involutivity of the first-class family on the second-class surface.

    With ``X_a(g) = {g, Omega_a}_D``, checks that every Dirac bracket
    ``{Omega_a, Omega_b}_D`` vanishes weakly and that every commutator
    ``[X_a, X_b]`` lies weakly in the span of the ``X_a``.
    """
    if space.contact:
        raise ValueError("coisotropy is checked on symplectic spaces")
    first, chi = list(first), list(chi)
    surface = first + chi
    red = lambda e: weak_reduce(e, surface)  # noqa: E731
    db = DiracBracket(chi, space)
    vars, coords = space.vars, space.coords
    for i, a in enumerate(first):
        for b in first[i + 1:]:
            if red(db(a, b)):
                return CoisotropyResult(False, (a, b), f"{{{a}, {b}}}_D does not vanish on the surface")
    fields = []
    for a in first:
        fields.append({c: db(vars[c], a) for c in coords})
    span = [[red(f[c]) for c in coords] for f in fields]
    base = SymMatrix(span, vars).rank() if span else 0
    for i, Xa in enumerate(fields):
        for j in range(i + 1, len(fields)):
            Xb = fields[j]
            comm = []
            for c in coords:
                e = vars.zero()
                for x in coords:
                    if Xa[x] and Xb[c].diff(x):
                        e = e + Xa[x] * Xb[c].diff(x)
                    if Xb[x] and Xa[c].diff(x):
                        e = e - Xb[x] * Xa[c].diff(x)
                comm.append(red(e))
            if any(comm) and SymMatrix(span + [comm], vars).rank() > base:
                return CoisotropyResult(False, (first[i], first[j]), "commutator leaves the span of the gauge fields")
    return CoisotropyResult(True)
