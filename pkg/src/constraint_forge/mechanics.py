"""Phase spaces, the singular Legendre transform, brackets and contact structures."""
from __future__ import annotations

from dataclasses import dataclass, field

from .exterior import (
    DifferentialForm,
    SymMatrix,
    VectorField,
    exterior_derivative,
    interior_product,
    nullspace,
    wedge,
)
from .symexpr import Expr, VarTable, primitive

__all__ = [
    "PhaseSpace",
    "LagrangianSystem",
    "LegendreResult",
    "CartanForms",
    "JacobiStructure",
    "cartan_forms",
    "legendre_analyze",
    "poisson_bracket",
    "jacobi_bracket",
    "bracket",
    "lambda_pairing",
    "sharp_lambda",
    "DiracBracket",
    "dirac_bracket",
    "dirac_jacobi_bracket",
    "contact_class",
    "reeb_field",
    "contact_hamiltonian_vector_field",
    "hamiltonian_vector_field",
    "deformed_jacobi_structure",
    "SingularBracketMatrix",
]

KINDS = ("symplectic", "contact")


class PhaseSpace:
    """Variables of ``T*Q`` (symplectic) or ``T*Q x R`` (contact) plus velocities and multipliers.

    The variable table also carries the velocities ``v1..vn`` of the
    Lagrangian side and ``2n`` (or ``2n+1``) multiplier names, ``lam*`` for
    symplectic and ``u*`` for contact systems.
    """

    def __init__(self, n, kind="symplectic", multiplier_prefix=None):
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
        self.n = n
        self.kind = kind
        self.vars = VarTable.for_system(n, contact=self.contact, multiplier_prefix=multiplier_prefix)
        self.q = tuple(f"q{i}" for i in range(1, n + 1))
        self.p = tuple(f"p{i}" for i in range(1, n + 1))
        self.v = tuple(f"v{i}" for i in range(1, n + 1))
        self.z = "z" if self.contact else None
        self.coords = self.q + self.p + ((self.z,) if self.contact else ())
        self.tq_coords = self.q + ((self.z,) if self.contact else ()) + self.v
        self.multipliers = self.vars.by_role("multiplier")

    @property
    def contact(self):
        return self.kind == "contact"

    @property
    def dim(self):
        return len(self.coords)

    def __eq__(self, other):
        return isinstance(other, PhaseSpace) and self.vars == other.vars and self.kind == other.kind

    def __hash__(self):
        return hash((self.vars, self.kind))

    def __repr__(self):
        return f"PhaseSpace(n={self.n}, kind={self.kind!r})"

    def __getitem__(self, name):
        return self.vars[name]

    def parse(self, text):
        return self.vars.parse(text)

    def zero(self):
        return self.vars.zero()

    def canonical_form(self):
        """``dq^i ^ dp_i`` for symplectic spaces, ``dz - p_i dq^i`` for contact ones."""
        if not self.contact:
            terms = {(self.coords.index(q), self.coords.index(p)): 1 for q, p in zip(self.q, self.p)}
            return DifferentialForm(self.vars, self.coords, 2, terms)
        terms = {(self.coords.index(q),): -self.vars[p] for q, p in zip(self.q, self.p)}
        terms[(self.coords.index("z"),)] = self.vars.one()
        return DifferentialForm(self.vars, self.coords, 1, terms)

    def reeb(self):
        return VectorField.basis(self.vars, self.coords, "z")


class LagrangianSystem:
    """Lagrangian at most quadratic in the velocities."""

    def __init__(self, L, space):
        if L.vars != space.vars:
            raise ValueError("Lagrangian is not expressed over the phase-space variable table")
        allowed = set(space.q) | set(space.v) | ({"z"} if space.contact else set())
        stray = [x for x in L.free_vars() if x not in allowed]
        if stray:
            raise ValueError(f"Lagrangian may only use q, v{', z' if space.contact else ''}; found {', '.join(stray)}")
        for i, a in enumerate(space.v):
            da = L.diff(a)
            for j, b in enumerate(space.v[i:], i):
                dab = da.diff(b)
                for c in space.v[j:]:
                    if dab.diff(c):
                        raise ValueError("Lagrangian must be at most quadratic in the velocities")
        self.L = L
        self.space = space

    @classmethod
    def from_text(cls, text, n, kind="symplectic"):
        space = PhaseSpace(n, kind)
        return cls(space.parse(text), space)

    @property
    def n(self):
        return self.space.n

    @property
    def kind(self):
        return self.space.kind


@dataclass(frozen=True)
class CartanForms:
    theta: DifferentialForm
    omega: DifferentialForm
    energy: Expr
    eta: DifferentialForm | None = None


def cartan_forms(system):
    """Local Cartan 1- and 2-forms, energy and (contact case) ``eta_L``."""
    sp = system.space
    vars, coords = sp.vars, sp.tq_coords
    terms = {(coords.index(q),): system.L.diff(v) for q, v in zip(sp.q, sp.v)}
    theta = DifferentialForm(vars, coords, 1, terms)
    omega = -exterior_derivative(theta)
    energy = vars.zero()
    for v in sp.v:
        energy = energy + vars[v] * system.L.diff(v)
    energy = energy - system.L
    eta = None
    if sp.contact:
        eta = DifferentialForm(vars, coords, 1, {(coords.index("z"),): 1}) - theta
    return CartanForms(theta, omega, energy, eta)


@dataclass
class LegendreResult:
    momenta: list
    hessian: SymMatrix
    rank: int
    primaries: list
    H0: Expr
    velocity_solution: dict
    energy: Expr
    momentum_rows: list = field(default_factory=list)


def legendre_analyze(system):
    """Singular Legendre transform of a velocity-quadratic Lagrangian.

    Writing ``p = W v + a``, every null vector ``u`` of ``W`` gives the
    primary constraint ``u . (p - a)``. Velocities are solved from a
    maximal independent set of rows of ``W`` (rows with fewer nonzero
    entries first, ties by index) on the pivot columns of those rows;
    the remaining velocities are set to zero. ``H0`` is the energy with
    this solution substituted.
    """
    sp = system.space
    vars = sp.vars
    L = system.L
    momenta = [L.diff(v) for v in sp.v]
    W = SymMatrix([[m.diff(v) for v in sp.v] for m in momenta], vars)
    for row in W.rows:
        for e in row:
            if any(x in sp.v for x in e.free_vars()):
                raise AssertionError("Hessian depends on velocities")
    rank = W.rank()
    at_rest = {v: vars.zero() for v in sp.v}
    offsets = [m.subs(at_rest) for m in momenta]
    shifted = [vars[p] - a for p, a in zip(sp.p, offsets)]

    primaries = []
    for u in nullspace(W, left=True):
        c = vars.zero()
        for ui, si in zip(u, shifted):
            if ui:
                c = c + ui * si
        c = primitive(c)
        if c.is_constant():
            raise AssertionError("null direction of the Hessian produced a constant constraint")
        primaries.append(c)

    order = sorted(range(sp.n), key=lambda i: (sum(1 for e in W.rows[i] if e), i))
    rows = []
    for i in order:
        if not any(W.rows[i]):
            continue
        trial = rows + [i]
        if SymMatrix([W.rows[k] for k in trial], vars).rank() == len(trial):
            rows = trial
        if len(rows) == rank:
            break
    rows.sort()
    solution = dict(at_rest)
    if rows:
        sub = SymMatrix([W.rows[k] for k in rows], vars)
        _, piv_cols = sub.echelon()
        A = SymMatrix([[W.rows[k][c] for c in piv_cols] for k in rows], vars)
        Ainv = A.inverse()
        rhs = [shifted[k] for k in rows]
        for r, c in enumerate(piv_cols):
            acc = vars.zero()
            for t, b in enumerate(rhs):
                if Ainv.rows[r][t]:
                    acc = acc + Ainv.rows[r][t] * b
            solution[sp.v[c]] = acc

    energy = cartan_forms(system).energy
    H0 = energy.subs(solution)
    if any(x in sp.v for x in H0.free_vars()):
        raise AssertionError("velocities survive in H0")
    back = {p: m for p, m in zip(sp.p, momenta)}
    if H0.subs(back) != energy:
        raise AssertionError("H0 does not pull back to the energy")
    for c in primaries:
        if c.subs(back):
            raise AssertionError(f"primary constraint {c} does not vanish on the Legendre image")
    velocity_solution = {v: e for v, e in solution.items() if e or v not in at_rest}
    return LegendreResult(momenta, W, rank, primaries, H0, velocity_solution, energy, rows)


# ---------------------------------------------------------------------------
# brackets


def poisson_bracket(f, g, space):
    acc = space.zero()
    for q, p in zip(space.q, space.p):
        fq, gp = f.diff(q), g.diff(p)
        if fq and gp:
            acc = acc + fq * gp
        fp, gq = f.diff(p), g.diff(q)
        if fp and gq:
            acc = acc - fp * gq
    return acc


def _euler_p(f, space):
    """``p_i df/dp_i``."""
    acc = space.zero()
    for p in space.p:
        d = f.diff(p)
        if d:
            acc = acc + space[p] * d
    return acc


def jacobi_bracket(f, g, space):
    """``{f,g} + (p.g_p - g) f_z - (p.f_p - f) g_z`` with the Reeb field ``d/dz``."""
    if not space.contact:
        raise ValueError("the Jacobi bracket needs a contact phase space")
    acc = poisson_bracket(f, g, space)
    fz, gz = f.diff("z"), g.diff("z")
    if fz:
        acc = acc + (_euler_p(g, space) - g) * fz
    if gz:
        acc = acc - (_euler_p(f, space) - f) * gz
    return acc


def bracket(f, g, space):
    """Poisson bracket on symplectic spaces, Jacobi bracket on contact ones."""
    return jacobi_bracket(f, g, space) if space.contact else poisson_bracket(f, g, space)


def lambda_pairing(f, g, space):
    """``Lambda(df, dg)`` for the canonical contact bivector."""
    acc = poisson_bracket(f, g, space)
    fz, gz = f.diff("z"), g.diff("z")
    for p in space.p:
        fp, gp = f.diff(p), g.diff(p)
        t = fz * gp - fp * gz
        if t:
            acc = acc + space[p] * t
    return acc


def sharp_lambda(chi, space):
    """Vector field ``Lambda(., d chi)``, so that ``X(h) = Lambda(dh, d chi)``."""
    vars = space.vars
    chiz = chi.diff("z")
    comps = {}
    for q, p in zip(space.q, space.p):
        comps[q] = chi.diff(p)
        comps[p] = -chi.diff(q) - vars[p] * chiz
    comps["z"] = _euler_p(chi, space)
    return VectorField(vars, space.coords, comps)


class SingularBracketMatrix(ZeroDivisionError):
    """The bracket matrix of the second-class set is not invertible."""


class DiracBracket:
    """Dirac (symplectic) or Dirac-Jacobi (contact) bracket for a second-class set.

    ``Cinverse`` may be supplied (e.g. the weakly reduced inverse from a
    classification); otherwise the exact inverse of ``[{chi_i, chi_j}]``
    is used.
    """

    def __init__(self, chi, space, Cinverse=None):
        self.chi = list(chi)
        self.space = space
        vars = space.vars
        if not self.chi:
            self.C = self.Cinverse = None
            return
        self.C = SymMatrix([[bracket(a, b, space) for b in self.chi] for a in self.chi], vars)
        if Cinverse is None:
            try:
                Cinverse = self.C.inverse()
            except ZeroDivisionError as exc:
                raise SingularBracketMatrix(f"bracket matrix of {[str(c) for c in self.chi]} is singular") from exc
        self.Cinverse = Cinverse

    def __call__(self, f, g):
        space = self.space
        out = bracket(f, g, space)
        if not self.chi:
            return out
        left = [bracket(f, c, space) for c in self.chi]
        right = [bracket(c, g, space) for c in self.chi]
        for i, a in enumerate(left):
            if not a:
                continue
            for j, b in enumerate(right):
                cij = self.Cinverse.rows[i][j]
                if b and cij:
                    out = out - a * cij * b
        return out


def dirac_bracket(f, g, chi, space, Cinverse=None):
    if space.contact:
        raise ValueError("use dirac_jacobi_bracket on contact spaces")
    return DiracBracket(chi, space, Cinverse)(f, g)


def dirac_jacobi_bracket(f, g, chi, space, Cinverse=None):
    if not space.contact:
        raise ValueError("the Dirac-Jacobi bracket needs a contact phase space")
    return DiracBracket(chi, space, Cinverse)(f, g)


# ---------------------------------------------------------------------------
# contact structures


def contact_class(eta):
    """Class ``2k+1`` of a nonzero 1-form: ``k`` is maximal with ``eta ^ (d eta)^k != 0``."""
    if eta.degree != 1 or eta.is_zero():
        raise ValueError("contact_class needs a nonzero 1-form")
    deta = exterior_derivative(eta)
    k = 0
    top = eta
    power = None
    while True:
        power = deta if power is None else wedge(power, deta)
        if power.is_zero():
            break
        nxt = wedge(eta, power)
        if nxt.is_zero():
            break
        k += 1
        top = nxt
    return 2 * k + 1


def reeb_field(eta, space=None, default_z=True):
    """Solve ``i_R d eta = 0``, ``i_R eta = 1``.

    Returns ``(R, unique)``. When the solution is not unique (pre-contact
    ``eta``) the field ``d/dz / eta(d/dz)`` is returned with ``unique``
    false; ``default_z=False`` raises instead.
    """
    vars, coords = eta.vars, eta.coords
    deta = exterior_derivative(eta)
    basis = [VectorField.basis(vars, coords, c) for c in coords]
    rows = [[deta.evaluate(ei, ej) for ei in basis] for ej in basis]
    rows.append([eta.evaluate(ei) for ei in basis])
    M = SymMatrix(rows, vars)
    rhs = [vars.zero()] * len(coords) + [vars.one()]
    aug = SymMatrix([r + [-b] for r, b in zip(rows, rhs)], vars)
    if M.rank() == len(coords):
        sol = [v for v in nullspace(aug) if v[-1]]
        if len(sol) != 1:
            raise ValueError("Reeb conditions are inconsistent")
        v = sol[0]
        v = [e / v[-1] for e in v[:-1]]
        return VectorField.from_list(vars, coords, v), True
    if not default_z:
        raise ValueError("Reeb field is not unique for a pre-contact form")
    if "z" not in coords:
        raise ValueError("no z direction available for the default Reeb field")
    c = eta.evaluate(VectorField.basis(vars, coords, "z"))
    if not c:
        raise ValueError("eta(d/dz) = 0: no admissible default Reeb field")
    return VectorField(vars, coords, {"z": vars.one() / c}), False


def contact_hamiltonian_vector_field(H, space):
    """``A^i = H_p``, ``B_i = -(H_q + p H_z)``, ``C = p.H_p - H``."""
    if not space.contact:
        raise ValueError("contact Hamiltonian vector fields need a contact phase space")
    vars = space.vars
    Hz = H.diff("z")
    comps = {}
    for q, p in zip(space.q, space.p):
        comps[q] = H.diff(p)
        comps[p] = -(H.diff(q) + vars[p] * Hz)
    comps["z"] = _euler_p(H, space) - H
    return VectorField(vars, space.coords, comps)


class JacobiStructure:
    """Jacobi structure, possibly deformed by a second-class set.

    The bivector is never stored; ``bracket`` routes through the
    Dirac-Jacobi bracket and ``reeb`` is the deformed Reeb field.
    """

    def __init__(self, space, chi=(), Cinverse=None, reeb=None):
        if not space.contact:
            raise ValueError("Jacobi structures need a contact phase space")
        self.space = space
        self.chi = list(chi)
        self.dirac = DiracBracket(self.chi, space, Cinverse)
        base = reeb if reeb is not None else space.reeb()
        self.base_reeb = base
        R = base
        if self.chi:
            Cinv = self.dirac.Cinverse
            for i, ci in enumerate(self.chi):
                for j, cj in enumerate(self.chi):
                    coeff = Cinv.rows[i][j]
                    if not coeff:
                        continue
                    rj = base(cj)
                    if not rj:
                        continue
                    corr = base.scale(ci) - sharp_lambda(ci, space)
                    R = R + corr.scale(coeff * rj)
        self.reeb = R

    def bracket(self, f, g):
        return self.dirac(f, g)

    def pairing(self, f, g):
        """``Lambda(df, dg) = {f,g} - f R(g) + g R(f)``."""
        return self.bracket(f, g) - f * self.reeb(g) + g * self.reeb(f)

    def bivector(self):
        """Components ``Lambda(dx_i, dx_j)`` for ``i < j`` (nonzero only)."""
        vars, coords = self.space.vars, self.space.coords
        out = {}
        for i, a in enumerate(coords):
            for b in coords[i + 1:]:
                e = self.pairing(vars[a], vars[b])
                if e:
                    out[(a, b)] = e
        return out

    def evolve(self, g, H):
        """``X_H(g) = {g, H} - g R(H)``."""
        return self.bracket(g, H) - g * self.reeb(H)

    def hamiltonian_vector_field(self, f):
        vars = self.space.vars
        return VectorField(vars, self.space.coords, {c: self.evolve(vars[c], f) for c in self.space.coords})


def deformed_jacobi_structure(chi, space, Cinverse=None, reeb=None):
    return JacobiStructure(space, chi, Cinverse, reeb)


def hamiltonian_vector_field(f, space, chi=(), Cinverse=None):
    """Vector field generating ``g -> {g, f}_D`` (symplectic) or the contact evolution."""
    vars = space.vars
    if space.contact:
        return JacobiStructure(space, chi, Cinverse).hamiltonian_vector_field(f)
    db = DiracBracket(chi, space, Cinverse)
    return VectorField(vars, space.coords, {c: db(vars[c], f) for c in space.coords})
