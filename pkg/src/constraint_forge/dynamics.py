"""Total Hamiltonian, equations of motion and fixed-step integration."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .constraints import weak_reduce
from .exterior import VectorField, chart_for
from .mechanics import DiracBracket, JacobiStructure
from .symexpr import Expr

__all__ = [
    "TotalHamiltonian",
    "EquationsOfMotion",
    "Trajectory",
    "DriftReport",
    "total_hamiltonian",
    "equations_of_motion",
    "evaluate_at",
    "integrate",
    "drift_report",
    "INIT_TOLERANCE",
]

INIT_TOLERANCE = 1e-12


@dataclass
class TotalHamiltonian:
    base: Expr
    terms: list  # (multiplier name, first-class constraint)

    @property
    def expr(self):
        out = self.base
        for lam, om in self.terms:
            out = out + self.base.vars[lam] * om
        return out

    @property
    def multipliers(self):
        return [lam for lam, _ in self.terms]

    def __str__(self):
        parts = [str(self.base)]
        for lam, om in self.terms:
            parts.append(f"{lam}*({om})")
        return " + ".join(parts)


def total_hamiltonian(H0, classification, space, chi_strongly_imposed=True):
    """``H0`` (reduced by the second-class set when requested) plus ``lam_a Omega^a``."""
    base = weak_reduce(H0, classification.second) if chi_strongly_imposed and classification.second else H0
    names = space.multipliers
    if len(classification.first) > len(names):
        raise ValueError("not enough multiplier names for the first-class constraints")
    return TotalHamiltonian(base, list(zip(names, classification.first)))


@dataclass
class EquationsOfMotion:
    """Evolution of every phase variable on the final constraint surface.

    ``field`` holds the exact bracket-generated vector field; ``rhs`` its
    components weakly reduced on the final surface. Variables eliminated
    by the second-class constraints (``pivots``) get right-hand sides from
    the chain rule on their solved expressions.
    """

    space: object
    kind: str
    hamiltonian: TotalHamiltonian
    field: VectorField
    rhs: dict
    constraints: list
    chi: list
    pivots: dict = field(default_factory=dict)

    def reduce(self, e):
        return weak_reduce(e, self.constraints)

    def free_variables(self):
        return [c for c in self.space.coords if c not in self.pivots]

    def time_derivative(self, f, reduced=True):
        """``df/dt`` along the exact field (``reduced`` applies weak reduction)."""
        out = self.field(f)
        return self.reduce(out) if reduced else out

    def rhs_derivative(self, f):
        """``df/dt`` by the chain rule over the reduced right-hand sides."""
        acc = self.space.zero()
        for x, e in self.rhs.items():
            d = f.diff(x)
            if d and e:
                acc = acc + d * e
        return self.reduce(acc)

    def tangency_residuals(self):
        return {str(c): self.time_derivative(c) for c in self.constraints}

    def multipliers_used(self):
        names = set(self.space.multipliers)
        used = set()
        for e in self.rhs.values():
            used.update(x for x in e.free_vars() if x in names)
        return [m for m in self.space.multipliers if m in used]


def equations_of_motion(ht, classification, space):
    """``x' = {x, H_T}_D`` (symplectic) or ``x' = {x, H_T}_DJ - x R_DJ(H_T)`` (contact)."""
    chi = list(classification.second)
    constraints = list(classification.constraints)
    constraints = [c.expr if hasattr(c, "expr") else c for c in constraints]
    vars = space.vars
    H = ht.expr
    if space.contact:
        js = JacobiStructure(space, chi, classification.Cinverse)
        comps = {c: js.evolve(vars[c], H) for c in space.coords}
    else:
        db = DiracBracket(chi, space, classification.Cinverse)
        comps = {c: db(vars[c], H) for c in space.coords}
    vf = VectorField(vars, space.coords, comps)
    red = lambda e: weak_reduce(e, constraints)  # noqa: E731
    pivots = dict(chart_for(tuple(chi), vars).solved) if chi else {}
    rhs = {}
    for c in space.coords:
        if c not in pivots:
            rhs[c] = red(vf[c])
    for x, sol in pivots.items():
        acc = vars.zero()
        for y in sol.free_vars():
            d = sol.diff(y)
            if y in rhs and rhs[y]:
                acc = acc + d * rhs[y]
        rhs[x] = red(acc)
    rhs = {c: rhs[c] for c in space.coords}
    return EquationsOfMotion(space, space.kind, ht, vf, rhs, constraints, chi, pivots)


def evaluate_at(e, point):
    """Float value of ``e``; constants are folded exactly first."""
    return e.evaluate(point)


@dataclass
class Trajectory:
    times: np.ndarray
    names: list
    states: np.ndarray  # samples x variables
    multipliers: dict

    def column(self, name):
        return self.states[:, self.names.index(name)]

    def point(self, k):
        return dict(zip(self.names, (float(x) for x in self.states[k])))

    def to_csv(self, target=None):
        """Header ``t,<names>``; one row per sample. Returns the text when no target is given."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + list(self.names))
        for t, row in zip(self.times, self.states):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in row])
        text = buf.getvalue()
        if target is None:
            return text
        if hasattr(target, "write"):
            target.write(text)
        else:
            with open(target, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


@dataclass
class DriftReport:
    per_constraint: list  # (constraint text, max |value|)
    overall: float

    def to_dict(self):
        return {"per_constraint": [{"constraint": c, "max_abs": v} for c, v in self.per_constraint], "overall": self.overall}


def _as_expr(value, vars):
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return vars.parse(value)
    if isinstance(value, float):
        return vars.const(Fraction(repr(value)))
    return vars.const(value)


def _compile(exprs, order, label):
    index = {n: i for i, n in enumerate(order)}
    body = ", ".join(e.to_python(index) for e in exprs)
    src = f"def {label}(x):\n    return [{body}]\n"
    scope = {}
    exec(compile(src, f"<{label}>", "exec"), scope)  # noqa: S102 - generated from canonical polynomials
    return scope[label]


def integrate(eom, init, multipliers, t_end, dt):
    """Classical RK4 on the free variables; pivot variables are reconstructed.

    ``init`` maps variable names to floats (unlisted free variables start
    at 0). ``multipliers`` must bind every multiplier the equations use.
    """
    space = eom.space
    vars = space.vars
    if dt <= 0 or t_end <= 0:
        raise ValueError("t_end and dt must be positive")
    steps = round(t_end / dt)
    if steps < 1 or abs(steps * dt - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise ValueError("t_end must be an integer multiple of dt")
    bindings = {k: _as_expr(v, vars) for k, v in dict(multipliers or {}).items()}
    for k in bindings:
        if k not in space.multipliers:
            raise ValueError(f"{k} is not a multiplier")
    missing = [m for m in eom.multipliers_used() if m not in bindings]
    if missing:
        raise ValueError(f"unbound multiplier(s): {', '.join(missing)}")
    for k, e in bindings.items():
        stray = [x for x in e.free_vars() if x not in space.coords]
        if stray:
            raise ValueError(f"binding for {k} uses non-phase variables {stray}")
    unknown = [k for k in init if k not in space.coords]
    if unknown:
        raise ValueError(f"unknown state variable(s): {', '.join(unknown)}")

    free = eom.free_variables()
    names = list(space.coords)
    rhs = [eom.rhs[c].subs(bindings) if bindings else eom.rhs[c] for c in free]
    f = _compile(rhs, free, "rhs")
    piv_names = list(eom.pivots)
    recon = _compile([eom.pivots[p] for p in piv_names], free, "recon") if piv_names else None

    x0 = np.array([float(init.get(c, 0.0)) for c in free])
    full0 = _assemble(x0, free, piv_names, recon, names)
    for p in piv_names:
        if p in init and abs(float(init[p]) - full0[names.index(p)]) > INIT_TOLERANCE:
            raise ValueError(f"initial {p} = {init[p]} disagrees with the second-class constraints")
    point = dict(zip(names, full0))
    for c in eom.constraints:
        val = c.evaluate(point)
        if abs(val) > INIT_TOLERANCE:
            raise ValueError(f"initial state violates constraint {c} (value {val:.3e})")

    def F(x):
        return np.array(f(x), dtype=float)

    xs = np.empty((steps + 1, len(free)))
    xs[0] = x0
    x = x0
    h = float(dt)
    for k in range(steps):
        k1 = F(x)
        k2 = F(x + 0.5 * h * k1)
        k3 = F(x + 0.5 * h * k2)
        k4 = F(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        xs[k + 1] = x
    states = np.array([_assemble(row, free, piv_names, recon, names) for row in xs])
    times = np.arange(steps + 1) * h
    return Trajectory(times, names, states, {k: str(v) for k, v in bindings.items()})


def _assemble(x, free, piv_names, recon, names):
    values = dict(zip(free, (float(v) for v in x)))
    if recon is not None:
        values.update(zip(piv_names, recon(list(x))))
    return np.array([values[n] for n in names])


def drift_report(traj, constraints):
    rows = []
    for c in constraints:
        worst = 0.0
        for k in range(len(traj.times)):
            v = abs(c.evaluate(traj.point(k)))
            if not math.isfinite(v):
                worst = math.inf
                break
            worst = max(worst, v)
        rows.append((str(c), worst))
    overall = max((v for _, v in rows), default=0.0)
    return DriftReport(rows, overall)
