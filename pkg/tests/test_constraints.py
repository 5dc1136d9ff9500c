import pytest
import sympy as sp

from constraint_forge.constraints import (
    Constraint,
    UnsolvableConstraint,
    canonical_constraint,
    classify,
    coisotropy_check,
    default_stage_cap,
    stabilize_dirac_bergmann,
    stabilize_geometric,
    stabilize_geometric_contact,
    stabilize_geometric_symplectic,
    weak_reduce,
)
from constraint_forge.mechanics import LagrangianSystem, PhaseSpace, legendre_analyze
from oracles import random_systems, to_sympy

S4 = PhaseSpace(4)
C2 = PhaseSpace(2, "contact")
P = S4.parse
Q = C2.parse


def run_both(system, leg, **kw):
    db = stabilize_dirac_bergmann(leg.H0, leg.primaries, system.space, **kw)
    geo = stabilize_geometric(leg.H0, leg.primaries, system.space, **kw)
    return db, geo


def herglotz_constraints():
    """Constraint chain of the contact example from its Herglotz equations.

    For ``L = 1/2 s^2 + q1 + q2 z`` with ``s = v1 + v2`` and ``z' = L`` the
    two Herglotz equations read ``s' - L_qi = s L_z``. Their difference is
    algebraic; each further condition is its time derivative along the
    equations, with ``s' = 1 + s q2`` and ``q1' + q2' = s``.
    """
    q1, q2, z, s = sp.symbols("q1 q2 z s")
    L = s ** 2 / 2 + q1 + q2 * z
    Lz = sp.diff(L, z)
    eq1 = sp.diff(L, q1) + s * Lz  # value of s' from the q1 equation
    eq2 = sp.diff(L, q2) + s * Lz  # value of s' from the q2 equation
    c1 = sp.factor(eq1 - eq2)  # 1 - z
    sdot = eq1
    # d/dt(1 - z) = -z' = -L, evaluated on z = 1
    c2 = sp.expand(-L.subs(z, 1))
    # d/dt c2 with z = 1: q1' + q2' = s
    c3 = sp.factor(sp.diff(c2, s) * sdot.subs(z, 1) + (-1) * s)
    p2 = sp.Symbol("p2")
    return [sp.sympify(c).subs(s, p2) for c in (c1, c2, c3)]


# -- weak reduction and normalization -------------------------------------------------------


def test_weak_reduce_examples():
    chi = [P("p2 - p3 + p4"), P("q2 + q4")]
    assert weak_reduce(P("q2*p4 + q4*p4"), chi).is_zero()
    assert weak_reduce(P("q2"), chi) == P("-q4")
    assert weak_reduce(P("q1"), []) == P("q1")


def test_canonical_constraint():
    assert canonical_constraint(Q("(z - 1)/2")) == Q("1 - z")
    assert canonical_constraint(P("(p2 - p1)/(q1^2 + 1)")) == P("p1 - p2")


def test_constraint_record_rules():
    with pytest.raises(ValueError):
        Constraint(P("0"), 1, "consistency")
    with pytest.raises(ValueError):
        Constraint(P("p1"), 1, "legendre")
    with pytest.raises(ValueError):
        Constraint(P("p1"), 0, "legendre", "maybe")


# -- first example ---------------------------------------------------------------------------


def test_first_example_dirac_bergmann(ex1):
    system, leg = ex1
    db = stabilize_dirac_bergmann(leg.H0, leg.primaries, system.space)
    assert db.status == "stabilized"
    assert db.exprs() == [P("p1"), P("p2 - p3 + p4"), P("p3"), P("q2 + q4")]
    assert [c.stage for c in db.constraints] == [0, 0, 1, 1]
    assert db.multiplier_fixings == {"lam2": P("-(1/2)*p4")}
    assert db.stages_run == 2


def test_first_example_geometric(ex1):
    system, leg = ex1
    geo = stabilize_geometric_symplectic(leg.H0, leg.primaries, system.space)
    assert geo.status == "stabilized"
    assert geo.exprs() == [P("p1"), P("p2 - p3 + p4"), P("p3"), P("q2 + q4")]
    assert [c.origin for c in geo.constraints] == ["legendre", "legendre", "geometric-kernel", "geometric-kernel"]
    assert geo.stages_run == 2 and not geo.frozen


def test_first_example_classification(ex1):
    system, leg = ex1
    db = stabilize_dirac_bergmann(leg.H0, leg.primaries, system.space)
    cl = classify(db, system.space)
    assert cl.first == [P("p1"), P("p3")]
    assert cl.second == [P("p2 - p3 + p4"), P("q2 + q4")]
    assert cl.labels == ["first", "second", "first", "second"]
    assert cl.Cinverse.tolist() == [["0", "1/2"], ["-1/2", "0"]]
    assert [c.classification for c in cl.constraints] == cl.labels
    assert coisotropy_check(cl.first, cl.second, system.space)


def test_coisotropy_failure():
    S = PhaseSpace(2)
    res = coisotropy_check([S.parse("q1"), S.parse("p1")], [], S)
    assert not res and res.witness == (S.parse("q1"), S.parse("p1"))


def test_classify_rejects_unfinished_ledger(ex1):
    system, leg = ex1
    ledger = stabilize_dirac_bergmann(leg.H0, leg.primaries, system.space, max_stages=1)
    assert ledger.status == "exceeded-iterations"
    with pytest.raises(ValueError):
        classify(ledger, system.space)


# -- contact example --------------------------------------------------------------------------


def test_contact_example_restricted_ambient(ex2):
    system, leg = ex2
    geo = stabilize_geometric_contact(leg.H0, leg.primaries, system.space, ambient="current")
    assert geo.exprs() == [Q("p1 - p2"), Q("1 - z")]
    cl = classify(geo, system.space)
    assert cl.first == [Q("p1 - p2"), Q("1 - z")] and cl.second == []
    assert all(x.is_zero() for row in cl.Jmatrix.rows for x in row)


def test_two_element_set_is_not_preserved(ex2):
    system, leg = ex2
    # d/dt (1 - z) = -z' = -(p.H_p - H); on {p1 = p2, z = 1} this is nonzero
    H = leg.H0
    zdot = sum((system.space.vars[p] * H.diff(p) for p in system.space.p), Q("0")) - H
    assert weak_reduce(-zdot, [Q("p1 - p2"), Q("1 - z")]) == Q("-(1/2)*p2^2 - q1 - q2")


def test_contact_example_full_chain(ex2):
    system, leg = ex2
    geo = stabilize_geometric_contact(leg.H0, leg.primaries, system.space)
    db = stabilize_dirac_bergmann(leg.H0, leg.primaries, system.space)
    assert geo.exprs() == [Q("p1 - p2"), Q("1 - z"), Q("p2^2 + 2*q1 + 2*q2"), Q("q2*p2 + 2")]
    assert db.exprs()[:3] == geo.exprs()[:3]
    assert db.exprs()[3] == Q("q2*p2^2 + 2*p2")
    assert db.multiplier_fixings["u1"] == Q("2/p2^2")
    assert geo.generates_same_ideal(db)
    cl = classify(geo, system.space)
    assert cl.first == [] and cl.labels == ["second"] * 4


def test_contact_chain_matches_herglotz_oracle(ex2):
    system, leg = ex2
    geo = stabilize_geometric_contact(leg.H0, leg.primaries, system.space)
    ref = herglotz_constraints()
    got = [to_sympy(e) for e in geo.exprs()[1:]]
    p1, p2 = sp.symbols("p1 p2")
    for g, r in zip(got, ref):
        # equal up to a nonzero factor away from p2 = 0
        ratio = sp.cancel(sp.sympify(r) / g)
        assert ratio.free_symbols <= {p2} and ratio != 0


# -- counterexample and edge cases ---------------------------------------------------------


def test_counterexample_needs_primary_ambient():
    system = LagrangianSystem.from_text("(1/2)*v1^2 + q1*q2", 2)
    leg = legendre_analyze(system)
    S = system.space
    db, geo = run_both(system, leg)
    want = [S.parse(x) for x in ("p2", "q1", "p1", "q2")]
    assert db.exprs() == want and geo.exprs() == want
    assert db.frozen and geo.frozen
    cur = stabilize_geometric_symplectic(leg.H0, leg.primaries, S, ambient="current")
    assert S.parse("q2") not in cur.exprs()


def test_inconsistent_system():
    system = LagrangianSystem.from_text("(1/2)*v1^2 + q2", 2)
    leg = legendre_analyze(system)
    db, geo = run_both(system, leg)
    assert db.status == geo.status == "inconsistent"
    assert db.residual.is_constant() and geo.residual.is_constant()


def test_multiplier_fixed_system():
    system = LagrangianSystem.from_text("(1/2)*v1^2 + (1/2)*q2^2", 2)
    leg = legendre_analyze(system)
    db = stabilize_dirac_bergmann(leg.H0, leg.primaries, system.space)
    assert db.status == "stabilized"
    assert db.exprs() == [system.space.parse("p2"), system.space.parse("q2")]
    assert db.multiplier_fixings == {"lam1": system.space.parse("0")}


def test_regular_system_has_empty_ledger():
    system = LagrangianSystem.from_text("(1/2)*v1^2", 1)
    leg = legendre_analyze(system)
    db, geo = run_both(system, leg)
    assert db.exprs() == geo.exprs() == [] and db.status == "stabilized"


def test_nonlinear_constraint_is_reported():
    S = PhaseSpace(1)
    with pytest.raises(UnsolvableConstraint):
        stabilize_dirac_bergmann(S.parse("q1"), [S.parse("p1^2 - q1^2")], S)


def test_ambient_is_validated(ex1):
    system, leg = ex1
    with pytest.raises(ValueError):
        stabilize_geometric_symplectic(leg.H0, leg.primaries, system.space, ambient="everything")


def test_exceeded_cap_and_default(ex1):
    system, leg = ex1
    assert default_stage_cap(system.space) == 17
    geo = stabilize_geometric_symplectic(leg.H0, leg.primaries, system.space, max_stages=1)
    assert geo.status == "exceeded-iterations" and geo.stages_run == 1


# -- cross validation and invariants ------------------------------------------------------------


RANDOM = random_systems(12, seed=2024)


def test_enough_random_systems():
    assert len(RANDOM) >= 10


@pytest.mark.parametrize("idx", range(len(RANDOM)))
def test_engines_agree_on_random_systems(idx):
    text, system, leg = RANDOM[idx]
    primaries = list(leg.primaries)
    snapshot = [str(c) for c in primaries]
    db, geo = run_both(system, leg)
    assert [str(c) for c in primaries] == snapshot, "inputs were modified"
    assert db.status == geo.status, text
    if db.status != "stabilized":
        return
    assert db.generates_same_ideal(geo), text
    for ledger in (db, geo):
        stages = [c.stage for c in ledger.constraints]
        assert stages == sorted(stages)
        assert ledger.primaries() == [canonical_constraint(c) for c in leg.primaries]
    # running again from the final set adds nothing
    again = stabilize_geometric(leg.H0, geo.exprs(), system.space)
    assert again.status == "stabilized" and again.secondaries() == []
    again = stabilize_dirac_bergmann(leg.H0, db.exprs(), system.space)
    assert again.status == "stabilized" and again.secondaries() == []
    cl = classify(db, system.space)
    assert len(cl.first) + len(cl.second) == len(db.constraints)
    assert cl.Jmatrix.rank() == len(cl.second)
    for v in cl.kernel_vectors:
        for col in range(len(v)):
            acc = system.space.zero()
            for i, coef in enumerate(v):
                acc = acc + coef * cl.Jmatrix[i, col]
            assert db.reduce(acc).is_zero()


def test_regular_contact_lagrangian_has_no_constraints():
    system = LagrangianSystem.from_text("(1/2)*v1^2 - q1 - z", 1, "contact")
    leg = legendre_analyze(system)
    db, geo = run_both(system, leg)
    assert leg.primaries == [] and db.exprs() == geo.exprs() == []


def test_single_momentum_constraint_is_first_class():
    S = PhaseSpace(1)
    cl = classify([S.parse("p1")], S)
    assert cl.first == [S.parse("p1")] and cl.second == []


def test_abelian_momenta_are_coisotropic():
    S = PhaseSpace(2)
    assert coisotropy_check([S.parse("p1"), S.parse("p2")], [], S)
