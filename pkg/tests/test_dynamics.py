import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from constraint_forge.constraints import classify, stabilize_dirac_bergmann, stabilize_geometric
from constraint_forge.dynamics import (
    Trajectory,
    drift_report,
    equations_of_motion,
    evaluate_at,
    integrate,
    total_hamiltonian,
)
from constraint_forge.mechanics import LagrangianSystem, PhaseSpace, legendre_analyze, poisson_bracket

S4 = PhaseSpace(4)
C2 = PhaseSpace(2, "contact")
P = S4.parse
Q = C2.parse


def pipeline(system, leg, constraints=None):
    space = system.space
    if constraints is None:
        constraints = stabilize_dirac_bergmann(leg.H0, leg.primaries, space)
    cl = classify(constraints, space)
    ht = total_hamiltonian(leg.H0, cl, space)
    return cl, ht, equations_of_motion(ht, cl, space)


@pytest.fixture(scope="module")
def eom1(ex1):
    return pipeline(*ex1)


@pytest.fixture(scope="module")
def eom2_two(ex2):
    """Contact example on the two-constraint set ``{p1 - p2, 1 - z}``."""
    return pipeline(*ex2, constraints=[Q("p1 - p2"), Q("1 - z")])


@pytest.fixture(scope="module")
def eom2_full(ex2):
    system, leg = ex2
    return pipeline(system, leg, stabilize_geometric(leg.H0, leg.primaries, system.space))


# -- total Hamiltonian ---------------------------------------------------------------------


def test_first_example_total_hamiltonian(eom1):
    _, ht, _ = eom1
    assert ht.base == P("(1/2)*(p3^2 + p4^2 - 2*q1*p3 - 2*q4^2)")
    assert ht.terms == [("lam1", P("p1")), ("lam2", P("p3"))]
    assert ht.expr == P("(1/2)*(p3^2 + p4^2 - 2*q1*p3 - 2*q4^2) + lam1*p1 + lam2*p3")


def test_contact_total_hamiltonian(eom2_two):
    _, ht, _ = eom2_two
    assert ht.expr == Q("(1/2)*p1^2 - q1 - q2*z + u1*(p1 - p2) + u2*(1 - z)")


def test_total_hamiltonian_without_constraints():
    system = LagrangianSystem.from_text("(1/2)*v1^2 + q1^2", 1)
    leg = legendre_analyze(system)
    cl = classify([], system.space)
    ht = total_hamiltonian(leg.H0, cl, system.space)
    assert ht.expr == leg.H0 and ht.terms == []


def test_first_class_terms_vanish_on_surface(eom1):
    cl, ht, eom = eom1
    assert eom.reduce(ht.expr) == eom.reduce(ht.base)


# -- equations of motion -------------------------------------------------------------------


def test_first_example_equations(eom1):
    _, _, eom = eom1
    r = eom.rhs
    assert r["q1"] == P("lam1")
    assert r["q4"] == P("(1/2)*p4")
    assert r["p4"] == P("q4")
    assert r["p3"].is_zero()
    assert r["p1"].is_zero()
    assert r["q3"] == P("-q1 + (1/2)*p4 + lam2")
    assert set(eom.pivots) == {"p2", "q2"}
    assert eom.multipliers_used() == ["lam1", "lam2"]


def test_contact_general_evolution(eom2_two):
    """The evolution of an arbitrary f splits into the Poisson bracket plus z and Euler terms."""
    _, ht, eom = eom2_two
    H = ht.expr
    zcoef = Q("(1/2)*p1^2 + q1 + q2*z - u2*(1 - z)")
    pcoef = Q("q2 + u2")
    for text in ("q1", "q2", "p1", "p2", "z", "q1*p2^2 + z^3", "p1*q2*z - q1^2", "p1*p2/(1 + z^2)"):
        f = Q(text)
        expected = poisson_bracket(f, H, C2) + zcoef * f.diff("z") + pcoef * (Q("p1") * f.diff("p1") + Q("p2") * f.diff("p2"))
        assert eom.field(f) == expected, text


def test_contact_per_variable_rates(eom2_two):
    # by hand: q1' = H_p1 = p1 + u1 and z' = p.H_p - H, weakly 1/2 p1^2 + q1 + q2
    _, _, eom = eom2_two
    assert eom.rhs["q1"] == eom.reduce(Q("p1 + u1"))
    assert eom.rhs["z"] == eom.reduce(Q("(1/2)*p1^2 + q1 + q2"))
    assert eom.field["q1"] == Q("p1 + u1")


def test_free_particle_equations():
    S = PhaseSpace(1)
    cl = classify([], S)
    eom = equations_of_motion(total_hamiltonian(S.parse("(1/2)*p1^2"), cl, S), cl, S)
    assert eom.rhs == {"q1": S.parse("p1"), "p1": S.zero()}


def test_tangency_first_example(eom1):
    _, _, eom = eom1
    for c in eom.constraints:
        assert eom.time_derivative(c).is_zero()
        assert eom.rhs_derivative(c).is_zero()


def test_tangency_full_contact_chain(eom2_full):
    cl, ht, eom = eom2_full
    assert ht.expr == Q("p2^2")
    assert all(v.is_zero() for v in eom.tangency_residuals().values())
    assert all(eom.rhs_derivative(c).is_zero() for c in eom.constraints)
    # Herglotz: s' = 1 + s*q2 with q2 = -2/s gives s' = -1
    assert eom.rhs["p2"] == Q("-1")


def test_two_constraint_contact_set_drifts(eom2_two):
    _, _, eom = eom2_two
    res = eom.tangency_residuals()
    assert res["-z + 1"] == Q("-(1/2)*p2^2 - q1 - q2")


# -- evaluation and integration ------------------------------------------------------------


def test_evaluate_at_examples():
    assert evaluate_at(P("(1/2)*p4"), {"p4": 2.0}) == 1.0
    assert evaluate_at(P("q4"), {"q4": 0.0}) == 0.0
    assert evaluate_at(Q("(1/2)*p1^2 - q1 - q2*z"), {"p1": 1.0, "q1": 0.0, "q2": 0.0, "z": 1.0}) == 0.5
    with pytest.raises(KeyError):
        evaluate_at(P("q1 + q2"), {"q1": 1.0})
    with pytest.raises(ZeroDivisionError):
        evaluate_at(P("1/q1"), {"q1": 0.0})


def test_first_example_integration(eom1):
    _, _, eom = eom1
    traj = integrate(eom, {"q4": 1.0}, {"lam1": 0, "lam2": 0}, 1.0, 1e-3)
    assert len(traj.times) == 1001
    assert abs(traj.column("q4")[-1] - math.cosh(1 / math.sqrt(2))) < 1e-6
    assert abs(traj.column("p4")[-1] - math.sqrt(2) * math.sinh(1 / math.sqrt(2))) < 1e-6
    np.testing.assert_allclose(traj.column("q2"), -traj.column("q4"), atol=0)
    rep = drift_report(traj, eom.constraints)
    assert rep.overall < 1e-8
    assert all(v >= 0 for _, v in rep.per_constraint)


def test_gauge_multiplier_moves_gauge_variables(eom1):
    _, _, eom = eom1
    traj = integrate(eom, {"q4": 1.0}, {"lam1": 2, "lam2": "0"}, 0.5, 0.1)
    np.testing.assert_allclose(traj.column("q1"), 2 * traj.times, atol=1e-12)


def test_zero_hamiltonian_is_constant():
    S = PhaseSpace(2)
    cl = classify([], S)
    eom = equations_of_motion(total_hamiltonian(S.zero(), cl, S), cl, S)
    traj = integrate(eom, {"q1": 0.3, "p2": -1.5}, {}, 1.0, 0.25)
    assert np.all(traj.states == traj.states[0])
    assert traj.point(4) == {"q1": 0.3, "q2": 0.0, "p1": 0.0, "p2": -1.5}


def test_single_step(eom1):
    _, _, eom = eom1
    traj = integrate(eom, {"q4": 1.0}, {"lam1": 0, "lam2": 0}, 0.5, 0.5)
    assert list(traj.times) == [0.0, 0.5]


def test_integration_errors(eom1):
    _, _, eom = eom1
    with pytest.raises(ValueError, match="unbound"):
        integrate(eom, {"q4": 1.0}, {"lam1": 0}, 1.0, 0.1)
    with pytest.raises(ValueError, match="violates"):
        integrate(eom, {"q4": 1.0, "p3": 0.5}, {"lam1": 0, "lam2": 0}, 1.0, 0.1)
    with pytest.raises(ValueError, match="disagrees"):
        integrate(eom, {"q4": 1.0, "q2": 0.0}, {"lam1": 0, "lam2": 0}, 1.0, 0.1)
    with pytest.raises(ValueError, match="multiple"):
        integrate(eom, {"q4": 1.0}, {"lam1": 0, "lam2": 0}, 1.0, 0.3)
    with pytest.raises(ValueError, match="unknown"):
        integrate(eom, {"w": 1.0}, {"lam1": 0, "lam2": 0}, 1.0, 0.1)
    with pytest.raises(ValueError):
        integrate(eom, {"q4": 1.0}, {"lam1": 0, "lam2": 0}, -1.0, 0.1)


def test_drift_on_manual_trajectory():
    names = list(S4.coords)
    states = np.zeros((3, 8))
    states[:, names.index("p3")] = [0.0, 0.1, -0.4]
    traj = Trajectory(np.array([0.0, 0.1, 0.2]), names, states, {})
    rep = drift_report(traj, [P("p3"), P("p1")])
    assert rep.per_constraint == [("p3", 0.4), ("p1", 0.0)]
    assert rep.overall == 0.4
    assert rep.to_dict()["overall"] == 0.4


def test_constant_trajectory_has_zero_drift():
    names = list(S4.coords)
    states = np.tile(np.array([0.0, -1.0, 0.0, 1.0, 0.0, 0.5, 0.0, -0.5]), (4, 1))
    traj = Trajectory(np.arange(4) * 0.1, names, states, {})
    assert drift_report(traj, [P("p1"), P("p3"), P("p2 - p3 + p4"), P("q2 + q4")]).overall == 0.0


def test_csv_export(eom1, tmp_path):
    _, _, eom = eom1
    traj = integrate(eom, {"q4": 1.0}, {"lam1": 0, "lam2": 0}, 0.2, 0.1)
    text = traj.to_csv()
    lines = text.splitlines()
    assert lines[0] == "t,q1,q2,q3,q4,p1,p2,p3,p4"
    assert len(lines) == 4
    assert lines[1].startswith("0.0,")
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    assert path.read_text() == text
    buf = io.StringIO()
    traj.to_csv(buf)
    assert buf.getvalue() == text


@settings(max_examples=25)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_constraints_hold_along_random_gauge(eom1, q4, p4, lam):
    """Second-class constraints are reconstructed exactly; first-class ones stay at zero."""
    _, _, eom = eom1
    traj = integrate(eom, {"q4": q4, "p4": p4}, {"lam1": lam, "lam2": lam}, 0.2, 0.05)
    assert drift_report(traj, eom.constraints).overall < 1e-12
