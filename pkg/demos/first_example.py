"""Walk through the almost-regular system on R^4.

L = 1/2 ((q1 + v2 + v3)^2 + (v4 - v2)^2 - 2 q2 q4)

Run with ``python3 demos/first_example.py``.
"""
import math

from constraint_forge import (
    LagrangianSystem,
    classify,
    drift_report,
    equations_of_motion,
    integrate,
    legendre_analyze,
    stabilize_dirac_bergmann,
    stabilize_geometric_symplectic,
    total_hamiltonian,
)

system = LagrangianSystem.from_text("(1/2)*((q1 + v2 + v3)^2 + (v4 - v2)^2 - 2*q2*q4)", 4)
space = system.space
leg = legendre_analyze(system)
print("Hessian rank:", leg.rank)
print("primary constraints:", ", ".join(map(str, leg.primaries)))
print("H0 =", leg.H0)

# Both engines should land on the same surface.
db = stabilize_dirac_bergmann(leg.H0, leg.primaries, space)
geo = stabilize_geometric_symplectic(leg.H0, leg.primaries, space)
print("\nalgebraic engine:")
for c in db.constraints:
    print(f"  stage {c.stage}: {c.expr}")
for k, v in db.multiplier_fixings.items():
    print(f"  fixed {k} = {v}")
print("geometric engine agrees:", db.generates_same_ideal(geo))

cl = classify(db, space)
print("\nfirst-class:", ", ".join(map(str, cl.first)))
print("second-class:", ", ".join(map(str, cl.second)))
print("C^-1 =", cl.Cinverse.tolist())

ht = total_hamiltonian(leg.H0, cl, space)
eom = equations_of_motion(ht, cl, space)
print("\nH_T =", ht)
for x, rhs in eom.rhs.items():
    print(f"  d{x}/dt = {rhs}")

# Gauge choice lam1 = lam2 = 0; q4 then obeys q4'' = q4 / 2.
traj = integrate(eom, {"q4": 1.0}, {"lam1": 0, "lam2": 0}, 1.0, 1e-3)
q4 = traj.column("q4")[-1]
print(f"\nq4(1) = {q4:.15f}   cosh(1/sqrt 2) = {math.cosh(1 / math.sqrt(2)):.15f}")
print(f"max constraint drift: {drift_report(traj, eom.constraints).overall:.2e}")
