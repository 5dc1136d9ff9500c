"""The pre-contact Lagrangian L = 1/2 (v1 + v2)^2 + q1 + q2 z.

Shows where the geometric algorithm stops depending on where the
orthogonal complements are taken, and checks the result against the
Herglotz equations.

Run with ``python3 demos/contact_example.py``.
"""
from constraint_forge import (
    LagrangianSystem,
    cartan_forms,
    classify,
    contact_class,
    equations_of_motion,
    legendre_analyze,
    stabilize_dirac_bergmann,
    stabilize_geometric_contact,
    total_hamiltonian,
)

system = LagrangianSystem.from_text("(1/2)*(v1 + v2)^2 + q1 + q2*z", 2, "contact")
space = system.space
leg = legendre_analyze(system)
eta = cartan_forms(system).eta
print("eta_L =", eta, f"(class {contact_class(eta)})")
print("primary:", ", ".join(map(str, leg.primaries)))
print("H0 =", leg.H0)


def show(title, constraints):
    cl = classify(constraints, space)
    ht = total_hamiltonian(leg.H0, cl, space)
    eom = equations_of_motion(ht, cl, space)
    print(f"\n{title}")
    print("  constraints:", ", ".join(str(c) for c in constraints.exprs()))
    print("  labels:", cl.labels)
    print("  H_T =", ht.expr)
    for c, r in eom.tangency_residuals().items():
        print(f"  d({c})/dt on the surface = {r}")


# Orthogonals inside TP_k only: the chain stops after 1 - z.
show("orthogonals inside the current surface", stabilize_geometric_contact(leg.H0, leg.primaries, space, ambient="current"))

# Orthogonals inside TP_0: two more constraints appear and everything is preserved.
geo = stabilize_geometric_contact(leg.H0, leg.primaries, space)
show("orthogonals inside the primary surface", geo)
db = stabilize_dirac_bergmann(leg.H0, leg.primaries, space)
print("\nalgebraic engine:", ", ".join(str(c) for c in db.exprs()))
print("  fixings:", {k: str(v) for k, v in db.multiplier_fixings.items()})
print("  same surface as the geometric chain:", db.generates_same_ideal(geo))

# Herglotz: with s = v1 + v2 both equations give s' - 1 = s q2 and s' - z = s q2,
# so z = 1; then z' = L = 0 gives 1/2 s^2 + q1 + q2 = 0, and its derivative
# s s' + s = s (s q2 + 2) = 0.
print("\nHerglotz chain: 1 - z, s^2 + 2 q1 + 2 q2, s (s q2 + 2)   with s = p2")
