"""Why orthogonals are taken inside the primary surface.

For L = 1/2 v1^2 + q1 q2 the full chain is p2, q1, p1, q2 and the
surface is a point. Taking orthogonals inside the current surface
misses the last constraint.

Run with ``python3 demos/ambient_counterexample.py``.
"""
from constraint_forge import (
    LagrangianSystem,
    legendre_analyze,
    stabilize_dirac_bergmann,
    stabilize_geometric_symplectic,
)

system = LagrangianSystem.from_text("(1/2)*v1^2 + q1*q2", 2)
leg = legendre_analyze(system)
space = system.space

for label, ledger in [
    ("algebraic", stabilize_dirac_bergmann(leg.H0, leg.primaries, space)),
    ("geometric, primary ambient", stabilize_geometric_symplectic(leg.H0, leg.primaries, space)),
    ("geometric, current ambient", stabilize_geometric_symplectic(leg.H0, leg.primaries, space, ambient="current")),
]:
    cs = ", ".join(f"{c.expr} (stage {c.stage})" for c in ledger.constraints)
    print(f"{label:28s} {cs}" + ("   [frozen]" if ledger.frozen else ""))
