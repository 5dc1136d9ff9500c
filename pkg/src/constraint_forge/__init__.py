"""Constraint analysis of singular Lagrangians in symplectic and contact mechanics.

Modules, bottom-up:

* :mod:`.symexpr` exact rational functions and the expression parser;
* :mod:`.exterior` forms, vector fields, exact linear algebra;
* :mod:`.mechanics` Legendre transform, brackets, contact structures;
* :mod:`.constraints` constraint algorithms and classification;
* :mod:`.dynamics` total Hamiltonian, equations of motion, integration;
* :mod:`.cli` system files, reports and the command line.
"""

__version__ = "0.1.0"

from .symexpr import Expr, ParseError, VarTable, parse_expr  # noqa: E402
from .mechanics import (  # noqa: E402
    LagrangianSystem,
    PhaseSpace,
    cartan_forms,
    contact_class,
    legendre_analyze,
)
from .constraints import (  # noqa: E402
    classify,
    coisotropy_check,
    stabilize_dirac_bergmann,
    stabilize_geometric,
    stabilize_geometric_contact,
    stabilize_geometric_symplectic,
    weak_reduce,
)
from .dynamics import drift_report, equations_of_motion, integrate, total_hamiltonian  # noqa: E402

__all__ = [
    "Expr",
    "ParseError",
    "VarTable",
    "parse_expr",
    "LagrangianSystem",
    "PhaseSpace",
    "cartan_forms",
    "contact_class",
    "legendre_analyze",
    "classify",
    "coisotropy_check",
    "stabilize_dirac_bergmann",
    "stabilize_geometric",
    "stabilize_geometric_contact",
    "stabilize_geometric_symplectic",
    "weak_reduce",
    "drift_report",
    "equations_of_motion",
    "integrate",
    "total_hamiltonian",
]
