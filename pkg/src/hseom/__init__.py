"""Hierarchical Schrodinger equations of motion for a two-level system
coupled to an XXZ spin chain that is itself attached to a harmonic thermostat."""

__version__ = "0.1.0"

from .bath import BathExpansion, BathSpec, bessel_coefficients, corr_exact, reconstruct_corr, sdf_eval
from .hierarchy import HierarchySpace, enumerate_hierarchy, neighbor
from .propagator import AWFSet, HSEOMPropagator, init_awfs, insert_operator, reduced_density
from .spin_model import (CouplingKind, OperatorRep, PauliString, SpinSystemSpec, apply_operator,
                         build_coupling_operator, build_system_hamiltonian, exact_diagonalize)

__all__ = [
    "__version__",
    "AWFSet",
    "BathExpansion",
    "BathSpec",
    "CouplingKind",
    "HSEOMPropagator",
    "HierarchySpace",
    "OperatorRep",
    "PauliString",
    "SpinSystemSpec",
    "apply_operator",
    "bessel_coefficients",
    "build_coupling_operator",
    "build_system_hamiltonian",
    "corr_exact",
    "enumerate_hierarchy",
    "exact_diagonalize",
    "init_awfs",
    "insert_operator",
    "neighbor",
    "reconstruct_corr",
    "reduced_density",
    "sdf_eval",
]
