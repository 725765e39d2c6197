"""Topological waveguide superlattices: spectra, invariants, biphoton
propagation, entanglement analysis and disorder ensembles."""

from .errors import (ConvergenceError, InterfaceWarning, NumericalError,
                     TransitionError, ValidationError)
from .lattice import (CouplingSequence, InterfaceLatticeSpec, PhysicalGeometry,
                      UnitCellSpec, build_hamiltonian, build_interface_sequence)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "InterfaceWarning", "NumericalError", "TransitionError",
    "ValidationError", "CouplingSequence", "InterfaceLatticeSpec", "PhysicalGeometry",
    "UnitCellSpec", "build_hamiltonian", "build_interface_sequence", "__version__",
]
