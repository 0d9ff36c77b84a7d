"""Meshfree nonlocal vector calculus and the nonlocal Helmholtz-Hodge decomposition."""

__version__ = "0.1.0"

from .decomposition import (BoundaryCondition, DecompositionConfig, DecompositionResult,  # noqa: E402
                            IncompatibleDataError, decompose, verify_orthogonality)
from .geometry import Mode, NodeSet, PairStructure, Region, build_nodes, neighbor_pairs  # noqa: E402
from .kernels import Family, KernelSpec  # noqa: E402
from .operators import NonlocalOperators  # noqa: E402
from .solver import SolverConfig, SolverError  # noqa: E402

__all__ = [
    "BoundaryCondition", "DecompositionConfig", "DecompositionResult", "Family",
    "IncompatibleDataError", "KernelSpec", "Mode", "NodeSet", "NonlocalOperators", "PairStructure",
    "Region", "SolverConfig", "SolverError", "build_nodes", "decompose", "neighbor_pairs",
    "verify_orthogonality",
]
