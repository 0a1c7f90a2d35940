"""Solvers for 2D high-contrast diffusion on cell-centered finite volumes.

The package assembles the 5-point harmonic-mean operator, builds AGKS
block preconditioners and cell-centered multigrid (CCMG), and runs them
inside a deflated preconditioned conjugate gradient driver.
"""

from .geometry import (
    DofPartition,
    GeometryError,
    Grid,
    IslandSpec,
    build_coefficient_field,
    geometric_partition,
    partition_by_diagonal,
)
from .assembly import (
    AssembledSystem,
    BlockView,
    assemble_limiting_operator,
    assemble_operator,
    assemble_rhs,
    assemble_system,
    harmonic_mean,
    neumann_decomposition,
    split_blocks,
)
from .krylov import SolveReport, average_reduction_factor, pcg

__all__ = [
    "AssembledSystem",
    "BlockView",
    "DofPartition",
    "GeometryError",
    "Grid",
    "IslandSpec",
    "SolveReport",
    "assemble_limiting_operator",
    "assemble_operator",
    "assemble_rhs",
    "assemble_system",
    "average_reduction_factor",
    "build_coefficient_field",
    "geometric_partition",
    "harmonic_mean",
    "neumann_decomposition",
    "partition_by_diagonal",
    "pcg",
    "split_blocks",
]

__version__ = "0.1.0"
