"""Four-node shallow-shell finite elements and the Girkmann dome benchmark."""

from .assembly import symmetrize_normals
from .element import DISP4, MITC4C, MITC4S, Formulation, Material, Reduction
from .errors import (
    BenchmarkError,
    ConstraintError,
    GeometryError,
    InvalidArgumentError,
    ParseError,
    ShellBenchError,
    SolverError,
)
from .girkmann import (
    RING_REFERENCE,
    SHELL_REFERENCE,
    ComplianceSet,
    GirkmannConstants,
    ReactionResult,
    build_mesh,
    convergence_table,
    moment_profile,
    ring_compliance,
    run_benchmark,
    run_case,
    shell_compliance,
    solve_reactions,
    symmetry_deviation,
)
from .mesh import DomeGeometry, SurfaceMesh, compute_nodal_normals, generate_quarter_cap_regular, perturb, refine
from .msh import format_msh, parse_msh

__version__ = "0.1.0"
