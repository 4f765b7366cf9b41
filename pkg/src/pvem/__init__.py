"""p-version virtual elements on polygonal meshes with a p-multigrid solver."""

from .geometry import (
    PolyMesh,
    generate_hexagonal_mesh,
    generate_square_mesh,
    generate_voronoi_lloyd_mesh,
    load_mesh,
    save_mesh,
    validate_mesh,
)
from .krylov import cg, ic0, mg_preconditioner, pcg
from .multigrid import build_hierarchy, estimate_lambda, mg_cycle, mg_solve, min_smoothing_steps
from .transfer import build_prolongation, edge_prolongation_1d
from .vem import assemble_global, build_dof_map, condition_number, local_element

__version__ = "0.1.0"
