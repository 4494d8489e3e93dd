from .mesh import (
    SurfaceMesh,
    TetMesh,
    box_surface,
    box_tet,
    cloth_grid,
    cone_surface,
    fibonacci_sphere,
    load_obj,
    load_tetgen,
    save_obj,
    unique_edges,
    volume_integrals,
)
from .distance import (
    EE_REGIONS,
    PT_REGIONS,
    edge_edge_dist2,
    edge_edge_regions,
    point_triangle_dist2,
    point_triangle_regions,
)
from .distgrad import dist2_derivatives
from .bvh import Bvh
from .broadphase import CandidateSet, broad_phase, broad_phase_ccd
from .ccd import ccd_earliest_alpha, pair_ccd

__all__ = [
    "SurfaceMesh", "TetMesh", "box_surface", "box_tet", "cloth_grid",
    "cone_surface", "fibonacci_sphere", "load_obj", "load_tetgen", "save_obj",
    "unique_edges", "volume_integrals",
    "EE_REGIONS", "PT_REGIONS", "edge_edge_dist2", "edge_edge_regions",
    "point_triangle_dist2", "point_triangle_regions", "dist2_derivatives",
    "Bvh", "CandidateSet", "broad_phase", "broad_phase_ccd",
    "ccd_earliest_alpha", "pair_ccd",
]
