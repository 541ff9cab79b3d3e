"""Admissible refinement of hierarchical dyadic meshes for (truncated) hierarchical B-splines."""
from .grid import Element, MeshConfig, ancestor, children, midpoint_distance, support_extension
from .mesh import HierarchicalMesh, MeshError, initial_mesh, refinement_of, subdivide, uniform_mesh
from .basis import BsplineId, ThbFunction, hb_basis, level_basis, thb_basis, two_scale
from .admissibility import is_admissible, is_strictly_admissible, omega_region
from .refine import ProvenanceLog, RefinementHistory, neighborhood, refine, refine_history, refine_recursive
from .overlay import check_overlay_properties, overlay
from .complexity import constants, complexity_ratio, verify_lower_bound, verify_upper_bound

__version__ = "0.1.0"
