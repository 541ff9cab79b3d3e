"""Coarsest common refinement of two hierarchical meshes."""
from __future__ import annotations

from dataclasses import dataclass

from .admissibility import is_strictly_admissible, omega_region
from .mesh import HierarchicalMesh, MeshError, initial_mesh, refinement_of


def overlay(mesh1: HierarchicalMesh, mesh2: HierarchicalMesh) -> HierarchicalMesh:
    """Mesh whose subdomains are the level-wise unions of the inputs'."""
    if mesh1.cfg != mesh2.cfg:
        raise MeshError("overlay needs meshes with the same configuration")
    n = max(mesh1.num_levels, mesh2.num_levels)
    levels = []
    for lev in range(n):
        a = mesh1.omega[lev] if lev < mesh1.num_levels else set()
        b = mesh2.omega[lev] if lev < mesh2.num_levels else set()
        levels.append(a | b)
    return HierarchicalMesh.from_hierarchy(mesh1.cfg, levels)


@dataclass
class OverlayReport:
    strictly_admissible: bool
    omega_contains_union: bool
    refines_both: bool
    count_bound: bool
    count: int = 0
    bound: int = 0

    def __bool__(self):
        return self.strictly_admissible and self.omega_contains_union and self.refines_both and self.count_bound


def check_overlay_properties(mesh1: HierarchicalMesh, mesh2: HierarchicalMesh, m: int) -> OverlayReport:
    """Verdicts on the overlay of two strictly admissible meshes."""
    ov = overlay(mesh1, mesh2)
    omega_ok = True
    for lev in range(1, ov.num_levels):
        union = set()
        for src in (mesh1, mesh2):
            if lev < src.num_levels:
                union |= omega_region(src, lev)
        if not union <= omega_region(ov, lev):
            omega_ok = False
            break
    n0 = initial_mesh(mesh1.cfg).element_count()
    bound = mesh1.element_count() + mesh2.element_count() - n0
    return OverlayReport(
        strictly_admissible=bool(is_strictly_admissible(ov, m)),
        omega_contains_union=omega_ok,
        refines_both=refinement_of(ov, mesh1) and refinement_of(ov, mesh2),
        count_bound=ov.element_count() <= bound,
        count=ov.element_count(),
        bound=bound,
    )
