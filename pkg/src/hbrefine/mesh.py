"""Hierarchical meshes built from a nested domain hierarchy.

``omega[l]`` holds the level-``l`` cells covering the subdomain of level
``l``; active cells are derived from it and maintained incrementally.
"""
from __future__ import annotations

import math
from typing import Iterable, Iterator, Sequence

from .grid import Element, Index, MeshConfig, all_cells, children


class MeshError(ValueError):
    """A domain hierarchy violates nesting or sibling closure."""


class HierarchicalMesh:
    """Domain hierarchy plus its active elements.

    Parameters
    ----------
    cfg : MeshConfig
        Grid description shared by every level.

    Notes
    -----
    Three per-level index sets are kept in sync by :meth:`subdivide`:
    ``omega`` (cells of the level subdomain), ``active`` and ``refined``
    (cells whose children belong to the next subdomain). Use
    :meth:`recompute_active` for an independent rebuild.
    """

    def __init__(self, cfg: MeshConfig):
        self.cfg = cfg
        full = set(all_cells(cfg, 0))
        self.omega: list[set[Index]] = [full]
        self.active: list[set[Index]] = [set(full)]
        self.refined: list[set[Index]] = [set()]
        self._count = len(full)

    # construction -----------------------------------------------------

    @classmethod
    def from_hierarchy(cls, cfg: MeshConfig, omega: Sequence[Iterable[Sequence[int]]]) -> "HierarchicalMesh":
        """Build a mesh from explicit per-level cell sets, validating them."""
        mesh = cls(cfg)
        levels = [set(tuple(int(j) for j in c) for c in cells) for cells in omega]
        while levels and not levels[-1]:
            levels.pop()
        if not levels:
            raise MeshError("levels[0]: the level-0 subdomain must cover the initial grid")
        if levels[0] != mesh.omega[0]:
            missing = sorted(mesh.omega[0] - levels[0])
            extra = sorted(levels[0] - mesh.omega[0])
            bad = (missing or extra)[0]
            raise MeshError(f"levels[0]: cell {bad} breaks full coverage of the initial grid")
        for lev in range(1, len(levels)):
            shape = cfg.grid_shape(lev)
            prev = levels[lev - 1]
            cells = levels[lev]
            for c in sorted(cells):
                if len(c) != cfg.dim or not all(0 <= j < n for j, n in zip(c, shape)):
                    raise MeshError(f"levels[{lev}]: cell {c} is outside the level-{lev} grid")
                par = tuple(j >> 1 for j in c)
                if par not in prev:
                    raise MeshError(f"levels[{lev}]: cell {c} is not nested in levels[{lev - 1}]")
                for sib in children(Element(lev - 1, par)):
                    if sib.index not in cells:
                        raise MeshError(
                            f"levels[{lev}]: cell {c} lacks sibling {sib.index} (not a union of parent cells)"
                        )
        for lev in range(1, len(levels)):
            parents = {tuple(j >> 1 for j in c) for c in levels[lev]}
            mesh.omega.append(set(levels[lev]))
            mesh.refined[lev - 1] = parents
            mesh.refined.append(set())
            mesh.active.append(set())
        for lev in range(len(levels)):
            mesh.active[lev] = mesh.omega[lev] - mesh.refined[lev]
        mesh._count = sum(len(a) for a in mesh.active)
        return mesh

    def copy(self) -> "HierarchicalMesh":
        new = HierarchicalMesh.__new__(HierarchicalMesh)
        new.cfg = self.cfg
        new.omega = [set(s) for s in self.omega]
        new.active = [set(s) for s in self.active]
        new.refined = [set(s) for s in self.refined]
        new._count = self._count
        return new

    # mutation ---------------------------------------------------------

    def subdivide(self, e: Element) -> list[Element]:
        """Replace the active cell ``e`` by its children; return them."""
        if not self.is_active(e):
            raise MeshError(f"cannot subdivide {e}: not an active element")
        lev = e.level
        if lev + 1 == len(self.omega):
            self.omega.append(set())
            self.active.append(set())
            self.refined.append(set())
        kids = children(e)
        self.active[lev].discard(e.index)
        self.refined[lev].add(e.index)
        nxt_omega, nxt_active = self.omega[lev + 1], self.active[lev + 1]
        for c in kids:
            nxt_omega.add(c.index)
            nxt_active.add(c.index)
        self._count += len(kids) - 1
        return kids

    # queries ----------------------------------------------------------

    @property
    def num_levels(self) -> int:
        n = len(self.omega)
        while n > 1 and not self.omega[n - 1]:
            n -= 1
        return n

    def element_count(self) -> int:
        return self._count

    def __len__(self) -> int:
        return self._count

    def is_active(self, e: Element) -> bool:
        return 0 <= e.level < len(self.active) and e.index in self.active[e.level]

    def in_omega(self, e: Element) -> bool:
        return 0 <= e.level < len(self.omega) and e.index in self.omega[e.level]

    def is_refined(self, e: Element) -> bool:
        """Whether ``e``'s children lie in the next subdomain."""
        return 0 <= e.level < len(self.refined) and e.index in self.refined[e.level]

    def active_elements(self) -> list[Element]:
        """Active elements in canonical order (level-major, lexicographic)."""
        return [Element(lev, idx) for lev in range(self.num_levels) for idx in sorted(self.active[lev])]

    def __iter__(self) -> Iterator[Element]:
        return iter(self.active_elements())

    def active_at(self, point: Sequence[float]) -> Element:
        """The active element whose closure contains ``point`` (lowest index on ties)."""
        for lev in range(self.num_levels):
            idx = tuple(min(int(math.floor(x * (1 << lev))), n - 1) for x, n in zip(point, self.cfg.grid_shape(lev)))
            if idx in self.active[lev]:
                return Element(lev, idx)
        raise ValueError(f"point {tuple(point)} is outside the domain")

    def hierarchy(self) -> list[list[Index]]:
        """Sorted cell lists of every nonempty subdomain."""
        return [sorted(self.omega[lev]) for lev in range(self.num_levels)]

    def __eq__(self, other):
        if not isinstance(other, HierarchicalMesh):
            return NotImplemented
        n = self.num_levels
        return (
            self.cfg == other.cfg
            and n == other.num_levels
            and all(self.omega[i] == other.omega[i] for i in range(n))
        )

    def __repr__(self):
        per_level = [len(self.active[i]) for i in range(self.num_levels)]
        return f"HierarchicalMesh(dim={self.cfg.dim}, levels={self.num_levels}, active={per_level})"

    # oracles ----------------------------------------------------------

    def recompute_active(self) -> list[set[Index]]:
        """Rebuild active sets from the hierarchy alone.

        A cell of ``omega[l]`` is active unless a cell of some deeper
        subdomain lies inside it. Covered cells are collected bottom-up:
        the cells covered at level ``l`` are the parents of everything in
        or covered at level ``l + 1``.
        """
        n = self.num_levels
        covered: list[set[Index]] = [set() for _ in range(n)]
        for lev in range(n - 2, -1, -1):
            below = self.omega[lev + 1] | covered[lev + 1]
            covered[lev] = {tuple(j >> 1 for j in c) for c in below}
        return [self.omega[lev] - covered[lev] for lev in range(n)]

    def check_consistency(self) -> None:
        """Raise ``AssertionError`` if derived sets disagree with the hierarchy."""
        fresh = self.recompute_active()
        n = self.num_levels
        for lev in range(n):
            assert self.active[lev] == fresh[lev], f"active set mismatch at level {lev}"
        for lev in range(n, len(self.active)):
            assert not self.active[lev] and not self.omega[lev]
        assert self._count == sum(len(a) for a in fresh), "element count drifted"


def initial_mesh(cfg: MeshConfig) -> HierarchicalMesh:
    """The single-level mesh made of the whole initial grid."""
    return HierarchicalMesh(cfg)


def subdivide(mesh: HierarchicalMesh, e: Element) -> HierarchicalMesh:
    """Copy of ``mesh`` with ``e`` replaced by its children."""
    out = mesh.copy()
    out.subdivide(e)
    return out


def refinement_of(mesh_a: HierarchicalMesh, mesh_b: HierarchicalMesh) -> bool:
    """True iff every subdomain of ``mesh_a`` contains that of ``mesh_b``."""
    if mesh_a.cfg != mesh_b.cfg:
        raise MeshError("meshes have different configurations")
    if mesh_b.num_levels > mesh_a.num_levels:
        return False
    return all(mesh_b.omega[i] <= mesh_a.omega[i] for i in range(mesh_b.num_levels))


def uniform_mesh(cfg: MeshConfig, level: int) -> HierarchicalMesh:
    """Mesh with every cell refined down to ``level``."""
    mesh = HierarchicalMesh(cfg)
    for _ in range(level):
        for e in mesh.active_elements():
            mesh.subdivide(e)
    return mesh
