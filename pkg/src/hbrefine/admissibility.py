"""Admissibility checks for hierarchical meshes.

:func:`is_admissible` looks only at truncated basis supports, while
:func:`is_strictly_admissible` works purely with cell sets. Neither reads
any state of the refinement routines, so both can be used as oracles for
them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .basis import PackedBasis, packed_incidence, packed_thb_basis
from .grid import Element, Index, ancestor, box_cells, support_extension_box
from .mesh import HierarchicalMesh


@dataclass
class AdmissibilityReport:
    """Outcome of an admissibility check with an optional witness.

    ``level_range`` is the (min, max) level of the truncated functions that
    are nonzero on ``witness`` for basis-level failures; it is ``None`` for
    failures of the cell-set test, where ``witness`` is the offending cell
    of a subdomain.
    """

    admissible: Optional[bool] = None
    strictly_admissible: Optional[bool] = None
    witness: Optional[Element] = None
    level_range: Optional[tuple[int, int]] = None
    detail: str = ""

    def __bool__(self):
        flags = [f for f in (self.admissible, self.strictly_admissible) if f is not None]
        return all(flags)


@dataclass
class ElementLevels:
    """Per-element view of the truncated basis."""

    level_range: dict[Element, tuple[int, int]]
    counts: dict[Element, int]
    basis: PackedBasis

    @property
    def max_span(self) -> int:
        """Largest number of successive levels seen on one element."""
        return max((hi - lo + 1 for lo, hi in self.level_range.values()), default=1)


def element_levels(mesh: HierarchicalMesh, basis: PackedBasis | None = None) -> ElementLevels:
    """Level span and number of nonzero truncated functions per active element."""
    if basis is None:
        basis = packed_thb_basis(mesh)
    inc = packed_incidence(mesh, basis)
    ranges = {
        e: (lo, hi)
        for e, lo, hi, n in zip(inc.elements, inc.min_level.tolist(), inc.max_level.tolist(), inc.count.tolist())
        if n
    }
    counts = dict(zip(inc.elements, inc.count.tolist()))
    return ElementLevels(ranges, counts, basis)


def is_admissible(mesh: HierarchicalMesh, m: int, *, levels: ElementLevels | None = None) -> AdmissibilityReport:
    """Truncated functions nonzero on any element span at most ``m`` levels.

    ``m = 1`` asks for a single level on every element.
    """
    if m < 1:
        raise ValueError(f"class must be >= 1, got {m}")
    if levels is None:
        levels = element_levels(mesh)
    for e in mesh.active_elements():
        lo, hi = levels.level_range.get(e, (e.level, e.level))
        if hi - lo > m - 1:
            return AdmissibilityReport(
                admissible=False,
                witness=e,
                level_range=(lo, hi),
                detail=f"functions of levels {lo}..{hi} are nonzero on {e}",
            )
    return AdmissibilityReport(admissible=True)


def admissibility_class(mesh: HierarchicalMesh, *, levels: ElementLevels | None = None) -> int:
    """Smallest ``m`` for which the mesh is admissible."""
    if levels is None:
        levels = element_levels(mesh)
    return levels.max_span


class _OmegaCache:
    """Memoized membership test for the interior regions of each level."""

    def __init__(self, mesh: HierarchicalMesh):
        self.mesh = mesh
        self.memo: dict[tuple[int, Index], bool] = {}

    def __call__(self, lev: int, cell: Index) -> bool:
        key = (lev, cell)
        hit = self.memo.get(key)
        if hit is None:
            omega = self.mesh.omega[lev]
            if cell not in omega:
                hit = False
            elif lev == 0:
                hit = True  # the level-0 subdomain is the whole (clamped) grid
            else:
                box = support_extension_box(self.mesh.cfg, Element(lev, cell), lev)
                hit = all(c in omega for c in box_cells(box))
            self.memo[key] = hit
        return hit


def interior_cells(cfg, level: int, cells) -> set[Index]:
    """Cells of a level-``level`` cell set whose support extension stays in the set.

    Works on any cell set, sibling-closed or not.
    """
    cells = set(map(tuple, cells))
    return {c for c in cells if all(b in cells for b in box_cells(support_extension_box(cfg, Element(level, c), level)))}


def omega_region(mesh: HierarchicalMesh, level: int) -> set[Element]:
    """Level cells whose whole support extension lies in the subdomain."""
    if not 0 <= level < mesh.num_levels:
        raise ValueError(f"level {level} outside 0..{mesh.num_levels - 1}")
    test = _OmegaCache(mesh)
    return {Element(level, c) for c in mesh.omega[level] if test(level, c)}


def is_strictly_admissible(mesh: HierarchicalMesh, m: int) -> AdmissibilityReport:
    """Every subdomain of level ``l >= m`` sits inside the interior region of level ``l - m + 1``."""
    if m < 2:
        raise ValueError(f"strict admissibility needs m >= 2, got {m}")
    test = _OmegaCache(mesh)
    for lev in range(m, mesh.num_levels):
        base = lev - m + 1
        for c in sorted(mesh.omega[lev]):
            e = Element(lev, c)
            anc = ancestor(e, base)
            if not test(base, anc.index):
                return AdmissibilityReport(
                    strictly_admissible=False,
                    witness=e,
                    detail=f"{e} lies outside the interior region of level {base} (ancestor {anc})",
                )
    return AdmissibilityReport(strictly_admissible=True)


def strict_class(mesh: HierarchicalMesh, max_m: int) -> int | None:
    """Smallest ``m`` in ``2..max_m`` passing the strict test, if any."""
    for m in range(2, max_m + 1):
        if is_strictly_admissible(mesh, m):
            return m
    return None


def count_bound(mesh: HierarchicalMesh, m: int) -> int:
    """``m * prod(p_i + 1)``, the exclusive per-element function count bound."""
    return m * math.prod(p + 1 for p in mesh.cfg.degrees)
