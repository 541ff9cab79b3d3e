"""Integer index arithmetic on the family of dyadic tensor grids.

Level ``k`` of the family splits every unit cell of the initial grid into
``2**k`` pieces per direction. Grids are never materialized; every query
works from a :class:`MeshConfig` and integer indices.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence, Tuple

Index = Tuple[int, ...]
Box = Tuple[Index, Index]  # inclusive (lo, hi) per direction


@dataclass(frozen=True)
class MeshConfig:
    """Dimension, degrees, admissibility class and initial extents."""

    dim: int
    degrees: Tuple[int, ...]
    class_m: int = 2
    extents: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "degrees", tuple(int(p) for p in self.degrees))
        if not self.extents:
            object.__setattr__(self, "extents", (1,) * self.dim)
        object.__setattr__(self, "extents", tuple(int(n) for n in self.extents))
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if len(self.degrees) != self.dim or len(self.extents) != self.dim:
            raise ValueError("degrees and extents need one entry per direction")
        if min(self.degrees) < 1:
            raise ValueError(f"degrees must be >= 1, got {self.degrees}")
        if min(self.extents) < 1:
            raise ValueError(f"extents must be >= 1, got {self.extents}")
        if self.class_m < 2:
            raise ValueError(f"class_m must be >= 2, got {self.class_m}")

    @classmethod
    def uniform(cls, dim: int, degree: int, extent: int, class_m: int = 2) -> "MeshConfig":
        return cls(dim, (degree,) * dim, class_m, (extent,) * dim)

    @property
    def max_degree(self) -> int:
        return max(self.degrees)

    def grid_shape(self, level: int) -> Index:
        """Number of cells per direction in the level-``level`` grid."""
        return tuple(n << level for n in self.extents)

    def num_cells(self, level: int) -> int:
        return math.prod(self.grid_shape(level))

    def contains(self, e: "Element") -> bool:
        return len(e.index) == self.dim and e.level >= 0 and all(
            0 <= j < n for j, n in zip(e.index, self.grid_shape(e.level))
        )


class Element(NamedTuple):
    """Open cell ``prod_i (j_i 2**-level, (j_i + 1) 2**-level)``.

    Tuple ordering is level-major then lexicographic in the index, which is
    the canonical traversal order used throughout the package.
    """

    level: int
    index: Index

    @property
    def size(self) -> float:
        return 2.0 ** -self.level

    def midpoint(self) -> Tuple[float, ...]:
        h = 2.0 ** -self.level
        return tuple((j + 0.5) * h for j in self.index)

    def __repr__(self):
        return f"Element({self.level}, {self.index})"


def children(e: Element) -> list[Element]:
    """The ``2**d`` cells of level ``e.level + 1`` that tile ``e``."""
    ranges = [(2 * j, 2 * j + 1) for j in e.index]
    return [Element(e.level + 1, idx) for idx in itertools.product(*ranges)]


def parent(e: Element) -> Element:
    if e.level == 0:
        raise ValueError(f"{e} has no parent")
    return Element(e.level - 1, tuple(j >> 1 for j in e.index))


def ancestor(e: Element, k: int) -> Element:
    """The level-``k`` cell containing ``e``."""
    if k > e.level or k < 0:
        raise ValueError(f"ancestor level {k} must lie in [0, {e.level}]")
    shift = e.level - k
    return Element(k, tuple(j >> shift for j in e.index))


def clamp_box(cfg: MeshConfig, level: int, lo: Sequence[int], hi: Sequence[int]) -> Box | None:
    """Intersect an index box with the level grid; ``None`` if empty."""
    shape = cfg.grid_shape(level)
    lo_c = tuple(max(a, 0) for a in lo)
    hi_c = tuple(min(b, n - 1) for b, n in zip(hi, shape))
    if any(a > b for a, b in zip(lo_c, hi_c)):
        return None
    return lo_c, hi_c


def box_cells(box: Box | None) -> Iterator[Index]:
    if box is None:
        return iter(())
    lo, hi = box
    return itertools.product(*(range(a, b + 1) for a, b in zip(lo, hi)))


def support_extension_box(cfg: MeshConfig, e: Element, k: int) -> Box:
    """Index box of ``S(e, k)``: the ancestor window widened by ``p_i`` cells.

    Uniform knots are extended beyond the domain, so the only boundary
    effect is the final clamp to the grid.
    """
    a = ancestor(e, k).index
    box = clamp_box(
        cfg,
        k,
        [j - p for j, p in zip(a, cfg.degrees)],
        [j + p for j, p in zip(a, cfg.degrees)],
    )
    assert box is not None  # the ancestor itself always survives the clamp
    return box


def support_extension(cfg: MeshConfig, e: Element, k: int) -> set[Element]:
    """All level-``k`` cells sharing a level-``k`` B-spline with ``e``."""
    return {Element(k, idx) for idx in box_cells(support_extension_box(cfg, e, k))}


def midpoint_distance(e1: Element, e2: Element) -> float:
    """Euclidean distance between the midpoints of two cells."""
    return math.dist(e1.midpoint(), e2.midpoint())


def project_box(box: Box, from_level: int, to_level: int) -> Box:
    """Cells of ``to_level <= from_level`` that contain some cell of ``box``."""
    shift = from_level - to_level
    if shift < 0:
        raise ValueError("project_box only coarsens")
    lo, hi = box
    return tuple(a >> shift for a in lo), tuple(b >> shift for b in hi)


def all_cells(cfg: MeshConfig, level: int) -> Iterable[Index]:
    return itertools.product(*(range(n) for n in cfg.grid_shape(level)))
