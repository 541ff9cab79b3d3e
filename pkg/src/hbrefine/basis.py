"""Level B-spline bases, hierarchical selection, truncation and evaluation.

Level ``l`` uses uniform knots ``k * 2**-l`` extended beyond the domain.
The B-spline with knot index ``b`` is supported on the level cells
``b .. b + p`` in each direction; the level basis holds every such spline
whose support meets the interior of the domain.

A :class:`ThbFunction` is a sparse nonnegative expansion in level
B-splines. Terms are pushed to finer levels only while their support
overlaps the next refined subdomain; terms that miss it can never be
truncated again and stay at their level. This is the same function as the
full finest-level expansion, just without the redundant fine terms.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import _kernels
from .grid import Box, Element, Index, MeshConfig, box_cells, clamp_box
from .mesh import HierarchicalMesh


class BsplineId(NamedTuple):
    level: int
    knots: Index

    def __repr__(self):
        return f"BsplineId({self.level}, {self.knots})"


@dataclass
class ThbFunction:
    """Truncated hierarchical B-spline as a sparse B-spline expansion."""

    origin: BsplineId
    coeffs: dict[BsplineId, float] = field(default_factory=dict)

    @property
    def level(self) -> int:
        return self.origin.level

    def __len__(self) -> int:
        return len(self.coeffs)

    def arrays(self, dim: int):
        """``(levels, knots, coeffs)`` arrays for the evaluation kernels."""
        return _term_arrays(self.coeffs.items(), dim)


def _term_arrays(items: Iterable[tuple[BsplineId, float]], dim: int):
    items = list(items)
    levels = np.fromiter((b.level for b, _ in items), dtype=np.int64, count=len(items))
    knots = np.array([b.knots for b, _ in items], dtype=np.int64).reshape(len(items), dim)
    coeffs = np.fromiter((c for _, c in items), dtype=np.float64, count=len(items))
    return levels, knots, coeffs


# -- level bases ---------------------------------------------------------------

def level_basis(cfg: MeshConfig, level: int) -> list[BsplineId]:
    """All level B-splines whose support meets the open domain."""
    ranges = [range(-p, n) for p, n in zip(cfg.degrees, cfg.grid_shape(level))]
    return [BsplineId(level, k) for k in itertools.product(*ranges)]


def in_level_basis(cfg: MeshConfig, beta: BsplineId) -> bool:
    return all(-p <= k < n for k, p, n in zip(beta.knots, cfg.degrees, cfg.grid_shape(beta.level)))


def support_box(cfg: MeshConfig, beta: BsplineId) -> Box | None:
    """Level cells of ``supp beta`` clipped to the domain."""
    return clamp_box(
        cfg, beta.level, beta.knots, [k + p for k, p in zip(beta.knots, cfg.degrees)]
    )


def support_cells(cfg: MeshConfig, beta: BsplineId) -> list[Index]:
    return list(box_cells(support_box(cfg, beta)))


def splines_on_cell(cfg: MeshConfig, e: Element) -> list[BsplineId]:
    """The ``prod(p_i + 1)`` B-splines of level ``e.level`` nonzero on ``e``."""
    ranges = [range(j - p, j + 1) for j, p in zip(e.index, cfg.degrees)]
    return [BsplineId(e.level, k) for k in itertools.product(*ranges)]


@lru_cache(maxsize=None)
def _mask(p: int) -> tuple[float, ...]:
    return tuple(math.comb(p + 1, t) / 2.0**p for t in range(p + 2))


def two_scale(cfg: MeshConfig, beta: BsplineId) -> dict[BsplineId, float]:
    """Coefficients of ``beta`` in the next finer level basis.

    Each direction contributes the mask ``2**-p * binom(p + 1, t)`` on the
    child knots ``2 k + t``, ``t = 0 .. p + 1``. Children whose support
    misses the domain are dropped (they vanish on it).
    """
    per_dir = [
        [(2 * k + t, c) for t, c in enumerate(_mask(p))] for k, p in zip(beta.knots, cfg.degrees)
    ]
    lev = beta.level + 1
    out = {}
    for combo in itertools.product(*per_dir):
        child = BsplineId(lev, tuple(k for k, _ in combo))
        if in_level_basis(cfg, child):
            out[child] = math.prod(c for _, c in combo)
    return out


# -- hierarchical selection and truncation --------------------------------------

def _box_inside(box: Box | None, cells: set[Index]) -> bool:
    """Whether every cell of the box lies in ``cells`` (vacuous for ``None``)."""
    if box is None:
        return True
    if len(cells) < math.prod(b - a + 1 for a, b in zip(*box)):
        return False
    return all(c in cells for c in box_cells(box))


def _box_meets(box: Box | None, cells: set[Index]) -> bool:
    if box is None or not cells:
        return False
    return any(c in cells for c in box_cells(box))


def hb_basis(mesh: HierarchicalMesh) -> list[BsplineId]:
    """Level B-splines with support inside their subdomain but not the next.

    Support containment in the next subdomain is tested on level cells via
    the refined-cell set (the next subdomain is a union of those cells).
    """
    cfg = mesh.cfg
    out = []
    for lev in range(mesh.num_levels):
        omega = mesh.omega[lev]
        refined = mesh.refined[lev] if lev < len(mesh.refined) else set()
        if lev == 0:
            candidates: Iterable[BsplineId] = level_basis(cfg, 0)
        else:
            seen = set()
            for c in omega:
                for k in itertools.product(*(range(j - p, j + 1) for j, p in zip(c, cfg.degrees))):
                    seen.add(k)
            candidates = (BsplineId(lev, k) for k in sorted(seen))
        for beta in candidates:
            box = support_box(cfg, beta)
            if _box_inside(box, omega) and not _box_inside(box, refined):
                out.append(beta)
    return out


def truncate_once(
    mesh: HierarchicalMesh, coeffs: dict[BsplineId, float], level: int, *, lazy: bool = True
) -> dict[BsplineId, float]:
    """Apply truncation with respect to subdomain ``level + 1``.

    Level-``level`` terms are re-expressed one level finer and every child
    supported inside subdomain ``level + 1`` is discarded. With ``lazy``,
    terms whose support misses that subdomain are kept as they are.
    """
    cfg = mesh.cfg
    nxt = level + 1
    omega_next = mesh.omega[nxt] if nxt < len(mesh.omega) else set()
    refined = mesh.refined[level] if level < len(mesh.refined) else set()
    out: dict[BsplineId, float] = {}
    for beta, c in coeffs.items():
        if beta.level != level or (lazy and not _box_meets(support_box(cfg, beta), refined)):
            out[beta] = out.get(beta, 0.0) + c
            continue
        for child, w in two_scale(cfg, beta).items():
            out[child] = out.get(child, 0.0) + c * w
    return {
        b: c
        for b, c in out.items()
        if c > 0.0 and not (b.level == nxt and _box_inside(support_box(cfg, b), omega_next))
    }


def truncated(mesh: HierarchicalMesh, beta: BsplineId, *, lazy: bool = True) -> ThbFunction:
    """Successive truncation of ``beta`` through every finer subdomain."""
    coeffs = {beta: 1.0}
    for lev in range(beta.level, mesh.num_levels - 1):
        coeffs = truncate_once(mesh, coeffs, lev, lazy=lazy)
    return ThbFunction(beta, coeffs)


def thb_basis(mesh: HierarchicalMesh) -> list[ThbFunction]:
    """Truncated hierarchical basis, one function per HB-spline, in canonical order."""
    return packed_thb_basis(mesh).functions()


def thb_basis_reference(mesh: HierarchicalMesh, *, lazy: bool = True) -> list[ThbFunction]:
    """Function-by-function construction; slow, kept as a cross-check."""
    return [truncated(mesh, beta, lazy=lazy) for beta in hb_basis(mesh)]


def reexpress(cfg: MeshConfig, coeffs: dict[BsplineId, float], level: int) -> dict[BsplineId, float]:
    """Push every term coarser than ``level`` down to ``level`` (no truncation)."""
    cur = dict(coeffs)
    while True:
        coarse = [b for b in cur if b.level < level]
        if not coarse:
            return cur
        lo = min(b.level for b in coarse)
        nxt: dict[BsplineId, float] = {}
        for b, c in cur.items():
            if b.level == lo:
                for child, w in two_scale(cfg, b).items():
                    nxt[child] = nxt.get(child, 0.0) + c * w
            else:
                nxt[b] = nxt.get(b, 0.0) + c
        cur = nxt


# -- evaluation ----------------------------------------------------------------

def _check_points(cfg: MeshConfig, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[1] != cfg.dim:
        raise ValueError(f"points must have {cfg.dim} coordinates")
    ext = np.asarray(cfg.extents, dtype=np.float64)
    if np.any(pts < 0.0) or np.any(pts > ext):
        raise ValueError("evaluation point outside the domain")
    return pts


def evaluate_points(cfg: MeshConfig, f: ThbFunction, points) -> np.ndarray:
    pts = _check_points(cfg, points)
    levels, knots, coeffs = f.arrays(cfg.dim)
    return _kernels.eval_terms(pts, levels, knots, coeffs, cfg.degrees)


def evaluate(cfg: MeshConfig, f: ThbFunction, x: Sequence[float]) -> float:
    """Value of ``f`` at one point of the closed domain."""
    return float(evaluate_points(cfg, f, [x])[0])


def basis_sum(cfg: MeshConfig, functions: Sequence[ThbFunction], points) -> np.ndarray:
    """``sum_f f(x)`` at each point, evaluated term by term."""
    pts = _check_points(cfg, points)
    items = [item for f in functions for item in f.coeffs.items()]
    levels, knots, coeffs = _term_arrays(items, cfg.dim)
    return _kernels.eval_terms(pts, levels, knots, coeffs, cfg.degrees)


# -- supports on elements --------------------------------------------------------

def term_meets_element(cfg: MeshConfig, beta: BsplineId, e: Element) -> bool:
    """Whether the open cell ``e`` overlaps the support of ``beta``."""
    if beta.level <= e.level:
        shift = e.level - beta.level
        return all(k <= (j >> shift) <= k + p for k, j, p in zip(beta.knots, e.index, cfg.degrees))
    shift = beta.level - e.level
    return all(
        k <= ((j + 1) << shift) - 1 and (j << shift) <= k + p
        for k, j, p in zip(beta.knots, e.index, cfg.degrees)
    )


def nonzero_on(cfg: MeshConfig, f: ThbFunction, e: Element) -> bool:
    """Exact test via positive coefficients and strictly positive masks."""
    return any(term_meets_element(cfg, b, e) for b in f.coeffs)


def support_extent(cfg: MeshConfig, f: ThbFunction) -> tuple[tuple[float, float], ...]:
    """Per-direction bounding interval of ``supp f`` within the domain."""
    lo = [math.inf] * cfg.dim
    hi = [-math.inf] * cfg.dim
    for b in f.coeffs:
        box = support_box(cfg, b)
        if box is None:
            continue
        h = 2.0 ** -b.level
        for i in range(cfg.dim):
            lo[i] = min(lo[i], box[0][i] * h)
            hi[i] = max(hi[i], (box[1][i] + 1) * h)
    return tuple(zip(lo, hi))


def element_functions(mesh: HierarchicalMesh, functions: Sequence[ThbFunction]) -> dict[Element, list[int]]:
    """Map each active element to the indices of functions nonzero on it.

    Terms are projected onto every level no finer than their own. A term
    can only reach finer active cells if its support meets the refined
    cells of its level, which the lazy expansion rules out; the general
    case is still handled by scanning those finer levels.
    """
    cfg = mesh.cfg
    n = mesh.num_levels
    hits: dict[Element, set[int]] = {}
    for fi, f in enumerate(functions):
        for b in f.coeffs:
            box = support_box(cfg, b)
            if box is None:
                continue
            k = b.level
            for lev in range(min(k, n - 1), -1, -1):
                act = mesh.active[lev]
                if not act:
                    continue
                shift = k - lev
                lo = tuple(a >> shift for a in box[0])
                hi = tuple(a >> shift for a in box[1])
                for idx in box_cells((lo, hi)):
                    if idx in act:
                        hits.setdefault(Element(lev, idx), set()).add(fi)
            if k < n - 1 and _box_meets(box, mesh.refined[k]):
                for lev in range(k + 1, n):
                    shift = lev - k
                    fine_box = (
                        tuple(a << shift for a in box[0]),
                        tuple(((a + 1) << shift) - 1 for a in box[1]),
                    )
                    act = mesh.active[lev]
                    for idx in box_cells(fine_box):
                        if idx in act:
                            hits.setdefault(Element(lev, idx), set()).add(fi)
    return {e: sorted(v) for e, v in hits.items()}


# -- vectorized construction -------------------------------------------------------
#
# Splines and cells of a level are encoded as int64 keys in row-major mixed
# radix (first direction most significant), so sorting keys sorts indices
# lexicographically. Spline knot ``b_i`` is shifted by ``p_i`` to be >= 0.

def _strides(dims: Sequence[int]) -> np.ndarray:
    out = np.ones(len(dims), dtype=np.int64)
    for i in range(len(dims) - 2, -1, -1):
        out[i] = out[i + 1] * dims[i + 1]
    return out


class _LevelCodec:
    def __init__(self, cfg: MeshConfig, level: int):
        self.shape = np.asarray(cfg.grid_shape(level), dtype=np.int64)
        self.deg = np.asarray(cfg.degrees, dtype=np.int64)
        self.sdims = self.shape + self.deg
        self.sstride = _strides(self.sdims)
        self.cstride = _strides(self.shape)
        self.nsplines = int(np.prod(self.sdims.astype(object)))
        if self.nsplines >= 2**62:
            raise OverflowError("level too deep for 64-bit spline keys")

    def spline_key(self, knots: np.ndarray) -> np.ndarray:
        return (knots + self.deg) @ self.sstride

    def spline_knots(self, keys: np.ndarray) -> np.ndarray:
        return (keys[:, None] // self.sstride) % self.sdims - self.deg

    def cell_key(self, cells: np.ndarray) -> np.ndarray:
        return cells @ self.cstride

    def in_basis(self, knots: np.ndarray) -> np.ndarray:
        return np.all((knots >= -self.deg) & (knots < self.shape), axis=1)

    def support_bounds(self, knots: np.ndarray):
        lo = np.maximum(knots, 0)
        hi = np.minimum(knots + self.deg, self.shape - 1)
        return lo, hi


def _offsets(widths: Sequence[int]) -> np.ndarray:
    return np.array(list(itertools.product(*(range(w) for w in widths))), dtype=np.int64).reshape(-1, len(widths))


def _cells_array(cells: set[Index], dim: int) -> np.ndarray:
    return np.array(sorted(cells), dtype=np.int64).reshape(len(cells), dim)


def _splines_inside(cfg: MeshConfig, codec: _LevelCodec, cells: set[Index]) -> np.ndarray:
    """Sorted keys of splines whose clipped support lies in ``cells``."""
    if not cells:
        return np.empty(0, dtype=np.int64)
    arr = _cells_array(cells, cfg.dim)
    offs = _offsets([p + 1 for p in cfg.degrees])
    knots = (arr[:, None, :] - offs[None, :, :]).reshape(-1, cfg.dim)
    keys, counts = np.unique(codec.spline_key(knots), return_counts=True)
    kn = codec.spline_knots(keys)
    lo, hi = codec.support_bounds(kn)
    size = np.prod(hi - lo + 1, axis=1)
    return keys[counts == size]


def _splines_meeting(cfg: MeshConfig, codec: _LevelCodec, cells: set[Index]) -> np.ndarray:
    if not cells:
        return np.empty(0, dtype=np.int64)
    arr = _cells_array(cells, cfg.dim)
    offs = _offsets([p + 1 for p in cfg.degrees])
    knots = (arr[:, None, :] - offs[None, :, :]).reshape(-1, cfg.dim)
    return np.unique(codec.spline_key(knots))


def _isin_sorted(keys: np.ndarray, table: np.ndarray) -> np.ndarray:
    if len(table) == 0:
        return np.zeros(len(keys), dtype=bool)
    pos = np.searchsorted(table, keys)
    pos[pos == len(table)] = 0
    return table[pos] == keys


@dataclass
class PackedBasis:
    """All truncated functions of a mesh as flat term arrays.

    Term ``t`` belongs to function ``fid[t]`` and is the B-spline
    ``(level[t], knots[t])`` with weight ``coeff[t]``.
    """

    cfg: MeshConfig
    origins: list[BsplineId]
    fid: np.ndarray
    level: np.ndarray
    knots: np.ndarray
    coeff: np.ndarray

    def __len__(self) -> int:
        return len(self.origins)

    @property
    def origin_levels(self) -> np.ndarray:
        return np.fromiter((o.level for o in self.origins), dtype=np.int64, count=len(self.origins))

    def functions(self) -> list[ThbFunction]:
        out = [ThbFunction(o, {}) for o in self.origins]
        for f, lev, kn, c in zip(self.fid.tolist(), self.level.tolist(), self.knots.tolist(), self.coeff.tolist()):
            out[f].coeffs[BsplineId(lev, tuple(kn))] = c
        return out

    def evaluate_sum(self, points) -> np.ndarray:
        pts = _check_points(self.cfg, points)
        return _kernels.eval_terms(pts, self.level, self.knots, self.coeff, self.cfg.degrees)


def packed_thb_basis(mesh: HierarchicalMesh) -> PackedBasis:
    """Truncated hierarchical basis built for all functions at once.

    Per level, two sorted key tables drive everything: splines supported
    inside the subdomain (selection and truncation) and splines meeting
    the refined cells (which terms must move one level down).
    """
    cfg = mesh.cfg
    d = cfg.dim
    n = mesh.num_levels
    codecs = [_LevelCodec(cfg, k) for k in range(n)]
    inside = [
        np.arange(codecs[0].nsplines, dtype=np.int64) if k == 0 else _splines_inside(cfg, codecs[k], mesh.omega[k])
        for k in range(n)
    ]
    inside_refined = [_splines_inside(cfg, codecs[k], mesh.refined[k]) for k in range(n)]
    meets_refined = [_splines_meeting(cfg, codecs[k], mesh.refined[k]) for k in range(n)]

    masks = []
    for p in cfg.degrees:
        masks.append(np.array(_mask(p)))
    child_offs = _offsets([p + 2 for p in cfg.degrees])
    child_w = np.ones(len(child_offs))
    for i in range(d):
        child_w *= masks[i][child_offs[:, i]]

    origins: list[BsplineId] = []
    out_fid, out_lev, out_knots, out_coeff = [], [], [], []
    fr_fid = np.empty(0, dtype=np.int64)
    fr_knots = np.empty((0, d), dtype=np.int64)
    fr_coeff = np.empty(0)
    for k in range(n):
        codec = codecs[k]
        hb = inside[k][~_isin_sorted(inside[k], inside_refined[k])]
        hb_knots = codec.spline_knots(hb)
        start = len(origins)
        origins.extend(BsplineId(k, tuple(kn)) for kn in hb_knots.tolist())
        fr_fid = np.concatenate([fr_fid, np.arange(start, len(origins), dtype=np.int64)])
        fr_knots = np.concatenate([fr_knots, hb_knots])
        fr_coeff = np.concatenate([fr_coeff, np.ones(len(hb))])
        if k == n - 1:
            push = np.zeros(len(fr_fid), dtype=bool)
        else:
            push = _isin_sorted(codec.spline_key(fr_knots), meets_refined[k])
        keep = ~push
        out_fid.append(fr_fid[keep])
        out_lev.append(np.full(int(keep.sum()), k, dtype=np.int64))
        out_knots.append(fr_knots[keep])
        out_coeff.append(fr_coeff[keep])
        if k == n - 1 or not push.any():
            fr_fid, fr_knots, fr_coeff = fr_fid[:0], fr_knots[:0], fr_coeff[:0]
            continue
        nxt = codecs[k + 1]
        pk = fr_knots[push]
        ck = (2 * pk[:, None, :] + child_offs[None, :, :]).reshape(-1, d)
        cf = np.repeat(fr_fid[push], len(child_offs))
        cc = (fr_coeff[push][:, None] * child_w[None, :]).ravel()
        ok = nxt.in_basis(ck)
        ck, cf, cc = ck[ok], cf[ok], cc[ok]
        skey = nxt.spline_key(ck)
        ok = ~_isin_sorted(skey, inside[k + 1])
        skey, cf, cc = skey[ok], cf[ok], cc[ok]
        if len(origins) * nxt.nsplines >= 2**62:
            raise OverflowError("too many functions for 64-bit term keys")
        combo, inv = np.unique(cf * nxt.nsplines + skey, return_inverse=True)
        fr_coeff = np.bincount(inv.ravel(), weights=cc, minlength=len(combo))
        fr_fid = combo // nxt.nsplines
        fr_knots = nxt.spline_knots(combo % nxt.nsplines)
    fid = np.concatenate(out_fid)
    order = np.lexsort((np.concatenate(out_lev), fid))
    return PackedBasis(
        cfg, origins, fid[order], np.concatenate(out_lev)[order],
        np.concatenate(out_knots)[order], np.concatenate(out_coeff)[order],
    )


@dataclass
class Incidence:
    """Active elements and the functions nonzero on them, as parallel arrays."""

    elements: list[Element]
    count: np.ndarray  # distinct functions per element
    min_level: np.ndarray
    max_level: np.ndarray
    pairs: tuple[np.ndarray, np.ndarray]  # (element position, function id)


def packed_incidence(mesh: HierarchicalMesh, pb: PackedBasis) -> Incidence:
    """Which functions are nonzero on which active elements.

    A term of level ``k`` touches active cells of levels ``<= k`` only: its
    support misses the cells refined at level ``k`` (otherwise it would
    have been moved down), so no finer active cell lies inside it.
    """
    cfg = mesh.cfg
    d = cfg.dim
    n = mesh.num_levels
    elements = mesh.active_elements()
    keys, key_off = [], [0]
    for lev in range(n):
        codec = _LevelCodec(cfg, lev)
        keys.append(codec.cell_key(_cells_array(mesh.active[lev], d)))  # sorted: cells are sorted
        key_off.append(key_off[-1] + len(keys[-1]))
    shapes = np.array([cfg.grid_shape(lev) for lev in range(n)], dtype=np.int64)
    deg = np.asarray(cfg.degrees, dtype=np.int64)
    lo = np.maximum(pb.knots, 0)
    hi = np.minimum(pb.knots + deg, shapes[pb.level] - 1)
    pe, pf = _kernels.term_pairs(pb.fid, pb.level, lo, hi, np.concatenate(keys), key_off, shapes)
    ne = len(elements)
    flev = pb.origin_levels[pf]
    count = np.bincount(pe, minlength=ne)
    mn = np.full(ne, np.iinfo(np.int64).max)
    mx = np.full(ne, -1)
    np.minimum.at(mn, pe, flev)
    np.maximum.at(mx, pe, flev)
    return Incidence(elements, count, mn, mx, (pe, pf))
