"""Shared generators for randomized meshes and histories."""
from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np

from hbrefine import Element, MeshConfig, refine_history
from hbrefine.refine import corner_chase, deepest_element, random_fraction, single_random

POLICY_KINDS = ("random", "corner", "deepest", "single")

# "criterion N: PASS|FAIL ..." lines, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record(n: int, ok: bool, detail: str) -> bool:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def random_config(rng: np.random.Generator, dims=(1, 2, 3), max_extent: int = 8) -> MeshConfig:
    d = int(rng.choice(dims))
    degrees = tuple(int(x) for x in rng.integers(1, 4, size=d))
    m = int(rng.integers(2, 4))
    extents = tuple(int(x) for x in rng.integers(1, max_extent + 1, size=d))
    return MeshConfig(d, degrees, m, extents)


def policy_for(kind: str, dim: int):
    if kind == "random":
        # cap per-step marks so d = 3 histories stay small
        return random_fraction(0.1, cap=(8, 4, 2)[dim - 1])
    return {"corner": corner_chase, "deepest": deepest_element, "single": single_random}[kind]


def random_history(seed: int, *, dims=(1, 2, 3), max_steps: int = 10, keep_meshes: bool = True):
    """A reproducible refinement history drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    cfg = random_config(rng, dims)
    steps = int(rng.integers(1, max_steps + 1))
    kind = POLICY_KINDS[int(rng.integers(len(POLICY_KINDS)))]
    return refine_history(cfg, cfg.class_m, policy_for(kind, cfg.dim), steps, seed=seed, keep_meshes=keep_meshes)


def extension_by_enumeration(cfg, e, k):
    """Union of support cells of every level-k B-spline whose support meets ``e``.

    Works in exact rational coordinates; independent of the index-box formula.
    """
    h_k = Fraction(1, 2**k)
    h_e = Fraction(1, 2**e.level)
    shape = cfg.grid_shape(k)
    cells = set()
    per_dir = []
    for i in range(cfg.dim):
        p = cfg.degrees[i]
        e_lo, e_hi = e.index[i] * h_e, (e.index[i] + 1) * h_e
        hits = set()
        for b in range(-p, shape[i]):  # knots b..b+p+1 meet the domain interior
            s_lo, s_hi = b * h_k, (b + p + 1) * h_k
            if s_lo < e_hi and e_lo < s_hi:
                hits.update(c for c in range(b, b + p + 1) if 0 <= c < shape[i])
        per_dir.append(sorted(hits))
    for idx in itertools.product(*per_dir):
        cells.add(Element(k, idx))
    return cells


def all_hierarchies(cfg: MeshConfig, max_levels: int):
    """Every valid domain hierarchy with at most ``max_levels`` levels."""
    from hbrefine.grid import all_cells, children
    from hbrefine import HierarchicalMesh

    def grow(levels):
        yield levels
        if len(levels) == max_levels:
            return
        parents = sorted(levels[-1])
        for r in range(1, len(parents) + 1):
            for chosen in itertools.combinations(parents, r):
                nxt = {c.index for p in chosen for c in children(Element(len(levels) - 1, p))}
                yield from grow(levels + [nxt])

    for levels in grow([set(all_cells(cfg, 0))]):
        yield HierarchicalMesh.from_hierarchy(cfg, levels)
