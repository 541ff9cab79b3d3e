import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hbrefine import Element, HierarchicalMesh, MeshConfig, initial_mesh, refine, uniform_mesh
from hbrefine.admissibility import (
    admissibility_class,
    count_bound,
    element_levels,
    interior_cells,
    is_admissible,
    is_strictly_admissible,
    omega_region,
    strict_class,
)
from hbrefine.basis import evaluate_points, thb_basis_reference
from hbrefine.grid import support_extension

from helpers import random_history


def _levels_by_sampling(mesh, e, funcs, n=9):
    """Levels of functions seen nonzero at a grid of points inside ``e``."""
    cfg = mesh.cfg
    local = (np.arange(n) + 0.5) / n
    pts = (np.asarray(e.index) + np.array(list(itertools.product(local, repeat=cfg.dim)))) * e.size
    return {f.level for f in funcs if np.any(evaluate_points(cfg, f, pts) > 1e-14)}


def _strict_by_sets(mesh, m):
    """Set-level reading: each cell of subdomain l sits in a level l-m+1 cell whose extension stays in its subdomain."""
    cfg = mesh.cfg
    for lev in range(m, mesh.num_levels):
        base = lev - m + 1
        good = {
            c for c in mesh.omega[base]
            if all(q.index in mesh.omega[base] for q in support_extension(cfg, Element(base, c), base))
        }
        shift = lev - base
        if any(tuple(j >> shift for j in c) not in good for c in mesh.omega[lev]):
            return False
    return True


def _stacked_mesh():
    """d = 1, p = 1: a level-2 pair right next to an unrefined level-0 cell."""
    cfg = MeshConfig(1, (1,), 2, (4,))
    return HierarchicalMesh.from_hierarchy(cfg, [[(j,) for j in range(4)], [(2,), (3,)], [(6,), (7,)]])


def test_initial_mesh_admissible_any_class():
    mesh = initial_mesh(MeshConfig.uniform(2, 3, 3))
    for m in range(1, 5):
        assert is_admissible(mesh, m)
    assert is_strictly_admissible(mesh, 2) and is_strictly_admissible(mesh, 3)
    assert admissibility_class(mesh) == 1


def test_hand_built_mesh_not_admissible():
    mesh = _stacked_mesh()
    rep = is_admissible(mesh, 2)
    assert not rep and rep.admissible is False
    assert rep.witness == Element(2, (7,)) and rep.level_range == (0, 2)
    funcs = thb_basis_reference(mesh)
    # the lone level-1 function is truncated to [1, 1.75] and misses the witness
    assert _levels_by_sampling(mesh, rep.witness, funcs) == {0, 2}
    assert is_admissible(mesh, 3)
    assert not is_strictly_admissible(mesh, 2)


@pytest.mark.parametrize("seed", range(10))
def test_element_levels_match_sampling(seed):
    hist = random_history(400 + seed, dims=(1, 2), max_steps=3, keep_meshes=False)
    mesh = hist.final
    funcs = thb_basis_reference(mesh)
    lv = element_levels(mesh)
    for e in mesh.active_elements()[:: max(1, len(mesh) // 40)]:
        seen = _levels_by_sampling(mesh, e, funcs)
        assert lv.level_range[e] == (min(seen), max(seen))


def test_omega_region_examples():
    cfg = MeshConfig(1, (1,), 2, (4,))
    full = uniform_mesh(cfg, 1)
    assert omega_region(full, 1) == {Element(1, (j,)) for j in range(8)}
    cfg2 = MeshConfig(2, (2, 2), 2, (3, 3))
    assert interior_cells(cfg2, 2, [(5, 6)]) == set()
    one_parent = HierarchicalMesh.from_hierarchy(
        cfg2, [list(itertools.product(range(3), range(3))), [(2, 2), (2, 3), (3, 2), (3, 3)]]
    )
    assert omega_region(one_parent, 1) == set()
    assert interior_cells(cfg, 3, [(j,) for j in range(2, 7)]) == {(3,), (4,), (5,)}
    with pytest.raises(ValueError):
        omega_region(full, 5)


def test_strict_counterexample():
    cfg = MeshConfig(1, (1,), 2, (4,))
    mesh = initial_mesh(cfg)
    mesh.subdivide(Element(0, (1,)))
    mesh.subdivide(Element(1, (2,)))
    rep = is_strictly_admissible(mesh, 2)
    assert not rep and rep.witness == Element(2, (4,))
    assert strict_class(mesh, 2) is None
    with pytest.raises(ValueError):
        is_strictly_admissible(mesh, 1)


def test_refine_output_admissible():
    cfg = MeshConfig.uniform(2, 2, 8)
    mesh = initial_mesh(cfg)
    for j in range(5):
        mesh = refine(mesh, [mesh.active_at((0.3, 0.3))], 2)
        assert is_strictly_admissible(mesh, 2)
        assert is_admissible(mesh, 2)
    lv = element_levels(mesh)
    assert max(lv.counts.values()) < count_bound(mesh, 2) == 18


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 2), st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(2, 3))
def test_strict_implies_admissible(d, seed, ops, m):
    rng = np.random.default_rng(seed)
    cfg = MeshConfig(d, tuple(int(x) for x in rng.integers(1, 4, size=d)), m, tuple(int(x) for x in rng.integers(2, 5, size=d)))
    mesh = initial_mesh(cfg)
    for _ in range(ops):
        act = [e for e in mesh.active_elements() if e.level < 4]
        mesh.subdivide(act[int(rng.integers(len(act)))])
    strict = bool(is_strictly_admissible(mesh, m))
    assert strict == _strict_by_sets(mesh, m)
    if strict:
        assert is_admissible(mesh, m)
        assert max(element_levels(mesh).counts.values()) < count_bound(mesh, m)
