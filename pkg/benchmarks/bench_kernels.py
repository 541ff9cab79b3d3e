"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--seed 0] [--repeat 3]

Each row reports the best of ``--repeat`` runs after one warm-up call
(which also triggers JIT compilation) and checks both backends agree.
"""
import argparse
import time

import numpy as np

from hbrefine import MeshConfig, refine_history
from hbrefine import _kernels
from hbrefine.basis import packed_incidence, packed_thb_basis
from hbrefine.complexity import _arrays, constants
from hbrefine.refine import random_fraction


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def incidence(mesh, pb, fast):
    saved = _kernels.USE_NUMBA
    _kernels.USE_NUMBA = fast
    try:
        return packed_incidence(mesh, pb)
    finally:
        _kernels.USE_NUMBA = saved


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--steps", type=int, default=8)
    args = ap.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed")

    cfg = MeshConfig.uniform(2, 2, 8)
    hist = refine_history(cfg, 2, random_fraction(0.1), args.steps, seed=args.seed)
    mesh = hist.final
    pb = packed_thb_basis(mesh)
    rng = np.random.default_rng(args.seed)
    pts = rng.uniform(0, 8, size=(2_000, 2))
    consts = constants(cfg, 2)
    ql, qm = _arrays(hist.new_elements(), 2)
    ml, mm = _arrays([q for q, _ in hist.marked_pairs()], 2)
    center = np.array([1000.5, 700.25])
    shape = cfg.grid_shape(9)

    cases = {
        f"eval_terms ({len(pb.fid)} terms, {len(pts)} points)":
            lambda fast: _kernels.eval_terms(pts, pb.level, pb.knots, pb.coeff, cfg.degrees, use_numba=fast),
        f"incidence ({len(mesh)} elements)": lambda fast: incidence(mesh, pb, fast).count,
        f"lambda_sums ({len(ql)} x {len(ml)})":
            lambda fast: np.concatenate(_kernels.lambda_sums(ql, qm, ml, mm, consts.c, use_numba=fast)),
        f"ball_count (radius {2 * consts.c:.1f})":
            lambda fast: np.array([_kernels.ball_count(center, 2 * consts.c, shape, use_numba=fast)]),
    }
    print(f"{'kernel':<44}{'numpy s':>10}{'numba s':>10}{'speedup':>9}")
    for name, fn in cases.items():
        t_np, a = best_of(lambda: fn(False), args.repeat)
        t_nb, b = best_of(lambda: fn(True), args.repeat)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12), name
        print(f"{name:<44}{t_np:>10.4f}{t_nb:>10.4f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
