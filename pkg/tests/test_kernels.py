import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import BSpline

from hbrefine import _kernels

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


@pytest.mark.parametrize("p", [1, 2, 3, 4, 5])
def test_cardinal_matches_scipy(p):
    t = np.linspace(-1.0, p + 2.0, 997)
    ref = BSpline.basis_element(np.arange(p + 2, dtype=float), extrapolate=False)(t)
    ref = np.nan_to_num(ref)
    np.testing.assert_allclose(_kernels.cardinal_bspline(t, p), ref, atol=1e-14)


def _random_terms(rng, d, n_terms):
    levels = rng.integers(0, 4, size=n_terms)
    knots = rng.integers(-3, 10, size=(n_terms, d))
    coeffs = rng.random(n_terms)
    degrees = rng.integers(1, 4, size=d)
    return levels, knots, coeffs, degrees


@needs_numba
@pytest.mark.parametrize("d", [1, 2, 3])
def test_eval_terms_backends_agree(d):
    rng = np.random.default_rng(d)
    levels, knots, coeffs, degrees = _random_terms(rng, d, 300)
    pts = rng.random((400, d)) * 4
    a = _kernels.eval_terms(pts, levels, knots, coeffs, degrees, use_numba=True)
    b = _kernels.eval_terms(pts, levels, knots, coeffs, degrees, use_numba=False)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


def test_eval_terms_tensor_product_oracle():
    rng = np.random.default_rng(7)
    levels, knots, coeffs, degrees = _random_terms(rng, 2, 40)
    pts = rng.random((50, 2)) * 3
    want = np.zeros(len(pts))
    for lev, kn, c in zip(levels, knots, coeffs):
        val = np.full(len(pts), c)
        for k in range(2):
            p = int(degrees[k])
            spl = BSpline.basis_element(np.arange(kn[k], kn[k] + p + 2, dtype=float), extrapolate=False)
            val *= np.nan_to_num(spl(pts[:, k] * 2.0**lev))
        want += val
    got = _kernels.eval_terms(pts, levels, knots, coeffs, degrees, use_numba=False)
    np.testing.assert_allclose(got, want, atol=1e-13)


def _lambda_oracle(ql, qm, ml, mm, c):
    row = np.zeros(len(ql))
    col = np.zeros(len(ml))
    for a, b in itertools.product(range(len(ql)), range(len(ml))):
        if ql[a] <= ml[b] + 1 and np.linalg.norm(qm[a] - mm[b]) < 2.0 ** (1 - ql[a]) * c:
            lam = 2.0 ** (ql[a] - ml[b])
            row[a] += lam
            col[b] += lam
    return row, col


@pytest.mark.parametrize("use_numba", [False, pytest.param(True, marks=needs_numba)])
def test_lambda_sums_oracle(use_numba):
    rng = np.random.default_rng(3)
    ql = rng.integers(0, 6, size=60)
    ml = rng.integers(0, 6, size=25)
    qm = rng.random((60, 2)) * 4
    mm = rng.random((25, 2)) * 4
    row, col = _kernels.lambda_sums(ql, qm, ml, mm, 0.9, use_numba=use_numba)
    want_row, want_col = _lambda_oracle(ql, qm, ml, mm, 0.9)
    np.testing.assert_allclose(row, want_row)
    np.testing.assert_allclose(col, want_col)


def _ball_oracle(center, radius, shape):
    count = 0
    for c in itertools.product(*(range(n) for n in shape)):
        if np.linalg.norm(np.asarray(c) + 0.5 - center) < radius:
            count += 1
    return count


@settings(max_examples=80, deadline=None)
@given(
    st.integers(1, 3).flatmap(
        lambda d: st.tuples(
            st.lists(st.floats(-2, 14, allow_nan=False), min_size=d, max_size=d),
            st.floats(0.1, 7),
            st.lists(st.integers(1, 12), min_size=d, max_size=d),
        )
    )
)
def test_ball_count_oracle(args):
    center, radius, shape = args
    center = np.asarray(center)
    want = _ball_oracle(center, radius, shape)
    assert _kernels.ball_count(center, radius, shape, use_numba=False) == want
    if _kernels.HAVE_NUMBA:
        assert _kernels.ball_count(center, radius, shape, use_numba=True) == want


def _pairs_oracle(fid, level, lo, hi, cells_by_level):
    """Brute force: element positions whose cell sits inside some term box."""
    elements = [(lev, c) for lev, cells in enumerate(cells_by_level) for c in cells]
    out = set()
    for f, k, a, b in zip(fid, level, lo, hi):
        for pos, (lev, c) in enumerate(elements):
            if lev > k:
                continue
            s = k - lev
            if all((a[i] >> s) <= c[i] <= (b[i] >> s) for i in range(len(c))):
                out.add((pos, f))
    return sorted(out)


@pytest.mark.parametrize("use_numba", [False, pytest.param(True, marks=needs_numba)])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_term_pairs_oracle(use_numba, d):
    rng = np.random.default_rng(11 + d)
    n = 3
    shapes = np.array([[2 << lev] * d for lev in range(n)], dtype=np.int64)
    cells_by_level = []
    for lev in range(n):
        every = list(itertools.product(*(range(s) for s in shapes[lev])))
        pick = rng.choice(len(every), size=min(len(every), 6), replace=False)
        cells_by_level.append(sorted(every[i] for i in pick))
    keys, off = [], [0]
    for lev, cells in enumerate(cells_by_level):
        for c in cells:
            keys.append(int(np.ravel_multi_index(c, shapes[lev])))
        off.append(len(keys))
    nt = 80
    level = rng.integers(0, n, size=nt)
    lo = np.stack([rng.integers(0, shapes[k, 0], size=d) for k in level])
    hi = np.minimum(lo + rng.integers(0, 3, size=(nt, d)), shapes[level] - 1)
    fid = np.sort(rng.integers(0, 20, size=nt))
    pe, pf = _kernels.term_pairs(fid, level, lo, hi, keys, off, shapes, use_numba=use_numba)
    assert list(zip(pe.tolist(), pf.tolist())) == _pairs_oracle(fid, level, lo, hi, cells_by_level)


def test_term_pairs_rejects_unsorted_fid():
    shapes = np.array([[4]])
    with pytest.raises(ValueError):
        _kernels.term_pairs([1, 0], [0, 0], [[0], [1]], [[0], [1]], [0, 1], [0, 2], shapes)
