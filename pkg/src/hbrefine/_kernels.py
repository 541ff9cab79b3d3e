"""Numeric inner loops: B-spline term evaluation, term/element incidence,
lambda sums and ball counts.

Every kernel has a numba ``@njit`` version and a pure-numpy version with
the same signature. The public names dispatch to numba unless
``HBREFINE_DISABLE_NUMBA=1`` is set or numba cannot be imported.
"""
from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("HBREFINE_DISABLE_NUMBA", "0").lower() not in ("1", "true", "yes")

_CHUNK = 1 << 21  # max pair count per numpy broadcast block


# -- cardinal B-splines ------------------------------------------------------

def _cardinal_numpy(t: np.ndarray, p: int) -> np.ndarray:
    """Uniform B-spline of degree ``p`` on knots ``0..p+1`` (Cox-de Boor)."""
    t = np.asarray(t, dtype=np.float64)
    i = np.arange(p + 1, dtype=np.float64).reshape((p + 1,) + (1,) * t.ndim)
    vals = ((t >= i) & (t < i + 1)).astype(np.float64)
    for q in range(1, p + 1):
        ii = i[: p + 1 - q]
        vals = ((t - ii) * vals[:-1] + (ii + q + 1 - t) * vals[1:]) / q
    return vals[0]


def _eval_terms_numpy(points, levels, knots, coeffs, degrees):
    points = np.asarray(points, dtype=np.float64)
    n, d = points.shape
    out = np.zeros(n)
    nt = len(coeffs)
    if nt == 0:
        return out
    step = max(1, _CHUNK // max(n, 1))
    scale_all = np.ldexp(1.0, np.asarray(levels, dtype=np.int64))
    for s in range(0, nt, step):
        sl = slice(s, s + step)
        scale = scale_all[sl]
        prod = np.broadcast_to(np.asarray(coeffs[sl], dtype=np.float64), (n, len(scale))).copy()
        for k in range(d):
            t = points[:, k : k + 1] * scale[None, :] - knots[sl, k][None, :]
            prod *= _cardinal_numpy(t, int(degrees[k]))
        out += prod.sum(axis=1)
    return out


def _row_major(cells, shape):
    key = np.zeros(len(cells), dtype=np.int64)
    for k in range(len(shape)):
        key = key * shape[k] + cells[:, k]
    return key


def _box_pairs_numpy(level, lo, hi, keys, key_off, shapes):
    """(element, box) pairs for distinct boxes; ``box`` indexes the inputs."""
    n, d = shapes.shape
    box = np.arange(len(level), dtype=np.int64)
    e_idx, b_idx = [], []
    for k in np.unique(level).tolist():
        sel = level == k
        lo0, hi0, box0 = lo[sel], hi[sel], box[sel]
        for lev in range(min(k, n - 1), -1, -1):
            table = keys[key_off[lev] : key_off[lev + 1]]
            if not len(table):
                continue
            s = k - lev
            blo, bhi = lo0 >> s, hi0 >> s
            span = bhi - blo
            for off in np.ndindex(*(span.max(axis=0) + 1).tolist()):
                off = np.asarray(off, dtype=np.int64)
                valid = np.all(span >= off, axis=1)
                ck = _row_major(blo[valid] + off, shapes[lev])
                pos = np.searchsorted(table, ck)
                pos[pos == len(table)] = 0
                hit = table[pos] == ck
                e_idx.append(key_off[lev] + pos[hit])
                b_idx.append(box0[valid][hit])
    if not e_idx:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(e_idx), np.concatenate(b_idx)


def _join_numpy(fid, group, ptr, elems, n_elems):
    lens = ptr[group + 1] - ptr[group]
    f = np.repeat(fid, lens)
    starts = np.repeat(ptr[group] - np.cumsum(lens) + lens, lens)
    e = elems[starts + np.arange(len(f))]
    width = int(fid.max()) + 1 if len(fid) else 1
    pair = np.unique(e * width + f)
    return pair // width, pair % width


def _lambda_sums_numpy(q_level, q_mid, m_level, m_mid, c_const):
    q_level = np.asarray(q_level, dtype=np.int64)
    m_level = np.asarray(m_level, dtype=np.int64)
    row = np.zeros(len(q_level))
    col = np.zeros(len(m_level))
    if len(q_level) == 0 or len(m_level) == 0:
        return row, col
    step = max(1, _CHUNK // len(m_level))
    for s in range(0, len(q_level), step):
        ql = q_level[s : s + step]
        diff = q_mid[s : s + step, None, :] - m_mid[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        radius = np.ldexp(1.0, 1 - ql)[:, None] * c_const
        ok = (ql[:, None] <= m_level[None, :] + 1) & (dist < radius)
        lam = np.where(ok, np.ldexp(1.0, ql[:, None] - m_level[None, :]), 0.0)
        row[s : s + step] = lam.sum(axis=1)
        col += lam.sum(axis=0)
    return row, col


def _ball_count_numpy(center, radius, shape):
    """Cells ``i`` of a grid with ``|i + 1/2 - center| < radius``."""
    center = np.asarray(center, dtype=np.float64)
    d = len(center)
    axes = []
    for k in range(d - 1):
        lo = max(0, int(math.floor(center[k] - 0.5 - radius)))
        hi = min(int(shape[k]) - 1, int(math.ceil(center[k] - 0.5 + radius)))
        if lo > hi:
            return 0
        axes.append(np.arange(lo, hi + 1, dtype=np.float64) + 0.5 - center[k])
    if axes:
        grids = np.meshgrid(*axes, indexing="ij")
        s = np.zeros(grids[0].shape)
        for g in grids:
            s += g * g
        s = s.ravel()
    else:
        s = np.zeros(1)
    rem = radius * radius - s
    ok = rem > 0
    w = np.sqrt(rem[ok])
    c = center[d - 1] - 0.5
    lo = np.maximum(np.floor(c - w) + 1, 0)
    hi = np.minimum(np.ceil(c + w) - 1, shape[d - 1] - 1)
    return int(np.maximum(hi - lo + 1, 0).sum())


# -- numba versions ----------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _cardinal_scalar(t, p):
        if t < 0.0 or t >= p + 1.0:
            return 0.0
        buf = np.zeros(p + 1)
        for i in range(p + 1):
            if i <= t < i + 1:
                buf[i] = 1.0
        for q in range(1, p + 1):
            for i in range(p + 1 - q):
                buf[i] = ((t - i) * buf[i] + (i + q + 1 - t) * buf[i + 1]) / q
        return buf[0]

    @njit(cache=True)
    def _eval_terms_numba(points, levels, knots, coeffs, degrees):
        n, d = points.shape
        out = np.zeros(n)
        for a in range(n):
            acc = 0.0
            for b in range(len(coeffs)):
                scale = 2.0 ** levels[b]
                val = coeffs[b]
                for k in range(d):
                    t = points[a, k] * scale - knots[b, k]
                    if t < 0.0 or t >= degrees[k] + 1.0:
                        val = 0.0
                        break
                    val *= _cardinal_scalar(t, degrees[k])
                acc += val
            out[a] = acc
        return out

    @njit(cache=True)
    def _box_pairs_pass(level, lo, hi, keys, key_off, shapes, out_e, out_b, fill):
        n, d = shapes.shape
        cur = np.zeros(d, dtype=np.int64)
        blo = np.zeros(d, dtype=np.int64)
        bhi = np.zeros(d, dtype=np.int64)
        count = 0
        for t in range(len(level)):
            k = level[t]
            for lev in range(min(k, n - 1), -1, -1):
                a = key_off[lev]
                b = key_off[lev + 1]
                if a == b:
                    continue
                s = k - lev
                for i in range(d):
                    blo[i] = lo[t, i] >> s
                    bhi[i] = hi[t, i] >> s
                    cur[i] = blo[i]
                while True:
                    key = 0
                    for i in range(d):
                        key = key * shapes[lev, i] + cur[i]
                    j = a + np.searchsorted(keys[a:b], key)
                    if j < b and keys[j] == key:
                        if fill:
                            out_e[count] = j
                            out_b[count] = t
                        count += 1
                    i = d - 1
                    while i >= 0:
                        cur[i] += 1
                        if cur[i] <= bhi[i]:
                            break
                        cur[i] = blo[i]
                        i -= 1
                    if i < 0:
                        break
        return count

    def _box_pairs_numba(level, lo, hi, keys, key_off, shapes):
        dummy = np.empty(0, dtype=np.int64)
        count = _box_pairs_pass(level, lo, hi, keys, key_off, shapes, dummy, dummy, False)
        out_e = np.empty(count, dtype=np.int64)
        out_b = np.empty(count, dtype=np.int64)
        _box_pairs_pass(level, lo, hi, keys, key_off, shapes, out_e, out_b, True)
        return out_e, out_b

    @njit(cache=True)
    def _join_pass(fid, group, ptr, elems, stamp, out_e, out_f, fill):
        count = 0
        for t in range(len(fid)):
            f = fid[t]
            g = group[t]
            for j in range(ptr[g], ptr[g + 1]):
                e = elems[j]
                if stamp[e] != f:
                    stamp[e] = f
                    if fill:
                        out_e[count] = e
                        out_f[count] = f
                    count += 1
        return count

    def _join_numba(fid, group, ptr, elems, n_elems):
        stamp = np.full(n_elems, -1, dtype=np.int64)
        dummy = np.empty(0, dtype=np.int64)
        count = _join_pass(fid, group, ptr, elems, stamp, dummy, dummy, False)
        out_e = np.empty(count, dtype=np.int64)
        out_f = np.empty(count, dtype=np.int64)
        stamp[:] = -1
        _join_pass(fid, group, ptr, elems, stamp, out_e, out_f, True)
        return out_e, out_f

    @njit(cache=True)
    def _lambda_sums_numba(q_level, q_mid, m_level, m_mid, c_const):
        nq, d = q_mid.shape
        nm = len(m_level)
        row = np.zeros(nq)
        col = np.zeros(nm)
        for a in range(nq):
            radius = 2.0 ** (1 - q_level[a]) * c_const
            for b in range(nm):
                if q_level[a] > m_level[b] + 1:
                    continue
                s = 0.0
                for k in range(d):
                    diff = q_mid[a, k] - m_mid[b, k]
                    s += diff * diff
                if np.sqrt(s) < radius:
                    lam = 2.0 ** (q_level[a] - m_level[b])
                    row[a] += lam
                    col[b] += lam
        return row, col

    @njit(cache=True)
    def _ball_count_numba(center, radius, shape):
        d = len(center)
        lo = np.zeros(d, dtype=np.int64)
        hi = np.zeros(d, dtype=np.int64)
        for k in range(d - 1):
            lo[k] = max(0, int(np.floor(center[k] - 0.5 - radius)))
            hi[k] = min(shape[k] - 1, int(np.ceil(center[k] - 0.5 + radius)))
            if lo[k] > hi[k]:
                return 0
        cur = lo.copy()
        total = 0
        c = center[d - 1] - 0.5
        while True:
            s = 0.0
            for k in range(d - 1):
                diff = cur[k] + 0.5 - center[k]
                s += diff * diff
            rem = radius * radius - s
            if rem > 0.0:
                w = np.sqrt(rem)
                a = max(np.floor(c - w) + 1.0, 0.0)
                b = min(np.ceil(c + w) - 1.0, shape[d - 1] - 1.0)
                if b >= a:
                    total += int(b - a + 1.0)
            # odometer over the first d-1 axes
            k = d - 2
            while k >= 0:
                cur[k] += 1
                if cur[k] <= hi[k]:
                    break
                cur[k] = lo[k]
                k -= 1
            if k < 0:
                break
        return total


# -- dispatch ----------------------------------------------------------------

def eval_terms(points, levels, knots, coeffs, degrees, *, use_numba: bool | None = None) -> np.ndarray:
    """Sum ``coeffs[b] * B_b(x)`` over uniform B-spline terms at each point.

    ``levels[b]`` and ``knots[b]`` locate term ``b``: its support is the
    box ``[knots[b], knots[b] + degrees + 1] * 2**-levels[b]``.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    levels = np.ascontiguousarray(levels, dtype=np.int64)
    knots = np.ascontiguousarray(knots, dtype=np.int64).reshape(len(levels), points.shape[1])
    coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
    degrees = np.ascontiguousarray(degrees, dtype=np.int64)
    if USE_NUMBA if use_numba is None else use_numba:
        return _eval_terms_numba(points, levels, knots, coeffs, degrees)
    return _eval_terms_numpy(points, levels, knots, coeffs, degrees)


def term_pairs(fid, level, lo, hi, keys, key_off, shapes, *, use_numba: bool | None = None):
    """Distinct (element, function) pairs where a term's support meets an element.

    Term ``t`` belongs to function ``fid[t]`` (nondecreasing) and covers the
    level ``level[t]`` cell box ``lo[t]..hi[t]``. Elements of level ``l`` are
    the sorted row-major cell keys ``keys[key_off[l]:key_off[l + 1]]`` of a
    grid with shape ``shapes[l]``, and an element's position is its index
    into ``keys``. Each term is checked against its own level and all
    coarser ones. Returns ``(element, function)`` arrays sorted by element.
    """
    fid = np.ascontiguousarray(fid, dtype=np.int64)
    level = np.ascontiguousarray(level, dtype=np.int64)
    shapes = np.ascontiguousarray(shapes, dtype=np.int64)
    d = shapes.shape[1]
    lo = np.ascontiguousarray(lo, dtype=np.int64).reshape(len(fid), d)
    hi = np.ascontiguousarray(hi, dtype=np.int64).reshape(len(fid), d)
    keys = np.ascontiguousarray(keys, dtype=np.int64)
    key_off = np.ascontiguousarray(key_off, dtype=np.int64)
    if len(fid) > 1 and np.any(np.diff(fid) < 0):
        raise ValueError("fid must be nondecreasing")
    fast = USE_NUMBA if use_numba is None else use_numba
    # terms with identical boxes meet the same elements; resolve each box once
    rows = np.column_stack([level, lo, hi])
    order = np.lexsort(rows.T[::-1])
    srt = rows[order]
    first = np.ones(len(srt), dtype=bool)
    first[1:] = np.any(srt[1:] != srt[:-1], axis=1)
    group = np.empty(len(fid), dtype=np.int64)
    group[order] = np.cumsum(first) - 1
    ub = srt[first]
    ulev, ulo, uhi = (np.ascontiguousarray(x) for x in (ub[:, 0], ub[:, 1 : 1 + d], ub[:, 1 + d :]))
    if fast:
        be, bb = _box_pairs_numba(ulev, ulo, uhi, keys, key_off, shapes)
    else:
        be, bb = _box_pairs_numpy(ulev, ulo, uhi, keys, key_off, shapes)
    by_box = np.argsort(bb, kind="stable")
    elems = be[by_box]
    ptr = np.zeros(len(ub) + 1, dtype=np.int64)
    np.cumsum(np.bincount(bb, minlength=len(ub)), out=ptr[1:])
    if fast:
        pe, pf = _join_numba(fid, group, ptr, elems, len(keys))
    else:
        pe, pf = _join_numpy(fid, group, ptr, elems, len(keys))
    order = np.lexsort((pf, pe))
    return pe[order], pf[order]


def lambda_sums(q_level, q_mid, m_level, m_mid, c_const: float, *, use_numba: bool | None = None):
    """Row and column sums of the lambda weight matrix.

    Returns ``(row, col)`` with ``row[a] = sum_b lam(q_a, m_b)`` and
    ``col[b] = sum_a lam(q_a, m_b)``.
    """
    q_level = np.ascontiguousarray(q_level, dtype=np.int64)
    m_level = np.ascontiguousarray(m_level, dtype=np.int64)
    d = np.shape(q_mid)[1] if np.ndim(q_mid) == 2 else np.shape(m_mid)[1]
    q_mid = np.ascontiguousarray(q_mid, dtype=np.float64).reshape(len(q_level), d)
    m_mid = np.ascontiguousarray(m_mid, dtype=np.float64).reshape(len(m_level), d)
    if USE_NUMBA if use_numba is None else use_numba:
        return _lambda_sums_numba(q_level, q_mid, m_level, m_mid, float(c_const))
    return _lambda_sums_numpy(q_level, q_mid, m_level, m_mid, float(c_const))


def ball_count(center, radius: float, shape, *, use_numba: bool | None = None) -> int:
    """Count grid cells whose midpoint lies strictly within ``radius``.

    Coordinates are in cell units: cell ``i`` has midpoint ``i + 1/2``.
    """
    center = np.ascontiguousarray(center, dtype=np.float64)
    shape = np.ascontiguousarray(shape, dtype=np.int64)
    if USE_NUMBA if use_numba is None else use_numba:
        return int(_ball_count_numba(center, float(radius), shape))
    return _ball_count_numpy(center, float(radius), shape)


def cardinal_bspline(t, p: int) -> np.ndarray:
    return _cardinal_numpy(t, p)
