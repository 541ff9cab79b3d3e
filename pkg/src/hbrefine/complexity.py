"""Checks behind the linear complexity bound.

Given a recorded :class:`~hbrefine.refine.RefinementHistory`, this module
evaluates the lambda weights between created and marked elements. Every
created element must collect weight >= 1 and every mark may hand out at
most Lambda. Ball counts and the relations along provenance chains are
checked as well.
"""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .grid import Element, MeshConfig, midpoint_distance
from .refine import RefinementHistory, get_policy, refine_history

REL_TOL = 1e-9


@dataclass(frozen=True)
class ComplexityConstants:
    dim: int
    degree: int
    m: int
    c_s: float
    c_d: float
    c_tilde: float
    c: float
    lam: float

    @property
    def ball_cap(self) -> float:
        """Claimed bound ``(4 C~ + 1)**d`` on the per-level ball count."""
        return (4.0 * self.c_tilde + 1.0) ** self.dim


def constants(cfg: MeshConfig | int, m: int, degree: int | None = None) -> ComplexityConstants:
    """Closed-form constants for dimension ``d``, degree ``p = max p_i`` and class ``m``.

    Accepts either a config or ``(dim, m, degree)``.
    """
    if isinstance(cfg, MeshConfig):
        d, p = cfg.dim, cfg.max_degree
    else:
        d, p = int(cfg), int(degree)
    if m < 2:
        raise ValueError(f"constants need m >= 2, got {m}")
    c_s = 2.0 ** (m - 2) * (2 * p + 1)
    c_tilde = 0.5 + 2.0 * c_s / (1.0 - 2.0 ** (1 - m))
    sq = math.sqrt(d)
    return ComplexityConstants(
        dim=d, degree=p, m=m, c_s=c_s, c_d=sq * c_s, c_tilde=c_tilde, c=sq * c_tilde,
        lam=4.0 * (4.0 * c_tilde + 1.0) ** d,
    )


def lambda_value(q: Element, qm: Element, consts: ComplexityConstants) -> float:
    """Weight between element ``q`` and a mark ``qm`` (at its marking level)."""
    if q.level > qm.level + 1:
        return 0.0
    if midpoint_distance(q, qm) < 2.0 ** (1 - q.level) * consts.c:
        return 2.0 ** (q.level - qm.level)
    return 0.0


def _arrays(elements: Sequence[Element], dim: int):
    lev = np.fromiter((e.level for e in elements), dtype=np.int64, count=len(elements))
    mid = np.array([e.midpoint() for e in elements], dtype=np.float64).reshape(len(elements), dim)
    return lev, mid


def lambda_matrix_sums(history: RefinementHistory, consts: ComplexityConstants | None = None):
    """``(new, marks, row, col)``: lambda sums per created element and per mark."""
    consts = consts or constants(history.cfg, history.m)
    new = history.new_elements()
    marks = [q for q, _ in history.marked_pairs()]
    ql, qm = _arrays(new, history.cfg.dim)
    ml, mm = _arrays(marks, history.cfg.dim)
    row, col = _kernels.lambda_sums(ql, qm, ml, mm, consts.c)
    return new, marks, row, col


@dataclass
class LowerBoundReport:
    ok: bool
    min_sum: float
    max_deficit: float
    violator: Optional[Element] = None
    checked: int = 0


@dataclass
class UpperBoundReport:
    ok: bool
    max_sum: float
    cap: float
    violator: Optional[tuple[Element, int]] = None
    ball_ok: bool = True
    max_ball: int = 0
    ball_cap: float = 0.0
    ball_violator: Optional[tuple[Element, int, int]] = None
    checked: int = 0


def verify_lower_bound(history: RefinementHistory, consts: ComplexityConstants | None = None) -> LowerBoundReport:
    new, _, row, _ = lambda_matrix_sums(history, consts)
    if not new:
        return LowerBoundReport(True, math.inf, -math.inf, None, 0)
    i = int(np.argmin(row))
    ok = bool(row[i] >= 1.0)
    return LowerBoundReport(ok, float(row[i]), float(1.0 - row[i]), None if ok else new[i], len(new))


def ball_count(q: Element, level: int, cfg: MeshConfig, consts: ComplexityConstants) -> int:
    """Number of level cells whose midpoint is closer than ``2**(1-level) C`` to ``q``'s."""
    scale = 2.0**level
    center = [x * scale for x in q.midpoint()]
    return _kernels.ball_count(center, 2.0 * consts.c, cfg.grid_shape(level))


def verify_upper_bound(
    history: RefinementHistory, consts: ComplexityConstants | None = None, *, balls: bool = True
) -> UpperBoundReport:
    """Weight handed out per mark, plus ball counts on levels ``1 .. l(mark) + 1``."""
    consts = consts or constants(history.cfg, history.m)
    _, marks, _, col = lambda_matrix_sums(history, consts)
    pairs = history.marked_pairs()
    rep = UpperBoundReport(True, 0.0, consts.lam, ball_cap=consts.ball_cap, checked=len(marks))
    if len(col):
        i = int(np.argmax(col))
        rep.max_sum = float(col[i])
        if col[i] > consts.lam:
            rep.ok = False
            rep.violator = pairs[i]
    if balls:
        seen = set()
        for q, _ in pairs:
            for j in range(1, q.level + 2):
                key = (q, j)
                if key in seen:
                    continue
                seen.add(key)
                n = ball_count(q, j, history.cfg, consts)
                if n > rep.max_ball:
                    rep.max_ball = n
                if n > consts.ball_cap and rep.ball_ok:
                    rep.ball_ok = False
                    rep.ball_violator = (q, j, n)
    return rep


@dataclass
class ChainReport:
    """Relations checked on every creation event of a history."""

    ok: bool
    created: int = 0
    level_violations: int = 0  # created level exceeds a caller level + 1
    chain_level_violations: int = 0  # chain levels off the l(Q_0) + j (m - 1) ladder
    distance_violations: int = 0  # distance to the marked root above 2**-l C
    duplicate_creations: int = 0
    trace_violations: int = 0  # backward trace through earlier steps
    max_distance_ratio: float = 0.0
    max_neighbor_ratio: float = 0.0  # neighbor step distance over 2**(-l-1) C_d
    examples: list = field(default_factory=list)


def verify_chains(history: RefinementHistory, consts: ComplexityConstants | None = None) -> ChainReport:
    consts = consts or constants(history.cfg, history.m)
    m = history.m
    rep = ChainReport(True)
    creator = {}
    for ev in history.log.created:
        rep.created += 1
        q = ev.element
        if q in creator:
            rep.duplicate_creations += 1
        creator[q] = ev
        if any(q.level > c.level + 1 for c in ev.chain):
            rep.level_violations += 1
        base = ev.chain[-1].level
        depth = len(ev.chain) - 1
        if any(c.level != base + (depth - i) * (m - 1) for i, c in enumerate(ev.chain)):
            rep.chain_level_violations += 1
        bound = 2.0 ** -q.level * consts.c
        dist = midpoint_distance(q, ev.root)
        rep.max_distance_ratio = max(rep.max_distance_ratio, dist / bound)
        if dist > bound * (1.0 + REL_TOL):
            rep.distance_violations += 1
            rep.examples.append(("distance", ev))
        for a, b in zip(ev.chain, ev.chain[1:]):
            step_bound = 2.0 ** (-a.level - 1) * consts.c_d
            rep.max_neighbor_ratio = max(rep.max_neighbor_ratio, midpoint_distance(a, b) / step_bound)
    # backward trace: created element -> its mark -> the mark's creation -> ...
    for ev in history.log.created:
        cur = ev
        while True:
            q_prev, q_mark = cur.element, cur.root
            if midpoint_distance(q_prev, q_mark) > 2.0 ** -q_prev.level * consts.c * (1 + REL_TOL) or (
                q_prev.level > q_mark.level + 1
            ):
                rep.trace_violations += 1
                break
            nxt = creator.get(q_mark)
            if nxt is None or nxt.step >= cur.step:
                break
            cur = nxt
    rep.ok = not (
        rep.level_violations or rep.chain_level_violations or rep.distance_violations
        or rep.duplicate_creations or rep.trace_violations
    )
    return rep


def complexity_ratio(history: RefinementHistory) -> float:
    """``(#Q_J - #Q_0) / sum_j #M_j``."""
    total = history.total_marked
    if total == 0:
        raise ValueError("no marked elements in the history")
    return (history.final.element_count() - history.initial.element_count()) / total


# -- experiments -----------------------------------------------------------------

CSV_COLUMNS = [
    "seed", "policy", "J", "sum_marked", "new_elements", "ratio", "lambda_cap",
    "max_lb_deficit", "max_ub_sum", "wall_time_ms",
]


@dataclass
class ExperimentRow:
    seed: int
    policy: str
    J: int
    sum_marked: int
    new_elements: int
    ratio: float
    lambda_cap: float
    max_lb_deficit: float
    max_ub_sum: float
    wall_time_ms: float
    counts: list = field(default_factory=list, repr=False)
    in_hypotheses: bool = True

    def csv_row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in CSV_COLUMNS}


def run_single(cfg: MeshConfig, m: int, policy: str, steps: int, seed: int, theta: float = 0.1) -> ExperimentRow:
    t0 = time.perf_counter()
    hist = refine_history(cfg, m, get_policy(policy, theta), steps, seed=seed)
    wall = (time.perf_counter() - t0) * 1e3
    consts = constants(cfg, m)
    lb = verify_lower_bound(hist, consts)
    ub = verify_upper_bound(hist, consts, balls=False)
    total = hist.total_marked
    return ExperimentRow(
        seed=seed, policy=policy, J=steps, sum_marked=total,
        new_elements=hist.final.element_count() - hist.initial.element_count(),
        ratio=complexity_ratio(hist) if total else 0.0, lambda_cap=consts.lam,
        max_lb_deficit=lb.max_deficit if lb.checked else 0.0, max_ub_sum=ub.max_sum,
        wall_time_ms=round(wall, 3), counts=list(hist.counts), in_hypotheses=hist.from_initial_grid,
    )


def run_experiment(
    cfg: MeshConfig,
    m: int,
    policies: Sequence[str],
    steps: int,
    seeds: Sequence[int],
    *,
    theta: float = 0.1,
    jobs: int = 1,
) -> list[ExperimentRow]:
    """Sweep policies and seeds; rows come back sorted by (policy, seed)."""
    tasks = [(cfg, m, pol, steps, s, theta) for pol in policies for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(run_single, *zip(*tasks)))
    else:
        rows = [run_single(*t) for t in tasks]
    order = {p: i for i, p in enumerate(policies)}
    return sorted(rows, key=lambda r: (order[r.policy], r.seed))


def write_csv(rows: Sequence[ExperimentRow], fh) -> None:
    w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r.csv_row())
