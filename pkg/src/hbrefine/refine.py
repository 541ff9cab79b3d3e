"""Admissibility-preserving refinement with provenance instrumentation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .admissibility import is_strictly_admissible
from .grid import Element, MeshConfig, ancestor, project_box, support_extension_box, box_cells
from .mesh import HierarchicalMesh, MeshError, initial_mesh

log = logging.getLogger(__name__)


class RefineError(ValueError):
    pass


# -- provenance ----------------------------------------------------------------

@dataclass(frozen=True)
class Marked:
    element: Element
    step: int


@dataclass(frozen=True)
class RecursiveCall:
    caller: Element
    callee: Element
    step: int


@dataclass(frozen=True)
class Created:
    """A child produced by a subdivision.

    ``chain`` is the recursion stack at creation time, from the marked
    element down to the subdivided ``parent``.
    """

    element: Element
    parent: Element
    chain: tuple[Element, ...]
    step: int

    @property
    def root(self) -> Element:
        return self.chain[0]


@dataclass
class ProvenanceLog:
    events: list = field(default_factory=list)

    def _of(self, kind):
        return [ev for ev in self.events if isinstance(ev, kind)]

    @property
    def marked(self) -> list[Marked]:
        return self._of(Marked)

    @property
    def calls(self) -> list[RecursiveCall]:
        return self._of(RecursiveCall)

    @property
    def created(self) -> list[Created]:
        return self._of(Created)

    def to_json(self) -> list[dict]:
        out = []
        for ev in self.events:
            if isinstance(ev, Marked):
                out.append({"event": "marked", "step": ev.step, "element": _el(ev.element)})
            elif isinstance(ev, RecursiveCall):
                out.append(
                    {"event": "call", "step": ev.step, "caller": _el(ev.caller), "callee": _el(ev.callee)}
                )
            else:
                out.append(
                    {
                        "event": "created",
                        "step": ev.step,
                        "element": _el(ev.element),
                        "parent": _el(ev.parent),
                        "chain": [_el(q) for q in ev.chain],
                    }
                )
        return out


def _el(e: Element) -> dict:
    return {"level": e.level, "index": list(e.index)}


# -- neighborhood and the two algorithms ---------------------------------------------

def neighborhood(mesh: HierarchicalMesh, e: Element, m: int) -> list[Element]:
    """Active cells of level ``l - m + 1`` containing part of ``S(e, l - m + 2)``.

    Returned in canonical order; empty when ``l - m + 1 < 0``.
    """
    if not mesh.is_active(e):
        raise RefineError(f"{e} is not active")
    if m < 2:
        raise RefineError(f"class must be >= 2, got {m}")
    coarse = e.level - m + 1
    if coarse < 0:
        return []
    box = support_extension_box(mesh.cfg, e, coarse + 1)
    act = mesh.active[coarse]
    return [Element(coarse, c) for c in box_cells(project_box(box, coarse + 1, coarse)) if c in act]


def _recurse(mesh, e, m, plog, chain, step):
    chain = chain + (e,)
    for q in neighborhood(mesh, e, m):
        if not mesh.is_active(q):
            continue
        if plog is not None:
            plog.events.append(RecursiveCall(e, q, step))
        _recurse(mesh, q, m, plog, chain, step)
    kids = mesh.subdivide(e)
    if plog is not None:
        plog.events.extend(Created(k, e, chain, step) for k in kids)


def refine_recursive(
    mesh: HierarchicalMesh,
    e: Element,
    m: int,
    plog: ProvenanceLog | None = None,
    *,
    step: int = 0,
    inplace: bool = False,
    validate: bool = False,
) -> HierarchicalMesh:
    """Refine the neighborhood of ``e`` recursively, then subdivide ``e``."""
    if not inplace:
        mesh = mesh.copy()
    if not mesh.is_active(e):
        raise RefineError(f"{e} is not active")
    if validate:
        _require_strict(mesh, m)
    _recurse(mesh, e, m, plog, (), step)
    if validate:
        _require_strict(mesh, m, after=True)
    return mesh


def refine(
    mesh: HierarchicalMesh,
    marks: Iterable[Element],
    m: int | None = None,
    plog: ProvenanceLog | None = None,
    *,
    step: int = 0,
    inplace: bool = False,
    validate: bool = False,
    canonical: bool = True,
) -> HierarchicalMesh:
    """Refine every marked element that is still active when its turn comes.

    Marks are visited in canonical order unless ``canonical`` is false, in
    which case the given order is used.
    """
    m = mesh.cfg.class_m if m is None else m
    marks = list(dict.fromkeys(marks))
    for q in marks:
        if not mesh.is_active(q):
            raise RefineError(f"marked element {q} is not active")
    if not inplace:
        mesh = mesh.copy()
    if validate:
        _require_strict(mesh, m)
    if canonical:
        marks.sort()
    if plog is not None:
        plog.events.extend(Marked(q, step) for q in marks)
    for q in marks:
        if mesh.is_active(q):
            _recurse(mesh, q, m, plog, (), step)
    if validate:
        _require_strict(mesh, m, after=True)
    return mesh


def _require_strict(mesh, m, after=False):
    rep = is_strictly_admissible(mesh, m)
    if not rep:
        what = "refinement produced" if after else "input is"
        raise RefineError(f"{what} a mesh that is not strictly admissible of class {m}: {rep.detail}")


# -- histories and marking policies -------------------------------------------------

MarkingPolicy = Callable[[HierarchicalMesh, np.random.Generator, int], list[Element]]


def random_fraction(theta: float = 0.1, cap: int | None = None) -> MarkingPolicy:
    """Mark ``ceil(theta * #active)`` active elements (at most ``cap``) uniformly at random."""
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")

    def policy(mesh, rng, step):
        act = mesh.active_elements()
        k = max(1, int(np.ceil(theta * len(act))))
        if cap is not None:
            k = min(k, cap)
        pick = rng.choice(len(act), size=k, replace=False)
        return [act[i] for i in sorted(pick)]

    policy.__name__ = f"random({theta:g})" if cap is None else f"random({theta:g},{cap})"
    return policy


def corner_chase(mesh, rng, step):
    """Mark the active element at the domain origin (always the deepest there)."""
    return [mesh.active_at([0.0] * mesh.cfg.dim)]


def deepest_element(mesh, rng, step):
    """Mark one random element of the finest active level."""
    lev = max(i for i in range(mesh.num_levels) if mesh.active[i])
    cells = sorted(mesh.active[lev])
    return [Element(lev, cells[int(rng.integers(len(cells)))])]


def single_random(mesh, rng, step):
    act = mesh.active_elements()
    return [act[int(rng.integers(len(act)))]]


POLICIES: dict[str, Callable[..., MarkingPolicy] | MarkingPolicy] = {
    "random": random_fraction,
    "corner": corner_chase,
    "deepest": deepest_element,
    "single": single_random,
}


def get_policy(name: str, theta: float = 0.1) -> MarkingPolicy:
    if name not in POLICIES:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}")
    return random_fraction(theta) if name == "random" else POLICIES[name]


@dataclass
class RefinementHistory:
    """Everything recorded while running a sequence of refine steps."""

    cfg: MeshConfig
    m: int
    initial: HierarchicalMesh
    final: HierarchicalMesh
    marks: list[list[Element]] = field(default_factory=list)
    counts: list[int] = field(default_factory=list)
    log: ProvenanceLog = field(default_factory=ProvenanceLog)
    meshes: Optional[list[HierarchicalMesh]] = None
    policy: str = ""
    seed: Optional[int] = None

    @property
    def steps(self) -> int:
        return len(self.marks)

    @property
    def total_marked(self) -> int:
        return sum(len(mk) for mk in self.marks)

    def marked_pairs(self) -> list[tuple[Element, int]]:
        """The multiset of (element, step) marks."""
        return [(q, j) for j, mk in enumerate(self.marks) for q in mk]

    def new_elements(self) -> list[Element]:
        """Final active elements absent from the initial mesh."""
        return [e for e in self.final.active_elements() if not self.initial.is_active(e)]

    @property
    def from_initial_grid(self) -> bool:
        return self.initial.num_levels == 1


def refine_history(
    cfg: MeshConfig,
    m: int,
    marking: Union[MarkingPolicy, Sequence[Iterable[Element]]],
    steps: int | None = None,
    *,
    seed: int | None = 0,
    start: HierarchicalMesh | None = None,
    validate: bool = False,
    keep_meshes: bool = False,
) -> RefinementHistory:
    """Run ``steps`` refine calls starting from the initial grid.

    ``marking`` is either a policy ``(mesh, rng, step) -> marks`` or an
    explicit list of mark sets (then ``steps`` defaults to its length).
    """
    mesh = initial_mesh(cfg) if start is None else start.copy()
    if start is not None and start.num_levels > 1:
        log.info("history starts from a pre-refined mesh; the complexity bound assumes the initial grid")
    rng = np.random.default_rng(seed)
    explicit = not callable(marking)
    if steps is None:
        if not explicit:
            raise ValueError("steps is required with a marking policy")
        steps = len(marking)
    hist = RefinementHistory(
        cfg, m, mesh.copy(), mesh, counts=[mesh.element_count()], seed=seed,
        policy=getattr(marking, "__name__", "explicit") if not explicit else "explicit",
    )
    if keep_meshes:
        hist.meshes = [mesh.copy()]
    for j in range(steps):
        marks = list(marking[j]) if explicit else marking(mesh, rng, j)
        marks = sorted(set(marks))
        refine(mesh, marks, m, hist.log, step=j, inplace=True, validate=validate)
        hist.marks.append(marks)
        hist.counts.append(mesh.element_count())
        if keep_meshes:
            hist.meshes.append(mesh.copy())
    hist.final = mesh
    return hist
