"""Command line interface: ``hbrefine <command> ...``.

Usage errors exit with status 2. Domain errors and failed checks exit
with status 1.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import admissibility, basis, complexity, io
from .grid import MeshConfig
from .mesh import MeshError
from .overlay import check_overlay_properties, overlay
from .refine import POLICIES, ProvenanceLog, RefineError, refine


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _write(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}")


def _seeds(text: str) -> list[int]:
    """``"a:b"`` for ``range(a, b)`` or a comma list."""
    if ":" in text:
        a, b = text.split(":", 1)
        try:
            return list(range(int(a), int(b)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad seed range {text!r}")
    return _int_list(text)


def cmd_refine(args) -> int:
    mesh = io.parse_mesh(_read(args.mesh))
    marks = io.parse_marks(_read(args.marks))
    m = args.m or mesh.cfg.class_m
    plog = ProvenanceLog() if args.log else None
    out = refine(mesh, marks, m, plog, validate=args.validate)
    _write(args.output, io.dumps_mesh(out))
    if args.log:
        _write(args.log, json.dumps(plog.to_json(), indent=1) + "\n")
    return 0


def cmd_check(args) -> int:
    mesh = io.parse_mesh(_read(args.mesh))
    m = args.m or mesh.cfg.class_m
    strict = admissibility.is_strictly_admissible(mesh, m)
    print(f"strictly admissible: {str(bool(strict)).lower()} (class {m})")
    if not strict:
        print(f"  witness: {strict.witness} -- {strict.detail}")
    sc = admissibility.strict_class(mesh, args.max_class)
    print(f"strict class: {sc if sc is not None else f'none in 2..{args.max_class}'}")
    levels = admissibility.element_levels(mesh)
    adm = admissibility.is_admissible(mesh, m, levels=levels)
    print(f"admissible: {str(bool(adm)).lower()} (class {m})")
    print(f"admissible class: {levels.max_span}")
    if not adm:
        print(f"  witness: {adm.witness} -- levels {adm.level_range[0]}..{adm.level_range[1]}")
    return 0 if strict and adm else 1


def cmd_overlay(args) -> int:
    a = io.parse_mesh(_read(args.mesh1))
    b = io.parse_mesh(_read(args.mesh2))
    ov = overlay(a, b)
    _write(args.output, io.dumps_mesh(ov))
    if args.check is not None:
        rep = check_overlay_properties(a, b, args.check)
        print(f"strictly admissible: {str(rep.strictly_admissible).lower()}", file=sys.stderr)
        print(f"interior regions contain union: {str(rep.omega_contains_union).lower()}", file=sys.stderr)
        print(f"refines both: {str(rep.refines_both).lower()}", file=sys.stderr)
        print(f"count bound: {rep.count} <= {rep.bound}: {str(rep.count_bound).lower()}", file=sys.stderr)
        return 0 if rep else 1
    return 0


def cmd_basis(args) -> int:
    mesh = io.parse_mesh(_read(args.mesh))
    cfg = mesh.cfg
    funcs = basis.thb_basis(mesh)
    axes = [(np.arange(args.samples) + 0.5) / args.samples * n for n in cfg.extents]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    total = basis.basis_sum(cfg, funcs, pts)
    resid = float(np.max(np.abs(total - 1.0)))
    print("level\tknots\tterms")
    for f in funcs:
        print(f"{f.origin.level}\t{','.join(map(str, f.origin.knots))}\t{len(f)}")
    print(f"# functions: {len(funcs)}")
    print(f"# partition of unity residual: {resid:.3e} over {len(pts)} points")
    return 0


def cmd_complexity(args) -> int:
    degrees = args.degrees if len(args.degrees) == args.dim else args.degrees * args.dim
    extents = args.extents if len(args.extents) == args.dim else args.extents * args.dim
    cfg = MeshConfig(args.dim, tuple(degrees), args.m, tuple(extents))
    policies = [p for p in args.policy.split(",") if p]
    for p in policies:
        if p not in POLICIES:
            raise ValueError(f"unknown policy {p!r}; choose from {', '.join(sorted(POLICIES))}")
    rows = complexity.run_experiment(cfg, args.m, policies, args.steps, args.seeds, theta=args.theta, jobs=args.jobs)
    if args.out in (None, "-"):
        complexity.write_csv(rows, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            complexity.write_csv(rows, fh)
    bad = [r for r in rows if r.ratio > r.lambda_cap or r.max_lb_deficit > 0 or r.max_ub_sum > r.lambda_cap]
    worst = max((r.ratio for r in rows), default=0.0)
    print(f"runs: {len(rows)}, max ratio {worst:.4g}, cap {rows[0].lambda_cap if rows else 0:.6g}, "
          f"bound violations: {len(bad)}", file=sys.stderr)
    return 1 if bad else 0


def cmd_render(args) -> int:
    mesh = io.parse_mesh(_read(args.mesh))
    _write(args.output, io.render(mesh, legend=not args.no_legend) if mesh.cfg.dim == 2 else io.render(mesh))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hbrefine", description="Admissible hierarchical dyadic mesh refinement.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("refine", help="refine a mesh at marked elements")
    r.add_argument("mesh")
    r.add_argument("marks")
    r.add_argument("--class", dest="m", type=int, default=None)
    r.add_argument("-o", "--output", default=None)
    r.add_argument("--log", default=None, help="write the provenance log (JSON) here")
    r.add_argument("--validate", action="store_true", help="check strict admissibility before and after")
    r.set_defaults(func=cmd_refine)

    c = sub.add_parser("check", help="report admissibility classes")
    c.add_argument("mesh")
    c.add_argument("--class", dest="m", type=int, default=None)
    c.add_argument("--max-class", type=int, default=6)
    c.set_defaults(func=cmd_check)

    o = sub.add_parser("overlay", help="coarsest common refinement of two meshes")
    o.add_argument("mesh1")
    o.add_argument("mesh2")
    o.add_argument("-o", "--output", default=None)
    o.add_argument("--check", type=int, default=None, metavar="M")
    o.set_defaults(func=cmd_overlay)

    b = sub.add_parser("basis", help="list truncated basis functions")
    b.add_argument("mesh")
    b.add_argument("--samples", type=int, default=16, help="sample points per direction")
    b.set_defaults(func=cmd_basis)

    x = sub.add_parser("complexity", help="run the refinement complexity experiment")
    x.add_argument("--dim", type=int, required=True)
    x.add_argument("--degrees", type=_int_list, required=True)
    x.add_argument("--class", dest="m", type=int, default=2)
    x.add_argument("--extents", type=_int_list, default=[8])
    x.add_argument("--policy", default="random")
    x.add_argument("--theta", type=float, default=0.1)
    x.add_argument("--steps", type=int, required=True)
    x.add_argument("--seeds", "--seed", dest="seeds", type=_seeds, default=[0], help="a seed, a list a,b,c or a range a:b")
    x.add_argument("--jobs", type=int, default=1)
    x.add_argument("--out", default=None)
    x.set_defaults(func=cmd_complexity)

    v = sub.add_parser("render", help="draw a mesh as SVG")
    v.add_argument("mesh")
    v.add_argument("-o", "--output", default=None)
    v.add_argument("--no-legend", action="store_true")
    v.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (io.FormatError, MeshError, RefineError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
