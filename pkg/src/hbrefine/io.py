"""Mesh and marks documents (JSON) and SVG rendering."""
from __future__ import annotations

import json
from typing import Any

from .grid import Element, MeshConfig
from .mesh import HierarchicalMesh, MeshError

FORMAT_VERSION = 1


class FormatError(ValueError):
    """Malformed or invalid document; the message names the field."""


def emit_mesh(mesh: HierarchicalMesh) -> dict[str, Any]:
    cfg = mesh.cfg
    return {
        "format_version": FORMAT_VERSION,
        "dim": cfg.dim,
        "degrees": list(cfg.degrees),
        "extents": list(cfg.extents),
        "class_m": cfg.class_m,
        "levels": [[list(c) for c in cells] for cells in mesh.hierarchy()],
    }


def dumps_mesh(mesh: HierarchicalMesh) -> str:
    """Canonical text form: one subdomain per line, cells sorted."""
    doc = emit_mesh(mesh)
    head = {k: v for k, v in doc.items() if k != "levels"}
    lines = ["{"]
    for k, v in head.items():
        lines.append(f"  {json.dumps(k)}: {json.dumps(v)},")
    lines.append('  "levels": [')
    lv = [f"    {json.dumps(cells, separators=(',', ':'))}" for cells in doc["levels"]]
    lines.append(",\n".join(lv))
    lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _load_json(text: str, what: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{what}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _int_list(doc: dict, key: str, n: int | None = None) -> list[int]:
    val = doc.get(key)
    if not isinstance(val, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in val):
        raise FormatError(f"field '{key}': expected a list of integers")
    if n is not None and len(val) != n:
        raise FormatError(f"field '{key}': expected {n} entries, got {len(val)}")
    return val


def parse_mesh(doc: str | dict) -> HierarchicalMesh:
    """Rebuild a mesh from a document, re-deriving and validating everything."""
    if isinstance(doc, str):
        doc = _load_json(doc, "mesh document")
    if not isinstance(doc, dict):
        raise FormatError("mesh document: expected a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"field 'format_version': unsupported version {version!r} (expected {FORMAT_VERSION})")
    dim = doc.get("dim")
    if not isinstance(dim, int) or dim < 1:
        raise FormatError("field 'dim': expected a positive integer")
    degrees = _int_list(doc, "degrees", dim)
    extents = _int_list(doc, "extents", dim)
    class_m = doc.get("class_m", 2)
    if not isinstance(class_m, int):
        raise FormatError("field 'class_m': expected an integer")
    try:
        cfg = MeshConfig(dim, tuple(degrees), class_m, tuple(extents))
    except ValueError as exc:
        raise FormatError(f"configuration: {exc}") from None
    levels = doc.get("levels")
    if not isinstance(levels, list) or not levels:
        raise FormatError("field 'levels': expected a nonempty list of cell lists")
    cells = []
    for i, lev in enumerate(levels):
        if not isinstance(lev, list):
            raise FormatError(f"field 'levels[{i}]': expected a list of cells")
        row = []
        for c in lev:
            if not (isinstance(c, list) and len(c) == dim and all(isinstance(x, int) for x in c)):
                raise FormatError(f"field 'levels[{i}]': cell {c!r} is not a list of {dim} integers")
            row.append(tuple(c))
        if len(set(row)) != len(row):
            raise FormatError(f"field 'levels[{i}]': duplicate cells")
        cells.append(row)
    try:
        return HierarchicalMesh.from_hierarchy(cfg, cells)
    except MeshError as exc:
        raise FormatError(f"field {exc}") from None


def emit_marks(marks) -> list[dict]:
    return [{"level": e.level, "index": list(e.index)} for e in sorted(marks)]


def parse_marks(doc: str | list) -> list[Element]:
    if isinstance(doc, str):
        doc = _load_json(doc, "marks document")
    if not isinstance(doc, list):
        raise FormatError("marks document: expected a list of {level, index} records")
    out = []
    for i, rec in enumerate(doc):
        if not isinstance(rec, dict) or not isinstance(rec.get("level"), int) or not isinstance(rec.get("index"), list):
            raise FormatError(f"marks[{i}]: expected {{'level': int, 'index': [int, ...]}}")
        out.append(Element(rec["level"], tuple(int(x) for x in rec["index"])))
    return out


# -- rendering ---------------------------------------------------------------------

_PALETTE = ["#f7fbff", "#deebf7", "#c6dbef", "#9ecae1", "#6baed6", "#4292c6", "#2171b5", "#08519c", "#08306b"]


def _color(level: int) -> str:
    return _PALETTE[min(level, len(_PALETTE) - 1)]


def render_svg(mesh: HierarchicalMesh, *, size: int = 512, legend: bool = True) -> str:
    """One rectangle per active element of a bivariate mesh."""
    cfg = mesh.cfg
    if cfg.dim != 2:
        raise ValueError(f"render_svg needs a bivariate mesh, got dim={cfg.dim}")
    w, h = cfg.extents
    scale = size / max(w, h)
    width, height = w * scale, h * scale
    extra = 24 * mesh.num_levels + 16 if legend else 0
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width + extra:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width + extra:.3f} {height:.3f}">'
    ]
    for e in mesh.active_elements():
        s = scale * 2.0**-e.level
        x = e.index[0] * s
        y = height - (e.index[1] + 1) * s
        stroke = max(0.25, 2.0 * 0.7**e.level)
        out.append(
            f'<rect x="{x:.4f}" y="{y:.4f}" width="{s:.4f}" height="{s:.4f}" '
            f'fill="{_color(e.level)}" stroke="#000" stroke-width="{stroke:.3f}" data-level="{e.level}"/>'
        )
    if legend:
        for lev in range(mesh.num_levels):
            y = 8 + 24 * lev
            out.append(
                f'<g class="legend"><rect x="{width + 8:.3f}" y="{y}" width="16" height="16" '
                f'fill="{_color(lev)}" stroke="#000"/>'
                f'<text x="{width + 28:.3f}" y="{y + 12}" font-size="12">{lev}</text></g>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_intervals_svg(mesh: HierarchicalMesh, *, size: int = 512) -> str:
    """Univariate mesh as a bar chart: one bar per element, height by level."""
    cfg = mesh.cfg
    if cfg.dim != 1:
        raise ValueError(f"render_intervals_svg needs a univariate mesh, got dim={cfg.dim}")
    scale = size / cfg.extents[0]
    bar = 16
    height = bar * (mesh.num_levels + 1)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{height}" viewBox="0 0 {size} {height}">']
    for e in mesh.active_elements():
        s = scale * 2.0**-e.level
        hgt = bar * (e.level + 1)
        out.append(
            f'<rect x="{e.index[0] * s:.4f}" y="{height - hgt}" width="{s:.4f}" height="{hgt}" '
            f'fill="{_color(e.level)}" stroke="#000" stroke-width="0.5" data-level="{e.level}"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render(mesh: HierarchicalMesh, **kw) -> str:
    if mesh.cfg.dim == 2:
        return render_svg(mesh, **kw)
    if mesh.cfg.dim == 1:
        return render_intervals_svg(mesh, **{k: v for k, v in kw.items() if k == "size"})
    raise ValueError(f"cannot render a {mesh.cfg.dim}-variate mesh")
