import json
import re
import subprocess
import sys

import pytest

from hbrefine import Element, MeshConfig, initial_mesh, is_strictly_admissible, refine, refine_history, subdivide
from hbrefine import io
from hbrefine.admissibility import strict_class
from hbrefine.cli import main

from helpers import random_history


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_emit_initial():
    doc = io.emit_mesh(initial_mesh(MeshConfig.uniform(2, 1, 4)))
    assert doc["levels"] == [[[i, j] for i in range(4) for j in range(4)]]
    assert doc["format_version"] == io.FORMAT_VERSION


@pytest.mark.parametrize("seed", range(100))
def test_round_trip(seed):
    mesh = random_history(3000 + seed, max_steps=6, keep_meshes=False).final
    text = io.dumps_mesh(mesh)
    back = io.parse_mesh(text)
    assert back == mesh and back.active_elements() == mesh.active_elements()
    assert io.dumps_mesh(back) == text
    assert io.parse_mesh(json.loads(text)) == mesh


def test_parse_errors():
    cfg = MeshConfig(1, (1,), 2, (2,))
    good = io.emit_mesh(subdivide(subdivide(initial_mesh(cfg), Element(0, (0,))), Element(1, (1,))))
    bad = dict(good, levels=[good["levels"][0], good["levels"][1], [[2]]])
    with pytest.raises(io.FormatError, match=r"levels\[2\].*\(2,\).*lacks sibling"):
        io.parse_mesh(bad)
    with pytest.raises(io.FormatError, match="format_version"):
        io.parse_mesh(dict(good, format_version=7))
    with pytest.raises(io.FormatError, match="line 1"):
        io.parse_mesh("{not json")
    with pytest.raises(io.FormatError, match="'degrees'"):
        io.parse_mesh(dict(good, degrees=[1, 2]))
    with pytest.raises(io.FormatError, match="configuration"):
        io.parse_mesh(dict(good, class_m=1))
    with pytest.raises(io.FormatError, match=r"levels\[1\]"):
        io.parse_mesh(dict(good, levels=[good["levels"][0], [[0, 1]]]))
    with pytest.raises(io.FormatError, match="duplicate"):
        io.parse_mesh(dict(good, levels=[good["levels"][0], [[0], [0], [1]]]))


def test_marks_round_trip_and_errors():
    marks = [Element(1, (2, 3)), Element(0, (0, 1))]
    assert io.parse_marks(json.dumps(io.emit_marks(marks))) == sorted(marks)
    with pytest.raises(io.FormatError, match=r"marks\[0\]"):
        io.parse_marks('[{"level": "x"}]')
    with pytest.raises(io.FormatError):
        io.parse_marks('{"level": 0}')


def test_render_counts_and_determinism():
    mesh = initial_mesh(MeshConfig.uniform(2, 2, 8))
    assert io.render_svg(mesh).count("<rect") - mesh.num_levels == 64
    assert io.render_svg(mesh, legend=False).count("<rect") == 64
    out = subdivide(mesh, Element(0, (2, 5)))
    svg = io.render_svg(out, legend=False)
    assert svg.count("<rect") == 67
    assert svg == io.render_svg(out.copy(), legend=False)
    assert len(re.findall(r'data-level="1"', svg)) == 4
    with pytest.raises(ValueError):
        io.render_svg(initial_mesh(MeshConfig.uniform(1, 1, 4)))
    with pytest.raises(ValueError):
        io.render(initial_mesh(MeshConfig.uniform(3, 1, 2)))
    bars = io.render(subdivide(initial_mesh(MeshConfig.uniform(1, 1, 4)), Element(0, (1,))))
    assert bars.count("<rect") == 5


@pytest.fixture
def refined_files(tmp_path):
    cfg = MeshConfig.uniform(2, 2, 4)
    mesh = refine_history(cfg, 2, [[Element(0, (1, 1))], [Element(1, (2, 2))]]).final
    mesh_path = _write(tmp_path, "mesh.json", io.dumps_mesh(mesh))
    marks_path = _write(tmp_path, "marks.json", json.dumps(io.emit_marks([Element(2, (4, 4))])))
    return tmp_path, mesh, mesh_path, marks_path


def test_cli_refine_then_check(refined_files, capsys):
    tmp_path, mesh, mesh_path, marks_path = refined_files
    out_path = str(tmp_path / "out.json")
    log_path = str(tmp_path / "log.json")
    assert main(["refine", "--class", "2", mesh_path, marks_path, "-o", out_path, "--log", log_path, "--validate"]) == 0
    out = io.parse_mesh(open(out_path).read())
    assert is_strictly_admissible(out, 2) and not out.is_active(Element(2, (4, 4)))
    assert any(ev["event"] == "created" for ev in json.load(open(log_path)))
    capsys.readouterr()
    assert main(["check", "--class", "2", out_path]) == 0
    text = capsys.readouterr().out
    assert "strictly admissible: true" in text and "admissible: true (class 2)" in text


def test_cli_check_reports_failure(tmp_path, capsys):
    cfg = MeshConfig(1, (1,), 2, (4,))
    bad = subdivide(subdivide(initial_mesh(cfg), Element(0, (1,))), Element(1, (2,)))
    path = _write(tmp_path, "bad.json", io.dumps_mesh(bad))
    assert main(["check", path, "--class", "2"]) == 1
    text = capsys.readouterr().out
    assert "strictly admissible: false" in text and "witness" in text
    assert f"strict class: {strict_class(bad, 6)}" in text


def test_cli_errors(refined_files, capsys):
    tmp_path, mesh, mesh_path, marks_path = refined_files
    with pytest.raises(SystemExit) as exc:
        main(["check", mesh_path, "--bogus"])
    assert exc.value.code == 2
    inactive = _write(tmp_path, "inactive.json", json.dumps(io.emit_marks([Element(0, (1, 1))])))
    assert main(["refine", mesh_path, inactive]) == 1
    assert "not active" in capsys.readouterr().err
    assert main(["check", str(tmp_path / "missing.json")]) == 1
    broken = _write(tmp_path, "broken.json", "{")
    assert main(["render", broken]) == 1


def test_cli_overlay_basis_render(refined_files, capsys):
    tmp_path, mesh, mesh_path, marks_path = refined_files
    other = refine(initial_mesh(mesh.cfg), [Element(0, (3, 0))], 2)
    other_path = _write(tmp_path, "other.json", io.dumps_mesh(other))
    out_path = str(tmp_path / "ov.json")
    assert main(["overlay", mesh_path, other_path, "-o", out_path, "--check", "2"]) == 0
    assert "count bound" in capsys.readouterr().err
    ov = io.parse_mesh(open(out_path).read())
    assert len(ov) <= len(mesh) + len(other) - 16

    assert main(["basis", mesh_path, "--samples", "8"]) == 0
    text = capsys.readouterr().out
    resid = float(re.search(r"residual: (\S+)", text).group(1))
    assert resid < 1e-12

    svg_path = str(tmp_path / "m.svg")
    assert main(["render", mesh_path, "-o", svg_path, "--no-legend"]) == 0
    assert open(svg_path).read().count("<rect") == len(mesh)


def test_cli_complexity(tmp_path, capsys):
    out = tmp_path / "res.csv"
    argv = ["complexity", "--dim", "2", "--degrees", "2", "--class", "2", "--policy", "single,corner",
            "--steps", "4", "--seeds", "0:3", "--out", str(out)]
    assert main(argv) == 0
    rows = out.read_text().splitlines()
    assert rows[0].startswith("seed,policy,J,sum_marked") and len(rows) == 7
    assert "bound violations: 0" in capsys.readouterr().err
    assert main(["complexity", "--dim", "2", "--degrees", "2", "--steps", "1", "--policy", "nope"]) == 1
    single = tmp_path / "one.csv"
    base = ["complexity", "--dim", "1", "--degrees", "1", "--steps", "3", "--seed", "5", "--out"]
    assert main(base + [str(single)]) == 0
    again = tmp_path / "again.csv"
    assert main(base + [str(again)]) == 0
    strip = lambda text: [r.rsplit(",", 1)[0] for r in text.splitlines()]
    assert strip(single.read_text()) == strip(again.read_text())
    assert single.read_text().splitlines()[1].startswith("5,random")


def test_module_entry_point(tmp_path):
    path = _write(tmp_path, "m.json", io.dumps_mesh(initial_mesh(MeshConfig.uniform(1, 2, 3))))
    res = subprocess.run([sys.executable, "-m", "hbrefine", "check", path], capture_output=True, text=True)
    assert res.returncode == 0 and "strictly admissible: true" in res.stdout
    res = subprocess.run([sys.executable, "-m", "hbrefine", "frobnicate"], capture_output=True, text=True)
    assert res.returncode == 2
