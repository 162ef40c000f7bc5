import json
import subprocess
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import jsonschema
import pytest

from trayforge.catalog import RING, bundled_catalog, bundled_checklist, bundled_tray, dump_catalog
from trayforge.cli import build_parser, main
from trayforge.packer import placement_order
from trayforge.pose import mask_from_contour, rectangle_contour, write_pgm

DATA = Path(__import__("trayforge").__file__).parent / "data"

LAYOUT_SCHEMA = {
    "type": "object",
    "required": ["merge_level", "placements", "dividers", "holders"],
    "properties": {
        "merge_level": {"type": "integer", "minimum": 0},
        "placements": {"type": "array", "items": {
            "type": "object",
            "required": ["id", "instance", "x_mm", "y_mm", "z_mm", "column", "layer"],
            "properties": {
                "id": {"type": "string"}, "instance": {"type": "integer"},
                "x_mm": {"type": "number"}, "y_mm": {"type": "number"}, "z_mm": {"type": "number"},
                "column": {"type": "integer"}, "layer": {"type": "integer"},
            },
        }},
        "dividers": {"type": "array"},
        "holders": {"type": "array"},
    },
}

REPORT_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["condition", "mode", "n", "mean", "std", "cohens_d_vs_A", "trials"],
        "properties": {
            "condition": {"type": "string"}, "mode": {"type": "string"}, "n": {"type": "integer"},
            "mean": {"type": "number"}, "std": {"type": "number"},
            "cohens_d_vs_A": {"type": ["number", "null"]},
            "trials": {"type": "array", "items": {
                "type": "object", "required": ["seed", "count"],
                "properties": {"seed": {"type": "integer"}, "count": {"type": "integer"}},
            }},
        },
    },
}


def _json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def _pack(tmp_path, checklist=None, catalog=None, tray=None, extra=()):
    out = tmp_path / "layout.json"
    code = main([
        "pack", "--catalog", catalog or str(DATA / "catalog31.json"),
        "--checklist", checklist or str(DATA / "checklist20.json"),
        "--tray", tray or str(DATA / "tray.json"), "--out", str(out), *extra,
    ])
    return code, out


def test_pack_bundled_schema_and_svg(tmp_path):
    svg = tmp_path / "top.svg"
    code, out = _pack(tmp_path, extra=("--svg", str(svg)))
    assert code == 0
    data = json.loads(out.read_text())
    jsonschema.validate(data, LAYOUT_SCHEMA)
    assert len(data["placements"]) == 20
    root = ET.parse(svg).getroot()
    assert root.tag.endswith("svg") and root.get("width") == "300" and root.get("height") == "480"
    classes = [el.get("class") for el in root]
    assert classes.count("instrument") == 20
    assert classes.count("divider") == len(data["dividers"])
    assert classes.count("holder") == len(data["holders"])


def test_pack_empty_checklist(tmp_path):
    cl = _json(tmp_path / "cl.json", {"procedure": "none", "items": []})
    code, out = _pack(tmp_path, checklist=cl)
    assert code == 0
    data = json.loads(out.read_text())
    assert (data["placements"], data["dividers"], data["holders"]) == ([], [], [])


def test_pack_width_overflow(tmp_path, capsys):
    cat = _json(tmp_path / "c.json", {"instruments": [
        {"id": "giant_retractor", "group": "other:retractor", "length_mm": 295, "width_mm": 40, "height_mm": 10}]})
    cl = _json(tmp_path / "cl.json", {"procedure": "p", "items": [{"id": "giant_retractor", "qty": 1}]})
    code, _ = _pack(tmp_path, checklist=cl, catalog=cat)
    err = capsys.readouterr().err
    assert code == 2
    assert "WidthOverflow" in err and "giant_retractor" in err


def test_pack_length_overflow(tmp_path, capsys):
    tray = _json(tmp_path / "t.json", {"length_mm": 100, "width_mm": 300, "depth_mm": 80})
    code, _ = _pack(tmp_path, tray=tray)
    assert code == 3
    assert "LengthOverflow" in capsys.readouterr().err


def test_pack_missing_file(tmp_path):
    code, _ = _pack(tmp_path, catalog=str(tmp_path / "missing.json"))
    assert code == 1


def test_pack_malformed_json(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    code, _ = _pack(tmp_path, catalog=str(bad))
    assert code == 1


def test_pack_deterministic(tmp_path):
    _, first = _pack(tmp_path)
    text = first.read_text()
    _, second = _pack(tmp_path)
    assert second.read_text() == text


def _simulate(tmp_path, name, *extra):
    out = tmp_path / name
    code = main(["simulate", "--layout", str(tmp_path / "layout.json"), "--out", str(out), *extra])
    return code, out


def test_simulate_table_and_determinism(tmp_path, capsys):
    _pack(tmp_path)
    code, a = _simulate(tmp_path, "a.json", "--trials", "5", "--mode", "tilt", "--seed", "7")
    table = capsys.readouterr().out
    assert code == 0
    lines = [ln for ln in table.splitlines() if ln[:1] in "ABC" and ln[1:2] == " "]
    assert [ln[0] for ln in lines] == ["A", "B", "C"]
    assert "tilt mean collision (std.)" in table
    data = json.loads(a.read_text())
    jsonschema.validate(data, REPORT_SCHEMA)
    _, b = _simulate(tmp_path, "b.json", "--trials", "5", "--mode", "tilt", "--seed", "7", "--workers", "3")
    assert a.read_bytes() == b.read_bytes()


def test_simulate_single_trial_warns(tmp_path, capsys):
    _pack(tmp_path)
    code, out = _simulate(tmp_path, "s.json", "--trials", "1")
    assert code == 0
    assert "warning" in capsys.readouterr().err
    assert all(r["std"] == 0 and r["cohens_d_vs_A"] is None for r in json.loads(out.read_text()))


def test_simulate_seed_from_env(tmp_path, monkeypatch):
    _pack(tmp_path)
    monkeypatch.setenv("TRAYFORGE_SEED", "123")
    _, out = _simulate(tmp_path, "e.json", "--trials", "2")
    assert json.loads(out.read_text())[0]["trials"][0]["seed"] == 123
    monkeypatch.setenv("TRAYFORGE_SEED", "abc")
    code, _ = _simulate(tmp_path, "e2.json", "--trials", "2")
    assert code == 64


def test_simulate_baseline_selection(tmp_path):
    _pack(tmp_path)
    _, out = _simulate(tmp_path, "b.json", "--trials", "2", "--baseline", "b")
    assert [r["condition"] for r in json.loads(out.read_text())] == ["B", "C"]


def test_simulate_from_inputs(tmp_path):
    out = tmp_path / "r.json"
    code = main(["simulate", "--catalog", str(DATA / "catalog31.json"), "--checklist", str(DATA / "checklist20.json"),
                 "--tray", str(DATA / "tray.json"), "--trials", "2", "--out", str(out)])
    assert code == 0 and len(json.loads(out.read_text())) == 3


def test_simulate_invalid_layout(tmp_path, capsys):
    _pack(tmp_path)
    path = tmp_path / "layout.json"
    data = json.loads(path.read_text())
    data["placements"][0]["z_mm"] = 500
    path.write_text(json.dumps(data))
    code, _ = _simulate(tmp_path, "x.json", "--trials", "2")
    assert code == 4
    assert "InvalidLayout" in capsys.readouterr().err


def test_simulate_zero_trials_is_usage_error(tmp_path):
    _pack(tmp_path)
    code, _ = _simulate(tmp_path, "z.json", "--trials", "0")
    assert code == 64


def _calib(tmp_path, h=None):
    return _json(tmp_path / "calib.json", {"homography": h or [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
                                           "reprojection_error_px": 0.1})


def _pose(tmp_path, capsys, mask_path, calib=None):
    code = main(["pose", "--mask", str(mask_path), "--calib", calib or _calib(tmp_path)])
    out = capsys.readouterr().out
    return code, (json.loads(out) if code == 0 else None)


def test_pose_rectangle(tmp_path, capsys):
    write_pgm(tmp_path / "r.pgm", mask_from_contour([(10, 20), (110, 20), (110, 30), (10, 30)], shape=(60, 130)))
    code, pose = _pose(tmp_path, capsys, tmp_path / "r.pgm")
    assert code == 0 and pose["rz_deg"] == 0.0 and not pose["degenerate"]


def test_pose_disk(tmp_path, capsys):
    import numpy as np
    from trayforge.pose import Mask
    yy, xx = np.mgrid[0:80, 0:80] + 0.5
    write_pgm(tmp_path / "d.pgm", Mask((xx - 40) ** 2 + (yy - 40) ** 2 <= 900))
    code, pose = _pose(tmp_path, capsys, tmp_path / "d.pgm")
    assert code == 0 and pose["degenerate"] is True


@pytest.mark.parametrize("theta", [15.0, 72.5, 141.0])
def test_pose_rotated(tmp_path, capsys, theta):
    write_pgm(tmp_path / "t.pgm", mask_from_contour(rectangle_contour(100, 100, 150, 15, theta), shape=(200, 200)))
    code, pose = _pose(tmp_path, capsys, tmp_path / "t.pgm")
    assert code == 0 and abs(pose["rz_deg"] - theta) <= 1.0


def test_pose_csv_contour(tmp_path, capsys):
    (tmp_path / "c.csv").write_text("x,y\n0,0\n20,0\n20,2\n0,2\n")
    code = main(["pose", "--mask", str(tmp_path / "c.csv"), "--calib", _calib(tmp_path), "--scale", "5"])
    pose = json.loads(capsys.readouterr().out)
    assert code == 0 and pose["x_mm"] == 50.0 and pose["rz_deg"] == 0.0


def test_pose_empty_mask(tmp_path, capsys):
    import numpy as np
    from trayforge.pose import Mask
    write_pgm(tmp_path / "e.pgm", Mask(np.zeros((5, 5), dtype=bool)))
    code, _ = _pose(tmp_path, capsys, tmp_path / "e.pgm")
    assert code == 5


def test_pose_singular_calibration(tmp_path, capsys):
    write_pgm(tmp_path / "r.pgm", mask_from_contour([(0, 0), (50, 0), (50, 5), (0, 5)]))
    code, _ = _pose(tmp_path, capsys, tmp_path / "r.pgm", _calib(tmp_path, [[1, 0, 0], [2, 0, 0], [0, 0, 1]]))
    assert code == 6


def _events(path, ids):
    path.write_text("".join(json.dumps({"event": "detected", "id": i}) + "\n" for i in ids))
    return str(path)


def _replay(tmp_path, ids):
    _pack(tmp_path)
    out = tmp_path / "actions.jsonl"
    code = main(["replay", "--layout", str(tmp_path / "layout.json"),
                 "--events", _events(tmp_path / "ev.jsonl", ids), "--out", str(out)])
    return code, [json.loads(ln) for ln in out.read_text().splitlines()] if out.exists() else []


def _instrument_order():
    from trayforge.packer import pack
    layout = pack(bundled_checklist(), bundled_catalog(), bundled_tray())
    return [i for i, _ in placement_order(layout) if not i.startswith("#")]


def test_replay_in_order(tmp_path):
    order = _instrument_order()
    code, actions = _replay(tmp_path, order)
    assert code == 0
    assert all(a["action"] == "place" for a in actions[:-1]) and actions[-1] == {"action": "done"}
    instruments = [a for a in actions if a["action"] == "place" and not a["id"].startswith("#")]
    assert [a["id"] for a in instruments] == order
    assert all({"x_mm", "y_mm", "z_mm"} <= set(a) for a in instruments)


def test_replay_missing_item(tmp_path, capsys):
    order = _instrument_order()
    dropped = order[5]
    stream = order[:5] + order[6:]
    code, _ = _replay(tmp_path, stream)
    assert code == 7
    assert f"{dropped}#" in capsys.readouterr().err


def test_replay_unknown_ids(tmp_path):
    order = _instrument_order()
    code, actions = _replay(tmp_path, ["mystery_a"] + order[:3] + ["mystery_b"] + order[3:])
    assert code == 0
    assert [a["id"] for a in actions if a["action"] == "discard"] == ["mystery_a", "mystery_b"]


def test_replay_malformed_event(tmp_path):
    _pack(tmp_path)
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"event": "detected"}\n')
    code = main(["replay", "--layout", str(tmp_path / "layout.json"), "--events", str(bad), "--out", str(tmp_path / "o")])
    assert code == 1


def test_unknown_flag_exit_64(capsys):
    assert main(["pack", "--nope"]) == 64
    assert main(["frobnicate"]) == 64
    assert main([]) == 64


def test_help_lists_every_flag(capsys):
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, subparser in sub.choices.items():
        text = subparser.format_help()
        for action in subparser._actions:
            for flag in action.option_strings:
                assert flag in text, (name, flag)
    assert main(["pack", "--help"]) == 0
    assert "--svg" in capsys.readouterr().out


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "trayforge.cli", "pose", "--mask", str(tmp_path / "none.pgm"),
                           "--calib", _calib(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 1
    assert "No such file" in proc.stderr


def test_custom_catalog_round_trip(tmp_path):
    path = tmp_path / "cat.json"
    path.write_text(dump_catalog([s for s in bundled_catalog() if s.group == RING]))
    cl = _json(tmp_path / "cl.json", {"procedure": "rings", "items": [{"id": "mosquito_straight", "qty": 3}]})
    code, out = _pack(tmp_path, checklist=cl, catalog=str(path))
    assert code == 0 and len(json.loads(out.read_text())["holders"]) == 1
