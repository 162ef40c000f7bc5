import json
import math

import pytest
from hypothesis import given, strategies as st

from trayforge.catalog import (
    GUN, NEEDLE, RING, RING_THICK, THUMB, Checklist, InstrumentGroup, InstrumentSpec, MergePolicy,
    TraySpec, bundled_catalog, bundled_checklist, dump_catalog, load_catalog, load_checklist,
    load_policy, meta_features, parse_catalog,
)
from trayforge.errors import ParseError, UnknownInstrument, ValidationError


def _write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def test_empty_catalog(tmp_path):
    assert load_catalog(_write(tmp_path, "c.json", {"instruments": []})) == []


def test_zero_length_names_id(tmp_path):
    rec = {"id": "bad_clamp", "group": "ring", "length_mm": 0, "width_mm": 5, "height_mm": 5, "magnetic": True}
    with pytest.raises(ValidationError, match="bad_clamp"):
        load_catalog(_write(tmp_path, "c.json", {"instruments": [rec]}))


def test_bundled_catalog_has_31_unique():
    specs = bundled_catalog()
    assert len(specs) == 31
    assert len({s.id for s in specs}) == 31


def test_round_trip(tmp_path):
    specs = bundled_catalog()
    path = tmp_path / "c.json"
    path.write_text(dump_catalog(specs))
    assert load_catalog(path) == specs


def test_duplicate_id_rejected():
    rec = {"id": "a", "group": "gun", "length_mm": 10, "width_mm": 5, "height_mm": 5}
    with pytest.raises(ValidationError, match="duplicate"):
        parse_catalog({"instruments": [rec, rec]})


def test_malformed_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_catalog(path)


def test_group_vocabulary():
    assert InstrumentGroup.parse("ring_thick") == RING_THICK
    assert str(InstrumentGroup.parse("other:scissors")) == "other:scissors"
    assert not InstrumentGroup.parse("other:scissors").is_ring
    with pytest.raises(ValidationError):
        InstrumentGroup.parse("spoon")


def test_meta_features_values():
    s = InstrumentSpec("x", RING, 140, 12, 5)
    assert meta_features(s) == pytest.approx([math.log(141), math.log(13)])
    assert meta_features(s) == pytest.approx([4.9488, 2.5649], abs=1e-4)
    unit = InstrumentSpec("e", RING, math.e - 1, 1, 1)
    assert meta_features(unit)[0] == pytest.approx(1.0)


def test_meta_features_zero_length_bypass():
    s = object.__new__(InstrumentSpec)
    object.__setattr__(s, "length_mm", 0.0)
    object.__setattr__(s, "width_mm", 0.0)
    assert meta_features(s) == [0.0, 0.0]


@given(st.floats(1, 500), st.floats(1, 500), st.floats(0.01, 50))
def test_meta_features_monotone(length, width, delta):
    a = InstrumentSpec("a", RING, max(length, width) + delta, width, 1)
    b = InstrumentSpec("b", RING, max(length, width), width, 1)
    assert meta_features(a)[0] > meta_features(b)[0]
    w = min(length, width)
    c = InstrumentSpec("c", RING, length + 100, w + delta, 1)
    d = InstrumentSpec("d", RING, length + 100, w, 1)
    assert meta_features(c)[1] > meta_features(d)[1]


def test_default_policy_chain():
    policy = MergePolicy.default()
    assert policy.is_chain()
    assert policy.merged_key(RING, 1) == frozenset({RING, RING_THICK})
    assert policy.merged_key(GUN, 2) == frozenset({GUN})
    assert policy.merged_key(GUN, 3) == frozenset({NEEDLE, THUMB, GUN})


def test_policy_must_be_nested():
    with pytest.raises(ValidationError):
        MergePolicy(((), (frozenset({NEEDLE, THUMB}),), (frozenset({RING, RING_THICK}),)))


def test_policy_json_round_trip(tmp_path):
    path = _write(tmp_path, "p.json", MergePolicy.default().to_dict())
    assert load_policy(path) == MergePolicy.default()


def test_checklist_expansion():
    cl = Checklist("p", (("a", 2), ("b", 1), ("a", 1)))
    assert cl.expand() == [("a", 0), ("a", 1), ("b", 0), ("a", 2)]
    assert cl.quantities() == {"a": 3, "b": 1}


def test_checklist_unknown_id(tmp_path):
    path = _write(tmp_path, "l.json", {"procedure": "p", "items": [{"id": "nope", "qty": 1}]})
    with pytest.raises(UnknownInstrument, match="nope"):
        load_checklist(path, bundled_catalog())


def test_bundled_checklist_is_20_instances():
    cl = bundled_checklist()
    assert len(cl.expand()) == 20
    cl.resolve(bundled_catalog())


def test_tray_validation():
    with pytest.raises(ValidationError):
        TraySpec(480, -1, 80)
