"""Hand-built packer fixtures and an invariant checker written from scratch.

The checker deliberately does not call ``validate_layout``; it restates each
layout rule directly so the two can disagree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from trayforge.catalog import (
    GUN, NEEDLE, RING, RING_THICK, THUMB, Checklist, InstrumentGroup, InstrumentSpec,
    MergePolicy, Padding, TraySpec,
)
from trayforge.errors import DepthOverflow, LengthOverflow, WidthOverflow

TOL = 1e-6


def other(name):
    return InstrumentGroup.other(name)


def spec(iid, group, length, width, height=8.0):
    return InstrumentSpec(iid, group, float(length), float(width), float(height))


@dataclass
class Case:
    name: str
    catalog: list
    items: list
    tray: TraySpec
    padding: Padding = field(default_factory=Padding)
    policy: MergePolicy = field(default_factory=MergePolicy.default)
    raises: type | None = None
    merge_level: int | None = None

    @property
    def checklist(self) -> Checklist:
        return Checklist(self.name, tuple(self.items))


NEEDLE_THUMB = MergePolicy(((), (frozenset({NEEDLE, THUMB}),)))

_std = TraySpec(480, 300, 80)
_mixed = [
    spec("kelly", RING, 140, 50, 9), spec("mosquito", RING, 125, 45, 8),
    spec("rochester", RING_THICK, 200, 60, 11), spec("mayo_hegar", NEEDLE, 180, 40, 9),
    spec("adson", THUMB, 120, 10, 6), spec("debakey", THUMB, 200, 12, 6),
    spec("clip_gun", GUN, 230, 70, 25), spec("mayo", other("scissors"), 170, 60, 10),
    spec("iris", other("scissors"), 110, 45, 8), spec("scalpel", other("scalpel"), 130, 12, 6),
]

CASES = [
    Case("empty", _mixed, [], _std, merge_level=0),
    Case("single", [spec("a", other("x"), 100, 10, 5)], [("a", 1)], TraySpec(400, 300, 80), merge_level=0),
    Case("ring_only", _mixed, [("kelly", 3), ("mosquito", 2)], _std, merge_level=0),
    Case("ring_and_thick", _mixed, [("kelly", 2), ("rochester", 2)], _std, merge_level=0),
    Case("width_overflow", [spec("long", other("x"), 295, 10)], [("long", 1)], TraySpec(400, 300, 80),
         raises=WidthOverflow),
    Case("width_exact_fit", [spec("fit", other("x"), 290, 10)], [("fit", 3)], TraySpec(400, 300, 80), merge_level=0),
    Case("width_overflow_in_group", [spec("s", NEEDLE, 100, 10), spec("l", NEEDLE, 300, 10)],
         [("s", 1), ("l", 1)], TraySpec(400, 300, 80), raises=WidthOverflow),
    # separate columns need 50+20+70+20+190 = 350 mm, needle+thumb merged needs 70+20+190 = 280 mm
    Case("length_overflow_forcing_merge",
         [spec("n", NEEDLE, 150, 40), spec("t", THUMB, 150, 60), spec("o", other("x"), 200, 180)],
         [("n", 1), ("t", 1), ("o", 1)], TraySpec(300, 300, 80), policy=NEEDLE_THUMB, merge_level=1),
    Case("length_overflow_every_level",
         [spec("n", NEEDLE, 150, 40), spec("t", THUMB, 150, 60), spec("o", other("x"), 200, 180)],
         [("n", 1), ("t", 1), ("o", 1)], TraySpec(270, 300, 80), policy=NEEDLE_THUMB, raises=LengthOverflow),
    # rings 60+20+60+20+50 = 210 > 200 at level 0; level 1 merges rings: 60+20+50 = 130
    Case("ring_merge_level1",
         [spec("r", RING, 120, 10), spec("rt", RING_THICK, 120, 10), spec("o", other("x"), 120, 40)],
         [("r", 1), ("rt", 1), ("o", 1)], TraySpec(200, 300, 80), merge_level=1),
    # level 0 needs 262 mm, level 1 (rings merged) 182 mm, level 2 (needle+thumb merged) 140 mm
    Case("needle_thumb_level2", _mixed, [("kelly", 1), ("rochester", 1), ("mayo_hegar", 2), ("adson", 2), ("debakey", 1)],
         TraySpec(160, 300, 80), merge_level=2),
    Case("gun_level3",
         [spec("n", NEEDLE, 150, 20), spec("t", THUMB, 150, 20), spec("g", GUN, 200, 30)],
         [("n", 1), ("t", 1), ("g", 1)], TraySpec(60, 300, 80), merge_level=3),
    Case("multi_slot_layer", [spec("s", other("x"), 80, 10, 5)], [("s", 3)], _std, merge_level=0),
    Case("depth_forces_new_column", [spec("tall", other("x"), 200, 20, 30)], [("tall", 4)], _std, merge_level=0),
    Case("depth_overflow_single", [spec("tower", other("x"), 100, 20, 90)], [("tower", 1)], _std,
         raises=DepthOverflow),
    Case("descending_mixed_lengths",
         [spec(f"m{i}", other("x"), 100 + 15 * i, 20, 7) for i in range(6)],
         [(f"m{i}", 1) for i in range(6)], _std, merge_level=0),
    Case("quantities", _mixed, [("adson", 4), ("debakey", 2), ("iris", 3)], _std, merge_level=0),
    Case("gun_alone", _mixed, [("clip_gun", 2)], _std, merge_level=0),
    Case("all_groups_level0", _mixed, [(s.id, 1) for s in _mixed], TraySpec(1000, 300, 80), merge_level=0),
    Case("narrow_tray_one_per_layer", [spec("a", other("x"), 200, 15, 4), spec("b", other("x"), 150, 15, 4)],
         [("a", 3), ("b", 4)], TraySpec(480, 220, 80), merge_level=0),
    Case("many_other_groups", [spec(f"o{i}", other(f"g{i}"), 120, 15) for i in range(8)],
         [(f"o{i}", 1) for i in range(8)], _std, merge_level=0),
    Case("wide_ring_beyond_holder", [spec("wide", RING, 160, 70, 10)], [("wide", 2)], _std, merge_level=0),
    Case("zero_padding", _mixed, [("iris", 2), ("scalpel", 2), ("adson", 1)], _std, padding=Padding(0, 0, 0),
         merge_level=0),
    Case("large_padding", _mixed, [("iris", 2), ("kelly", 1)], _std, padding=Padding(20, 15, 10), merge_level=0),
    Case("thin_dividers", _mixed, [("iris", 1), ("adson", 1), ("kelly", 1)], TraySpec(480, 300, 80, 5),
         merge_level=0),
]
assert len(CASES) == 25


def expected_width_overflow(case: Case) -> bool:
    """Independent: some instrument has N_max = floor(C_w / (l + 2 px)) = 0."""
    index = {s.id: s for s in case.catalog}
    return any(math.floor(case.tray.width_mm / (index[i].length_mm + 2 * case.padding.px_mm)) == 0
               for i, _ in case.items)


def check_invariants(layout, case: Case) -> list[str]:
    """Every packer invariant, restated; returns human-readable failures."""
    errs = []
    tray, pad = case.tray, case.padding
    spans = {c.index: (c.y_start_mm, c.y_end_mm) for c in layout.columns}
    cols = sorted({p.column for p in layout.placements})

    # in-bounds
    for p in layout.placements:
        if p.x_mm - p.length_mm / 2 - pad.px_mm < -TOL or p.x_mm + p.length_mm / 2 + pad.px_mm > tray.width_mm + TOL:
            errs.append(f"x bounds {p.key}")
        lo, hi = spans[p.column]
        if p.y_mm - p.width_mm / 2 - pad.py_mm < lo - TOL or p.y_mm + p.width_mm / 2 + pad.py_mm > hi + TOL:
            errs.append(f"y bounds {p.key}")
        if p.z_mm > tray.depth_mm + TOL or p.z_mm - p.height_mm < -TOL:
            errs.append(f"z bounds {p.key}")
    if layout.columns and (min(s[0] for s in spans.values()) < -TOL or max(s[1] for s in spans.values()) > tray.length_mm + TOL):
        errs.append("columns outside tray length")

    # same-layer footprints disjoint
    cells = {}
    for p in layout.placements:
        cells.setdefault((p.column, p.layer), []).append(p)
    for key, items in cells.items():
        for i, a in enumerate(items):
            for b in items[i + 1:]:
                if abs(a.x_mm - b.x_mm) < (a.length_mm + b.length_mm) / 2 - TOL:
                    errs.append(f"overlap {a.key} {b.key}")

    for c in cols:
        items = [p for p in layout.placements if p.column == c]
        layers = sorted({p.layer for p in items})
        if layers != list(range(len(layers))):
            errs.append(f"column {c} layers not contiguous")
        # layers physically stacked in order
        for a, b in zip(layers, layers[1:]):
            top_a = max(p.z_mm for p in items if p.layer == a)
            base_b = min(p.z_mm - p.height_mm for p in items if p.layer == b)
            if base_b < top_a + pad.pz_mm - TOL:
                errs.append(f"column {c} layer {b} intrudes on layer {a}")
            if min(p.length_mm for p in items if p.layer == a) < max(p.length_mm for p in items if p.layer == b) - TOL:
                errs.append(f"column {c} not descending")
        if any(p.group in (RING, RING_THICK) for p in items):
            if any(sum(1 for p in items if p.layer == li) != 1 for li in layers):
                errs.append(f"ring column {c} layer not singleton")
            hs = [h for h in layout.holders if h.column == c]
            if len(hs) != 1 or hs[0].capacity != len(items):
                errs.append(f"ring column {c} holder mismatch")
    if any(h.column not in cols for h in layout.holders):
        errs.append("holder without column")

    # dividers: one between each consecutive pair, inside the tray
    if len(layout.dividers) != max(len(cols) - 1, 0):
        errs.append(f"{len(layout.dividers)} dividers for {len(cols)} columns")
    for j, d in enumerate(layout.dividers):
        if d.y_mm > tray.length_mm + TOL:
            errs.append(f"divider {j} beyond tray")
        if j + 1 in spans and not (spans[j][1] - TOL <= d.y_mm - d.thickness_mm / 2
                                   and d.y_mm + d.thickness_mm / 2 <= spans[j + 1][0] + TOL):
            errs.append(f"divider {j} not between columns")

    # conservation
    want = sorted((i, k) for i, q in _totals(case.items).items() for k in range(q))
    if sorted(p.key for p in layout.placements) != want:
        errs.append("conservation")

    # group integrity
    level = case.policy.levels[layout.merge_level_used]
    for c in cols:
        groups = {p.group for p in layout.placements if p.column == c}
        if len(groups) > 1 and not any(groups <= s for s in level):
            errs.append(f"column {c} mixes {sorted(map(str, groups))} at level {layout.merge_level_used}")
    return errs


def _totals(items):
    out = {}
    for i, q in items:
        out[i] = out.get(i, 0) + q
    return out
