"""Column/layer tray packing with dividers, ring holders and merge escalation.

Tray frame: ``x`` runs across the tray width (instruments lie along it),
``y`` runs along the tray length (columns accumulate along it) and ``z`` is
height above the tray floor.

Within a (merged) group instruments are taken longest first and stacked in
layers of at most ``floor(C_w / (L_max + 2 px))`` instruments, one per layer for
ring-handled groups. A column is closed when the next layer would rise above
the tray depth; columns are separated by dividers and ring columns get one
holder. If the columns do not fit the tray length the whole packing is redone
at the next merge level.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .catalog import (
    Checklist,
    InstrumentGroup,
    InstrumentSpec,
    MergePolicy,
    Padding,
    TraySpec,
    index_catalog,
)
from .errors import DepthOverflow, LengthOverflow, ParseError, WidthOverflow
from .validation import check_positive, require_keys

DEFAULT_HOLDER_BASE_MM = 60.0
DIVIDER_ENTRY = "#divider"
HOLDER_ENTRY = "#holder"

_EPS = 1e-9


@dataclass(frozen=True)
class Placement:
    instrument_id: str
    instance: int
    x_mm: float  # footprint centre across the tray width
    y_mm: float  # centreline of the column
    z_mm: float  # top of the instrument
    column: int
    layer: int
    length_mm: float
    width_mm: float
    height_mm: float
    group: InstrumentGroup

    @property
    def key(self) -> tuple[str, int]:
        return (self.instrument_id, self.instance)


@dataclass(frozen=True)
class DividerPlacement:
    x_mm: float
    y_mm: float  # centre of the divider slab
    width_mm: float
    thickness_mm: float


@dataclass(frozen=True)
class HolderPlacement:
    column: int
    y_mm: float
    capacity: int
    group: InstrumentGroup


@dataclass(frozen=True)
class ColumnSpan:
    index: int
    y_start_mm: float
    y_end_mm: float
    groups: tuple[str, ...]
    ring: bool

    @property
    def width_mm(self) -> float:
        return self.y_end_mm - self.y_start_mm


@dataclass(frozen=True)
class TrayLayout:
    placements: tuple[Placement, ...]
    holders: tuple[HolderPlacement, ...]
    dividers: tuple[DividerPlacement, ...]
    columns: tuple[ColumnSpan, ...]
    merge_level_used: int
    tray: TraySpec
    padding: Padding

    def column_placements(self, column: int) -> list[Placement]:
        return [p for p in self.placements if p.column == column]


class OpCounter:
    """Counts elementary packing steps; used to check linear scaling."""

    def __init__(self):
        self.ops = 0

    def tick(self, n: int = 1) -> None:
        self.ops += n


@dataclass
class _LevelResult:
    placements: list = field(default_factory=list)
    holders: list = field(default_factory=list)
    dividers: list = field(default_factory=list)
    columns: list = field(default_factory=list)
    extent_mm: float = 0.0


def pack(
    checklist: Checklist,
    catalog: Sequence[InstrumentSpec] | dict,
    tray: TraySpec,
    padding: Padding | None = None,
    policy: MergePolicy | None = None,
    *,
    holder_base_mm: float = DEFAULT_HOLDER_BASE_MM,
    counter: OpCounter | None = None,
) -> TrayLayout:
    """Compute a tray layout for ``checklist``.

    Raises WidthOverflow, DepthOverflow, LengthOverflow or UnknownInstrument.
    """
    padding = padding if padding is not None else Padding()
    policy = policy if policy is not None else MergePolicy.default()
    holder_base_mm = check_positive(holder_base_mm, "holder_base_mm")
    specs = checklist.resolve(catalog)
    quantities = checklist.quantities()

    for spec in specs.values():
        if spec.height_mm > tray.depth_mm + _EPS:
            raise DepthOverflow(spec.id, spec.height_mm, tray.depth_mm)

    required = 0.0
    for level in range(len(policy.levels)):
        result = _pack_level(specs, quantities, tray, padding, policy, level, holder_base_mm, counter)
        if result.extent_mm <= tray.length_mm + _EPS:
            return TrayLayout(
                placements=tuple(result.placements),
                holders=tuple(result.holders),
                dividers=tuple(result.dividers),
                columns=tuple(result.columns),
                merge_level_used=level,
                tray=tray,
                padding=padding,
            )
        required = result.extent_mm
    raise LengthOverflow(required, tray.length_mm, len(policy.levels))


def _pack_level(specs, quantities, tray, padding, policy, level, holder_base_mm, counter):
    tick = counter.tick if counter is not None else (lambda n=1: None)
    groups: dict[frozenset, list[InstrumentSpec]] = {}
    for spec in specs.values():
        groups.setdefault(policy.merged_key(spec.group, level), []).append(spec)
        tick()

    out = _LevelResult()
    y_off = 0.0
    px, py, pz = padding.px_mm, padding.py_mm, padding.pz_mm

    def commit(layers, ring):
        nonlocal y_off
        column = len(out.columns)
        members = [item for layer in layers for item in layer]
        w_c = max(spec.width_mm for spec, _, _, _ in members) + 2 * py
        if ring:
            w_c = max(w_c, holder_base_mm)
        y_mid = y_off + w_c / 2
        for li, layer in enumerate(layers):
            for spec, k, x, z_top in layer:
                out.placements.append(Placement(
                    spec.id, k, x, y_mid, z_top, column, li,
                    spec.length_mm, spec.width_mm, spec.height_mm, spec.group,
                ))
                tick()
        if ring:
            ring_group = next(m[0].group for m in members if m[0].group.is_ring)
            out.holders.append(HolderPlacement(column, y_mid, len(members), ring_group))
        names = sorted({str(m[0].group) for m in members})
        out.columns.append(ColumnSpan(column, y_off, y_off + w_c, tuple(names), ring))
        out.dividers.append(DividerPlacement(
            tray.width_mm / 2, y_off + w_c + tray.divider_thickness_mm / 2,
            tray.width_mm, tray.divider_thickness_mm,
        ))
        out.extent_mm = y_off + w_c
        y_off += w_c + tray.divider_thickness_mm
        tick()

    for key in sorted(groups, key=lambda s: min(g.sort_key for g in s)):
        # Sorting distinct classes and expanding quantities keeps this O(n) in instances.
        classes = sorted(groups[key], key=lambda s: (-s.length_mm, -s.width_mm, s.id))
        queue = [(spec, k) for spec in classes for k in range(quantities[spec.id])]
        tick(len(queue))
        ring = any(g.is_ring for g in key)
        longest = classes[0]
        n_max = math.floor(tray.width_mm / (longest.length_mm + 2 * px))
        if n_max == 0:
            raise WidthOverflow(longest.id, longest.length_mm, tray.width_mm)

        z = 0.0
        layers: list[list] = []
        pos = 0
        while pos < len(queue):
            n = 1 if ring else min(n_max, len(queue) - pos)
            batch = queue[pos:pos + n]
            top = z + max(spec.height_mm for spec, _ in batch)
            tick()
            if top > tray.depth_mm + _EPS:
                commit(layers, ring)
                layers, z = [], 0.0
                continue
            slot = batch[0][0].length_mm + 2 * px
            layers.append([(spec, k, (i + 0.5) * slot, z + spec.height_mm) for i, (spec, k) in enumerate(batch)])
            tick(n)
            pos += n
            z = top + pz
        commit(layers, ring)

    if out.dividers:
        out.dividers.pop()
    return out


def placement_order(layout: TrayLayout) -> list[tuple[str, int]]:
    """Robot placement order, bottom layer first, columns in ``y`` order.

    Holder and divider insertions appear as ``(HOLDER_ENTRY, column)`` and
    ``(DIVIDER_ENTRY, index)`` entries.
    """
    by_column: dict[int, list[Placement]] = {}
    for p in layout.placements:
        by_column.setdefault(p.column, []).append(p)
    ring_columns = {h.column for h in layout.holders}
    order: list[tuple[str, int]] = []
    for col in sorted(by_column):
        if col in ring_columns:
            order.append((HOLDER_ENTRY, col))
        for p in sorted(by_column[col], key=lambda p: (p.layer, p.x_mm, p.instrument_id, p.instance)):
            order.append(p.key)
        if col < len(layout.dividers):
            order.append((DIVIDER_ENTRY, col))
    return order


def is_fixture_entry(entry_id: str) -> bool:
    return entry_id in (DIVIDER_ENTRY, HOLDER_ENTRY)


@dataclass(frozen=True)
class Violation:
    rule: str
    entities: tuple
    message: str

    def __str__(self) -> str:
        return f"{self.rule}: {self.message}"


def validate_layout(
    layout: TrayLayout,
    checklist: Checklist | None = None,
    policy: MergePolicy | None = None,
) -> list[Violation]:
    """Independent invariant check. Returns an empty list for a valid layout.

    ``checklist`` enables the conservation check and ``policy`` the group
    integrity check.
    """
    tray, pad = layout.tray, layout.padding
    tol = 1e-6
    out: list[Violation] = []
    spans = {c.index: c for c in layout.columns}

    for p in layout.placements:
        ent = (p.instrument_id, p.instance)
        half_x = p.length_mm / 2 + pad.px_mm
        half_y = p.width_mm / 2 + pad.py_mm
        if p.x_mm - half_x < -tol or p.x_mm + half_x > tray.width_mm + tol:
            out.append(Violation("bounds", ent, f"{ent} extends past the tray width"))
        span = spans.get(p.column)
        lo, hi = (span.y_start_mm, span.y_end_mm) if span else (0.0, tray.length_mm)
        if p.y_mm - half_y < lo - tol or p.y_mm + half_y > hi + tol:
            out.append(Violation("bounds", ent, f"{ent} extends past column {p.column}"))
        if p.y_mm - half_y < -tol or p.y_mm + half_y > tray.length_mm + tol:
            out.append(Violation("bounds", ent, f"{ent} extends past the tray length"))
        if p.z_mm > tray.depth_mm + tol:
            out.append(Violation("depth", ent, f"{ent} top z={p.z_mm} exceeds depth {tray.depth_mm}"))
        if p.z_mm - p.height_mm < -tol:
            out.append(Violation("depth", ent, f"{ent} sits below the tray floor"))

    cells: dict[tuple[int, int], list[Placement]] = {}
    for p in layout.placements:
        cells.setdefault((p.column, p.layer), []).append(p)
    for (col, layer), items in sorted(cells.items()):
        items = sorted(items, key=lambda p: p.x_mm)
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                a, b = items[i], items[j]
                if (a.x_mm + a.length_mm / 2 > b.x_mm - b.length_mm / 2 + tol
                        and b.x_mm + b.length_mm / 2 > a.x_mm - a.length_mm / 2 + tol):
                    out.append(Violation("overlap", (a.key, b.key), f"{a.key} overlaps {b.key} in column {col} layer {layer}"))

    columns = sorted({p.column for p in layout.placements})
    holders_by_col: dict[int, list[HolderPlacement]] = {}
    for h in layout.holders:
        holders_by_col.setdefault(h.column, []).append(h)
        if not h.group.is_ring:
            out.append(Violation("ring", (h.column,), f"holder in column {h.column} has non-ring group {h.group}"))
    for col in columns:
        items = [p for p in layout.placements if p.column == col]
        layers = sorted({p.layer for p in items})
        for a, b in zip(layers, layers[1:]):
            low = min(p.length_mm for p in items if p.layer == a)
            high = max(p.length_mm for p in items if p.layer == b)
            if high > low + tol:
                out.append(Violation("descending", (col, a, b), f"column {col}: layer {b} holds a longer instrument than layer {a}"))
        if any(p.group.is_ring for p in items):
            for layer in layers:
                n = sum(1 for p in items if p.layer == layer)
                if n != 1:
                    out.append(Violation("ring", (col, layer), f"ring column {col} layer {layer} holds {n} instruments"))
            hs = holders_by_col.get(col, [])
            if len(hs) != 1 or hs[0].capacity != len(items):
                out.append(Violation("ring", (col,), f"ring column {col} needs one holder of capacity {len(items)}"))

    if len(layout.dividers) != max(len(columns) - 1, 0):
        out.append(Violation("divider", (), f"{len(layout.dividers)} dividers for {len(columns)} columns"))
    for j, d in enumerate(layout.dividers):
        if d.y_mm < -tol or d.y_mm > tray.length_mm + tol:
            out.append(Violation("divider", (j,), f"divider {j} at y={d.y_mm} lies outside the tray"))
        if abs(d.x_mm - tray.width_mm / 2) > tol:
            out.append(Violation("divider", (j,), f"divider {j} is not centred across the tray"))
        if j in spans and j + 1 in spans:
            lo, hi = spans[j].y_end_mm, spans[j + 1].y_start_mm
            if d.y_mm - d.thickness_mm / 2 < lo - tol or d.y_mm + d.thickness_mm / 2 > hi + tol:
                out.append(Violation("divider", (j,), f"divider {j} does not sit between columns {j} and {j + 1}"))
    ordered = [spans[c] for c in sorted(spans)]
    for a, b in zip(ordered, ordered[1:]):
        if b.y_start_mm < a.y_end_mm - tol:
            out.append(Violation("overlap", (a.index, b.index), f"columns {a.index} and {b.index} overlap"))

    if checklist is not None:
        expected = sorted(checklist.expand())
        got = sorted(p.key for p in layout.placements)
        if expected != got:
            out.append(Violation("conservation", (), "placements differ from the checklist expansion"))

    if policy is not None and layout.merge_level_used < len(policy.levels):
        for col in columns:
            groups = {p.group for p in layout.placements if p.column == col}
            if len(groups) > 1:
                keys = {policy.merged_key(g, layout.merge_level_used) for g in groups}
                if len(keys) != 1:
                    out.append(Violation("group", (col,), f"column {col} mixes groups {sorted(map(str, groups))}"))
    return out


def _r(v: float) -> float:
    v = round(float(v), 6)
    return 0.0 if v == 0 else v


def layout_to_dict(layout: TrayLayout) -> dict:
    return {
        "merge_level": layout.merge_level_used,
        "placements": [
            {
                "id": p.instrument_id,
                "instance": p.instance,
                "x_mm": _r(p.x_mm),
                "y_mm": _r(p.y_mm),
                "z_mm": _r(p.z_mm),
                "column": p.column,
                "layer": p.layer,
                "length_mm": _r(p.length_mm),
                "width_mm": _r(p.width_mm),
                "height_mm": _r(p.height_mm),
                "group": str(p.group),
            }
            for p in layout.placements
        ],
        "dividers": [
            {"x_mm": _r(d.x_mm), "y_mm": _r(d.y_mm), "width_mm": _r(d.width_mm), "thickness_mm": _r(d.thickness_mm)}
            for d in layout.dividers
        ],
        "holders": [
            {"column": h.column, "y_mm": _r(h.y_mm), "capacity": h.capacity, "group": str(h.group)}
            for h in layout.holders
        ],
        "columns": [
            {"index": c.index, "y_start_mm": _r(c.y_start_mm), "y_end_mm": _r(c.y_end_mm),
             "groups": list(c.groups), "ring": c.ring}
            for c in layout.columns
        ],
        "tray": layout.tray.to_dict(),
        "padding": layout.padding.to_dict(),
    }


def dumps_layout(layout: TrayLayout) -> str:
    return json.dumps(layout_to_dict(layout), indent=2) + "\n"


def layout_from_dict(data) -> TrayLayout:
    require_keys(data, ("merge_level", "placements", "dividers", "holders", "columns", "tray", "padding"), "layout")
    try:
        placements = tuple(
            Placement(
                r["id"], r["instance"], float(r["x_mm"]), float(r["y_mm"]), float(r["z_mm"]),
                r["column"], r["layer"], float(r["length_mm"]), float(r["width_mm"]),
                float(r["height_mm"]), InstrumentGroup.parse(r["group"]),
            )
            for r in data["placements"]
        )
        dividers = tuple(
            DividerPlacement(float(r["x_mm"]), float(r["y_mm"]), float(r["width_mm"]), float(r["thickness_mm"]))
            for r in data["dividers"]
        )
        holders = tuple(
            HolderPlacement(r["column"], float(r["y_mm"]), r["capacity"], InstrumentGroup.parse(r["group"]))
            for r in data["holders"]
        )
        columns = tuple(
            ColumnSpan(r["index"], float(r["y_start_mm"]), float(r["y_end_mm"]), tuple(r["groups"]), bool(r["ring"]))
            for r in data["columns"]
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed layout record: {exc}") from None
    return TrayLayout(
        placements, holders, dividers, columns, int(data["merge_level"]),
        TraySpec.from_dict(data["tray"]), Padding.from_dict(data["padding"]),
    )


def load_layout(path) -> TrayLayout:
    from pathlib import Path

    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return layout_from_dict(data)


class TrayPacker(BaseEstimator):
    """Estimator-style front end to :func:`pack`.

    ``fit`` takes the instrument catalog, ``predict`` maps a checklist to a
    :class:`TrayLayout`.

    >>> from trayforge.catalog import bundled_catalog, bundled_checklist, bundled_tray
    >>> packer = TrayPacker(tray=bundled_tray()).fit(bundled_catalog())
    >>> layout = packer.predict(bundled_checklist())
    >>> packer.validate(layout)
    []
    """

    def __init__(self, tray=None, padding=None, policy=None, holder_base_mm=DEFAULT_HOLDER_BASE_MM):
        self.tray = tray
        self.padding = padding
        self.policy = policy
        self.holder_base_mm = holder_base_mm

    def fit(self, catalog, y=None):
        if self.tray is None:
            raise ValueError("TrayPacker needs a tray")
        check_positive(self.holder_base_mm, "holder_base_mm")
        self.catalog_ = catalog if isinstance(catalog, dict) else index_catalog(catalog)
        self.padding_ = self.padding if self.padding is not None else Padding()
        self.policy_ = self.policy if self.policy is not None else MergePolicy.default()
        return self

    def predict(self, checklist: Checklist) -> TrayLayout:
        check_is_fitted(self, "catalog_")
        return pack(checklist, self.catalog_, self.tray, self.padding_, self.policy_,
                    holder_base_mm=self.holder_base_mm)

    def fit_predict(self, catalog, checklist):
        return self.fit(catalog).predict(checklist)

    def validate(self, layout: TrayLayout, checklist: Checklist | None = None) -> list[Violation]:
        check_is_fitted(self, "catalog_")
        return validate_layout(layout, checklist, self.policy_)
