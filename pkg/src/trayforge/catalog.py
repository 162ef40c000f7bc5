"""Instrument, tray and checklist data model plus JSON ingestion.

All lengths are millimetres. Instances of the types here are immutable and
can be shared freely once constructed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ParseError, UnknownInstrument, ValidationError
from .validation import check_bool, check_int, check_nonnegative, check_positive, require_keys

DEFAULT_DIVIDER_THICKNESS_MM = 20.0

_NAMED_KINDS = ("ring", "ring_thick", "needle", "thumb", "gun")
RING_KINDS = frozenset({"ring", "ring_thick"})


@dataclass(frozen=True, order=True)
class InstrumentGroup:
    """Instrument family. ``kind`` is one of the named kinds or ``"other"``."""

    kind: str
    name: str = ""

    def __post_init__(self):
        if self.kind in _NAMED_KINDS:
            if self.name:
                raise ValidationError(f"group {self.kind!r} takes no name")
        elif self.kind == "other":
            if not self.name:
                raise ValidationError("Other group needs a nonempty name")
        else:
            raise ValidationError(f"unknown group kind {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "InstrumentGroup":
        if not isinstance(text, str):
            raise ValidationError(f"group must be a string, got {text!r}")
        if text.startswith("other:"):
            return cls("other", text[len("other:"):])
        return cls(text)

    @classmethod
    def other(cls, name: str) -> "InstrumentGroup":
        return cls("other", name)

    @property
    def is_ring(self) -> bool:
        return self.kind in RING_KINDS

    @property
    def sort_key(self) -> tuple[int, str]:
        if self.kind == "other":
            return (len(_NAMED_KINDS), self.name)
        return (_NAMED_KINDS.index(self.kind), "")

    def __str__(self) -> str:
        return f"other:{self.name}" if self.kind == "other" else self.kind


RING = InstrumentGroup("ring")
RING_THICK = InstrumentGroup("ring_thick")
NEEDLE = InstrumentGroup("needle")
THUMB = InstrumentGroup("thumb")
GUN = InstrumentGroup("gun")


@dataclass(frozen=True)
class InstrumentSpec:
    id: str
    group: InstrumentGroup
    length_mm: float
    width_mm: float
    height_mm: float
    # Carried for gripper logic; the packer ignores it.
    magnetic: bool = True

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValidationError("instrument id must be a nonempty string")
        if self.id.startswith("#"):
            raise ValidationError(f"instrument {self.id!r}: ids starting with '#' are reserved")
        owner = f"instrument {self.id!r}"
        for name in ("length_mm", "width_mm", "height_mm"):
            object.__setattr__(self, name, check_positive(getattr(self, name), name, owner))
        if self.width_mm > self.length_mm:
            raise ValidationError(
                f"{owner}: width_mm ({self.width_mm}) exceeds length_mm ({self.length_mm})"
            )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "group": str(self.group),
            "length_mm": self.length_mm,
            "width_mm": self.width_mm,
            "height_mm": self.height_mm,
            "magnetic": self.magnetic,
        }

    @classmethod
    def from_dict(cls, record) -> "InstrumentSpec":
        require_keys(record, ("id", "group", "length_mm", "width_mm", "height_mm"), "instrument record")
        rid = record["id"]
        try:
            return cls(
                id=rid,
                group=InstrumentGroup.parse(record["group"]),
                length_mm=record["length_mm"],
                width_mm=record["width_mm"],
                height_mm=record["height_mm"],
                magnetic=check_bool(record.get("magnetic", True), "magnetic", f"instrument {rid!r}"),
            )
        except ValidationError as exc:
            msg = str(exc)
            if repr(rid) not in msg:
                msg = f"instrument {rid!r}: {msg}"
            raise ValidationError(msg) from None


@dataclass(frozen=True)
class TraySpec:
    """Tray cavity. Columns accumulate along ``length_mm``; instruments lie along ``width_mm``."""

    length_mm: float
    width_mm: float
    depth_mm: float
    divider_thickness_mm: float = DEFAULT_DIVIDER_THICKNESS_MM

    def __post_init__(self):
        for name in ("length_mm", "width_mm", "depth_mm", "divider_thickness_mm"):
            object.__setattr__(self, name, check_positive(getattr(self, name), name, "tray"))
        if self.divider_thickness_mm >= self.length_mm:
            raise ValidationError("tray: divider_thickness_mm must be smaller than length_mm")

    def to_dict(self) -> dict:
        return {
            "length_mm": self.length_mm,
            "width_mm": self.width_mm,
            "depth_mm": self.depth_mm,
            "divider_thickness_mm": self.divider_thickness_mm,
        }

    @classmethod
    def from_dict(cls, record) -> "TraySpec":
        require_keys(record, ("length_mm", "width_mm", "depth_mm"), "tray")
        return cls(
            record["length_mm"],
            record["width_mm"],
            record["depth_mm"],
            record.get("divider_thickness_mm", DEFAULT_DIVIDER_THICKNESS_MM),
        )


@dataclass(frozen=True)
class Padding:
    px_mm: float = 5.0
    py_mm: float = 5.0
    pz_mm: float = 5.0

    def __post_init__(self):
        for name in ("px_mm", "py_mm", "pz_mm"):
            object.__setattr__(self, name, check_nonnegative(getattr(self, name), name, "padding"))

    def to_dict(self) -> dict:
        return {"px_mm": self.px_mm, "py_mm": self.py_mm, "pz_mm": self.pz_mm}

    @classmethod
    def from_dict(cls, record) -> "Padding":
        require_keys(record, ("px_mm", "py_mm", "pz_mm"), "padding")
        return cls(record["px_mm"], record["py_mm"], record["pz_mm"])


@dataclass(frozen=True)
class MergePolicy:
    """Escalating merge levels.

    ``levels[k]`` is a tuple of group sets; every set is packed as one combined
    group at level ``k``. Level 0 is always the empty (no merging) level.
    """

    levels: tuple[tuple[frozenset, ...], ...]

    def __post_init__(self):
        levels = tuple(tuple(frozenset(s) for s in level) for level in self.levels)
        if not levels or levels[0]:
            raise ValidationError("merge policy level 0 must be empty (no merging)")
        for k, level in enumerate(levels):
            seen: set = set()
            for s in level:
                if len(s) < 2:
                    raise ValidationError(f"merge level {k}: a merge set needs at least two groups")
                if seen & s:
                    raise ValidationError(f"merge level {k}: group appears in two merge sets")
                seen |= s
        for k in range(1, len(levels)):
            if not self._contains(levels[k], levels[k - 1]):
                raise ValidationError(f"merge level {k} does not contain level {k - 1}")
        object.__setattr__(self, "levels", levels)

    @staticmethod
    def _contains(upper, lower) -> bool:
        return all(any(s <= t for t in upper) for s in lower)

    def is_chain(self) -> bool:
        """True when every level strictly refines into the next one."""
        return all(
            self._contains(self.levels[k], self.levels[k - 1])
            and self.levels[k] != self.levels[k - 1]
            for k in range(1, len(self.levels))
        )

    def merged_key(self, group: InstrumentGroup, level: int) -> frozenset:
        for s in self.levels[level]:
            if group in s:
                return s
        return frozenset({group})

    @classmethod
    def default(cls) -> "MergePolicy":
        rings = frozenset({RING, RING_THICK})
        return cls((
            (),
            (rings,),
            (rings, frozenset({NEEDLE, THUMB})),
            (rings, frozenset({NEEDLE, THUMB, GUN})),
        ))

    @classmethod
    def none(cls) -> "MergePolicy":
        return cls(((),))

    def to_dict(self) -> dict:
        return {
            "levels": [
                [sorted(str(g) for g in s) for s in sorted(level, key=lambda s: sorted(g.sort_key for g in s))]
                for level in self.levels
            ]
        }

    @classmethod
    def from_dict(cls, record) -> "MergePolicy":
        require_keys(record, ("levels",), "merge policy")
        return cls(tuple(
            tuple(frozenset(InstrumentGroup.parse(g) for g in s) for s in level)
            for level in record["levels"]
        ))


@dataclass(frozen=True)
class Checklist:
    procedure_name: str
    items: tuple[tuple[str, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        items = tuple((str(i), check_int(q, "qty", minimum=1, owner=f"checklist item {i!r}")) for i, q in self.items)
        object.__setattr__(self, "items", items)

    def resolve(self, catalog: "Sequence[InstrumentSpec] | dict") -> dict[str, InstrumentSpec]:
        index = catalog if isinstance(catalog, dict) else index_catalog(catalog)
        missing = [iid for iid, _ in self.items if iid not in index]
        if missing:
            raise UnknownInstrument(f"checklist references unknown instrument(s): {', '.join(missing)}")
        return {iid: index[iid] for iid, _ in self.items}

    def expand(self) -> list[tuple[str, int]]:
        """Individual instances ``(id, k)``; repeated ids continue the instance count."""
        counts: dict[str, int] = {}
        out = []
        for iid, qty in self.items:
            start = counts.get(iid, 0)
            out.extend((iid, start + k) for k in range(qty))
            counts[iid] = start + qty
        return out

    def quantities(self) -> dict[str, int]:
        q: dict[str, int] = {}
        for iid, qty in self.items:
            q[iid] = q.get(iid, 0) + qty
        return q

    def to_dict(self) -> dict:
        return {"procedure": self.procedure_name, "items": [{"id": i, "qty": q} for i, q in self.items]}

    @classmethod
    def from_dict(cls, record) -> "Checklist":
        require_keys(record, ("items",), "checklist")
        items = []
        for rec in record["items"]:
            require_keys(rec, ("id", "qty"), "checklist item")
            items.append((rec["id"], rec["qty"]))
        return cls(record.get("procedure", ""), tuple(items))


def meta_features(spec: InstrumentSpec) -> list[float]:
    """``[ln(1 + length), ln(1 + width)]`` size descriptor of an instrument."""
    return [math.log1p(spec.length_mm), math.log1p(spec.width_mm)]


def index_catalog(specs: Iterable[InstrumentSpec]) -> dict[str, InstrumentSpec]:
    index: dict[str, InstrumentSpec] = {}
    for s in specs:
        if s.id in index:
            raise ValidationError(f"duplicate instrument id {s.id!r}")
        index[s.id] = s
    return index


def _read_json(path) -> object:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None


def parse_catalog(data) -> list[InstrumentSpec]:
    require_keys(data, ("instruments",), "catalog")
    records = data["instruments"]
    if not isinstance(records, list):
        raise ParseError("catalog 'instruments' must be a list")
    specs = [InstrumentSpec.from_dict(r) for r in records]
    index_catalog(specs)
    return specs


def load_catalog(path) -> list[InstrumentSpec]:
    return parse_catalog(_read_json(path))


def dump_catalog(specs: Sequence[InstrumentSpec]) -> str:
    return json.dumps({"instruments": [s.to_dict() for s in specs]}, indent=2)


def load_checklist(path, catalog: Sequence[InstrumentSpec] | None = None) -> Checklist:
    try:
        checklist = Checklist.from_dict(_read_json(path))
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if catalog is not None:
        checklist.resolve(catalog)
    return checklist


def load_tray(path) -> TraySpec:
    return TraySpec.from_dict(_read_json(path))


def load_padding(path) -> Padding:
    return Padding.from_dict(_read_json(path))


def load_policy(path) -> MergePolicy:
    return MergePolicy.from_dict(_read_json(path))


def _data_path(name: str) -> Path:
    return Path(__file__).with_name("data") / name


def bundled_catalog() -> list[InstrumentSpec]:
    """The 31-instrument reference catalog shipped with the package."""
    return load_catalog(_data_path("catalog31.json"))


def bundled_checklist() -> Checklist:
    """A 20-instrument general-surgery checklist over the bundled catalog."""
    return load_checklist(_data_path("checklist20.json"))


def bundled_tray() -> TraySpec:
    return load_tray(_data_path("tray.json"))
