"""Seeded transport-collision simulator and effect-size statistics.

The physics is deliberately quasi-static: there is no momentum and no friction
coefficient. Every body has a rest footprint, a vertical extent, a slack box
(how far its centre may travel before hitting a wall, divider, holder gate or a
same-layer neighbour) and a mobility factor in ``(0, 1]``. Bodies confined by
dividers and fully supported from below move little; overhanging or loose
bodies move freely. Each excitation step draws a displacement per body inside
its scaled slack and records which bodies the powder-coated control body
touches.

Two bodies touch when their footprints intersect (the control footprint is
inflated by ``contact_eps_mm``) and either their vertical extents overlap
(side by side) or the bodies between them in the stack leave at least
``SAG_MIN_MM`` of the overlap uncovered along the instrument length axis (one
rests on, or sags onto, the other).

The contract is ordinal: structured layouts produce fewer contacts than loose
ones. Absolute counts are not comparable to physical experiments.

Random numbers come from NumPy's PCG64 generator seeded directly with the
trial seed, so a given seed reproduces on every platform.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .catalog import Checklist, InstrumentGroup, InstrumentSpec, MergePolicy, Padding, TraySpec, NEEDLE, THUMB
from .errors import InvalidLayout, PlacementSamplingExhausted, ZeroVariance
from .packer import Placement, TrayLayout, pack, validate_layout

DISPLACEMENT, TILT = "displacement", "tilt"
HUMAN_LOOSE, NO_ALGORITHM = "A", "B"

CONTACT_EPS_MM = 0.5
HOLDER_GATE_MM = 2.0
STABLE_MOBILITY = 0.15
LOOSE_MOBILITY = 1.0
# an overhanging body is levered over its support; a quarter overhang frees it fully
OVERHANG_GAIN = 4.0
CHAIN_JITTER_MM = 1.0
RESTACK_PROBABILITY = 0.1
TILT_STEPS_PER_SECOND = 4
TILT_JITTER = 0.1
SAMPLING_ATTEMPTS = 10_000
FLOOR_ATTEMPTS = 60
# shortest uncovered stretch over which a stacked body can sag onto one further down
SAG_MIN_MM = 5.0


@dataclass(frozen=True)
class Body:
    index: int
    instrument_id: str
    instance: int
    group: InstrumentGroup
    cx: float
    cy: float
    half_x: float
    half_y: float
    z_lo: float
    z_hi: float
    slack: tuple[float, float, float, float]  # x_lo, x_hi, y_lo, y_hi displacement bounds
    mobility: float
    cell: int = -1  # column index, -1 when loose
    layer: int = 0
    yaw: float = 0.0
    chain: int = -1  # bodies sharing a chain id move together
    in_holder: bool = False


@dataclass(frozen=True)
class Wall:
    kind: str  # "tray", "divider" or "holder"
    x0: float
    y0: float
    x1: float
    y1: float


@dataclass(frozen=True)
class SimScene:
    tray: TraySpec
    bodies: tuple[Body, ...]
    walls: tuple[Wall, ...]
    control_index: int = 0
    condition: str = "C"

    def __post_init__(self):
        if self.bodies and not 0 <= self.control_index < len(self.bodies):
            raise ValueError(f"control index {self.control_index} out of range for {len(self.bodies)} bodies")

    def with_control(self, index: int) -> "SimScene":
        return replace(self, control_index=int(index))


@dataclass(frozen=True)
class ExcitationProfile:
    mode: str
    duration_s: float = 15.0
    frequency_hz: tuple[float, float] = (1.5, 1.8)
    amplitude_mm: float = 100.0
    tilt_deg: float = 30.0
    tilt_ramp_s: float = 3.0

    def __post_init__(self):
        if self.mode not in (DISPLACEMENT, TILT):
            raise ValueError(f"unknown excitation mode {self.mode!r}")
        lo, hi = self.frequency_hz
        if not (0 < lo <= hi):
            raise ValueError("frequency range must be positive and ordered")
        for name in ("duration_s", "amplitude_mm", "tilt_deg", "tilt_ramp_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    @classmethod
    def displacement(cls, **kw) -> "ExcitationProfile":
        return cls(DISPLACEMENT, **kw)

    @classmethod
    def tilt(cls, **kw) -> "ExcitationProfile":
        return cls(TILT, **kw)


@dataclass(frozen=True)
class TrialReport:
    seed: int
    control_index: int
    contacts: frozenset
    count: int


@dataclass(frozen=True)
class StudyReport:
    condition: str
    mode: str
    n_trials: int
    mean: float
    std: float
    cohens_d_vs_A: float | None
    trials: tuple[TrialReport, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        d = self.cohens_d_vs_A
        return {
            "condition": self.condition,
            "mode": self.mode,
            "n": self.n_trials,
            "mean": round(self.mean, 6),
            "std": round(self.std, 6),
            "cohens_d_vs_A": None if d is None else round(d, 6),
            "trials": [{"seed": t.seed, "count": t.count} for t in self.trials],
        }


# -- statistics ---------------------------------------------------------------

def cohens_d(mean1: float, std1: float, mean2: float, std2: float) -> float:
    """Standardised mean difference with the equal-n pooled deviation."""
    if std1 < 0 or std2 < 0:
        raise ValueError("standard deviations must be nonnegative")
    if std1 == 0 and std2 == 0:
        raise ZeroVariance("both standard deviations are zero")
    return (mean1 - mean2) / math.sqrt((std1 * std1 + std2 * std2) / 2)


def describe(samples: Sequence[float]) -> tuple[float, float]:
    """Mean and population standard deviation."""
    a = np.asarray(samples, dtype=float)
    if a.size == 0:
        raise ValueError("no samples")
    return float(a.mean()), float(a.std(ddof=0))


# -- scene construction -------------------------------------------------------

def _tray_walls(tray: TraySpec) -> list[Wall]:
    L, W = tray.length_mm, tray.width_mm
    return [
        Wall("tray", 0, 0, W, 0), Wall("tray", W, 0, W, L),
        Wall("tray", W, L, 0, L), Wall("tray", 0, L, 0, 0),
    ]


def _cells(layout: TrayLayout) -> dict[int, tuple[float, float]]:
    spans = sorted(layout.columns, key=lambda c: c.index)
    cells = {}
    for i, c in enumerate(spans):
        lo = 0.0 if i == 0 else c.y_start_mm
        hi = layout.tray.length_mm if i == len(spans) - 1 else c.y_end_mm
        cells[c.index] = (lo, hi)
    return cells


def _x_coverage(interval, others) -> float:
    """Length of ``interval`` covered by the union of ``others``."""
    lo, hi = interval
    if hi <= lo:
        return 0.0
    covered, cur = 0.0, lo
    for a, b in sorted(others):
        a, b = max(a, cur), min(b, hi)
        if b > a:
            covered += b - a
            cur = b
    return covered


def _bodies_from_placements(placements: Sequence[Placement], layout: TrayLayout) -> list[Body]:
    tray = layout.tray
    cells = _cells(layout)
    holder_cols = {h.column for h in layout.holders}
    by_cell_layer: dict[tuple[int, int], list[Placement]] = {}
    for p in placements:
        by_cell_layer.setdefault((p.column, p.layer), []).append(p)

    bodies = []
    for i, p in enumerate(placements):
        hx, hy = p.length_mm / 2, p.width_mm / 2
        same = sorted(by_cell_layer[(p.column, p.layer)], key=lambda q: q.x_mm)
        left = max((q.x_mm + q.length_mm / 2 for q in same if q.x_mm < p.x_mm), default=0.0)
        right = min((q.x_mm - q.length_mm / 2 for q in same if q.x_mm > p.x_mm), default=tray.width_mm)
        y_lo_cell, y_hi_cell = cells.get(p.column, (0.0, tray.length_mm))
        slack = [left - (p.x_mm - hx), right - (p.x_mm + hx), y_lo_cell - (p.y_mm - hy), y_hi_cell - (p.y_mm + hy)]
        in_holder = p.column in holder_cols
        if in_holder:
            slack = [max(slack[0], -HOLDER_GATE_MM), min(slack[1], HOLDER_GATE_MM),
                     max(slack[2], -HOLDER_GATE_MM), min(slack[3], HOLDER_GATE_MM)]
        if p.layer == 0:
            overhang = 0.0
        else:
            below = [(q.x_mm - q.length_mm / 2, q.x_mm + q.length_mm / 2)
                     for q in by_cell_layer.get((p.column, p.layer - 1), [])]
            ext = (p.x_mm - hx, p.x_mm + hx)
            overhang = 1.0 - _x_coverage(ext, below) / p.length_mm
        mobility = STABLE_MOBILITY + (1.0 - STABLE_MOBILITY) * min(1.0, OVERHANG_GAIN * max(0.0, overhang))
        bodies.append(Body(
            index=i, instrument_id=p.instrument_id, instance=p.instance, group=p.group,
            cx=p.x_mm, cy=p.y_mm, half_x=hx, half_y=hy,
            z_lo=p.z_mm - p.height_mm, z_hi=p.z_mm,
            slack=tuple(float(s) for s in slack), mobility=mobility,
            cell=p.column, layer=p.layer, in_holder=in_holder,
        ))
    return bodies


def _layout_walls(layout: TrayLayout) -> list[Wall]:
    tray = layout.tray
    walls = _tray_walls(tray)
    for d in layout.dividers:
        for y in (d.y_mm - d.thickness_mm / 2, d.y_mm + d.thickness_mm / 2):
            walls.append(Wall("divider", 0.0, y, tray.width_mm, y))
    for h in layout.holders:
        walls.append(Wall("holder", 0.0, h.y_mm, HOLDER_GATE_MM, h.y_mm))
    return walls


def scene_from_layout(layout: TrayLayout, control: int = 0, condition: str = "C") -> SimScene:
    violations = validate_layout(layout)
    if violations:
        raise InvalidLayout(violations)
    bodies = _bodies_from_placements(layout.placements, layout)
    return SimScene(layout.tray, tuple(bodies), tuple(_layout_walls(layout)), control if bodies else 0, condition)


def _shuffled_layout(layout: TrayLayout, rng: np.random.Generator) -> tuple[Placement, ...]:
    """Same columns and layer sizes, but instruments randomly reassigned to slots."""
    px, pz = layout.padding.px_mm, layout.padding.pz_mm
    out: list[Placement] = []
    for col in sorted({p.column for p in layout.placements}):
        items = [p for p in layout.placements if p.column == col]
        sizes = [sum(1 for p in items if p.layer == layer) for layer in sorted({p.layer for p in items})]
        perm = [items[i] for i in rng.permutation(len(items))]
        z, pos = 0.0, 0
        for layer, n in enumerate(sizes):
            batch = perm[pos:pos + n]
            pos += n
            slot = max(p.length_mm for p in batch) + 2 * px
            for i, p in enumerate(batch):
                out.append(replace(p, x_mm=(i + 0.5) * slot, z_mm=z + p.height_mm, layer=layer))
            z += max(p.height_mm for p in batch) + pz
    return tuple(out)


def _instances(checklist: Checklist, catalog) -> list[tuple[InstrumentSpec, int]]:
    specs = checklist.resolve(catalog)
    return [(specs[i], k) for i, k in checklist.expand()]


def _obb_aabb(cx, cy, hx, hy, yaw):
    c, s = abs(math.cos(yaw)), abs(math.sin(yaw))
    ex, ey = hx * c + hy * s, hx * s + hy * c
    return cx - ex, cx + ex, cy - ey, cy + ey


def _loose_scene(instances, tray: TraySpec, rng: np.random.Generator) -> SimScene:
    """Human-style tray: stringer for ring groups, one bag per needle/thumb group, rest loose."""
    units: list[list[tuple[InstrumentSpec, int]]] = []
    chains: dict[str, list] = {}
    for spec, k in instances:
        if spec.group.is_ring:
            chains.setdefault("stringer", []).append((spec, k))
        elif spec.group in (NEEDLE, THUMB):
            chains.setdefault(f"bag:{spec.group}", []).append((spec, k))
        else:
            units.append([(spec, k)])
    units = [chains[key] for key in sorted(chains)] + units
    order = sorted(range(len(units)), key=lambda u: -sum(s.length_mm * s.width_mm for s, _ in units[u]))

    placed: list[Body] = []
    attempts = 0
    chain_id = 0
    for u in order:
        members = units[u]
        is_chain = len(members) > 1 or any(s.group.is_ring or s.group in (NEEDLE, THUMB) for s, _ in members)
        hx = max(s.length_mm for s, _ in members) / 2
        hy = sum(s.width_mm for s, _ in members) / 2
        height = max(s.height_mm for s, _ in members)
        tries = 0
        while True:
            attempts += 1
            tries += 1
            if attempts > SAMPLING_ATTEMPTS:
                raise PlacementSamplingExhausted(
                    f"could not place {len(instances)} instruments in a {tray.width_mm}x{tray.length_mm} tray "
                    f"within {SAMPLING_ATTEMPTS} attempts")
            yaw = 0.0 if is_chain else math.radians(rng.uniform(-10.0, 10.0))
            x0, x1, y0, y1 = _obb_aabb(0.0, 0.0, hx, hy, yaw)
            if x1 - x0 > tray.width_mm or y1 - y0 > tray.length_mm:
                yaw = 0.0
                x0, x1, y0, y1 = -hx, hx, -hy, hy
            cx = rng.uniform(-x0, tray.width_mm - x1)
            cy = rng.uniform(-y0, tray.length_mm - y1)
            under = _overlapping(placed, cx, cy, hx, hy, yaw)
            z_lo = max((b.z_hi for b in under), default=0.0)
            if z_lo > 0 and tries <= FLOOR_ATTEMPTS:
                continue
            if z_lo + height > tray.depth_mm:
                continue
            break
        layer = 1 + max((b.layer for b in under), default=-1)
        chain = -1
        if is_chain:
            chain, chain_id = chain_id, chain_id + 1
        y = cy - hy
        for spec, k in members:
            mhx, mhy = spec.length_mm / 2, spec.width_mm / 2
            bcx, bcy = cx - hx + mhx, y + mhy
            y += spec.width_mm
            placed.append(Body(
                index=len(placed), instrument_id=spec.id, instance=k, group=spec.group,
                cx=bcx, cy=bcy, half_x=mhx, half_y=mhy, z_lo=z_lo, z_hi=z_lo + spec.height_mm,
                slack=(0.0, 0.0, 0.0, 0.0), mobility=LOOSE_MOBILITY, cell=-1, layer=layer,
                yaw=yaw, chain=chain,
            ))
    # slack of a loose body (or chain) runs to the tray walls
    bodies = []
    for b in placed:
        group = [o for o in placed if b.chain >= 0 and o.chain == b.chain] or [b]
        boxes = [_obb_aabb(o.cx, o.cy, o.half_x, o.half_y, o.yaw) for o in group]
        x0 = min(bx[0] for bx in boxes)
        x1 = max(bx[1] for bx in boxes)
        y0 = min(bx[2] for bx in boxes)
        y1 = max(bx[3] for bx in boxes)
        bodies.append(replace(b, slack=(-x0, tray.width_mm - x1, -y0, tray.length_mm - y1)))
    return SimScene(tray, tuple(bodies), tuple(_tray_walls(tray)), 0, HUMAN_LOOSE)


def _overlapping(placed: Sequence[Body], cx, cy, hx, hy, yaw) -> list[Body]:
    if not placed:
        return []
    centers = np.array([[b.cx, b.cy] for b in placed])
    halves = np.array([[b.half_x, b.half_y] for b in placed])
    yaws = np.array([b.yaw for b in placed])
    hit = _sat_overlap(np.array([cx, cy]), np.array([hx, hy]), yaw, centers, halves, yaws)
    return [b for b, h in zip(placed, hit) if h]


def baseline_scene(
    checklist: Checklist,
    catalog,
    tray: TraySpec,
    kind: str,
    rng_seed: int,
    padding: Padding | None = None,
    policy: MergePolicy | None = None,
) -> SimScene:
    """Comparison tray: ``"A"`` human loose assembly, ``"B"`` packed columns with shuffled slots."""
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    if kind == HUMAN_LOOSE:
        return _loose_scene(_instances(checklist, catalog), tray, rng)
    if kind == NO_ALGORITHM:
        return baseline_from_layout(pack(checklist, catalog, tray, padding, policy), kind, rng_seed)
    raise ValueError(f"unknown baseline kind {kind!r}")


def baseline_from_layout(layout: TrayLayout, kind: str, rng_seed: int) -> SimScene:
    """Baseline scene built from the instruments of an existing layout."""
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    if kind == HUMAN_LOOSE:
        specs = [(InstrumentSpec(p.instrument_id, p.group, p.length_mm, p.width_mm, p.height_mm), p.instance)
                 for p in layout.placements]
        return _loose_scene(specs, layout.tray, rng)
    if kind == NO_ALGORITHM:
        placements = _shuffled_layout(layout, rng)
        bodies = _bodies_from_placements(placements, layout)
        return SimScene(layout.tray, tuple(bodies), tuple(_layout_walls(layout)), 0, NO_ALGORITHM)
    raise ValueError(f"unknown baseline kind {kind!r}")


# -- dynamics -----------------------------------------------------------------

def _sat_overlap(c_center, c_half, c_yaw, centers, halves, yaws) -> np.ndarray:
    """Strict separating-axis overlap of one oriented box against many."""
    cu = np.array([math.cos(c_yaw), math.sin(c_yaw)])
    cv = np.array([-cu[1], cu[0]])
    u = np.stack([np.cos(yaws), np.sin(yaws)], axis=1)
    v = np.stack([-u[:, 1], u[:, 0]], axis=1)
    d = centers - c_center
    hit = np.ones(len(centers), dtype=bool)
    for axis in (np.broadcast_to(cu, u.shape), np.broadcast_to(cv, u.shape), u, v):
        rc = c_half[0] * np.abs(axis @ cu) + c_half[1] * np.abs(axis @ cv)
        rj = halves[:, 0] * np.abs(np.sum(axis * u, axis=1)) + halves[:, 1] * np.abs(np.sum(axis * v, axis=1))
        hit &= np.abs(np.sum(d * axis, axis=1)) < rc + rj
    return hit


class _Kinematics:
    def __init__(self, scene: SimScene):
        b = scene.bodies
        self.n = len(b)
        self.rest = np.array([[o.cx, o.cy] for o in b], dtype=float).reshape(self.n, 2)
        self.half = np.array([[o.half_x, o.half_y] for o in b], dtype=float).reshape(self.n, 2)
        self.yaw = np.array([o.yaw for o in b], dtype=float)
        self.slack = np.array([o.slack for o in b], dtype=float).reshape(self.n, 4)
        self.mob = np.array([o.mobility for o in b], dtype=float)
        self.z_lo = np.array([o.z_lo for o in b], dtype=float)
        self.z_hi = np.array([o.z_hi for o in b], dtype=float)
        self.cell = np.array([o.cell for o in b], dtype=int)
        chains = np.array([o.chain for o in b], dtype=int)
        # chain members follow the displacement drawn for the chain's first member
        self.leader = np.arange(self.n)
        for i in range(self.n):
            if chains[i] >= 0:
                self.leader[i] = int(np.flatnonzero(chains == chains[i])[0])
        self.chained = chains >= 0

    def jitter(self, rng, scale) -> np.ndarray:
        u = rng.random((self.n, 2))
        lo = self.slack[:, [0, 2]]
        hi = self.slack[:, [1, 3]]
        disp = (lo + u * (hi - lo)) * (scale * self.mob)[:, None]
        disp = disp[self.leader]
        if self.chained.any():
            extra = rng.uniform(-CHAIN_JITTER_MM, CHAIN_JITTER_MM, (self.n, 2)) * scale
            disp = disp + np.where(self.chained[:, None], extra, 0.0)
        return disp


def _contacts_at(kin: _Kinematics, pos: np.ndarray, control: int, eps: float) -> set[int]:
    hit = _sat_overlap(pos[control], kin.half[control] + eps, kin.yaw[control], pos, kin.half, kin.yaw)
    hit[control] = False
    found = set()
    zc_lo, zc_hi = kin.z_lo[control] - eps, kin.z_hi[control] + eps
    for j in np.flatnonzero(hit):
        j = int(j)
        if kin.z_lo[j] < zc_hi and kin.z_hi[j] > zc_lo:
            found.add(j)
            continue
        lower, upper = (j, control) if kin.z_hi[j] <= kin.z_lo[control] else (control, j)
        if _exposed(kin, pos, control, j, lower, upper, eps):
            found.add(j)
    return found


def _aabb(kin, pos, i, eps=0.0):
    return _obb_aabb(pos[i, 0], pos[i, 1], kin.half[i, 0] + eps, kin.half[i, 1] + eps, kin.yaw[i])


def _exposed(kin, pos, control, j, lower, upper, eps) -> bool:
    ca = _aabb(kin, pos, control, eps)
    ja = _aabb(kin, pos, j)
    lo, hi = max(ca[0], ja[0]), min(ca[1], ja[1])
    ylo, yhi = max(ca[2], ja[2]), min(ca[3], ja[3])
    if hi <= lo:
        return True
    between = np.flatnonzero((kin.z_lo >= kin.z_hi[lower] - 1e-9) & (kin.z_hi <= kin.z_lo[upper] + 1e-9))
    shields = []
    for k in between:
        k = int(k)
        if k in (lower, upper):
            continue
        ka = _aabb(kin, pos, k)
        if ka[2] < yhi and ka[3] > ylo:
            shields.append((ka[0], ka[1]))
    if not shields:
        return True
    return _x_coverage((lo, hi), shields) < (hi - lo) - SAG_MIN_MM


def _restack(kin: _Kinematics, rng) -> None:
    """Vertical shake in a loose tray: two stacked, overlapping bodies trade heights."""
    if rng.random() >= RESTACK_PROBABILITY or kin.n < 2:
        return
    i = int(rng.integers(kin.n))
    hit = _sat_overlap(kin.rest[i], kin.half[i], kin.yaw[i], kin.rest, kin.half, kin.yaw)
    hit[i] = False
    stacked = [int(j) for j in np.flatnonzero(hit) if not (kin.z_lo[j] < kin.z_hi[i] and kin.z_hi[j] > kin.z_lo[i])]
    if not stacked:
        return
    j = stacked[int(rng.integers(len(stacked)))]
    hi_, hj = kin.z_hi[i] - kin.z_lo[i], kin.z_hi[j] - kin.z_lo[j]
    zi, zj = kin.z_lo[i], kin.z_lo[j]
    kin.z_lo[i], kin.z_hi[i] = zj, zj + hi_
    kin.z_lo[j], kin.z_hi[j] = zi, zi + hj


def excitation_scale(profile: ExcitationProfile, tray: TraySpec) -> float:
    return min(1.0, profile.amplitude_mm / min(tray.width_mm, tray.length_mm))


def run_trial(scene: SimScene, profile: ExcitationProfile, seed: int,
              contact_eps_mm: float = CONTACT_EPS_MM) -> TrialReport:
    """Count bodies touched by the control body under one excitation run."""
    control = scene.control_index
    if len(scene.bodies) < 2:
        return TrialReport(int(seed), control, frozenset(), 0)
    rng = np.random.Generator(np.random.PCG64(seed))
    kin = _Kinematics(scene)
    loose = bool(np.any(kin.cell < 0))
    contacts: set[int] = set()
    scale = excitation_scale(profile, scene.tray)

    if profile.mode == DISPLACEMENT:
        freq = rng.uniform(*profile.frequency_hz)
        steps = max(1, int(round(profile.duration_s * freq)))
        for _ in range(steps):
            if loose:
                _restack(kin, rng)
            pos = kin.rest + kin.jitter(rng, scale)
            contacts |= _contacts_at(kin, pos, control, contact_eps_mm)
    else:
        ramp = max(1, int(round(profile.tilt_ramp_s * TILT_STEPS_PER_SECOND)))
        full = math.sin(math.radians(min(profile.tilt_deg, 90.0)))
        for axis in (0, 1, None):
            sign = 1 if rng.random() < 0.5 else -1
            for k in range(1, ramp + 1):
                pos = kin.rest + kin.jitter(rng, scale * TILT_JITTER)
                if axis is not None:
                    frac = math.sin(math.radians(profile.tilt_deg * k / ramp)) / full
                    edge = kin.slack[:, 2 * axis + (1 if sign > 0 else 0)]
                    slide = edge * frac * kin.mob
                    pos[:, axis] += slide[kin.leader]
                contacts |= _contacts_at(kin, pos, control, contact_eps_mm)
    contacts.discard(control)
    return TrialReport(int(seed), control, frozenset(contacts), len(contacts))


def run_study(
    conditions: Mapping[str, SimScene | Callable[[int], SimScene]],
    profile: ExcitationProfile,
    n_trials: int,
    base_seed: int = 0,
    workers: int = 1,
) -> dict[str, StudyReport]:
    """Run ``n_trials`` per condition with seeds ``base_seed + i``.

    A condition is either a fixed scene or a factory ``seed -> scene`` that
    builds a fresh placement per trial. The control body is redrawn per trial.
    Cohen's d is reported against condition ``"A"`` when present and defined.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")

    def one(name, source, i):
        seed = base_seed + i
        scene = source(seed) if callable(source) else source
        pick = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 1])))
        control = int(pick.integers(len(scene.bodies))) if scene.bodies else 0
        return run_trial(scene.with_control(control), profile, seed)

    jobs = [(name, src, i) for name, src in conditions.items() for i in range(n_trials)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: one(*job), jobs))
    else:
        results = [one(*job) for job in jobs]

    reports: dict[str, StudyReport] = {}
    stats = {}
    for ci, name in enumerate(conditions):
        trials = tuple(results[ci * n_trials:(ci + 1) * n_trials])
        mean, std = describe([t.count for t in trials])
        stats[name] = (mean, std)
        reports[name] = StudyReport(name, profile.mode, n_trials, mean, std, None, trials)
    if HUMAN_LOOSE in stats and n_trials >= 2:
        ma, sa = stats[HUMAN_LOOSE]
        for name, (m, s) in stats.items():
            try:
                d = cohens_d(ma, sa, m, s)
            except ZeroVariance:
                d = None
            reports[name] = replace(reports[name], cohens_d_vs_A=d)
    return reports


def standard_conditions(layout: TrayLayout) -> dict[str, SimScene | Callable[[int], SimScene]]:
    """Conditions A (loose), B (shuffled columns) and C (the layout) for one layout."""
    return {
        HUMAN_LOOSE: lambda seed: baseline_from_layout(layout, HUMAN_LOOSE, seed),
        NO_ALGORITHM: lambda seed: baseline_from_layout(layout, NO_ALGORITHM, seed),
        "C": scene_from_layout(layout),
    }
