"""Planar instrument pose from a binary mask.

Pixel ``(col, row)`` covers the unit square ``[col, col+1) x [row, row+1)``
and is represented by its centre ``(col + 0.5, row + 0.5)``. Orientation comes
from the principal axes of the filled foreground region; the centroid and the
major axis are carried to the world plane through a planar homography.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DegeneratePolygon, EmptyMask, ParseError, SingularCalibration
from .validation import check_nonnegative, require_keys

DEGENERATE_RATIO = 1.05
REPROJECTION_WARN_PX = 0.3


@dataclass(frozen=True, eq=False)
class Mask:
    """Row-major boolean bitmap, ``bitmap[row, col]``."""

    bitmap: np.ndarray

    def __post_init__(self):
        bm = np.asarray(self.bitmap, dtype=bool)
        if bm.ndim != 2 or bm.shape[0] == 0 or bm.shape[1] == 0:
            raise ValueError(f"mask must be a nonempty 2-D bitmap, got shape {bm.shape}")
        bm = bm.copy()
        bm.setflags(write=False)
        object.__setattr__(self, "bitmap", bm)

    @property
    def width_px(self) -> int:
        return self.bitmap.shape[1]

    @property
    def height_px(self) -> int:
        return self.bitmap.shape[0]

    @property
    def area(self) -> int:
        return int(self.bitmap.sum())

    @classmethod
    def from_pixels(cls, pixels, width_px: int, height_px: int) -> "Mask":
        bm = np.zeros((height_px, width_px), dtype=bool)
        for col, row in pixels:
            if not (0 <= col < width_px and 0 <= row < height_px):
                raise ValueError(f"pixel ({col}, {row}) outside {width_px}x{height_px} mask")
            bm[row, col] = True
        return cls(bm)

    def __eq__(self, other):
        return isinstance(other, Mask) and np.array_equal(self.bitmap, other.bitmap)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PlanarCalibration:
    homography: np.ndarray
    reprojection_error_px: float = 0.0

    def __post_init__(self):
        h = np.asarray(self.homography, dtype=float)
        if h.shape != (3, 3) or not np.all(np.isfinite(h)):
            raise SingularCalibration(f"homography must be a finite 3x3 matrix, got shape {h.shape}")
        det = float(np.linalg.det(h))
        if abs(det) <= 1e-9:
            raise SingularCalibration(f"homography is singular (det={det:.3g})")
        h = h.copy()
        h.setflags(write=False)
        object.__setattr__(self, "homography", h)
        err = check_nonnegative(self.reprojection_error_px, "reprojection_error_px", "calibration")
        object.__setattr__(self, "reprojection_error_px", err)
        if err >= REPROJECTION_WARN_PX:
            warnings.warn(
                f"calibration reprojection error {err:.3f} px is not below {REPROJECTION_WARN_PX} px",
                stacklevel=3,
            )

    @classmethod
    def identity(cls) -> "PlanarCalibration":
        return cls(np.eye(3))

    def to_world(self, u: float, v: float) -> tuple[float, float]:
        q = self.homography @ np.array([u, v, 1.0])
        return float(q[0] / q[2]), float(q[1] / q[2])

    def to_pixel(self, x: float, y: float) -> tuple[float, float]:
        q = np.linalg.solve(self.homography, np.array([x, y, 1.0]))
        return float(q[0] / q[2]), float(q[1] / q[2])

    def jacobian(self, u: float, v: float) -> np.ndarray:
        """Derivative of the pixel-to-world map at ``(u, v)``."""
        h = self.homography
        q = h @ np.array([u, v, 1.0])
        return (h[:2, :2] * q[2] - np.outer(q[:2], h[2, :2])) / (q[2] * q[2])


@dataclass(frozen=True)
class PoseEstimate:
    x_mm: float
    y_mm: float
    rz_deg: float
    elongation: float
    degenerate: bool

    def to_dict(self) -> dict:
        elong = self.elongation if math.isfinite(self.elongation) else None
        return {
            "x_mm": round(self.x_mm, 6),
            "y_mm": round(self.y_mm, 6),
            "rz_deg": round(self.rz_deg, 6),
            "elongation": None if elong is None else round(elong, 6),
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class PrincipalAxes:
    centroid: tuple[float, float]
    major_axis: tuple[float, float]
    eigenvalues: tuple[float, float]


def principal_axes(mask: Mask) -> PrincipalAxes:
    """Centroid, unit major axis and descending covariance eigenvalues.

    Second moments are accumulated in exact integer arithmetic, so translated
    or point-reflected copies of a mask produce bit-identical covariances.
    """
    rows, cols = np.nonzero(mask.bitmap)
    n = int(rows.size)
    if n == 0:
        raise EmptyMask("mask has no foreground pixels")
    c = cols.astype(np.int64)
    r = rows.astype(np.int64)
    sx, sy = int(c.sum()), int(r.sum())
    sxx, syy, sxy = int((c * c).sum()), int((r * r).sum()), int((c * r).sum())
    n2 = n * n
    a = (n * sxx - sx * sx) / n2
    b = (n * sxy - sx * sy) / n2
    d = (n * syy - sy * sy) / n2

    half_trace = (a + d) / 2
    radius = math.hypot((a - d) / 2, b)
    lam1, lam2 = half_trace + radius, max(half_trace - radius, 0.0)
    theta = 0.5 * math.atan2(2 * b, a - d)
    ax, ay = math.cos(theta), math.sin(theta)
    if ax < 0 or (ax == 0 and ay < 0):
        ax, ay = -ax, -ay
    return PrincipalAxes((sx / n + 0.5, sy / n + 0.5), (ax, ay), (lam1, lam2))


def estimate_pose(mask: Mask, calib: PlanarCalibration | None = None,
                  degenerate_ratio: float = DEGENERATE_RATIO) -> PoseEstimate:
    calib = calib if calib is not None else PlanarCalibration.identity()
    axes = principal_axes(mask)
    u, v = axes.centroid
    x, y = calib.to_world(u, v)
    lam1, lam2 = axes.eigenvalues
    elongation = math.sqrt(lam1 / lam2) if lam2 > 0 else math.inf
    degenerate = lam2 > 0 and lam1 / lam2 < degenerate_ratio
    if degenerate:
        return PoseEstimate(x, y, 0.0, elongation, True)
    dx, dy = calib.jacobian(u, v) @ np.array(axes.major_axis)
    rz = math.degrees(math.atan2(dy, dx)) % 180.0
    if rz >= 180.0:
        rz = 0.0
    return PoseEstimate(x, y, rz, elongation, False)


def mask_from_contour(points: Sequence[Sequence[float]], resolution: float = 1.0,
                      shape: tuple[int, int] | None = None) -> Mask:
    """Rasterise a polygon (even-odd rule) sampling pixel centres.

    ``points`` are in contour units; ``resolution`` is pixels per unit.
    ``shape`` is ``(height_px, width_px)`` and defaults to the polygon's
    bounding box.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise DegeneratePolygon("polygon needs at least 3 points")
    pts = pts * float(resolution)
    edges = np.roll(pts, -1, axis=0) - pts
    area2 = float(np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1]))
    if abs(area2) <= 1e-12 * max(1.0, float(np.abs(edges).max()) ** 2):
        raise DegeneratePolygon("polygon points are collinear")
    if shape is None:
        shape = (max(int(math.ceil(pts[:, 1].max())), 1), max(int(math.ceil(pts[:, 0].max())), 1))
    height, width = shape
    bm = np.zeros((height, width), dtype=bool)
    x0, y0 = pts[:, 0], pts[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    centres = np.arange(width) + 0.5
    for row in range(height):
        yc = row + 0.5
        crosses = (y0 <= yc) != (y1 <= yc)
        if not crosses.any():
            continue
        t = (yc - y0[crosses]) / (y1[crosses] - y0[crosses])
        xs = np.sort(x0[crosses] + t * (x1[crosses] - x0[crosses]))
        # pixel centre inside iff an odd number of crossings lie to its left
        bm[row] = np.searchsorted(xs, centres, side="right") % 2 == 1
    return Mask(bm)


def rectangle_contour(cx: float, cy: float, length: float, width: float, angle_deg: float) -> list[tuple[float, float]]:
    """Corners of a ``length`` x ``width`` rectangle rotated by ``angle_deg``."""
    t = math.radians(angle_deg)
    c, s = math.cos(t), math.sin(t)
    hl, hw = length / 2, width / 2
    return [(cx + dx * c - dy * s, cy + dx * s + dy * c)
            for dx, dy in ((-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw))]


def read_pgm(path, threshold: int = 128) -> Mask:
    """Binary (P5) PGM; pixels ``>= threshold`` (scaled to 8 bit) are foreground."""
    data = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ParseError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ParseError(f"{path}: malformed PGM header") from None
    pos += 1
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    count = width * height
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos) if len(data) - pos >= count * np.dtype(dtype).itemsize else None
    if raw is None:
        raise ParseError(f"{path}: PGM pixel data truncated")
    scaled = raw.astype(np.float64) * (255.0 / maxval)
    return Mask(scaled.reshape(height, width) >= threshold)


def write_pgm(path, mask: Mask) -> None:
    header = f"P5\n{mask.width_px} {mask.height_px}\n255\n".encode()
    Path(path).write_bytes(header + (mask.bitmap.astype(np.uint8) * 255).tobytes())


def read_contour_csv(path) -> list[tuple[float, float]]:
    points = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        try:
            points.append((float(parts[0]), float(parts[1])))
        except (ValueError, IndexError):
            if not points and lineno == 1:
                continue  # header row
            raise ParseError(f"{path}:{lineno}: expected 'x,y'") from None
    return points


def load_calibration(path) -> PlanarCalibration:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    require_keys(data, ("homography",), "calibration")
    return PlanarCalibration(np.asarray(data["homography"], dtype=float),
                             data.get("reprojection_error_px", 0.0))


class PoseEstimator(TransformerMixin, BaseEstimator):
    """Transformer from masks to rows ``[x_mm, y_mm, rz_deg, elongation, degenerate]``."""

    def __init__(self, homography=None, reprojection_error_px=0.0, degenerate_ratio=DEGENERATE_RATIO):
        self.homography = homography
        self.reprojection_error_px = reprojection_error_px
        self.degenerate_ratio = degenerate_ratio

    def fit(self, X=None, y=None):
        h = np.eye(3) if self.homography is None else self.homography
        self.calibration_ = PlanarCalibration(h, self.reprojection_error_px)
        if not self.degenerate_ratio >= 1:
            raise ValueError("degenerate_ratio must be >= 1")
        return self

    def estimate(self, mask: Mask) -> PoseEstimate:
        check_is_fitted(self, "calibration_")
        return estimate_pose(_as_mask(mask), self.calibration_, self.degenerate_ratio)

    def transform(self, X):
        poses = [self.estimate(m) for m in X]
        return np.array([[p.x_mm, p.y_mm, p.rz_deg, p.elongation, float(p.degenerate)] for p in poses],
                        dtype=float).reshape(len(poses), 5)


def _as_mask(m) -> Mask:
    return m if isinstance(m, Mask) else Mask(m)
