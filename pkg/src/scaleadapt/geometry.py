"""Oriented 3D box and point-cloud geometry.

Boxes are gravity-aligned cuboids: center (cx, cy, cz), extents
(length, width, height) with length along the heading axis, and a yaw
rotation about the vertical axis. Point clouds are float64 arrays of
shape (N, 4) with columns x, y, z, intensity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

# Degeneracy epsilon for polygon clipping, far below sensor resolution.
_EPS = 1e-9


def normalize_angle(angle: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    a = math.fmod(angle + math.pi, 2.0 * math.pi)
    if a < 0.0:
        a += 2.0 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class ScaleTriple:
    """Per-axis multiplicative scale factors applied to world coordinates."""

    wx: float
    wy: float
    wz: float

    def __post_init__(self):
        for name in ("wx", "wy", "wz"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"scale component {name}={v!r} must be finite and > 0")

    def inverse(self) -> "ScaleTriple":
        return ScaleTriple(1.0 / self.wx, 1.0 / self.wy, 1.0 / self.wz)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.wx, self.wy, self.wz)


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D bounding box with a detection confidence.

    Dimensions must be strictly positive; yaw is normalized into
    [-pi, pi) on construction; score lies in [0, 1].
    """

    cx: float
    cy: float
    cz: float
    length: float
    width: float
    height: float
    yaw: float = 0.0
    score: float = 1.0

    def __post_init__(self):
        for name in ("cx", "cy", "cz", "length", "width", "height", "yaw", "score"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"box field {name} is not finite")
        if self.length <= 0.0 or self.width <= 0.0 or self.height <= 0.0:
            raise ValueError(
                f"box dimensions must be positive, got "
                f"({self.length}, {self.width}, {self.height})"
            )
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"box score {self.score} outside [0, 1]")
        y = normalize_angle(self.yaw)
        if y != self.yaw:
            object.__setattr__(self, "yaw", y)

    def volume(self) -> float:
        return self.length * self.width * self.height

    @property
    def center(self) -> tuple[float, float, float]:
        return (self.cx, self.cy, self.cz)

    @property
    def dims(self) -> tuple[float, float, float]:
        return (self.length, self.width, self.height)

    def with_score(self, score: float) -> "Box3D":
        return replace(self, score=score)


def scale_cloud(cloud: np.ndarray, w: ScaleTriple) -> np.ndarray:
    """Scale point coordinates componentwise about the sensor origin.

    Intensity (column 3, when present) and point order are preserved.
    """
    cloud = np.asarray(cloud, dtype=np.float64)
    if cloud.ndim != 2 or cloud.shape[1] not in (3, 4):
        raise ValueError(f"cloud must have shape (N, 3) or (N, 4), got {cloud.shape}")
    out = cloud.copy()
    out[:, 0] *= w.wx
    out[:, 1] *= w.wy
    out[:, 2] *= w.wz
    return out


def scale_box(box: Box3D, w: ScaleTriple) -> Box3D:
    """Forward transform of a box under cloud scaling: multiply center and dims.

    Dimensions scale componentwise irrespective of yaw (exact only for
    yaw in {0, pi} or isotropic ground-plane scales); yaw and score are
    unchanged.
    """
    return Box3D(
        cx=box.cx * w.wx,
        cy=box.cy * w.wy,
        cz=box.cz * w.wz,
        length=box.length * w.wx,
        width=box.width * w.wy,
        height=box.height * w.wz,
        yaw=box.yaw,
        score=box.score,
    )


def rescale_box(box: Box3D, w: ScaleTriple) -> Box3D:
    """Map a detection from the scaled frame back to the original frame.

    Center and dimensions are divided componentwise by (wx, wy, wz);
    yaw and score are unchanged (same approximation as scale_box).
    """
    return scale_box(box, w.inverse())


def _bev_corners(box: Box3D) -> list[tuple[float, float]]:
    """Ground-plane footprint corners in counterclockwise order."""
    c = math.cos(box.yaw)
    s = math.sin(box.yaw)
    dx = 0.5 * box.length
    dy = 0.5 * box.width
    return [
        (box.cx + c * dx - s * dy, box.cy + s * dx + c * dy),
        (box.cx - c * dx - s * dy, box.cy - s * dx + c * dy),
        (box.cx - c * dx + s * dy, box.cy - s * dx - c * dy),
        (box.cx + c * dx + s * dy, box.cy + s * dx - c * dy),
    ]


def _clip_polygon(subject, clip):
    """Sutherland-Hodgman clip of a convex polygon by a convex CCW polygon."""
    output = subject
    n = len(clip)
    for i in range(n):
        if not output:
            return []
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        input_pts = output
        output = []
        px, py = input_pts[-1]
        p_in = ex * (py - ay) - ey * (px - ax) >= -_EPS
        for qx, qy in input_pts:
            q_in = ex * (qy - ay) - ey * (qx - ax) >= -_EPS
            if q_in:
                if not p_in:
                    output.append(_edge_intersection(px, py, qx, qy, ax, ay, bx, by))
                output.append((qx, qy))
            elif p_in:
                output.append(_edge_intersection(px, py, qx, qy, ax, ay, bx, by))
            px, py, p_in = qx, qy, q_in
    return output


def _edge_intersection(px, py, qx, qy, ax, ay, bx, by):
    """Intersection of segment p-q with the infinite line a-b."""
    dx, dy = qx - px, qy - py
    ex, ey = bx - ax, by - ay
    denom = ex * dy - ey * dx
    if abs(denom) < _EPS:
        return (qx, qy)
    t = (ey * (px - ax) - ex * (py - ay)) / denom
    return (px + t * dx, py + t * dy)


def _polygon_area(points) -> float:
    if len(points) < 3:
        return 0.0
    area = 0.0
    n = len(points)
    for i in range(n):
        x1, y1 = points[i]
        x2, y2 = points[(i + 1) % n]
        area += x1 * y2 - x2 * y1
    return 0.5 * abs(area)


def _box_key(box: Box3D):
    return (box.cx, box.cy, box.cz, box.yaw, box.length, box.width, box.height)


def iou_3d(a: Box3D, b: Box3D) -> float:
    """3D intersection-over-union of two yaw-rotated boxes.

    The intersection volume is the convex ground-plane polygon overlap of
    the two footprints times the vertical extent overlap. Symmetric in
    its arguments and exactly 1 for geometrically identical boxes.
    """
    ka, kb = _box_key(a), _box_key(b)
    if ka == kb:
        return 1.0
    if kb < ka:
        a, b = b, a

    # Vertical overlap first: cheap reject.
    dz = min(a.cz + 0.5 * a.height, b.cz + 0.5 * b.height) - max(
        a.cz - 0.5 * a.height, b.cz - 0.5 * b.height
    )
    if dz <= 0.0:
        return 0.0

    # Circumradius reject in the ground plane.
    dxc = a.cx - b.cx
    dyc = a.cy - b.cy
    ra = 0.5 * math.hypot(a.length, a.width)
    rb = 0.5 * math.hypot(b.length, b.width)
    if dxc * dxc + dyc * dyc >= (ra + rb) * (ra + rb):
        return 0.0

    inter_bev = _polygon_area(_clip_polygon(_bev_corners(a), _bev_corners(b)))
    if inter_bev <= _EPS:
        return 0.0
    inter = inter_bev * dz
    union = a.volume() + b.volume() - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def nms_3d(boxes: list[Box3D], iou_threshold: float) -> list[Box3D]:
    """Greedy score-descending suppression of overlapping boxes.

    Ties at equal score break deterministically by ascending center
    coordinates. Output is sorted by descending score.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold {iou_threshold} outside [0, 1]")
    order = sorted(boxes, key=lambda b: (-b.score, b.cx, b.cy, b.cz))
    kept: list[Box3D] = []
    for cand in order:
        if all(iou_3d(cand, k) < iou_threshold for k in kept):
            kept.append(cand)
    return kept


def filter_horizontal_fov(cloud: np.ndarray, fov_deg: float = 90.0) -> np.ndarray:
    """Keep points within a horizontal field of view centered on +x.

    Stand-in for a camera-frustum visibility filter when no calibration
    is available.
    """
    cloud = np.asarray(cloud, dtype=np.float64)
    if not 0.0 < fov_deg <= 360.0:
        raise ValueError(f"fov_deg {fov_deg} outside (0, 360]")
    half = math.radians(fov_deg) / 2.0
    angles = np.arctan2(cloud[:, 1], cloud[:, 0])
    return cloud[np.abs(angles) <= half]
