"""Independent reference implementations used to pin expected values.

Everything here is deliberately brute-force and kept separate from the
library code paths it checks.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from scaleadapt.geometry import Box3D


def _points_in_box(pts: np.ndarray, box: Box3D) -> np.ndarray:
    """Boolean mask of points inside a yaw-rotated box (inclusive)."""
    dx = pts[:, 0] - box.cx
    dy = pts[:, 1] - box.cy
    dz = pts[:, 2] - box.cz
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    local_x = c * dx + s * dy
    local_y = -s * dx + c * dy
    return (
        (np.abs(local_x) <= box.length / 2.0)
        & (np.abs(local_y) <= box.width / 2.0)
        & (np.abs(dz) <= box.height / 2.0)
    )


def monte_carlo_iou(a: Box3D, b: Box3D, n_samples: int, seed: int) -> float:
    """Rejection-sampling IoU estimate: sample uniformly inside box a,
    count the fraction landing inside box b."""
    rng = np.random.default_rng(seed)
    c, s = math.cos(a.yaw), math.sin(a.yaw)
    local = rng.uniform(-0.5, 0.5, size=(n_samples, 3)) * np.array(
        [a.length, a.width, a.height]
    )
    pts = np.empty_like(local)
    pts[:, 0] = a.cx + c * local[:, 0] - s * local[:, 1]
    pts[:, 1] = a.cy + s * local[:, 0] + c * local[:, 1]
    pts[:, 2] = a.cz + local[:, 2]
    inter = a.volume() * np.count_nonzero(_points_in_box(pts, b)) / n_samples
    union = a.volume() + b.volume() - inter
    return inter / union


def best_assignment(iou_matrix: np.ndarray) -> tuple[list[tuple[int, int]], float]:
    """Exhaustive maximum-total-IoU assignment over all permutations."""
    n, m = iou_matrix.shape
    best_pairs: list[tuple[int, int]] = []
    best_total = -1.0
    rows = range(n)
    k = min(n, m)
    for row_subset in itertools.permutations(rows, k):
        for col_subset in itertools.permutations(range(m), k):
            total = sum(iou_matrix[r, c] for r, c in zip(row_subset, col_subset))
            if total > best_total + 1e-15:
                best_total = total
                best_pairs = sorted(zip(row_subset, col_subset))
    return best_pairs, best_total


def track_volume_std(volumes) -> float:
    """Sample standard deviation (ddof=1) computed from first principles."""
    n = len(volumes)
    mean = sum(volumes) / n
    return math.sqrt(sum((v - mean) ** 2 for v in volumes) / (n - 1))


def ap_forty_point(pr_points) -> float:
    """40-point interpolated AP from (precision, recall) curve samples."""
    total = 0.0
    for i in range(1, 41):
        r = i / 40.0
        best = max((p for p, rec in pr_points if rec >= r), default=0.0)
        total += best
    return total / 40.0
