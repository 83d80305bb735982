"""Tracking-by-detection over ordered frames of 3D detections.

Constant-velocity Kalman filtering on a 10-dimensional state
(cx, cy, cz, yaw, length, width, height, vx, vy, vz), optimal IoU
assignment, and a hit/miss lifecycle: tracks confirm after
``birth_threshold`` matched detections and die after
``death_threshold`` consecutive misses. Interior misses of a living
track are filled with the predicted box so reported tracks stay
temporally consecutive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dataio import FrameDetections
from .geometry import Box3D, iou_3d, normalize_angle

_STATE_DIM = 10
_MEAS_DIM = 7
_EYE = np.eye(_STATE_DIM)


@dataclass(frozen=True)
class TrackerConfig:
    birth_threshold: int = 2
    death_threshold: int = 2
    min_iou: float = 0.01
    measurement_std: float = 0.1        # center and dims, meters
    measurement_std_yaw: float = 0.1    # radians
    process_std_velocity: float = 0.1   # meters per frame
    process_std_other: float = 0.01
    init_velocity_var: float = 10.0
    use_raw_detections: bool = False

    def __post_init__(self):
        if self.birth_threshold < 1 or self.death_threshold < 1:
            raise ValueError("birth/death thresholds must be >= 1")
        if not 0.0 <= self.min_iou <= 1.0:
            raise ValueError("min_iou must lie in [0, 1]")

    def process_noise_diag(self) -> np.ndarray:
        q = np.full(_STATE_DIM, self.process_std_other**2)
        q[7:] = self.process_std_velocity**2
        return q

    def measurement_noise_diag(self) -> np.ndarray:
        r = np.full(_MEAS_DIM, self.measurement_std**2)
        r[3] = self.measurement_std_yaw**2
        return r


@dataclass(frozen=True)
class KalmanState:
    """Gaussian track state: 10-vector mean and 10x10 covariance."""

    mean: np.ndarray
    covariance: np.ndarray

    @classmethod
    def from_box(cls, box: Box3D, config: TrackerConfig) -> "KalmanState":
        mean = np.zeros(_STATE_DIM)
        mean[:7] = _measurement_vector(box)
        cov = np.zeros((_STATE_DIM, _STATE_DIM))
        np.fill_diagonal(cov[:7, :7], config.measurement_noise_diag())
        cov[7, 7] = cov[8, 8] = cov[9, 9] = config.init_velocity_var
        return cls(mean=mean, covariance=cov)

    def to_box(self, score: float = 1.0) -> Box3D:
        return _box_from_state(self.mean, score)


@dataclass(frozen=True)
class Track:
    """A confirmed track: one box per consecutive frame while alive."""

    track_id: int
    start_frame_index: int
    boxes: tuple[Box3D, ...]
    hit_count: int
    miss_count: int

    def __len__(self) -> int:
        return len(self.boxes)

    def volumes(self) -> list[float]:
        return [b.volume() for b in self.boxes]


def _measurement_vector(box: Box3D) -> np.ndarray:
    return np.array(
        [box.cx, box.cy, box.cz, box.yaw, box.length, box.width, box.height]
    )


def _box_from_state(mean: np.ndarray, score: float) -> Box3D:
    # Kalman arithmetic can nudge a dimension non-positive; clamp rather
    # than violate box invariants.
    return Box3D(
        cx=float(mean[0]), cy=float(mean[1]), cz=float(mean[2]),
        length=max(float(mean[4]), 0.01),
        width=max(float(mean[5]), 0.01),
        height=max(float(mean[6]), 0.01),
        yaw=normalize_angle(float(mean[3])),
        score=score,
    )


def _predict_batch(means: np.ndarray, covs: np.ndarray, q_diag: np.ndarray):
    """In-place constant-velocity prediction for stacked states."""
    means[:, :3] += means[:, 7:]
    means[:, 3] = np.arctan2(np.sin(means[:, 3]), np.cos(means[:, 3]))
    # F P F^T with F = I plus position<-velocity coupling, via slices.
    covs[:, :3, :] += covs[:, 7:, :]
    covs[:, :, :3] += covs[:, :, 7:]
    covs[:, np.arange(_STATE_DIM), np.arange(_STATE_DIM)] += q_diag


def _update_batch(
    means: np.ndarray, covs: np.ndarray, z: np.ndarray, r_diag: np.ndarray
):
    """Joseph-form measurement update for stacked states; returns new
    (means, covs)."""
    k = means.shape[0]
    innovation = z - means[:, :_MEAS_DIM]
    # A detected box's heading sign is unobservable: flip the innovation
    # yaw by pi when the difference leaves (-pi/2, pi/2].
    d = innovation[:, 3]
    d = np.arctan2(np.sin(d), np.cos(d))
    d = np.where(d > np.pi / 2, d - np.pi, d)
    d = np.where(d <= -np.pi / 2, d + np.pi, d)
    innovation[:, 3] = d

    s = covs[:, :_MEAS_DIM, :_MEAS_DIM].copy()
    s[:, np.arange(_MEAS_DIM), np.arange(_MEAS_DIM)] += r_diag
    pht = covs[:, :, :_MEAS_DIM]
    gain = np.linalg.solve(s, pht.transpose(0, 2, 1)).transpose(0, 2, 1)

    new_means = means + (gain @ innovation[:, :, None])[:, :, 0]
    new_means[:, 3] = np.arctan2(np.sin(new_means[:, 3]), np.cos(new_means[:, 3]))

    a = np.broadcast_to(_EYE, (k, _STATE_DIM, _STATE_DIM)).copy()
    a[:, :, :_MEAS_DIM] -= gain
    new_covs = a @ covs @ a.transpose(0, 2, 1) + (gain * r_diag) @ gain.transpose(
        0, 2, 1
    )
    new_covs = 0.5 * (new_covs + new_covs.transpose(0, 2, 1))
    return new_means, new_covs


def predict(state: KalmanState, config: TrackerConfig = TrackerConfig()) -> KalmanState:
    """Advance a state one frame under the constant-velocity model."""
    means = state.mean[None, :].copy()
    covs = state.covariance[None, :, :].copy()
    _predict_batch(means, covs, config.process_noise_diag())
    return KalmanState(mean=means[0], covariance=covs[0])


def update(
    state: KalmanState, box: Box3D, config: TrackerConfig = TrackerConfig()
) -> KalmanState:
    """Correct a predicted state with a detected box."""
    means, covs = _update_batch(
        state.mean[None, :].copy(),
        state.covariance[None, :, :].copy(),
        _measurement_vector(box)[None, :],
        config.measurement_noise_diag(),
    )
    return KalmanState(mean=means[0], covariance=covs[0])


def associate(
    predicted: list[Box3D], detections: list[Box3D], min_iou: float
) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Optimal assignment maximizing total 3D IoU, gated at ``min_iou``.

    Returns (matches, unmatched_track_indices, unmatched_detection_indices);
    every index appears at most once across the outputs.
    """
    if not 0.0 <= min_iou <= 1.0:
        raise ValueError("min_iou must lie in [0, 1]")
    if not predicted or not detections:
        return [], list(range(len(predicted))), list(range(len(detections)))
    iou = np.zeros((len(predicted), len(detections)))
    for i, p in enumerate(predicted):
        for j, d in enumerate(detections):
            iou[i, j] = iou_3d(p, d)
    rows, cols = linear_sum_assignment(-iou)
    matches = []
    matched_rows, matched_cols = set(), set()
    for r, c in zip(rows, cols):
        if iou[r, c] >= min_iou:
            matches.append((int(r), int(c)))
            matched_rows.add(int(r))
            matched_cols.add(int(c))
    unmatched_tracks = [i for i in range(len(predicted)) if i not in matched_rows]
    unmatched_dets = [j for j in range(len(detections)) if j not in matched_cols]
    return matches, unmatched_tracks, unmatched_dets


class _LiveTrack:
    __slots__ = (
        "track_id", "start_frame", "boxes", "hits", "misses",
        "miss_streak", "trailing_fills", "mean", "cov", "last_score",
    )

    def __init__(self, track_id, start_frame, state, box):
        self.track_id = track_id
        self.start_frame = start_frame
        self.boxes = [box]
        self.hits = 1
        self.misses = 0
        self.miss_streak = 0
        self.trailing_fills = 0
        self.mean = state.mean
        self.cov = state.covariance
        self.last_score = box.score


def run_tracker(
    frames: list[FrameDetections], config: TrackerConfig = TrackerConfig()
) -> list[Track]:
    """Track detections through an ordered sequence of frames.

    Output contains only confirmed tracks (at least ``birth_threshold``
    matched detections), each with its consecutive box list: corrected
    boxes on matched frames (raw detections when
    ``config.use_raw_detections``), predicted boxes filling interior
    misses. Trailing misses before a death are trimmed.
    """
    indices = [f.frame_index for f in frames]
    if all(i is not None for i in indices):
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValueError("frames are not in strictly increasing temporal order")
    elif any(i is not None for i in indices):
        raise ValueError("either all or none of the frames may carry frame_index")

    q_diag = config.process_noise_diag()
    r_diag = config.measurement_noise_diag()
    live: list[_LiveTrack] = []
    finished: list[_LiveTrack] = []
    next_id = 0

    for t, frame in enumerate(frames):
        detections = list(frame.boxes)
        predicted_boxes: list[Box3D] = []
        if live:
            means = np.stack([tr.mean for tr in live])
            covs = np.stack([tr.cov for tr in live])
            _predict_batch(means, covs, q_diag)
            for i, tr in enumerate(live):
                tr.mean = means[i]
                tr.cov = covs[i]
                predicted_boxes.append(_box_from_state(tr.mean, tr.last_score))

        matches, unmatched_tracks, unmatched_dets = associate(
            predicted_boxes, detections, config.min_iou
        )

        if matches:
            idx = [i for i, _ in matches]
            z = np.stack([_measurement_vector(detections[j]) for _, j in matches])
            new_means, new_covs = _update_batch(
                np.stack([live[i].mean for i in idx]),
                np.stack([live[i].cov for i in idx]),
                z,
                r_diag,
            )
            for row, (i, j) in enumerate(matches):
                tr = live[i]
                tr.mean = new_means[row]
                tr.cov = new_covs[row]
                tr.hits += 1
                tr.miss_streak = 0
                tr.trailing_fills = 0
                tr.last_score = detections[j].score
                if config.use_raw_detections:
                    tr.boxes.append(detections[j])
                else:
                    tr.boxes.append(_box_from_state(tr.mean, detections[j].score))

        dead_ids = set()
        for i in unmatched_tracks:
            tr = live[i]
            tr.misses += 1
            tr.miss_streak += 1
            if tr.miss_streak >= config.death_threshold:
                if tr.trailing_fills:
                    del tr.boxes[-tr.trailing_fills:]
                finished.append(tr)
                dead_ids.add(tr.track_id)
            else:
                tr.boxes.append(_box_from_state(tr.mean, tr.last_score))
                tr.trailing_fills += 1
        if dead_ids:
            live = [tr for tr in live if tr.track_id not in dead_ids]

        for j in unmatched_dets:
            state = KalmanState.from_box(detections[j], config)
            live.append(_LiveTrack(next_id, t, state, detections[j]))
            next_id += 1

    for tr in live:
        if tr.trailing_fills:
            del tr.boxes[-tr.trailing_fills:]
        finished.append(tr)

    tracks = [
        Track(
            track_id=tr.track_id,
            start_frame_index=tr.start_frame,
            boxes=tuple(tr.boxes),
            hit_count=tr.hits,
            miss_count=tr.misses,
        )
        for tr in sorted(finished, key=lambda tr: tr.track_id)
        if tr.hits >= config.birth_threshold
    ]
    return tracks
