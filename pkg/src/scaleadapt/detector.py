"""Detector interface, a parametric surrogate detector, and its adaptation.

The surrogate stands in for a frozen neural detector whose accuracy
degrades with the mismatch between an object's size and the detector's
learned size prior. It consumes the scaled ground-truth boxes of a frame
(supplied by the simulator) rather than raw points, which makes the
scale-search pipeline verifiable at desk scale: detection probability,
box noise, and confidence all respond analytically to the scale applied
to the scene.

A subprocess adapter is provided to drive an external detector through
cloud/label files instead.
"""

from __future__ import annotations

import math
import subprocess
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Protocol, runtime_checkable

import numpy as np

from .dataio import FrameDetections, read_labels, write_cloud
from .geometry import Box3D, ScaleTriple

_MIN_DIM = 0.1  # emitted boxes never collapse below this extent, meters


class DetectorError(RuntimeError):
    """A detector failed to produce detections for a frame."""


class AdaptationError(RuntimeError):
    """Adaptation was requested with nothing to adapt from."""


@dataclass(frozen=True)
class FrameContext:
    """Everything a detector may need about one (scaled) frame.

    ``truth_boxes`` are the frame's ground-truth boxes already scaled to
    the detector's input frame; ``load_cloud`` lazily returns the scaled
    point cloud for detectors that consume points.
    """

    sequence_id: str
    frame_id: str
    frame_index: int
    scale: ScaleTriple
    seed: int
    truth_boxes: tuple[Box3D, ...] | None = None
    load_cloud: Callable[[], np.ndarray] | None = None


@runtime_checkable
class DetectorHandle(Protocol):
    """Stateless per-frame detection: output depends only on the frame
    context and the detector's own parameters."""

    name: str
    needs_truth: bool
    needs_points: bool

    def detect(self, ctx: FrameContext) -> FrameDetections: ...


@dataclass(frozen=True)
class SurrogatePrior:
    """Parameters of the surrogate detection model.

    mean_dims is the detector's expected object size; detection quality
    decays with the relative mismatch m between a box's dimensions and
    mean_dims: detection probability clamp(1 - alpha*m, p_min, 1),
    noise std sigma0*(1 + beta*m), confidence exp(-gamma*m).
    """

    mean_dims: tuple[float, float, float] = (4.2, 1.8, 1.5)
    sigma0: float = 0.05
    alpha: float = 1.5
    beta: float = 5.0
    gamma: float = 3.0
    fp_rate: float = 0.2
    p_min: float = 0.05
    rng_seed: int = 0
    # False positives: centers uniform in this region, dims centered on
    # fp_dim_scale * mean_dims with a uniform per-axis spread. Clutter
    # tends to be looser than the learned object prior.
    fp_region: tuple[tuple[float, float], ...] = ((0.0, 50.0), (-25.0, 25.0), (0.0, 2.0))
    fp_dim_scale: float = 1.1
    fp_dim_spread: float = 0.3

    def __post_init__(self):
        if self.sigma0 < 0:
            raise ValueError("sigma0 must be >= 0")
        if not 0.0 <= self.p_min <= 1.0:
            raise ValueError("p_min must lie in [0, 1]")
        if self.fp_rate < 0:
            raise ValueError("fp_rate must be >= 0")
        if any(d <= 0 for d in self.mean_dims):
            raise ValueError("mean_dims must be positive")


def dimension_mismatch(prior: SurrogatePrior, dims: tuple[float, float, float]) -> float:
    """Relative L2 mismatch between box dimensions and the prior mean."""
    mean = prior.mean_dims
    num = math.sqrt(sum((d - m) ** 2 for d, m in zip(dims, mean)))
    den = math.sqrt(sum(m * m for m in mean))
    return num / den


def detection_probability(prior: SurrogatePrior, mismatch: float) -> float:
    return min(max(1.0 - prior.alpha * mismatch, prior.p_min), 1.0)


def noise_std(prior: SurrogatePrior, mismatch: float) -> float:
    return prior.sigma0 * (1.0 + prior.beta * mismatch)


def score_mean(prior: SurrogatePrior, mismatch: float) -> float:
    return math.exp(-prior.gamma * mismatch)


def surrogate_detect(
    prior: SurrogatePrior, scene_truth: list[Box3D], seed: int, frame_id: str = ""
) -> FrameDetections:
    """Simulate detection over the (scaled) ground truth of one frame.

    Deterministic given (prior, scene_truth, seed): all randomness comes
    from a generator keyed by (prior.rng_seed, seed).
    """
    rng = np.random.default_rng([prior.rng_seed, seed])
    out = []
    for box in scene_truth:
        m = dimension_mismatch(prior, box.dims)
        if rng.uniform() >= detection_probability(prior, m):
            continue
        sigma = noise_std(prior, m)
        noise = rng.normal(0.0, sigma, size=6) if sigma > 0 else np.zeros(6)
        score = score_mean(prior, m) + rng.uniform(-0.02, 0.02)
        out.append(
            Box3D(
                cx=box.cx + noise[0],
                cy=box.cy + noise[1],
                cz=box.cz + noise[2],
                length=max(box.length + noise[3], _MIN_DIM),
                width=max(box.width + noise[4], _MIN_DIM),
                height=max(box.height + noise[5], _MIN_DIM),
                yaw=box.yaw,
                score=min(max(score, 0.0), 1.0),
            )
        )
    for _ in range(rng.poisson(prior.fp_rate)):
        center = [rng.uniform(lo, hi) for lo, hi in prior.fp_region]
        factors = prior.fp_dim_scale * rng.uniform(
            1.0 - prior.fp_dim_spread, 1.0 + prior.fp_dim_spread, size=3
        )
        out.append(
            Box3D(
                cx=center[0], cy=center[1], cz=center[2],
                length=max(prior.mean_dims[0] * factors[0], _MIN_DIM),
                width=max(prior.mean_dims[1] * factors[1], _MIN_DIM),
                height=max(prior.mean_dims[2] * factors[2], _MIN_DIM),
                yaw=rng.uniform(-math.pi, math.pi),
                score=rng.uniform(0.0, 0.3),
            )
        )
    return FrameDetections(frame_id=frame_id, boxes=tuple(out))


def adapt_prior(prior: SurrogatePrior, pseudo_labels: list[Box3D]) -> SurrogatePrior:
    """Re-fit the size prior to the componentwise mean of pseudo-label
    dimensions; every other parameter is left untouched."""
    if not pseudo_labels:
        raise AdaptationError("cannot adapt from an empty pseudo-label set")
    dims = np.array([b.dims for b in pseudo_labels], dtype=np.float64)
    mean = dims.mean(axis=0)
    return replace(prior, mean_dims=(float(mean[0]), float(mean[1]), float(mean[2])))


@dataclass(frozen=True)
class SurrogateDetector:
    """DetectorHandle backed by the parametric surrogate model."""

    prior: SurrogatePrior = field(default_factory=SurrogatePrior)
    name: str = "surrogate"
    needs_truth: bool = True
    needs_points: bool = False

    def detect(self, ctx: FrameContext) -> FrameDetections:
        if ctx.truth_boxes is None:
            raise DetectorError(
                f"surrogate detector needs ground-truth context for frame "
                f"{ctx.sequence_id}/{ctx.frame_id} (no label path in manifest?)"
            )
        return surrogate_detect(
            self.prior, list(ctx.truth_boxes), ctx.seed, frame_id=ctx.frame_id
        )

    def adapt(self, pseudo_labels: list[Box3D]) -> "SurrogateDetector":
        return SurrogateDetector(prior=adapt_prior(self.prior, pseudo_labels))


@dataclass(frozen=True)
class SubprocessDetector:
    """Adapter that drives an external detector executable.

    For each frame the scaled cloud is written to ``workdir``, the
    command is invoked with the cloud path appended, and detections are
    read back from ``output_template`` (``{cloud}`` expands to the cloud
    file path, ``{stem}`` to its basename without suffix). A nonzero
    exit status raises DetectorError.
    """

    command: tuple[str, ...]
    workdir: Path
    output_template: str = "{cloud}.labels.txt"
    timeout_s: float = 300.0
    name: str = "subprocess"
    needs_truth: bool = False
    needs_points: bool = True

    def detect(self, ctx: FrameContext) -> FrameDetections:
        if ctx.load_cloud is None:
            raise DetectorError(
                f"subprocess detector needs point clouds for frame "
                f"{ctx.sequence_id}/{ctx.frame_id}"
            )
        self.workdir.mkdir(parents=True, exist_ok=True)
        cloud_path = self.workdir / (
            f"{ctx.sequence_id}_{ctx.frame_id}_{ctx.seed:016x}.bin"
        )
        write_cloud(cloud_path, ctx.load_cloud())
        out_path = Path(
            self.output_template.format(cloud=cloud_path, stem=cloud_path.stem)
        )
        proc = subprocess.run(
            [*self.command, str(cloud_path)],
            capture_output=True,
            text=True,
            timeout=self.timeout_s,
        )
        if proc.returncode != 0:
            raise DetectorError(
                f"detector command failed on {ctx.sequence_id}/{ctx.frame_id} "
                f"(exit {proc.returncode}): {proc.stderr.strip()[:500]}"
            )
        if not out_path.is_file():
            raise DetectorError(
                f"detector produced no output file {out_path} for "
                f"{ctx.sequence_id}/{ctx.frame_id}"
            )
        boxes = read_labels(out_path)
        cloud_path.unlink(missing_ok=True)
        out_path.unlink(missing_ok=True)
        return FrameDetections(frame_id=ctx.frame_id, boxes=tuple(boxes))
