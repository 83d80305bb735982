"""Readers and writers for point clouds, detection labels, and manifests.

File formats:
  * clouds: headerless little-endian binary, records of 4 x float32
    (x, y, z, intensity);
  * labels: whitespace-separated text, one object per line with 15 or 16
    fields following the common camera-benchmark convention
    ``type trunc occl alpha x1 y1 x2 y2 h w l x y z ry [score]``;
  * manifest: JSON file listing sequences and their ordered frames,
    validated against the schema shipped with the package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .geometry import Box3D

DEFAULT_CLASSES = frozenset({"Car"})

_RECORD_BYTES = 16  # 4 x float32


class FormatError(ValueError):
    """A file does not conform to its declared binary or text format."""


class ManifestError(ValueError):
    """A manifest is structurally invalid or references missing data."""


@dataclass(frozen=True)
class FrameEntry:
    frame_id: str
    cloud_path: Path
    label_path: Path | None = None


@dataclass(frozen=True)
class SequenceManifest:
    sequence_id: str
    frames: tuple[FrameEntry, ...]
    frame_rate_hz: float

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class FrameDetections:
    """Per-frame detection set; frame_index is the position within the
    sequence when known."""

    frame_id: str
    boxes: tuple[Box3D, ...] = field(default_factory=tuple)
    frame_index: int | None = None


def read_cloud(path: str | Path) -> np.ndarray:
    """Read a binary point cloud into a float64 array of shape (N, 4)."""
    data = Path(path).read_bytes()
    if len(data) % _RECORD_BYTES != 0:
        raise FormatError(
            f"{path}: truncated cloud, {len(data)} bytes is not a multiple of "
            f"{_RECORD_BYTES} (trailing {len(data) % _RECORD_BYTES} bytes at "
            f"offset {len(data) - len(data) % _RECORD_BYTES})"
        )
    pts = np.frombuffer(data, dtype="<f4").reshape(-1, 4).astype(np.float64)
    if pts.size and not np.all(np.isfinite(pts)):
        bad = int(np.argwhere(~np.isfinite(pts))[0][0])
        raise FormatError(f"{path}: non-finite value in point record {bad}")
    return pts


def write_cloud(path: str | Path, cloud: np.ndarray) -> None:
    """Write an (N, 4) array as little-endian float32 records."""
    cloud = np.asarray(cloud, dtype=np.float64)
    if cloud.ndim != 2 or cloud.shape[1] != 4:
        raise ValueError(f"cloud must have shape (N, 4), got {cloud.shape}")
    Path(path).write_bytes(cloud.astype("<f4").tobytes())


def read_labels(path: str | Path, classes: frozenset[str] = DEFAULT_CLASSES) -> list[Box3D]:
    """Parse a label file, keeping lines whose type is in ``classes``.

    Field mapping: h -> height, w -> width, l -> length, (x, y, z) ->
    center, ry -> yaw. A missing trailing score defaults to 1.0.
    """
    boxes = []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) not in (15, 16):
                raise FormatError(
                    f"{path}:{lineno}: expected 15 or 16 fields, got {len(parts)}"
                )
            if parts[0] not in classes:
                continue
            try:
                h, w, l = float(parts[8]), float(parts[9]), float(parts[10])
                x, y, z = float(parts[11]), float(parts[12]), float(parts[13])
                ry = float(parts[14])
                score = float(parts[15]) if len(parts) == 16 else 1.0
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            try:
                boxes.append(
                    Box3D(cx=x, cy=y, cz=z, length=l, width=w, height=h,
                          yaw=ry, score=score)
                )
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: invalid box ({exc})") from exc
    return boxes


def write_labels(path: str | Path, boxes: list[Box3D], object_type: str = "Car") -> None:
    """Write boxes in the 16-field label format, unused 2D fields zeroed.

    Values are serialized with 6 decimal places so a read/write round
    trip preserves fields to 1e-6.
    """
    lines = []
    for b in boxes:
        lines.append(
            f"{object_type} 0 0 0 0 0 0 0 "
            f"{b.height:.6f} {b.width:.6f} {b.length:.6f} "
            f"{b.cx:.6f} {b.cy:.6f} {b.cz:.6f} {b.yaw:.6f} {b.score:.6f}"
        )
    Path(path).write_text("".join(line + "\n" for line in lines))


def _manifest_schema() -> dict:
    text = resources.files("scaleadapt").joinpath("manifest.schema.json").read_text()
    return json.loads(text)


def load_manifest(path: str | Path) -> list[SequenceManifest]:
    """Load and validate a manifest file.

    Frame order follows the file; every referenced cloud must exist and
    frame ids must be unique within a sequence.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON ({exc})") from exc
    try:
        jsonschema.validate(raw, _manifest_schema())
    except jsonschema.ValidationError as exc:
        raise ManifestError(f"{path}: schema violation: {exc.message}") from exc

    root = path.parent
    manifests = []
    seen_sequences = set()
    for seq in raw["sequences"]:
        sid = seq["sequence_id"]
        if sid in seen_sequences:
            raise ManifestError(f"{path}: duplicate sequence_id {sid!r}")
        seen_sequences.add(sid)
        frames = []
        seen_frames = set()
        for fr in seq["frames"]:
            fid = fr["frame_id"]
            if fid in seen_frames:
                raise ManifestError(f"{path}: duplicate frame_id {fid!r} in {sid!r}")
            seen_frames.add(fid)
            cloud = root / fr["cloud"]
            if not cloud.is_file():
                raise ManifestError(f"{path}: missing cloud file {cloud}")
            label = None
            if fr.get("labels") is not None:
                label = root / fr["labels"]
            frames.append(FrameEntry(frame_id=fid, cloud_path=cloud, label_path=label))
        manifests.append(
            SequenceManifest(
                sequence_id=sid,
                frames=tuple(frames),
                frame_rate_hz=float(seq["frame_rate_hz"]),
            )
        )
    return manifests


def save_manifest(path: str | Path, manifests: list[SequenceManifest]) -> None:
    """Write a manifest with paths stored relative to the manifest file."""
    path = Path(path)
    root = path.parent
    payload = {
        "sequences": [
            {
                "sequence_id": m.sequence_id,
                "frame_rate_hz": m.frame_rate_hz,
                "frames": [
                    {
                        "frame_id": f.frame_id,
                        "cloud": str(f.cloud_path.relative_to(root)),
                        **(
                            {"labels": str(f.label_path.relative_to(root))}
                            if f.label_path is not None
                            else {}
                        ),
                    }
                    for f in m.frames
                ],
            }
            for m in manifests
        ]
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
