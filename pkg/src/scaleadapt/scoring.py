"""Temporal-coherency scoring of a scale hypothesis.

A well-matched scale lets the frozen detector produce boxes whose
volume stays stable along a track; the score of a sequence is the mean
per-track sample standard deviation of box volumes (lower is better).
Sequences yielding no sufficiently long track receive a fixed penalty
so that scales which destroy trackability cannot win by silence.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .geometry import ScaleTriple
from .tracking import Track


class Metric(enum.Enum):
    MVV_STAR = "mvv_star"
    MVV = "mvv"
    TEX = "tex"


@dataclass(frozen=True)
class ScoringConfig:
    min_track_len: int = 5
    penalty: float = 5.0          # cubic meters, dominates any plausible volume std
    metric: Metric = Metric.MVV_STAR

    def __post_init__(self):
        if self.min_track_len < 2:
            raise ValueError("min_track_len must be >= 2 (std needs two samples)")
        if self.penalty <= 0:
            raise ValueError("penalty must be > 0")


@dataclass(frozen=True)
class SequenceScore:
    sequence_id: str
    score: float
    eligible_tracks: int


@dataclass(frozen=True)
class ScaleScore:
    """Aggregated score of one scale: arithmetic mean over sequences."""

    scale: ScaleTriple
    score: float
    per_sequence: tuple[SequenceScore, ...]

    @property
    def eligible_tracks(self) -> int:
        return sum(s.eligible_tracks for s in self.per_sequence)


def _volume_std(track: Track) -> float:
    vols = track.volumes()
    n = len(vols)
    mean = sum(vols) / n
    return math.sqrt(sum((v - mean) ** 2 for v in vols) / (n - 1))


def mvv_sequence(tracks: list[Track], config: ScoringConfig = ScoringConfig()) -> float:
    """Mean volume variation of one sequence's tracks.

    Tracks shorter than ``min_track_len`` frames are excluded as likely
    false positives; with no eligible track the penalty applies.
    """
    eligible = [t for t in tracks if len(t) >= config.min_track_len]
    if not eligible:
        return config.penalty
    return sum(_volume_std(t) for t in eligible) / len(eligible)


def mvv_star_sequence(
    tracks: list[Track], config: ScoringConfig = ScoringConfig()
) -> float:
    """Robust mean volume variation: the penalty value when a sequence
    has no track of at least ``min_track_len`` frames, plain MVV
    otherwise."""
    return mvv_sequence(tracks, config)


def eligible_track_count(tracks: list[Track], config: ScoringConfig) -> int:
    if config.metric is Metric.MVV:
        return sum(1 for t in tracks if len(t) >= 2)
    return sum(1 for t in tracks if len(t) >= config.min_track_len)


def tex_sequence(tracks: list[Track], sequence_len: int) -> float:
    """Time-extension score: one minus the mean track length normalized
    by the sequence length, so that lower is better like MVV. No tracks
    scores 1."""
    if sequence_len < 1:
        raise ValueError("sequence_len must be >= 1")
    if not tracks:
        return 1.0
    mean_len = sum(len(t) for t in tracks) / len(tracks)
    return 1.0 - mean_len / sequence_len


def sequence_score(
    tracks: list[Track], config: ScoringConfig, sequence_len: int | None = None
) -> float:
    """Score one sequence under the configured metric."""
    if config.metric is Metric.MVV_STAR:
        return mvv_star_sequence(tracks, config)
    if config.metric is Metric.MVV:
        # Ablation variant: no minimum-length robustness filter, any
        # track of two or more boxes counts.
        return mvv_sequence(
            tracks, ScoringConfig(min_track_len=2, penalty=config.penalty, metric=config.metric)
        )
    if config.metric is Metric.TEX:
        if sequence_len is None:
            raise ValueError("TEX scoring needs the sequence length")
        return tex_sequence(tracks, sequence_len)
    raise ValueError(f"unknown metric {config.metric!r}")


def score_scale(
    per_sequence_tracks: dict[str, list[Track]],
    config: ScoringConfig,
    scale: ScaleTriple,
    sequence_lengths: dict[str, int] | None = None,
) -> ScaleScore:
    """Aggregate the per-sequence metric into the scale's score
    (arithmetic mean over sequences)."""
    if not per_sequence_tracks:
        raise ValueError("at least one sequence is required")
    per_sequence = []
    for sid, tracks in per_sequence_tracks.items():
        seq_len = sequence_lengths.get(sid) if sequence_lengths else None
        per_sequence.append(
            SequenceScore(
                sequence_id=sid,
                score=sequence_score(tracks, config, seq_len),
                eligible_tracks=eligible_track_count(tracks, config),
            )
        )
    mean = sum(s.score for s in per_sequence) / len(per_sequence)
    return ScaleScore(scale=scale, score=mean, per_sequence=tuple(per_sequence))
