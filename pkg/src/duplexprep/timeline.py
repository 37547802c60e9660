"""Interval and segment algebra for the conversational timeline.

Everything downstream (overlap handling, duplex region selection, the
diarization metrics) operates on these value types. Times are real-valued
seconds; quantization to samples happens only at audio-buffer boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional


@dataclass(frozen=True, order=True)
class TimeInterval:
    """Half-open-ish time span [start_s, end_s] in seconds.

    start_s == end_s is allowed and denotes an empty interval; negative
    durations are rejected.
    """

    start_s: float
    end_s: float

    def __post_init__(self):
        if self.start_s < 0:
            raise ValueError(f"negative start: {self.start_s}")
        if self.end_s < self.start_s:
            raise ValueError(f"end {self.end_s} before start {self.start_s}")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    def contains(self, other: "TimeInterval") -> bool:
        return self.start_s <= other.start_s and other.end_s <= self.end_s

    def shift(self, offset_s: float) -> "TimeInterval":
        return TimeInterval(self.start_s + offset_s, self.end_s + offset_s)


@dataclass(frozen=True)
class SpeakerSegment:
    """A diarized stretch of speech attributed to one speaker."""

    speaker_id: str
    interval: TimeInterval
    chunk_id: str = ""


@dataclass(frozen=True)
class OverlapRelation:
    """Two distinct-speaker segments whose intervals intersect.

    kind is "containment" when one interval fully contains the other
    (backchannel geometry) and "partial" otherwise. The overlap field is
    the non-empty intersection.
    """

    seg_a: SpeakerSegment
    seg_b: SpeakerSegment
    kind: str
    overlap: TimeInterval


@dataclass(frozen=True)
class Turn:
    """One speaker's turn, carrying references to its word tokens."""

    speaker_id: str
    interval: TimeInterval
    word_refs: tuple = field(default_factory=tuple)


def intersect(a: TimeInterval, b: TimeInterval) -> Optional[TimeInterval]:
    """Intersection of two intervals, or None when they do not overlap.

    Touching endpoints (a.end_s == b.start_s) are not an overlap: a
    zero-measure intersection carries no audio.
    """
    start = max(a.start_s, b.start_s)
    end = min(a.end_s, b.end_s)
    if end <= start:
        return None
    return TimeInterval(start, end)


def classify_pair(a: SpeakerSegment, b: SpeakerSegment) -> Optional[OverlapRelation]:
    """Classify one pair of distinct-speaker segments.

    Returns None when the intervals do not intersect; otherwise an
    OverlapRelation with kind "containment" when either interval contains
    the other, else "partial".
    """
    if a.speaker_id == b.speaker_id:
        raise ValueError("classify_pair requires distinct speakers")
    ov = intersect(a.interval, b.interval)
    if ov is None:
        return None
    if a.interval.contains(b.interval) or b.interval.contains(a.interval):
        kind = "containment"
    else:
        kind = "partial"
    return OverlapRelation(seg_a=a, seg_b=b, kind=kind, overlap=ov)


def find_overlaps(segments: Iterable[SpeakerSegment]) -> list[OverlapRelation]:
    """All intersecting distinct-speaker pairs, each reported exactly once.

    Output is sorted by overlap start (ties broken by overlap end and the
    participating intervals, keeping the result deterministic). Input order
    does not matter; the segments are sorted internally.
    """
    segs = sorted(segments, key=lambda s: (s.interval.start_s, s.interval.end_s, s.speaker_id))
    relations: list[OverlapRelation] = []
    for i, a in enumerate(segs):
        for b in segs[i + 1:]:
            if b.interval.start_s >= a.interval.end_s:
                break  # sorted by start: nothing later can reach back into a
            if b.speaker_id == a.speaker_id:
                continue
            rel = classify_pair(a, b)
            if rel is not None:
                relations.append(rel)
    relations.sort(
        key=lambda r: (
            r.overlap.start_s,
            r.overlap.end_s,
            r.seg_a.interval.start_s,
            r.seg_b.interval.start_s,
        )
    )
    return relations


def merge_intervals(intervals: Iterable[TimeInterval]) -> list[TimeInterval]:
    """Union of intervals as a sorted list of disjoint intervals."""
    items = sorted((iv for iv in intervals if iv.duration_s > 0), key=lambda iv: iv.start_s)
    merged: list[TimeInterval] = []
    for iv in items:
        if merged and iv.start_s <= merged[-1].end_s:
            if iv.end_s > merged[-1].end_s:
                merged[-1] = TimeInterval(merged[-1].start_s, iv.end_s)
        else:
            merged.append(iv)
    return merged


def union_duration(intervals: Iterable[TimeInterval]) -> float:
    """Measure of the union of the intervals, in seconds."""
    return sum(iv.duration_s for iv in merge_intervals(intervals))


def subtract_intervals(base: TimeInterval, holes: Iterable[TimeInterval]) -> list[TimeInterval]:
    """Parts of `base` not covered by any of `holes`, sorted, disjoint."""
    pieces: list[TimeInterval] = []
    cursor = base.start_s
    for hole in merge_intervals(holes):
        if hole.end_s <= base.start_s or hole.start_s >= base.end_s:
            continue
        if hole.start_s > cursor:
            pieces.append(TimeInterval(cursor, min(hole.start_s, base.end_s)))
        cursor = max(cursor, hole.end_s)
    if cursor < base.end_s:
        pieces.append(TimeInterval(cursor, base.end_s))
    return pieces
