"""Background-music gating and windowed vocal extraction planning.

Segments whose music probability exceeds the threshold (0.3) get vocal
extraction; everything else is left untouched, since music removal costs
speech quality. Extraction runs over wide context windows (two minutes)
because the separator performs far better with surrounding audio, and
only the flagged segments' sample ranges are spliced back.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from duplexprep.audio import AudioBuffer
from duplexprep.timeline import TimeInterval

MUSIC_PROB_THRESHOLD = 0.3
WINDOW_S = 120.0
DEFAULT_LEAD_S = 30.0


@dataclass(frozen=True)
class MusicTag:
    segment_id: str
    music_prob: float

    def __post_init__(self):
        if not 0.0 <= self.music_prob <= 1.0:
            raise ValueError(f"music_prob out of range: {self.music_prob}")


@dataclass
class ExtractionWindow:
    interval: TimeInterval
    member_segment_ids: list
    split_extraction: bool = False


def flag_music(tags: Sequence[MusicTag], threshold: float = MUSIC_PROB_THRESHOLD) -> set:
    """Segment ids whose music probability strictly exceeds the threshold."""
    return {t.segment_id for t in tags if t.music_prob > threshold}


def plan_windows(
    flagged_segments: Sequence[tuple],
    chunk_interval: TimeInterval,
    window_s: float = WINDOW_S,
    lead_s: float = DEFAULT_LEAD_S,
) -> list[ExtractionWindow]:
    """Greedy left-to-right packing of flagged segments into context windows.

    flagged_segments: (segment_id, TimeInterval) pairs inside the chunk.
    Windows open at max(chunk start, segment start - lead_s), slide left
    to stay window_s wide inside the chunk where possible, and clip to
    chunk bounds. A segment longer than a window is covered by abutting
    windows flagged split_extraction.
    """
    items = sorted(flagged_segments, key=lambda s: (s[1].start_s, s[1].end_s))
    windows: list[ExtractionWindow] = []
    covered: set = set()

    for seg_id, iv in items:
        if seg_id in covered:
            continue
        if iv.duration_s > window_s:
            # abutting windows across the oversized segment
            w0 = max(chunk_interval.start_s, iv.start_s - lead_s)
            while w0 < iv.end_s:
                w1 = min(w0 + window_s, chunk_interval.end_s)
                windows.append(
                    ExtractionWindow(TimeInterval(w0, w1), [seg_id], split_extraction=True)
                )
                if w1 >= chunk_interval.end_s:
                    break
                w0 = w1
            covered.add(seg_id)
            continue
        w0 = max(chunk_interval.start_s, min(iv.start_s - lead_s, chunk_interval.end_s - window_s))
        w1 = min(w0 + window_s, chunk_interval.end_s)
        if w1 < iv.end_s:  # right edge clipped by the chunk: slide right
            w0 = max(chunk_interval.start_s, iv.end_s - window_s)
            w1 = min(w0 + window_s, chunk_interval.end_s)
        window = ExtractionWindow(TimeInterval(w0, w1), [])
        for other_id, other_iv in items:
            if other_id not in covered and window.interval.contains(other_iv):
                window.member_segment_ids.append(other_id)
                covered.add(other_id)
        windows.append(window)
    return windows


def splice_extracted(
    original: AudioBuffer,
    window: ExtractionWindow,
    vocal: AudioBuffer,
    member_intervals: dict,
    origin_s: float = 0.0,
) -> AudioBuffer:
    """Replace only the member segments' sample ranges with the vocal track.

    member_intervals maps segment_id -> TimeInterval. Every sample outside
    those ranges stays byte-identical to the original. The vocal buffer
    must cover the window exactly (within one sample).
    """
    rate = original.sample_rate_hz
    w0 = int(round((window.interval.start_s - origin_s) * rate))
    expected = int(round(window.interval.duration_s * rate))
    if abs(len(vocal.samples) - expected) > 1:
        raise ValueError(
            f"vocal length {len(vocal.samples)} does not match window ({expected} samples)"
        )
    out = original.samples.copy()
    for seg_id in window.member_segment_ids:
        iv = member_intervals[seg_id]
        clipped_start = max(iv.start_s, window.interval.start_s)
        clipped_end = min(iv.end_s, window.interval.end_s)
        if clipped_end <= clipped_start:
            continue
        a = int(round((clipped_start - origin_s) * rate))
        b = int(round((clipped_end - origin_s) * rate))
        va = a - w0
        vb = min(b - w0, len(vocal.samples))
        b = w0 + vb
        out[a:b] = vocal.samples[va:vb]
    return AudioBuffer(out, rate, original.channel_count)
