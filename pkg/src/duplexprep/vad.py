"""Silence-aware chunking of long recordings.

Long files are split into chunks shorter than five minutes so downstream
models never see unbounded input, and the cuts land only in VAD-detected
silence so conversational context survives. A single speech region longer
than the limit has no silence to cut in and is force-cut.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from duplexprep.timeline import TimeInterval

MAX_CHUNK_S = 300.0

DEFAULT_ON_THRESH = 0.5
DEFAULT_OFF_THRESH = 0.35
DEFAULT_MIN_SILENCE_S = 0.3
DEFAULT_MIN_SPEECH_S = 0.2


@dataclass
class VadFrameSeries:
    """Per-frame speech probabilities at a fixed hop."""

    hop_s: float
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.hop_s <= 0:
            raise ValueError("hop_s must be positive")
        if self.probs.size and (self.probs.min() < 0 or self.probs.max() > 1):
            raise ValueError("probabilities must lie in [0, 1]")

    @property
    def duration_s(self) -> float:
        return len(self.probs) * self.hop_s


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    interval: TimeInterval
    forced_cut: bool = False


def detect_regions(
    vad: VadFrameSeries,
    on_thresh: float = DEFAULT_ON_THRESH,
    off_thresh: float = DEFAULT_OFF_THRESH,
    min_silence_s: float = DEFAULT_MIN_SILENCE_S,
    min_speech_s: float = DEFAULT_MIN_SPEECH_S,
) -> list[TimeInterval]:
    """Hysteresis segmentation of a VAD probability series.

    Speech starts when a frame reaches on_thresh and ends once the
    probability stays below off_thresh for at least min_silence_s. Regions
    shorter than min_speech_s are dropped. The region end is always the
    end of its last frame at or above off_thresh.
    """
    if on_thresh < off_thresh:
        raise ValueError("on_thresh must be >= off_thresh")
    regions: list[TimeInterval] = []
    in_speech = False
    region_start = 0.0
    last_voiced_end = 0.0
    silence_run = 0.0

    for i, p in enumerate(vad.probs):
        t0 = i * vad.hop_s
        t1 = t0 + vad.hop_s
        if not in_speech:
            if p >= on_thresh:
                in_speech = True
                region_start = t0
                last_voiced_end = t1
                silence_run = 0.0
        else:
            if p < off_thresh:
                silence_run += vad.hop_s
                if silence_run >= min_silence_s:
                    regions.append(TimeInterval(region_start, last_voiced_end))
                    in_speech = False
            else:
                last_voiced_end = t1
                silence_run = 0.0
    if in_speech:
        regions.append(TimeInterval(region_start, last_voiced_end))

    return [r for r in regions if r.duration_s >= min_speech_s]


def chunk_regions(
    regions: list[TimeInterval],
    max_chunk_s: float = MAX_CHUNK_S,
    chunk_id_prefix: str = "chunk",
) -> list[Chunk]:
    """Greedily pack consecutive speech regions into chunks under max_chunk_s.

    A chunk spans from its first member region's start to its last member's
    end, so every non-forced boundary sits in a silence gap. A region whose
    inclusion would reach max_chunk_s starts a new chunk; a single region
    that is itself >= max_chunk_s is force-cut into exact max_chunk_s
    pieces (final remainder excepted, and not marked forced).
    """
    chunks: list[Chunk] = []
    start: float | None = None  # current chunk start
    end = 0.0  # current chunk end (last included region end)

    def close(boundary: float, forced: bool):
        nonlocal start
        chunks.append(
            Chunk(
                chunk_id=f"{chunk_id_prefix}{len(chunks):04d}",
                interval=TimeInterval(start, boundary),
                forced_cut=forced,
            )
        )
        start = None

    for region in sorted(regions, key=lambda r: r.start_s):
        if start is not None and region.end_s - start >= max_chunk_s:
            close(end, forced=False)
        if start is None:
            start = region.start_s
            # Force-cut a region that alone reaches the limit.
            while region.end_s - start >= max_chunk_s:
                close(start + max_chunk_s, forced=True)
                start = chunks[-1].interval.end_s
        end = region.end_s
    if start is not None:
        close(end, forced=False)
    return chunks


def speech_probs_from_energy(
    samples: np.ndarray, sample_rate_hz: int, hop_s: float = 0.032, floor: float = 0.01
) -> VadFrameSeries:
    """Cheap amplitude-envelope VAD, used by mocks and demos.

    Frame probability is the frame RMS normalized by `floor`, saturating
    at 1. Deterministic, model-free.
    """
    hop = max(int(round(hop_s * sample_rate_hz)), 1)
    n_frames = int(np.ceil(len(samples) / hop))
    padded = np.zeros(n_frames * hop)
    padded[: len(samples)] = samples
    frames = padded.reshape(n_frames, hop)
    rms = np.sqrt(np.mean(np.square(frames), axis=1))
    probs = np.clip(rms / floor, 0.0, 1.0)
    return VadFrameSeries(hop_s=hop / sample_rate_hz, probs=probs)
