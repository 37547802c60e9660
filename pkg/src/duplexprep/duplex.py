"""Duplex training region selection and stereo sample construction.

A region worth training a full-duplex model on is a run of at least
three consecutive turns, none longer than ten seconds, between exactly
two speakers; a longer utterance truncates the run on the spot. One
speaker gets the whole left channel, the other the right, each channel
silent while its speaker is not talking.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from duplexprep.audio import AudioBuffer
from duplexprep.timeline import TimeInterval, Turn

MAX_TURN_S = 10.0
MIN_TURNS = 3
DEFAULT_MAX_GAP_S = 10.0


@dataclass
class ValidRegion:
    turns: list  # list[Turn]
    interval: TimeInterval
    left_speaker_id: str

    @property
    def speaker_ids(self) -> set:
        return {t.speaker_id for t in self.turns}


@dataclass
class StereoSample:
    left_audio: AudioBuffer
    right_audio: AudioBuffer
    left_words: list
    right_words: list
    region: ValidRegion
    flags: list = field(default_factory=list)


def _close_run(run: list, regions: list, max_turn_s: float, min_turns: int):
    if len(run) < min_turns:
        return
    speakers = {t.speaker_id for t in run}
    if len(speakers) != 2:
        return
    totals = {}
    for t in run:
        totals[t.speaker_id] = totals.get(t.speaker_id, 0.0) + t.interval.duration_s
    # left channel: dominant speaker, ties broken lexicographically
    left = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
    regions.append(
        ValidRegion(
            turns=list(run),
            interval=TimeInterval(run[0].interval.start_s, run[-1].interval.end_s),
            left_speaker_id=left,
        )
    )


def select_regions(
    turns: Sequence[Turn],
    max_turn_s: float = MAX_TURN_S,
    min_turns: int = MIN_TURNS,
    max_gap_s: float = DEFAULT_MAX_GAP_S,
) -> list[ValidRegion]:
    """Maximal runs of short consecutive turns between two speakers.

    A turn longer than max_turn_s truncates the current run and is not
    part of any region. An inter-turn gap over max_gap_s breaks the run.
    A third speaker's first turn closes the run and seeds the next one.
    Runs shorter than min_turns or without exactly two speakers are
    dropped.
    """
    regions: list[ValidRegion] = []
    run: list[Turn] = []
    i = 0
    ordered = sorted(turns, key=lambda t: t.interval.start_s)
    while i < len(ordered):
        turn = ordered[i]
        if turn.interval.duration_s > max_turn_s:
            _close_run(run, regions, max_turn_s, min_turns)
            run = []
            i += 1
            continue
        if run:
            gap = turn.interval.start_s - run[-1].interval.end_s
            if gap > max_gap_s:
                _close_run(run, regions, max_turn_s, min_turns)
                run = []
                continue
            speakers = {t.speaker_id for t in run}
            if turn.speaker_id not in speakers and len(speakers) == 2:
                _close_run(run, regions, max_turn_s, min_turns)
                run = []
                continue
        run.append(turn)
        i += 1
    _close_run(run, regions, max_turn_s, min_turns)
    return regions


def build_stereo(
    region: ValidRegion,
    speaker_pieces: dict,
    sample_rate_hz: int,
    word_tokens: Optional[dict] = None,
) -> StereoSample:
    """Place per-speaker audio on its channel at timeline positions.

    speaker_pieces: speaker_id -> list of (TimeInterval, AudioBuffer)
    single-speaker pieces (overlap-resolved). Channels span the region
    interval, silence where the speaker is not talking. word_tokens
    optionally maps speaker_id -> WordToken list to split into streams.
    Raises KeyError when a region speaker has no audio pieces at all.
    """
    speakers = sorted(region.speaker_ids)
    if len(speakers) != 2:
        raise ValueError(f"region must have exactly two speakers, got {speakers}")
    left = region.left_speaker_id
    right = next(s for s in speakers if s != left)

    n = int(round(region.interval.duration_s * sample_rate_hz))
    channels = {}
    for spk in (left, right):
        channel = np.zeros(n)
        for iv, buf in speaker_pieces[spk]:
            lo = max(iv.start_s, region.interval.start_s)
            hi = min(iv.end_s, region.interval.end_s)
            if hi <= lo:
                continue
            dst0 = int(round((lo - region.interval.start_s) * sample_rate_hz))
            src0 = int(round((lo - iv.start_s) * sample_rate_hz))
            count = min(
                int(round((hi - lo) * sample_rate_hz)),
                len(buf.samples) - src0,
                n - dst0,
            )
            if count > 0:
                channel[dst0: dst0 + count] = buf.samples[src0: src0 + count]
        channels[spk] = AudioBuffer(channel, sample_rate_hz, 1)

    words = word_tokens or {}

    def in_region(tok):
        return tok.interval is None or (
            tok.interval.start_s >= region.interval.start_s - 1e-9
            and tok.interval.end_s <= region.interval.end_s + 1e-9
        )

    return StereoSample(
        left_audio=channels[left],
        right_audio=channels[right],
        left_words=[w for w in words.get(left, []) if in_region(w)],
        right_words=[w for w in words.get(right, []) if in_region(w)],
        region=region,
    )


def interleave_stereo(sample: StereoSample) -> AudioBuffer:
    """Two mono channels as one interleaved stereo buffer for WAV output."""
    left, right = sample.left_audio.samples, sample.right_audio.samples
    n = min(len(left), len(right))
    interleaved = np.empty(2 * n)
    interleaved[0::2] = left[:n]
    interleaved[1::2] = right[:n]
    return AudioBuffer(interleaved, sample.left_audio.sample_rate_hz, 2)
