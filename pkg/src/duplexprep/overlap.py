"""Overlap separation and speaker identity assignment.

Only the overlapped region is sent to the two-speaker separation backend
(separating the whole utterance works worse). Speaker identity of the two
separated candidates is decided by cosine similarity against reference
embeddings built from each speaker's clean (non-overlapping) audio, at
least two seconds of it, concatenated from shorter stretches when needed.
The winning candidate is spliced back between the original clean parts,
so for segments a=[t_start, t2] and b=[t1, t_end] overlapping on
[t1, t2], speaker 1 keeps its full span [t_start, t2] and speaker 2 keeps
[t1, t_end], each single-speaker throughout.

Four resolution policies exist; separation (case4) is the default. The
others trade information for simplicity: cut the overlap out entirely
(case1), or attach the mixed audio wholly to one side (case2/case3).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from duplexprep.audio import AudioBuffer
from duplexprep.timeline import (
    OverlapRelation,
    SpeakerSegment,
    TimeInterval,
    merge_intervals,
    subtract_intervals,
)

MIN_REFERENCE_S = 2.0

CASE1_CUT = "case1_cut"
CASE2_ASSIGN_FIRST = "case2_assign_first"
CASE3_ASSIGN_SECOND = "case3_assign_second"
CASE4_SEPARATE = "case4_separate"


class NoReferenceError(RuntimeError):
    """A speaker has less clean audio than the reference minimum."""


@dataclass
class OverlapPolicy:
    mode: str = CASE4_SEPARATE
    min_overlap_s: float = 0.0
    crossfade_s: float = 0.010


@dataclass
class ReferenceAudio:
    speaker_id: str
    audio: AudioBuffer
    intervals: list  # source TimeIntervals, in time order
    total_s: float


@dataclass
class ReferenceEmbedding:
    speaker_id: str
    vector: np.ndarray
    source_duration_s: float


@dataclass
class CandidateAssignment:
    assignment: dict  # {"cand1": speaker_id, "cand2": speaker_id}
    s1: float
    s2: float
    mode_used: str
    tie: bool = False


@dataclass
class SeparationOutcome:
    overlap: TimeInterval
    cand1_audio: AudioBuffer
    cand2_audio: AudioBuffer
    assignment: dict
    s1: float
    s2: float


@dataclass
class ResolvedPiece:
    speaker_id: str
    interval: TimeInterval
    audio: AudioBuffer


@dataclass
class OverlapResolution:
    pieces: list  # list[ResolvedPiece]
    outcome: Optional[SeparationOutcome]
    flags: list = field(default_factory=list)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("zero-norm embedding vector")
    return float(np.dot(u, v) / (nu * nv))


def collect_references(
    segments: Sequence[SpeakerSegment],
    overlaps: Sequence[OverlapRelation],
    audio: AudioBuffer,
    min_ref_s: float = MIN_REFERENCE_S,
    origin_s: float = 0.0,
) -> dict[str, ReferenceAudio]:
    """Clean per-speaker reference audio from non-overlapping stretches.

    For each speaker, the parts of their segments not covered by any
    overlap region are concatenated in time order until at least
    min_ref_s is gathered. Speakers that cannot reach the minimum are
    absent from the result.
    """
    overlap_union = merge_intervals(rel.overlap for rel in overlaps)
    refs: dict[str, ReferenceAudio] = {}
    speakers = sorted({seg.speaker_id for seg in segments})
    for spk in speakers:
        pieces: list[TimeInterval] = []
        total = 0.0
        for seg in sorted(
            (s for s in segments if s.speaker_id == spk),
            key=lambda s: s.interval.start_s,
        ):
            for piece in subtract_intervals(seg.interval, overlap_union):
                pieces.append(piece)
                total += piece.duration_s
            if total >= min_ref_s:
                break
        if total < min_ref_s:
            continue
        chunks = [audio.slice_interval(iv, origin_s).samples for iv in pieces]
        refs[spk] = ReferenceAudio(
            speaker_id=spk,
            audio=AudioBuffer(np.concatenate(chunks), audio.sample_rate_hz, 1),
            intervals=pieces,
            total_s=total,
        )
    return refs


def assign_candidates(
    cand1_emb: np.ndarray,
    cand2_emb: np.ndarray,
    ref1: ReferenceEmbedding,
    ref2: ReferenceEmbedding,
    mode: str = "paper",
) -> CandidateAssignment:
    """Decide which separated candidate belongs to which speaker.

    paper mode compares the first candidate against both references:
    s1 = cos(cand1, ref1), s2 = cos(cand1, ref2); cand1 goes to speaker 1
    iff s1 >= s2 and cand2 to the other. An exact tie falls through to
    joint mode (the bijection maximizing summed cosine over the 2x2
    matrix); a joint tie keeps the identity assignment and is flagged.
    """
    s1 = cosine(cand1_emb, ref1.vector)
    s2 = cosine(cand1_emb, ref2.vector)

    identity = {"cand1": ref1.speaker_id, "cand2": ref2.speaker_id}
    swapped = {"cand1": ref2.speaker_id, "cand2": ref1.speaker_id}

    if mode == "paper":
        if s1 > s2:
            return CandidateAssignment(identity, s1, s2, "paper")
        if s1 < s2:
            return CandidateAssignment(swapped, s1, s2, "paper")
        result = assign_candidates(cand1_emb, cand2_emb, ref1, ref2, mode="joint")
        return CandidateAssignment(result.assignment, s1, s2, "joint", tie=result.tie)
    if mode == "joint":
        keep = s1 + cosine(cand2_emb, ref2.vector)
        swap = s2 + cosine(cand2_emb, ref1.vector)
        if keep > swap:
            return CandidateAssignment(identity, s1, s2, "joint")
        if swap > keep:
            return CandidateAssignment(swapped, s1, s2, "joint")
        return CandidateAssignment(identity, s1, s2, "joint", tie=True)
    raise ValueError(f"unknown assignment mode: {mode}")


def _order_pair(relation: OverlapRelation) -> tuple[SpeakerSegment, SpeakerSegment]:
    """(first, second): first starts earlier; the container wins ties."""
    a, b = relation.seg_a, relation.seg_b
    if (a.interval.start_s, -a.interval.end_s) <= (b.interval.start_s, -b.interval.end_s):
        return a, b
    return b, a


def _crossfade_in(out, mixture, start_idx, fade_n):
    """Blend mixture -> separated over out[start_idx : start_idx+fade_n]."""
    n = min(fade_n, len(out) - start_idx, len(mixture))
    if n <= 0:
        return
    w = np.linspace(0.0, 1.0, n, endpoint=False)
    out[start_idx: start_idx + n] = (1 - w) * mixture[:n] + w * out[start_idx: start_idx + n]


def _crossfade_out(out, mixture, end_idx, fade_n):
    """Blend separated -> mixture over out[end_idx-fade_n : end_idx]."""
    n = min(fade_n, end_idx, len(mixture))
    if n <= 0:
        return
    w = np.linspace(0.0, 1.0, n, endpoint=False)
    out[end_idx - n: end_idx] = (1 - w) * out[end_idx - n: end_idx] + w * mixture[-n:]


def resolve_overlap(
    relation: OverlapRelation,
    audio: AudioBuffer,
    policy: OverlapPolicy,
    separator=None,
    embedder=None,
    references: Optional[dict] = None,
    origin_s: float = 0.0,
) -> OverlapResolution:
    """Turn one overlap relation into single-speaker audio pieces.

    separator.separate(AudioBuffer, TimeInterval) -> (AudioBuffer,
    AudioBuffer) and embedder.embed(AudioBuffer, intervals) -> vector are
    only consulted in case4 mode. references maps speaker_id ->
    ReferenceAudio (built by collect_references); a missing reference
    degrades case4 to case1_cut with a flag rather than guessing
    identity.
    """
    if relation.overlap.duration_s < policy.min_overlap_s:
        raise ValueError("overlap shorter than policy.min_overlap_s")

    first, second = _order_pair(relation)
    mode = policy.mode

    if mode == CASE4_SEPARATE:
        refs = references or {}
        if first.speaker_id not in refs or second.speaker_id not in refs:
            res = _resolve_geometry(relation, audio, CASE1_CUT, origin_s)
            res.flags.append("no_reference_fallback_case1")
            return res
        try:
            return _resolve_case4(
                relation, audio, policy, separator, embedder, refs, origin_s
            )
        except Exception:
            res = _resolve_geometry(relation, audio, "unresolved", origin_s)
            res.flags.append("separation_failed_unresolved")
            return res
    return _resolve_geometry(relation, audio, mode, origin_s)


def _piece(audio: AudioBuffer, spk: str, iv: TimeInterval, origin_s: float) -> ResolvedPiece:
    return ResolvedPiece(spk, iv, audio.slice_interval(iv, origin_s))


def _resolve_geometry(
    relation: OverlapRelation, audio: AudioBuffer, mode: str, origin_s: float
) -> OverlapResolution:
    """Pure-geometry policies: no backend calls, original audio only."""
    first, second = _order_pair(relation)
    ov = relation.overlap
    pieces: list[ResolvedPiece] = []

    def keep(seg: SpeakerSegment):
        pieces.append(_piece(audio, seg.speaker_id, seg.interval, origin_s))

    def minus_overlap(seg: SpeakerSegment):
        for iv in subtract_intervals(seg.interval, [ov]):
            pieces.append(_piece(audio, seg.speaker_id, iv, origin_s))

    if mode == "unresolved":
        keep(first)
        keep(second)
    elif mode == CASE1_CUT:
        minus_overlap(first)
        minus_overlap(second)
    elif mode == CASE2_ASSIGN_FIRST:
        keep(first)
        minus_overlap(second)
    elif mode == CASE3_ASSIGN_SECOND:
        minus_overlap(first)
        keep(second)
    else:
        raise ValueError(f"unknown overlap policy mode: {mode}")
    pieces.sort(key=lambda p: (p.interval.start_s, p.speaker_id))
    return OverlapResolution(pieces=pieces, outcome=None)


def _resolve_case4(
    relation: OverlapRelation,
    audio: AudioBuffer,
    policy: OverlapPolicy,
    separator,
    embedder,
    references: dict,
    origin_s: float,
) -> OverlapResolution:
    first, second = _order_pair(relation)
    ov = relation.overlap
    rate = audio.sample_rate_hz
    fade_n = int(round(policy.crossfade_s * rate))

    # The separator sees only the overlap, padded for splice continuity.
    pad_start = max(ov.start_s - policy.crossfade_s, origin_s)
    pad_end = min(ov.end_s + policy.crossfade_s, origin_s + audio.duration_s)
    padded = TimeInterval(pad_start, pad_end)
    cand1_raw, cand2_raw = separator.separate(audio.slice_interval(padded, origin_s), padded)

    # Trim the padding back off.
    lead = int(round((ov.start_s - pad_start) * rate))
    n_ov = int(round(ov.duration_s * rate))
    cand1 = AudioBuffer(cand1_raw.samples[lead: lead + n_ov], rate, 1)
    cand2 = AudioBuffer(cand2_raw.samples[lead: lead + n_ov], rate, 1)

    ref1 = references[first.speaker_id]
    ref2 = references[second.speaker_id]
    emb1 = ReferenceEmbedding(ref1.speaker_id, embedder.embed(ref1.audio, ref1.intervals), ref1.total_s)
    emb2 = ReferenceEmbedding(ref2.speaker_id, embedder.embed(ref2.audio, ref2.intervals), ref2.total_s)
    cand1_emb = embedder.embed(cand1, [ov])
    cand2_emb = embedder.embed(cand2, [ov])
    decision = assign_candidates(cand1_emb, cand2_emb, emb1, emb2)

    by_speaker = {
        decision.assignment["cand1"]: cand1,
        decision.assignment["cand2"]: cand2,
    }
    mixture_ov = audio.slice_interval(ov, origin_s).samples

    pieces = []
    contained = relation.kind == "containment"
    if contained:
        outer, inner = first, second
        pieces.append(
            _stitch(audio, outer, ov, by_speaker[outer.speaker_id].samples,
                    mixture_ov, fade_n, rate, origin_s)
        )
        pieces.append(ResolvedPiece(inner.speaker_id, ov, by_speaker[inner.speaker_id]))
    else:
        pieces.append(
            _stitch(audio, first, ov, by_speaker[first.speaker_id].samples,
                    mixture_ov, fade_n, rate, origin_s)
        )
        pieces.append(
            _stitch(audio, second, ov, by_speaker[second.speaker_id].samples,
                    mixture_ov, fade_n, rate, origin_s)
        )
    pieces.sort(key=lambda p: (p.interval.start_s, p.speaker_id))

    flags = ["assignment_tie"] if decision.tie else []
    return OverlapResolution(
        pieces=pieces,
        outcome=SeparationOutcome(
            overlap=ov,
            cand1_audio=cand1,
            cand2_audio=cand2,
            assignment=dict(decision.assignment),
            s1=decision.s1,
            s2=decision.s2,
        ),
        flags=flags,
    )


def splice_overlays(
    base: AudioBuffer,
    interval: TimeInterval,
    overlays: list,
    crossfade_s: float,
    origin_s: float = 0.0,
) -> AudioBuffer:
    """Slice `interval` from `base` and splice in separated overlay audio.

    overlays: (TimeInterval, AudioBuffer) pairs, the separated audio that
    replaces each overlap region. Seams with surrounding original audio
    get a linear crossfade against the original mixture.
    """
    rate = base.sample_rate_hz
    fade_n = int(round(crossfade_s * rate))
    out = base.slice_interval(interval, origin_s).samples.copy()
    for ov, cand_buf in sorted(overlays, key=lambda p: p[0].start_s):
        lo = max(ov.start_s, interval.start_s)
        hi = min(ov.end_s, interval.end_s)
        if hi <= lo:
            continue
        cand = cand_buf.samples
        skip = int(round((lo - ov.start_s) * rate))
        o0 = int(round((lo - interval.start_s) * rate))
        o1 = min(o0 + int(round((hi - lo) * rate)), len(out))
        cand_part = cand[skip: skip + (o1 - o0)]
        o1 = o0 + len(cand_part)
        mixture = base.slice_interval(TimeInterval(lo, hi), origin_s).samples
        out[o0:o1] = cand_part
        if o0 > 0:  # clean audio precedes: ramp mixture -> separated
            _crossfade_in(out[o0:o1], mixture, 0, fade_n)
        if o1 < len(out):  # clean audio follows: ramp separated -> mixture
            _crossfade_out(out[o0:o1], mixture, o1 - o0, fade_n)
    return AudioBuffer(out, rate, 1)


def _stitch(
    audio: AudioBuffer,
    seg: SpeakerSegment,
    ov: TimeInterval,
    cand: np.ndarray,
    mixture_ov: np.ndarray,
    fade_n: int,
    rate: int,
    origin_s: float,
) -> ResolvedPiece:
    """Original audio with the separated overlap replacing [t1, t2]."""
    spliced = splice_overlays(
        audio, seg.interval, [(ov, AudioBuffer(cand, rate, 1))],
        fade_n / rate, origin_s,
    )
    return ResolvedPiece(seg.speaker_id, seg.interval, spliced)


def multispeaker_windows(segments: Sequence[SpeakerSegment]) -> list[TimeInterval]:
    """Windows where three or more distinct speakers talk at once.

    The two-speaker separation contract cannot resolve these; callers
    flag the involved segments multi_speaker_unresolved and exclude them
    from duplex selection.
    """
    segs = list(segments)
    times = sorted({t for s in segs for t in (s.interval.start_s, s.interval.end_s)})
    windows = []
    for lo, hi in zip(times, times[1:]):
        mid = (lo + hi) / 2
        speakers = {
            s.speaker_id
            for s in segs
            if s.interval.start_s <= mid < s.interval.end_s
        }
        if len(speakers) >= 3:
            windows.append(TimeInterval(lo, hi))
    return merge_intervals(windows)
