"""Diarization error metrics: DER with collar, JER, and restricted DERs.

DER aggregates missed speech, false alarm speech, and speaker confusion
over the scored timeline, divided by total reference speech (overlapped
reference speech counts once per speaker). Reference segment boundaries
are dilated by a collar that is excluded from scoring. The hypothesis
speaker labels are mapped to reference labels by the assignment that
minimizes confusion.

The restricted variants rescore inside sub-regions of the timeline:
der_short over short reference segments only, der_turn over windows
around speaker change points.

All measures are computed exactly with a boundary sweep, not on a frame
grid.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from duplexprep.metrics.rttm import RttmSegment
from duplexprep.timeline import TimeInterval, merge_intervals

DEFAULT_COLLAR_S = 0.25
EXHAUSTIVE_MAPPING_LIMIT = 4


@dataclass
class DerBreakdown:
    missed_s: float
    false_alarm_s: float
    confusion_s: float
    total_ref_speech_s: float
    der: Optional[float]
    speaker_mapping: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    @property
    def error_s(self) -> float:
        return self.missed_s + self.false_alarm_s + self.confusion_s


def _by_speaker(segments: Sequence[RttmSegment]) -> dict[str, list[TimeInterval]]:
    out: dict[str, list[TimeInterval]] = {}
    for seg in segments:
        out.setdefault(seg.speaker_id, []).append(seg.interval)
    return {spk: merge_intervals(ivs) for spk, ivs in out.items()}


def _membership(intervals: list[TimeInterval], mids: np.ndarray) -> np.ndarray:
    """Boolean mask: which sweep midpoints fall inside the interval list."""
    if not intervals:
        return np.zeros(len(mids), dtype=bool)
    starts = np.array([iv.start_s for iv in intervals])
    ends = np.array([iv.end_s for iv in intervals])
    idx = np.searchsorted(starts, mids, side="right") - 1
    ok = idx >= 0
    member = np.zeros(len(mids), dtype=bool)
    member[ok] = mids[ok] < ends[idx[ok]]
    return member


def _collar_zones(ref: Sequence[RttmSegment], collar_s: float) -> list[TimeInterval]:
    zones = []
    for seg in ref:
        for b in (seg.interval.start_s, seg.interval.end_s):
            zones.append(TimeInterval(max(b - collar_s, 0.0), b + collar_s))
    return merge_intervals(zones)


def _optimal_mapping(ref_masks, hyp_masks, weights) -> dict[str, str]:
    """Hypothesis->reference label map maximizing matched scored time."""
    ref_ids = list(ref_masks)
    hyp_ids = list(hyp_masks)
    if not ref_ids or not hyp_ids:
        return {}
    overlap = np.array(
        [[float(np.sum(weights[ref_masks[r] & hyp_masks[h]])) for h in hyp_ids] for r in ref_ids]
    )
    if max(len(ref_ids), len(hyp_ids)) <= EXHAUSTIVE_MAPPING_LIMIT:
        best, best_score = {}, -1.0
        k = min(len(ref_ids), len(hyp_ids))
        if len(ref_ids) <= len(hyp_ids):
            for hyp_perm in itertools.permutations(range(len(hyp_ids)), k):
                score = sum(overlap[i, h] for i, h in enumerate(hyp_perm))
                if score > best_score:
                    best_score = score
                    best = {hyp_ids[h]: ref_ids[i] for i, h in enumerate(hyp_perm)}
        else:
            for ref_perm in itertools.permutations(range(len(ref_ids)), k):
                score = sum(overlap[r, j] for j, r in enumerate(ref_perm))
                if score > best_score:
                    best_score = score
                    best = {hyp_ids[j]: ref_ids[r] for j, r in enumerate(ref_perm)}
        return best
    rows, cols = linear_sum_assignment(-overlap)
    return {hyp_ids[c]: ref_ids[r] for r, c in zip(rows, cols)}


def _score(
    ref: Sequence[RttmSegment],
    hyp: Sequence[RttmSegment],
    collar_s: float,
    scoring_region: Optional[list[TimeInterval]],
    region_flag: str,
) -> DerBreakdown:
    if not ref:
        raise ValueError("empty reference: DER denominator undefined")
    if scoring_region is not None and not scoring_region:
        return DerBreakdown(0.0, 0.0, 0.0, 0.0, None, flags=[region_flag])

    ref_spk = _by_speaker(ref)
    hyp_spk = _by_speaker(hyp)

    bounds: list[float] = []
    for ivs in list(ref_spk.values()) + list(hyp_spk.values()):
        for iv in ivs:
            bounds.extend((iv.start_s, iv.end_s))
    collar = _collar_zones(ref, collar_s)
    for iv in collar:
        bounds.extend((iv.start_s, iv.end_s))
    if scoring_region is not None:
        for iv in scoring_region:
            bounds.extend((iv.start_s, iv.end_s))

    times = np.unique(np.asarray(bounds, dtype=np.float64))
    if len(times) < 2:
        return DerBreakdown(0.0, 0.0, 0.0, 0.0, None, flags=[region_flag])
    mids = (times[:-1] + times[1:]) / 2.0
    lens = np.diff(times)

    scored = ~_membership(collar, mids)
    if scoring_region is not None:
        scored &= _membership(scoring_region, mids)
    weights = lens * scored

    ref_masks = {spk: _membership(ivs, mids) for spk, ivs in ref_spk.items()}
    hyp_masks = {spk: _membership(ivs, mids) for spk, ivs in hyp_spk.items()}
    mapping = _optimal_mapping(ref_masks, hyp_masks, weights)

    n_ref = np.zeros(len(mids))
    for mask in ref_masks.values():
        n_ref += mask
    n_hyp = np.zeros(len(mids))
    for mask in hyp_masks.values():
        n_hyp += mask
    matched = np.zeros(len(mids))
    for hyp_id, ref_id in mapping.items():
        matched += ref_masks[ref_id] & hyp_masks[hyp_id]

    missed = float(np.sum(weights * np.maximum(n_ref - n_hyp, 0.0)))
    false_alarm = float(np.sum(weights * np.maximum(n_hyp - n_ref, 0.0)))
    confusion = float(np.sum(weights * (np.minimum(n_ref, n_hyp) - matched)))
    denom = float(np.sum(weights * n_ref))

    if denom == 0.0:
        return DerBreakdown(
            missed, false_alarm, confusion, 0.0, None,
            speaker_mapping=mapping, flags=[region_flag],
        )
    return DerBreakdown(
        missed_s=missed,
        false_alarm_s=false_alarm,
        confusion_s=confusion,
        total_ref_speech_s=denom,
        der=(missed + false_alarm + confusion) / denom,
        speaker_mapping=mapping,
    )


def der(
    ref: Sequence[RttmSegment],
    hyp: Sequence[RttmSegment],
    collar_s: float = DEFAULT_COLLAR_S,
) -> DerBreakdown:
    """Diarization error rate over the full timeline."""
    return _score(ref, hyp, collar_s, None, "empty_scoring_region")


def der_short(
    ref: Sequence[RttmSegment],
    hyp: Sequence[RttmSegment],
    max_dur_s: float,
    collar_s: float = DEFAULT_COLLAR_S,
) -> DerBreakdown:
    """DER restricted to reference segments no longer than max_dur_s.

    The scoring region is the union of the qualifying segments; the collar
    still applies inside it. With no qualifying segments the result is
    flagged empty_scoring_region and der is None.
    """
    region = merge_intervals(
        seg.interval for seg in ref if seg.interval.duration_s <= max_dur_s
    )
    return _score(ref, hyp, collar_s, region, "empty_scoring_region")


def change_points(
    ref: Sequence[RttmSegment], max_gap_s: float = 0.5
) -> list[float]:
    """Instants where the floor passes between speakers within a small gap.

    A change point is the midpoint of the gap between two reference
    segments of different speakers with 0 <= gap <= max_gap_s.
    """
    segs = sorted(ref, key=lambda s: (s.interval.start_s, s.interval.end_s))
    points = []
    for i, a in enumerate(segs):
        for b in segs[i + 1:]:
            if b.speaker_id == a.speaker_id:
                continue
            gap = b.interval.start_s - a.interval.end_s
            if 0.0 <= gap <= max_gap_s:
                points.append((a.interval.end_s + b.interval.start_s) / 2.0)
    return sorted(set(points))


def der_turn(
    ref: Sequence[RttmSegment],
    hyp: Sequence[RttmSegment],
    window_s: float = 0.5,
    max_gap_s: float = 0.5,
    collar_s: float = DEFAULT_COLLAR_S,
) -> DerBreakdown:
    """DER restricted to +-window_s around speaker change points.

    With no change points the result is flagged no_change_points and der
    is None.
    """
    points = change_points(ref, max_gap_s)
    region = merge_intervals(
        TimeInterval(max(c - window_s, 0.0), c + window_s) for c in points
    )
    return _score(ref, hyp, collar_s, region, "no_change_points")


def jer(
    ref: Sequence[RttmSegment],
    hyp: Sequence[RttmSegment],
    collar_s: float = DEFAULT_COLLAR_S,
) -> float:
    """Jaccard error rate: mean per-reference-speaker Jaccard distance.

    The DER optimal speaker mapping is reused; the Jaccard measure itself
    uses the full segment sets (no collar masking).
    """
    mapping = der(ref, hyp, collar_s).speaker_mapping
    ref_spk = _by_speaker(ref)
    hyp_spk = _by_speaker(hyp)
    inverse = {r: h for h, r in mapping.items()}

    distances = []
    for spk, ref_ivs in ref_spk.items():
        ref_dur = sum(iv.duration_s for iv in ref_ivs)
        mapped = inverse.get(spk)
        hyp_ivs = hyp_spk.get(mapped, []) if mapped is not None else []
        hyp_dur = sum(iv.duration_s for iv in hyp_ivs)
        inter = _pairwise_intersection(ref_ivs, hyp_ivs)
        union = ref_dur + hyp_dur - inter
        distances.append(1.0 - (inter / union if union > 0 else 0.0))
    if not distances:
        raise ValueError("empty reference: JER undefined")
    return float(np.mean(distances))


def _pairwise_intersection(a: list[TimeInterval], b: list[TimeInterval]) -> float:
    total = 0.0
    for x in a:
        for y in b:
            lo = max(x.start_s, y.start_s)
            hi = min(x.end_s, y.end_s)
            if hi > lo:
                total += hi - lo
    return total
