"""Word-level hypothesis alignment and prioritized majority voting.

Three recognizers transcribe each segment; their hypotheses are aligned
word by word into a transition network seeded from the primary model, and
each slot is voted: a word accepted by at least two models wins,
otherwise the primary's word stands. Word timestamps come from the
primary where it supports the winning word and are interpolated
otherwise. Transcripts dominated by a looping n-gram are discarded
outright, which is how runaway hallucinations ("yeah" repeated for a
minute) get dropped instead of trained on.
"""

from __future__ import annotations

import string
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from duplexprep.audio import AudioBuffer
from duplexprep.timeline import TimeInterval

EPS = ""  # empty normalized form marks a skipped slot

_STRIP_CHARS = string.punctuation + "‘’“”…–—"

DEFAULT_NGRAM_N = 15
DEFAULT_NGRAM_COUNT = 5


def normalize_word(surface: str) -> str:
    """Case-fold and strip leading/trailing punctuation; internal
    apostrophes survive ("don't" stays "don't")."""
    return surface.casefold().strip(_STRIP_CHARS)


@dataclass(frozen=True)
class WordToken:
    surface: str
    normalized: str
    interval: Optional[TimeInterval]
    model_id: str

    @staticmethod
    def make(surface: str, model_id: str, interval: Optional[TimeInterval] = None) -> "WordToken":
        return WordToken(surface, normalize_word(surface), interval, model_id)


@dataclass
class Hypothesis:
    model_id: str
    is_primary: bool
    words: list  # list[WordToken]


@dataclass(frozen=True)
class SlotEntry:
    normalized: str  # EPS for absent
    surface: str = ""
    interval: Optional[TimeInterval] = None


_EPS_ENTRY = SlotEntry(normalized=EPS)


@dataclass
class WordTransitionNetwork:
    """Ordered voting slots; every registered model has one entry per slot."""

    model_ids: list
    slots: list  # list[dict[model_id, SlotEntry]]

    @staticmethod
    def from_hypothesis(hyp: Hypothesis) -> "WordTransitionNetwork":
        slots = [
            {hyp.model_id: SlotEntry(w.normalized, w.surface, w.interval)}
            for w in hyp.words
        ]
        return WordTransitionNetwork(model_ids=[hyp.model_id], slots=slots)


@dataclass
class RepetitionReport:
    n: int
    max_count: int
    offending_ngram: Optional[list]
    discarded: bool


def align_hypothesis(wtn: WordTransitionNetwork, hyp: Hypothesis) -> WordTransitionNetwork:
    """Align one hypothesis against the network by minimum edit distance.

    Costs: match 0, substitution 1, deletion 1 (the hypothesis skips a
    slot), insertion 1 (a new slot where prior models hold EPS). Ties in
    the backtrace prefer match, then substitution, deletion, insertion,
    so the result is deterministic.
    """
    if hyp.model_id in wtn.model_ids:
        raise ValueError(f"model {hyp.model_id} already aligned")
    slots = wtn.slots
    words = hyp.words
    n, m = len(slots), len(words)

    def matches(slot, word) -> bool:
        return word.normalized != EPS and any(
            e.normalized == word.normalized for e in slot.values()
        )

    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = dist[i - 1][j - 1] + (0 if matches(slots[i - 1], words[j - 1]) else 1)
            dist[i][j] = min(diag, dist[i - 1][j] + 1, dist[i][j - 1] + 1)

    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and matches(slots[i - 1], words[j - 1]) \
                and dist[i][j] == dist[i - 1][j - 1]:
            ops.append("use")
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + 1:
            ops.append("use")  # substitution still places the word in the slot
            i, j = i - 1, j - 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            ops.append("skip")
            i -= 1
        else:
            ops.append("new")
            j -= 1
    ops.reverse()

    new_slots = []
    si = wi = 0
    for op in ops:
        if op == "use":
            slot = dict(slots[si])
            w = words[wi]
            slot[hyp.model_id] = SlotEntry(w.normalized, w.surface, w.interval)
            new_slots.append(slot)
            si += 1
            wi += 1
        elif op == "skip":
            slot = dict(slots[si])
            slot[hyp.model_id] = _EPS_ENTRY
            new_slots.append(slot)
            si += 1
        else:  # new slot: prior models hold EPS
            slot = {mid: _EPS_ENTRY for mid in wtn.model_ids}
            w = words[wi]
            slot[hyp.model_id] = SlotEntry(w.normalized, w.surface, w.interval)
            new_slots.append(slot)
            wi += 1
    return WordTransitionNetwork(model_ids=wtn.model_ids + [hyp.model_id], slots=new_slots)


def vote(
    wtn: WordTransitionNetwork, primary_id: str, min_agreement: int = 2
) -> list[WordToken]:
    """Per-slot prioritized majority voting.

    A non-EPS word with >= min_agreement supporters is emitted (surface
    from the primary when it is a supporter, else from the lowest model
    id among supporters). EPS with >= min_agreement supporters silences
    the slot only when the primary also has EPS there. Anything else
    falls back to the primary's entry.
    """
    if primary_id not in wtn.model_ids:
        raise ValueError(f"primary {primary_id} not in network")
    out: list[WordToken] = []
    for slot in wtn.slots:
        counts = Counter(e.normalized for e in slot.values())
        primary_entry = slot.get(primary_id, _EPS_ENTRY)

        word_winner = None
        word_count = 0
        candidates = [w for w, c in counts.items() if w != EPS and c >= min_agreement]
        if candidates:
            best = max(counts[w] for w in candidates)
            tied = sorted(w for w in candidates if counts[w] == best)
            if primary_entry.normalized in tied:
                word_winner = primary_entry.normalized
            else:
                word_winner = tied[0]
            word_count = best

        if word_winner is not None:
            if primary_entry.normalized == word_winner:
                donor_id, donor = primary_id, primary_entry
            else:
                donor_id = min(
                    mid for mid, e in slot.items() if e.normalized == word_winner
                )
                donor = slot[donor_id]
            interval = primary_entry.interval if primary_entry.normalized == word_winner else None
            out.append(WordToken(donor.surface, word_winner, interval, donor_id))
        elif counts[EPS] >= min_agreement and primary_entry.normalized == EPS:
            continue
        elif primary_entry.normalized != EPS:
            out.append(
                WordToken(
                    primary_entry.surface,
                    primary_entry.normalized,
                    primary_entry.interval,
                    primary_id,
                )
            )
    return out


def reconcile_timestamps(
    voted: Sequence[WordToken],
    primary: Hypothesis,
    segment_interval: Optional[TimeInterval] = None,
    char_rate_s: float = 0.05,
) -> tuple[list[WordToken], list[str]]:
    """Give every voted word a time interval.

    Primary-anchored words keep their intervals. Runs of unanchored words
    are spread across the gap between the neighboring anchors,
    proportionally to character length. Words before the first anchor end
    exactly at its start (and symmetrically after the last). With no
    anchors at all the words are spread uniformly over segment_interval
    and the result is flagged interpolated_all.
    """
    flags: list[str] = []
    tokens = list(voted)
    if not tokens:
        return [], flags
    anchored_idx = [i for i, t in enumerate(tokens) if t.interval is not None]

    if not anchored_idx:
        if segment_interval is None:
            raise ValueError("no anchors and no segment_interval to distribute over")
        flags.append("interpolated_all")
        total_chars = sum(max(len(t.normalized), 1) for t in tokens)
        cursor = segment_interval.start_s
        out = []
        for t in tokens:
            width = segment_interval.duration_s * max(len(t.normalized), 1) / total_chars
            out.append(replace(t, interval=TimeInterval(cursor, cursor + width)))
            cursor += width
        return out, flags

    out = list(tokens)

    def spread(indices, window_start, window_end):
        total = sum(max(len(tokens[k].normalized), 1) for k in indices)
        span = max(window_end - window_start, 0.0)
        cursor = window_start
        for k in indices:
            width = span * max(len(tokens[k].normalized), 1) / total
            out[k] = replace(tokens[k], interval=TimeInterval(cursor, cursor + width))
            cursor += width

    first, last = anchored_idx[0], anchored_idx[-1]
    if first > 0:
        head = list(range(0, first))
        end = tokens[first].interval.start_s
        nominal = char_rate_s * sum(max(len(tokens[k].normalized), 1) for k in head)
        start = max(end - nominal, segment_interval.start_s if segment_interval else 0.0)
        spread(head, min(start, end), end)
    for a, b in zip(anchored_idx, anchored_idx[1:]):
        if b - a > 1:
            spread(list(range(a + 1, b)), tokens[a].interval.end_s, tokens[b].interval.start_s)
    if last < len(tokens) - 1:
        tail = list(range(last + 1, len(tokens)))
        start = tokens[last].interval.end_s
        nominal = char_rate_s * sum(max(len(tokens[k].normalized), 1) for k in tail)
        end = start + nominal
        if segment_interval is not None:
            end = min(end, max(segment_interval.end_s, start))
        spread(tail, start, max(end, start))
    return out, flags


def repetition_filter(
    tokens: Sequence[str],
    n: int = DEFAULT_NGRAM_N,
    count_threshold: int = DEFAULT_NGRAM_COUNT,
) -> RepetitionReport:
    """Count overlapping n-gram occurrences over normalized tokens.

    discarded is True iff some n-gram occurs at least count_threshold
    times. Case and punctuation never change the decision.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    norm = [normalize_word(t) for t in tokens]
    if len(norm) < n:
        return RepetitionReport(n=n, max_count=0, offending_ngram=None, discarded=False)
    counts: Counter = Counter(tuple(norm[i: i + n]) for i in range(len(norm) - n + 1))
    ngram, max_count = max(counts.items(), key=lambda kv: (kv[1], kv[0]))
    discarded = max_count >= count_threshold
    return RepetitionReport(
        n=n,
        max_count=max_count,
        offending_ngram=list(ngram) if discarded else None,
        discarded=discarded,
    )


@dataclass
class EnsembleResult:
    words: list  # list[WordToken], empty when discarded or failed
    repetition: Optional[RepetitionReport]
    flags: list = field(default_factory=list)

    @property
    def text(self) -> str:
        return " ".join(w.surface for w in self.words)


def ensemble_hypotheses(
    hypotheses: Sequence[Hypothesis],
    min_agreement: int = 2,
    rep_n: int = DEFAULT_NGRAM_N,
    rep_count_threshold: int = DEFAULT_NGRAM_COUNT,
    segment_interval: Optional[TimeInterval] = None,
) -> EnsembleResult:
    """Align, vote, reconcile and filter a set of finished hypotheses.

    Exactly one hypothesis must be primary. Non-primary hypotheses are
    aligned in sorted model-id order so the result never depends on
    arrival order.
    """
    primaries = [h for h in hypotheses if h.is_primary]
    if len(primaries) != 1:
        raise ValueError(f"expected exactly one primary hypothesis, got {len(primaries)}")
    primary = primaries[0]
    flags: list[str] = []

    wtn = WordTransitionNetwork.from_hypothesis(primary)
    for hyp in sorted(
        (h for h in hypotheses if not h.is_primary), key=lambda h: h.model_id
    ):
        wtn = align_hypothesis(wtn, hyp)

    voted = vote(wtn, primary.model_id, min_agreement=min_agreement)
    voted, ts_flags = reconcile_timestamps(voted, primary, segment_interval)
    flags.extend(ts_flags)

    report = repetition_filter(
        [w.normalized for w in voted], n=rep_n, count_threshold=rep_count_threshold
    )
    if report.discarded:
        flags.append("repetition_discarded")
        return EnsembleResult(words=[], repetition=report, flags=flags)
    return EnsembleResult(words=voted, repetition=report, flags=flags)


def ensemble_transcribe(
    segment_audio: AudioBuffer,
    backends: Sequence,
    min_agreement: int = 2,
    rep_n: int = DEFAULT_NGRAM_N,
    rep_count_threshold: int = DEFAULT_NGRAM_COUNT,
    segment_interval: Optional[TimeInterval] = None,
) -> EnsembleResult:
    """Run the recognizer backends over one segment and ensemble them.

    Each backend exposes model_id, is_primary and transcribe(audio) ->
    Hypothesis. A failing backend degrades the ensemble (flagged) with
    min_agreement unchanged; if the primary fails, the surviving backend
    with the lowest model id is promoted.
    """
    hypotheses: list[Hypothesis] = []
    failed: list[str] = []
    for backend in backends:
        try:
            hyp = backend.transcribe(segment_audio)
        except Exception:
            failed.append(backend.model_id)
            continue
        hypotheses.append(
            Hypothesis(model_id=backend.model_id, is_primary=backend.is_primary, words=hyp.words)
        )

    flags: list[str] = []
    if failed:
        flags.append("degraded_ensemble")
    if not hypotheses:
        flags.append("asr_failed")
        return EnsembleResult(words=[], repetition=None, flags=flags)
    if not any(h.is_primary for h in hypotheses):
        promoted = min(hypotheses, key=lambda h: h.model_id)
        promoted.is_primary = True
        flags.append("primary_promoted")

    result = ensemble_hypotheses(
        hypotheses,
        min_agreement=min_agreement,
        rep_n=rep_n,
        rep_count_threshold=rep_count_threshold,
        segment_interval=segment_interval,
    )
    result.flags = flags + result.flags
    return result
