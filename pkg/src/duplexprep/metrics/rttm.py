"""RTTM reading and writing.

Space-separated SPEAKER lines: type, recording_id, channel, onset,
duration, then speaker in field 8. Extra or missing trailing columns are
tolerated; non-SPEAKER lines are skipped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from duplexprep.timeline import TimeInterval


@dataclass(frozen=True)
class RttmSegment:
    recording_id: str
    speaker_id: str
    interval: TimeInterval


def parse_rttm(text: str) -> list[RttmSegment]:
    segments = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith(";"):
            continue
        fields = line.split()
        if fields[0] != "SPEAKER":
            continue
        if len(fields) < 8:
            raise ValueError(f"RTTM line {lineno}: expected >= 8 fields, got {len(fields)}")
        onset = float(fields[3])
        duration = float(fields[4])
        segments.append(
            RttmSegment(
                recording_id=fields[1],
                speaker_id=fields[7],
                interval=TimeInterval(onset, onset + duration),
            )
        )
    return segments


def load_rttm(path) -> list[RttmSegment]:
    with open(path, "r", encoding="utf-8") as f:
        return parse_rttm(f.read())


def format_rttm(segments: Iterable[RttmSegment]) -> str:
    lines = []
    for seg in segments:
        lines.append(
            "SPEAKER {rec} 1 {onset:.3f} {dur:.3f} <NA> <NA> {spk} <NA> <NA>".format(
                rec=seg.recording_id,
                onset=seg.interval.start_s,
                dur=seg.interval.duration_s,
                spk=seg.speaker_id,
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")


def dump_rttm(segments: Iterable[RttmSegment], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_rttm(segments))
