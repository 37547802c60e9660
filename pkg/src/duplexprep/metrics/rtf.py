"""Real-time-factor accounting per pipeline stage."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class StageTiming:
    name: str
    processing_s: float


@dataclass
class RtfReport:
    stages: list  # (name, processing_s, rtf) triples
    audio_duration_s: float
    total_processing_s: float
    total_rtf: float

    def as_dict(self) -> dict:
        return {
            "audio_duration_s": self.audio_duration_s,
            "stages": [
                {"name": n, "processing_s": p, "rtf": r} for n, p, r in self.stages
            ],
            "total_processing_s": self.total_processing_s,
            "total_rtf": self.total_rtf,
        }

    def render(self) -> str:
        """Plain-text table: stage, processing time, RTF."""
        width = max([len("Stage")] + [len(n) for n, _, _ in self.stages] + [len("Total")])
        lines = [
            f"{'Stage':<{width}}  {'Processing Time (s)':>19}  {'RTF':>7}",
            f"{'Audio Duration':<{width}}  {self.audio_duration_s:>19.2f}  {'--':>7}",
        ]
        for name, proc, rtf in self.stages:
            lines.append(f"{name:<{width}}  {proc:>19.2f}  {rtf:>7.4f}")
        lines.append(
            f"{'Total':<{width}}  {self.total_processing_s:>19.2f}  {self.total_rtf:>7.4f}"
        )
        return "\n".join(lines)


def rtf_report(stage_timings: Sequence[StageTiming], audio_duration_s: float) -> RtfReport:
    """Per-stage and total RTF: processing seconds per second of audio."""
    if audio_duration_s <= 0:
        raise ValueError("audio_duration_s must be positive")
    stages = [
        (st.name, st.processing_s, st.processing_s / audio_duration_s)
        for st in stage_timings
    ]
    total = sum(st.processing_s for st in stage_timings)
    return RtfReport(
        stages=stages,
        audio_duration_s=audio_duration_s,
        total_processing_s=total,
        total_rtf=total / audio_duration_s,
    )
