"""Controlled two-speaker overlap mixtures for separation evaluation.

Given two silence-trimmed sources, the second is offset so that exactly
the requested fraction of the shorter source overlaps the first, and
scaled so the power ratio over the overlap region hits the requested SIR.
The exact ground-truth timeline comes back with the mixture so scoring
never depends on a diarizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from duplexprep.audio import AudioBuffer


@dataclass(frozen=True)
class MixtureSpec:
    sir_db: float
    overlap_ratio: float
    t_start: float
    t1: float
    t2: float
    t_end: float

    @property
    def overlap_duration_s(self) -> float:
        return self.t2 - self.t1


@dataclass
class MixtureResult:
    mixture: AudioBuffer
    spec: MixtureSpec
    # Per-speaker clean tracks on the full mixture timeline (silence
    # outside each speaker's interval), already SIR-scaled.
    track1: AudioBuffer
    track2: AudioBuffer
    interferer_gain: float


def synth_overlap_mixture(
    s1: AudioBuffer, s2: AudioBuffer, sir_db: float, overlap_ratio: float
) -> MixtureResult:
    """Mix s1 and s2 with a target SIR and overlap ratio.

    Speaker 1 occupies [t_start, t2]; speaker 2 is delayed so its first
    overlap_ratio * min(dur1, dur2) seconds coincide with the tail of
    speaker 1, occupying [t1, t_end]. SIR is defined over [t1, t2]:
    10*log10(P_s1 / P_s2) with s2 scaled to achieve it.
    """
    if not (0.0 < overlap_ratio <= 1.0):
        raise ValueError(f"overlap_ratio must lie in (0, 1], got {overlap_ratio}")
    if s1.sample_rate_hz != s2.sample_rate_hz:
        raise ValueError("sources must share a sample rate")
    if s1.channel_count != 1 or s2.channel_count != 1:
        raise ValueError("sources must be mono")

    rate = s1.sample_rate_hz
    n1, n2 = len(s1.samples), len(s2.samples)
    if n1 == 0 or n2 == 0:
        raise ValueError("sources must be non-empty")

    n_overlap = int(round(overlap_ratio * min(n1, n2)))
    n_overlap = max(n_overlap, 1)
    offset = n1 - n_overlap  # s2 start, in samples
    total = offset + n2

    x1 = s1.samples
    x2 = s2.samples
    p1 = float(np.mean(np.square(x1[offset:n1])))
    p2 = float(np.mean(np.square(x2[:n_overlap])))
    if p1 == 0.0 or p2 == 0.0:
        raise ValueError("sources are silent over the overlap region")
    gain = float(np.sqrt(p1 / (p2 * 10.0 ** (sir_db / 10.0))))

    track1 = np.zeros(total)
    track1[:n1] = x1
    track2 = np.zeros(total)
    track2[offset:] = gain * x2

    spec = MixtureSpec(
        sir_db=sir_db,
        overlap_ratio=overlap_ratio,
        t_start=0.0,
        t1=offset / rate,
        t2=n1 / rate,
        t_end=total / rate,
    )
    return MixtureResult(
        mixture=AudioBuffer(track1 + track2, rate, 1),
        spec=spec,
        track1=AudioBuffer(track1, rate, 1),
        track2=AudioBuffer(track2, rate, 1),
        interferer_gain=gain,
    )
