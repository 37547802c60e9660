"""
Diarization scoring: DER, JER and the restricted variants
=========================================================

Scores a jittered hypothesis against a reference timeline, with the
boundary collar, the short-segment restriction, and the turn-taking
restriction, plus the controlled-mixture synthesis used for separation
benchmarks.
"""

import numpy as np

from duplexprep.audio import AudioBuffer
from duplexprep.metrics import (
    der,
    der_short,
    der_turn,
    jer,
    rtf_report,
    synth_overlap_mixture,
)
from duplexprep.metrics.rtf import StageTiming
from duplexprep.metrics.rttm import RttmSegment
from duplexprep.timeline import TimeInterval


def seg(spk, start, end):
    return RttmSegment("demo", spk, TimeInterval(start, end))


# alternating two-speaker reference with one short backchannel
ref = [
    seg("alice", 0.0, 4.0),
    seg("bob", 4.3, 8.0),
    seg("alice", 8.4, 12.0),
    seg("bob", 6.0, 6.4),   # short backchannel inside alice's floor
    seg("bob", 12.3, 16.0),
]

# hypothesis: different label set, boundaries off by up to 300 ms,
# and it misses the backchannel entirely
hyp = [
    seg("spk1", 0.1, 4.2),
    seg("spk2", 4.5, 7.9),
    seg("spk1", 8.6, 12.1),
    seg("spk2", 12.5, 15.8),
]

breakdown = der(ref, hyp, collar_s=0.25)
print(f"DER  = {100 * breakdown.der:5.2f}%  (missed {breakdown.missed_s:.2f}s, "
      f"false alarm {breakdown.false_alarm_s:.2f}s, "
      f"confusion {breakdown.confusion_s:.2f}s)")
print(f"JER  = {100 * jer(ref, hyp):5.2f}%")
print(f"speaker mapping: {breakdown.speaker_mapping}")

short = der_short(ref, hyp, max_dur_s=1.0)
print(f"\nDER over segments <= 1.0s: "
      f"{'n/a' if short.der is None else f'{100 * short.der:5.2f}%'}"
      f"  (the missed backchannel dominates)")

turn = der_turn(ref, hyp, window_s=0.5, max_gap_s=0.5)
print(f"DER around speaker changes: "
      f"{'n/a' if turn.der is None else f'{100 * turn.der:5.2f}%'}")

# the mixture synthesizer behind the separation benchmark grid
rng = np.random.default_rng(1)
s1 = AudioBuffer(0.3 * rng.standard_normal(16000 * 5), 16000, 1)
s2 = AudioBuffer(0.3 * rng.standard_normal(16000 * 4), 16000, 1)
mix = synth_overlap_mixture(s1, s2, sir_db=5.0, overlap_ratio=0.5)
print(f"\nsynthesized mixture: overlap {mix.spec.overlap_duration_s:.2f}s "
      f"on [{mix.spec.t1:.2f}, {mix.spec.t2:.2f}], interferer gain "
      f"{mix.interferer_gain:.3f}")

# per-stage throughput accounting
report = rtf_report(
    [StageTiming("vad_diarize", 1.91), StageTiming("separation", 0.15),
     StageTiming("asr_ensemble", 13.91), StageTiming("denoise", 4.99)],
    audio_duration_s=120.0,
)
print("\n" + report.render())
