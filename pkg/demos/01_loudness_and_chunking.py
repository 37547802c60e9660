"""
Loudness standardization and silence-aware chunking
===================================================

Builds a synthetic recording, normalizes it to -20 dBFS, runs the
energy VAD over it and shows where the chunker would cut.
"""

import numpy as np

from duplexprep.audio import AudioBuffer, measure_dbfs, normalize_loudness, resample, to_mono
from duplexprep.vad import chunk_regions, detect_regions, speech_probs_from_energy

rate = 16000

# a quiet 48 kHz stereo recording: speech bursts with silences between
source_rate = 48000
bursts = []
for k in range(6):
    t = np.arange(source_rate * 2) / source_rate
    bursts.append(0.02 * np.sin(2 * np.pi * (180 + 40 * k) * t))
    bursts.append(np.zeros(source_rate))
mono_signal = np.concatenate(bursts)
stereo = np.repeat(mono_signal, 2)
raw = AudioBuffer(stereo, source_rate, channel_count=2)

# downmix, resample, and normalize
mono = to_mono(raw)
mono16k = resample(mono, rate)
print(f"before: {measure_dbfs(mono16k).dbfs:.2f} dBFS")
normalized, report = normalize_loudness(mono16k, target_dbfs=-20.0)
print(f"after:  {report.dbfs:.2f} dBFS  (clipped samples: {report.clipped_sample_count})")

# VAD probabilities from the amplitude envelope, then hysteresis regions
vad = speech_probs_from_energy(normalized.samples, rate)
regions = detect_regions(vad)
print(f"\nspeech regions ({len(regions)}):")
for r in regions:
    print(f"  [{r.start_s:7.2f}, {r.end_s:7.2f}]  {r.duration_s:5.2f}s")

# chunks stay under the cap and cut only in silence; here the cap is
# lowered to 8 s so the demo recording actually gets cut
chunks = chunk_regions(regions, max_chunk_s=8.0)
print(f"\nchunks (max 8 s for the demo):")
for c in chunks:
    forced = " FORCED" if c.forced_cut else ""
    print(f"  {c.chunk_id}  [{c.interval.start_s:7.2f}, {c.interval.end_s:7.2f}]{forced}")
