"""Synthetic two-speaker fixtures with exact ground truth.

Desk-scale stand-ins for real recordings: harmonic "voices" with
distinct fundamentals, arranged into conversations with partial overlaps
and a backchannel, plus optional background music over a known region.
Each fixture ships a sidecar with the segment/word/music truth and the
clean per-speaker tracks, which is everything the mock backends need to
behave like well-trained models.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from duplexprep.audio import AudioBuffer, write_wav
from duplexprep.metrics.mixture import synth_overlap_mixture
from duplexprep.metrics.rttm import RttmSegment, dump_rttm
from duplexprep.timeline import TimeInterval

RATE = 16000

SPEAKER_F0 = {0: 200.0, 1: 310.0}

_LEXICON = (
    "so well right okay sure thing that said more less here there "
    "going coming making taking point case idea plan story detail "
    "maybe really quite rather pretty fairly almost exactly roughly about"
).split()


def make_voice(duration_s: float, f0: float, seed: int, amp: float = 0.25) -> np.ndarray:
    """Harmonic stack with amplitude modulation; crudely voice-shaped."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * RATE))
    t = np.arange(n) / RATE
    x = np.zeros(n)
    for k in range(1, 6):
        phase = rng.uniform(0, 2 * np.pi)
        x += (1.0 / k) * np.sin(2 * np.pi * f0 * k * t + phase)
    # syllable-rate AM keeps the envelope speech-like
    am = 0.6 + 0.4 * np.square(np.sin(2 * np.pi * rng.uniform(2.0, 4.0) * t))
    x *= am
    x *= amp / np.max(np.abs(x))
    return x


def _segment_words(rng, seg_start: float, seg_end: float, speaker_id: str) -> list[dict]:
    words = []
    t = seg_start + 0.05
    while t < seg_end - 0.2:
        dur = float(rng.uniform(0.15, 0.35))
        if t + dur > seg_end - 0.02:
            break
        words.append(
            {
                "surface": _LEXICON[int(rng.integers(0, len(_LEXICON)))],
                "start_s": round(t, 3),
                "end_s": round(t + dur, 3),
                "speaker_id": speaker_id,
            }
        )
        t += dur + float(rng.uniform(0.02, 0.12))
    return words


def build_conversation_fixture(
    out_dir: Path,
    stem: str,
    seed: int,
    n_turns: int = 10,
    with_music: bool = False,
) -> Path:
    """Two-speaker conversation with overlaps; writes wav + sidecars.

    Returns the mixture wav path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    segments = []
    t = 0.6
    speaker = 0
    for i in range(n_turns):
        dur = float(rng.uniform(1.2, 5.5))
        start = t
        if i > 0 and rng.random() < 0.35:
            # start before the previous turn ends: partial overlap
            prev = segments[-1]
            start = max(prev["end_s"] - float(rng.uniform(0.3, 0.9)), prev["start_s"] + 0.3)
        end = start + dur
        segments.append(
            {
                "segment_id": f"seg{i:03d}",
                "speaker_id": f"s{speaker}",
                "start_s": round(start, 3),
                "end_s": round(end, 3),
            }
        )
        t = end + float(rng.uniform(0.35, 1.1))
        speaker = 1 - speaker

    # one backchannel: short utterance fully inside the longest turn
    longest = max(segments, key=lambda s: s["end_s"] - s["start_s"])
    if longest["end_s"] - longest["start_s"] > 2.0:
        other = "s1" if longest["speaker_id"] == "s0" else "s0"
        bc_start = round(longest["start_s"] + (longest["end_s"] - longest["start_s"]) / 2, 3)
        segments.append(
            {
                "segment_id": f"seg{len(segments):03d}",
                "speaker_id": other,
                "start_s": bc_start,
                "end_s": round(bc_start + 0.45, 3),
            }
        )
    segments.sort(key=lambda s: s["start_s"])

    total_s = max(s["end_s"] for s in segments) + 0.8
    n = int(round(total_s * RATE))
    tracks = {"s0": np.zeros(n), "s1": np.zeros(n)}
    words = []
    for i, seg in enumerate(segments):
        f0 = SPEAKER_F0[int(seg["speaker_id"][1])]
        dur = seg["end_s"] - seg["start_s"]
        voice = make_voice(dur, f0, seed=seed * 1000 + i)
        a = int(round(seg["start_s"] * RATE))
        tracks[seg["speaker_id"]][a: a + len(voice)] += voice
        words.extend(_segment_words(rng, seg["start_s"], seg["end_s"], seg["speaker_id"]))
    words.sort(key=lambda w: w["start_s"])

    music = np.zeros(n)
    music_prob = {"default": 0.02}
    if with_music:
        # music bed under the middle third of the recording
        m0, m1 = int(n * 0.35), int(n * 0.65)
        tt = np.arange(m1 - m0) / RATE
        bed = 0.05 * (np.sin(2 * np.pi * 92.5 * tt) + 0.6 * np.sin(2 * np.pi * 138.6 * tt))
        music[m0:m1] = bed
        for seg in segments:
            mid = (seg["start_s"] + seg["end_s"]) / 2
            if m0 / RATE <= mid <= m1 / RATE:
                music_prob[seg["segment_id"]] = 0.85

    mixture = tracks["s0"] + tracks["s1"] + music
    peak = np.max(np.abs(mixture))
    if peak > 0.99:  # headroom so standardization never clips
        scale = 0.99 / peak
        mixture *= scale
        tracks["s0"] *= scale
        tracks["s1"] *= scale

    wav_path = out_dir / f"{stem}.wav"
    write_wav(wav_path, AudioBuffer(mixture, RATE, 1))
    # clean tracks live apart from the mixtures so input globs skip them
    (out_dir / "tracks").mkdir(exist_ok=True)
    for spk, track in tracks.items():
        write_wav(out_dir / "tracks" / f"{stem}.{spk}.wav", AudioBuffer(track, RATE, 1))
    dump_rttm(
        [
            RttmSegment(stem, s["speaker_id"], TimeInterval(s["start_s"], s["end_s"]))
            for s in segments
        ],
        out_dir / f"{stem}.rttm",
    )
    truth = {
        "source_id": stem,
        "sample_rate_hz": RATE,
        "duration_s": round(total_s, 3),
        "speakers": ["s0", "s1"],
        "segments": segments,
        "words": words,
        "music_prob": music_prob,
        "tracks": {spk: f"tracks/{stem}.{spk}.wav" for spk in tracks},
    }
    (out_dir / f"{stem}.truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True))
    return wav_path


def build_overlap_grid(
    out_dir: Path,
    sirs=(0.0, 5.0, 10.0),
    ratios=(0.2, 0.5, 1.0),
    variants: int = 3,
    seed: int = 7,
    enroll_s: float = 2.5,
) -> list[Path]:
    """Controlled overlap mixtures across the SIR x overlap-ratio grid.

    Each fixture opens with one clean enrollment stretch per speaker, so
    reference embeddings stay available even at full overlap (where the
    shorter source has no clean audio inside the overlapped pair).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    idx = 0
    for sir in sirs:
        for ratio in ratios:
            for v in range(variants):
                rng = np.random.default_rng(seed * 10000 + idx)
                d1 = float(rng.uniform(3.5, 5.0))
                d2 = float(rng.uniform(3.0, 4.5))
                s1 = AudioBuffer(make_voice(d1, SPEAKER_F0[0], seed * 100 + idx * 2), RATE, 1)
                s2 = AudioBuffer(make_voice(d2, SPEAKER_F0[1], seed * 100 + idx * 2 + 1), RATE, 1)
                mix = synth_overlap_mixture(s1, s2, sir_db=sir, overlap_ratio=ratio)
                spec = mix.spec

                e1 = make_voice(enroll_s, SPEAKER_F0[0], seed * 300 + idx * 2)
                e2 = make_voice(enroll_s, SPEAKER_F0[1], seed * 300 + idx * 2 + 1)
                e1_start, gap = 0.2, 0.5
                e2_start = e1_start + enroll_s + gap
                pair_start = e2_start + enroll_s + gap
                total_s = pair_start + spec.t_end + 0.3
                n = int(round(total_s * RATE))

                tracks = {"s0": np.zeros(n), "s1": np.zeros(n)}
                tracks["s0"][int(e1_start * RATE): int(e1_start * RATE) + len(e1)] = e1
                tracks["s1"][int(e2_start * RATE): int(e2_start * RATE) + len(e2)] = e2
                p0 = int(round(pair_start * RATE))
                tracks["s0"][p0: p0 + len(mix.track1.samples)] += mix.track1.samples
                tracks["s1"][p0: p0 + len(mix.track2.samples)] += mix.track2.samples

                stem = f"ovl_sir{int(sir)}_rho{int(ratio * 100):03d}_{v}"
                write_wav(out_dir / f"{stem}.wav",
                          AudioBuffer(tracks["s0"] + tracks["s1"], RATE, 1))
                (out_dir / "tracks").mkdir(exist_ok=True)
                for spk, track in tracks.items():
                    write_wav(out_dir / "tracks" / f"{stem}.{spk}.wav",
                              AudioBuffer(track, RATE, 1))

                timeline = {
                    "sir_db": sir,
                    "overlap_ratio": ratio,
                    "t_start": round(pair_start + spec.t_start, 6),
                    "t1": round(pair_start + spec.t1, 6),
                    "t2": round(pair_start + spec.t2, 6),
                    "t_end": round(pair_start + spec.t_end, 6),
                }
                segments = [
                    {"segment_id": "seg000", "speaker_id": "s0",
                     "start_s": e1_start, "end_s": round(e1_start + enroll_s, 6)},
                    {"segment_id": "seg001", "speaker_id": "s1",
                     "start_s": e2_start, "end_s": round(e2_start + enroll_s, 6)},
                    {"segment_id": "seg002", "speaker_id": "s0",
                     "start_s": timeline["t_start"], "end_s": timeline["t2"]},
                    {"segment_id": "seg003", "speaker_id": "s1",
                     "start_s": timeline["t1"], "end_s": timeline["t_end"]},
                ]
                rng_w = np.random.default_rng(seed * 555 + idx)
                words = sorted(
                    [w for s in segments for w in _segment_words(
                        rng_w, s["start_s"], s["end_s"], s["speaker_id"])],
                    key=lambda w: w["start_s"],
                )
                truth = {
                    "source_id": stem,
                    "sample_rate_hz": RATE,
                    "duration_s": round(total_s, 6),
                    "speakers": ["s0", "s1"],
                    "segments": segments,
                    "words": words,
                    "music_prob": {"default": 0.0},
                    "tracks": {spk: f"tracks/{stem}.{spk}.wav" for spk in tracks},
                    "timeline": timeline,
                }
                (out_dir / f"{stem}.truth.json").write_text(
                    json.dumps(truth, indent=2, sort_keys=True)
                )
                dump_rttm(
                    [
                        RttmSegment(stem, s["speaker_id"],
                                    TimeInterval(s["start_s"], s["end_s"]))
                        for s in segments
                    ],
                    out_dir / f"{stem}.rttm",
                )
                paths.append(out_dir / f"{stem}.wav")
                idx += 1
    return paths
