"""Deterministic mock backends driven by fixture sidecars.

Every mock is a pure function of its request given the fixture directory
and seed, so pipeline output is bit-identical across runs and worker
counts. Sidecar ground truth ({stem}.truth.json plus clean per-speaker
track wavs) supplies diarization, transcripts, music probabilities and
separation sources; the VAD mock thresholds the amplitude envelope of
the audio it is actually sent. Reported timing_s is simulated from audio
duration, never wall clock, to keep manifests stable.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from duplexprep.audio import AudioBuffer, read_wav
from duplexprep.backend.protocol import (
    TaskRequest,
    pcm16_b64_encode,
    resolve_audio_payload,
)
from duplexprep.timeline import TimeInterval
from duplexprep.vad import speech_probs_from_energy

DEFAULT_ASR_MODELS = ("asr_alpha", "asr_beta", "asr_gamma")

EMBED_DIM = 32

# simulated per-kind processing cost, seconds per second of audio
SIMULATED_RTF = {
    "vad": 0.0080,
    "diarize": 0.0079,
    "separate2": 0.0013,
    "embed": 0.0010,
    "tag_audio": 0.0005,
    "extract_vocals": 0.0200,
    "denoise": 0.0416,
    "asr": 0.0386,
    "caption": 0.0050,
}

_NOISE_VOCAB = (
    "um uh hmm like just very sort kind bit lot thing stuff way time "
    "day year part side end start middle"
).split()


def _stable_u32(*parts) -> int:
    digest = hashlib.md5(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:4], "little")


class MockError(RuntimeError):
    pass


class MockWorker:
    """In-process deterministic backend covering every task kind."""

    def __init__(
        self,
        fixture_dir,
        seed: int = 1234,
        asr_noise_rate: float = 0.0,
        hallucination_rate: dict | None = None,
        asr_model_ids=DEFAULT_ASR_MODELS,
        task_kinds=None,
        name: str = "mock",
    ):
        self.fixture_dir = Path(fixture_dir)
        self.seed = seed
        self.asr_noise_rate = asr_noise_rate
        self.hallucination_rate = hallucination_rate or {}
        self.asr_model_ids = list(asr_model_ids)
        self.name = name
        kinds = task_kinds or list(SIMULATED_RTF)
        self.capabilities = {
            kind: (self.asr_model_ids if kind == "asr" else []) for kind in kinds
        }
        self._truth_cache: dict = {}
        self._track_cache: dict = {}

    # -- sidecar access ------------------------------------------------

    def _truth(self, source_id: str) -> dict:
        if source_id not in self._truth_cache:
            path = self.fixture_dir / f"{source_id}.truth.json"
            if not path.exists():
                raise MockError(f"missing sidecar: {path}")
            self._truth_cache[source_id] = json.loads(path.read_text())
        return self._truth_cache[source_id]

    def _track(self, source_id: str, speaker_id: str) -> AudioBuffer:
        key = (source_id, speaker_id)
        if key not in self._track_cache:
            truth = self._truth(source_id)
            rel = truth["tracks"].get(speaker_id)
            if rel is None:
                raise MockError(f"no track for {speaker_id} in {source_id}")
            self._track_cache[key] = read_wav(self.fixture_dir / rel)
        return self._track_cache[key]

    def _interval(self, req: TaskRequest) -> TimeInterval:
        if req.params.get("interval"):
            a, b = req.params["interval"]
            return TimeInterval(a, b)
        if req.audio and req.audio.get("kind") == "file":
            a, b = req.audio["interval"]
            return TimeInterval(a, b)
        raise MockError(f"{req.task_kind} request carries no interval")

    # -- dispatch ------------------------------------------------------

    def handle_request(self, req: TaskRequest):
        handler = getattr(self, f"_do_{req.task_kind}", None)
        if handler is None or req.task_kind not in self.capabilities:
            raise MockError(f"unsupported task kind {req.task_kind}")
        payload = handler(req)
        timing = self._simulated_timing(req)
        return payload, timing

    def _simulated_timing(self, req: TaskRequest) -> float:
        if req.audio is None:
            duration = 0.1
        elif req.audio["kind"] == "inline":
            n = len(req.audio["pcm16_b64"]) * 3 // 4 // 2
            duration = n / req.audio["sample_rate_hz"]
        else:
            a, b = req.audio["interval"]
            duration = b - a
        return round(duration * SIMULATED_RTF[req.task_kind], 6)

    # -- task kinds ----------------------------------------------------

    def _do_vad(self, req: TaskRequest) -> dict:
        audio = resolve_audio_payload(req.audio)
        series = speech_probs_from_energy(audio.samples, audio.sample_rate_hz)
        return {"hop_s": series.hop_s, "probs": [round(float(p), 6) for p in series.probs]}

    def _do_diarize(self, req: TaskRequest) -> dict:
        truth = self._truth(req.params["source_id"])
        iv = self._interval(req)
        segments = []
        for seg in truth["segments"]:
            lo = max(seg["start_s"], iv.start_s)
            hi = min(seg["end_s"], iv.end_s)
            if hi - lo <= 0.01:
                continue
            segments.append(
                {
                    "speaker_id": seg["speaker_id"],
                    "start_s": round(lo - iv.start_s, 6),
                    "end_s": round(hi - iv.start_s, 6),
                }
            )
        return {"segments": segments}

    def _do_separate2(self, req: TaskRequest) -> dict:
        source_id = req.params["source_id"]
        truth = self._truth(source_id)
        iv = self._interval(req)
        # the two speakers actually present: loudest tracks over the span
        energies = {
            spk: float(np.sum(np.square(
                self._track(source_id, spk).slice_interval(iv).samples
            )))
            for spk in truth["speakers"]
        }
        speakers = sorted(energies, key=lambda s: (-energies[s], s))[:2]
        # deterministic candidate order, varied per request geometry
        if _stable_u32(self.seed, source_id, f"{iv.start_s:.6f}", f"{iv.end_s:.6f}") % 2:
            speakers = list(reversed(speakers))
        slices = [
            self._track(source_id, spk).slice_interval(iv).samples for spk in speakers
        ]
        return {
            "sample_rate_hz": truth["sample_rate_hz"],
            "cand1_pcm16_b64": pcm16_b64_encode(slices[0]),
            "cand2_pcm16_b64": pcm16_b64_encode(slices[1]),
        }

    def speaker_vector(self, speaker_id: str) -> np.ndarray:
        rng = np.random.default_rng(_stable_u32(self.seed, "emb", speaker_id))
        v = rng.standard_normal(EMBED_DIM)
        return v / np.linalg.norm(v)

    def _do_embed(self, req: TaskRequest) -> dict:
        source_id = req.params.get("source_id")
        intervals = req.params.get("intervals")
        audio = resolve_audio_payload(req.audio)
        if not source_id or not intervals:
            raise MockError("embed request needs source_id and intervals params")
        truth = self._truth(source_id)
        best_spk, best_corr = None, -np.inf
        for spk in truth["speakers"]:
            track = self._track(source_id, spk)
            ref = np.concatenate(
                [track.slice_interval(TimeInterval(a, b)).samples for a, b in intervals]
            )
            n = min(len(ref), len(audio.samples))
            if n == 0:
                continue
            denom = np.linalg.norm(ref[:n]) * np.linalg.norm(audio.samples[:n])
            corr = float(np.dot(ref[:n], audio.samples[:n]) / denom) if denom > 0 else 0.0
            if corr > best_corr:
                best_corr, best_spk = corr, spk
        if best_spk is None:
            raise MockError("embed could not match any speaker track")
        return {"vector": [float(x) for x in self.speaker_vector(best_spk)]}

    def _do_tag_audio(self, req: TaskRequest) -> dict:
        truth = self._truth(req.params["source_id"])
        probs = truth.get("music_prob", {})
        default = float(probs.get("default", 0.0))
        seg_id = req.params.get("segment_id", "")
        if seg_id in probs:
            return {"music_prob": float(probs[seg_id])}
        # callers tag by audio span, not by sidecar id: answer for the
        # truth segment(s) the requested interval covers
        try:
            iv = self._interval(req)
        except MockError:
            return {"music_prob": default}
        best = default
        for seg in truth["segments"]:
            lo = max(seg["start_s"], iv.start_s)
            hi = min(seg["end_s"], iv.end_s)
            if hi - lo > 0.5 * (seg["end_s"] - seg["start_s"]):
                best = max(best, float(probs.get(seg["segment_id"], default)))
        return {"music_prob": best}

    def _do_extract_vocals(self, req: TaskRequest) -> dict:
        source_id = req.params["source_id"]
        truth = self._truth(source_id)
        iv = self._interval(req)
        total = None
        for spk in truth["speakers"]:
            part = self._track(source_id, spk).slice_interval(iv).samples
            total = part if total is None else total + part
        return {
            "sample_rate_hz": truth["sample_rate_hz"],
            "pcm16_b64": pcm16_b64_encode(np.clip(total, -1.0, 1.0)),
        }

    def _do_denoise(self, req: TaskRequest) -> dict:
        audio = resolve_audio_payload(req.audio)
        return {
            "sample_rate_hz": audio.sample_rate_hz,
            "pcm16_b64": pcm16_b64_encode(audio.samples),
        }

    def _do_asr(self, req: TaskRequest) -> dict:
        source_id = req.params["source_id"]
        model_id = req.params.get("model_id", self.asr_model_ids[0])
        speaker_id = req.params.get("speaker_id")
        truth = self._truth(source_id)
        iv = self._interval(req)
        rng = np.random.default_rng(
            _stable_u32(
                self.seed, "asr", model_id, source_id,
                f"{iv.start_s:.4f}", f"{iv.end_s:.4f}", speaker_id or "*",
            )
        )
        halluc = float(self.hallucination_rate.get(model_id, 0.0))
        if halluc and rng.random() < halluc:
            words = []
            t = 0.1
            for _ in range(40):
                words.append({"surface": "Yeah.", "start_s": round(t, 3),
                              "end_s": round(t + 0.2, 3)})
                t += 0.25
            return {"model_id": model_id, "words": words}
        words = []
        prev_end = -1.0
        for w in sorted(truth["words"], key=lambda x: (x["start_s"], x["end_s"])):
            if speaker_id and w["speaker_id"] != speaker_id:
                continue
            if w["start_s"] < iv.start_s - 1e-6 or w["end_s"] > iv.end_s + 1e-6:
                continue
            if w["start_s"] < prev_end:  # overlapped-speaker words interleave;
                continue                 # a recognizer emits one monotone stream
            prev_end = w["end_s"]
            surface = w["surface"]
            if self.asr_noise_rate and rng.random() < self.asr_noise_rate:
                surface = _NOISE_VOCAB[int(rng.integers(0, len(_NOISE_VOCAB)))]
            words.append(
                {
                    "surface": surface,
                    "start_s": round(w["start_s"] - iv.start_s, 6),
                    "end_s": round(w["end_s"] - iv.start_s, 6),
                }
            )
        return {"model_id": model_id, "words": words}

    def _do_caption(self, req: TaskRequest) -> dict:
        context = req.params.get("context", [])
        if req.audio is None:
            raise MockError("caption request needs audio")
        audio = resolve_audio_payload(req.audio)
        return {
            "text": f"Spoken segment of {audio.duration_s:.1f}s with "
                    f"{len(context)} context clip(s)."
        }
