"""Model adapters, one per task kind.

The defaults are deliberately small signal-processing stand-ins: they
produce protocol-shape-correct output on CPU with no weights, which is
all the conformance contract asserts. Production deployments swap them
out per kind via dotted-path factories in the worker config, e.g.

    {"models": {"asr": {"factory": "my_models.whisper:build",
                        "params": {"size": "large-v3"}}}}

where the factory returns an object with the same `run(...)` signature
as the default adapter for that kind.
"""

from __future__ import annotations

import importlib

import numpy as np

from inference_worker.protocol import Audio, pcm16_b64_encode

EMBED_DIM = 16


def _frame_rms(samples: np.ndarray, hop: int) -> np.ndarray:
    n_frames = int(np.ceil(len(samples) / hop)) if len(samples) else 0
    padded = np.zeros(n_frames * hop)
    padded[: len(samples)] = samples
    frames = padded.reshape(n_frames, hop) if n_frames else padded.reshape(0, hop)
    return np.sqrt(np.mean(np.square(frames), axis=1))


def _active_regions(samples: np.ndarray, rate: int, hop_s: float = 0.032,
                    floor: float = 0.01, min_gap_frames: int = 8):
    """(start_s, end_s) spans where the envelope sits above the floor."""
    hop = max(int(hop_s * rate), 1)
    rms = _frame_rms(samples, hop)
    active = rms >= floor
    regions = []
    start = None
    gap = 0
    for i, on in enumerate(active):
        if on:
            if start is None:
                start = i
            gap = 0
        elif start is not None:
            gap += 1
            if gap >= min_gap_frames:
                regions.append((start * hop / rate, (i - gap + 1) * hop / rate))
                start = None
                gap = 0
    if start is not None:
        regions.append((start * hop / rate, len(active) * hop / rate))
    return [(a, b) for a, b in regions if b - a > 0.05]


class EnergyVad:
    """Envelope-threshold VAD."""

    hop_s = 0.032

    def run(self, audio: Audio) -> dict:
        hop = max(int(self.hop_s * audio.sample_rate_hz), 1)
        rms = _frame_rms(audio.samples, hop)
        probs = np.clip(rms / 0.01, 0.0, 1.0)
        return {"hop_s": hop / audio.sample_rate_hz,
                "probs": [round(float(p), 6) for p in probs]}


class CentroidDiarizer:
    """Energy segmentation + spectral-centroid two-way speaker labels."""

    def run(self, audio: Audio) -> dict:
        regions = _active_regions(audio.samples, audio.sample_rate_hz)
        if not regions:
            return {"segments": []}
        centroids = []
        for a, b in regions:
            piece = audio.samples[int(a * audio.sample_rate_hz): int(b * audio.sample_rate_hz)]
            spectrum = np.abs(np.fft.rfft(piece))
            freqs = np.fft.rfftfreq(len(piece), 1 / audio.sample_rate_hz)
            total = float(np.sum(spectrum))
            centroids.append(float(np.sum(freqs * spectrum) / total) if total > 0 else 0.0)
        pivot = float(np.median(centroids))
        segments = []
        for (a, b), c in zip(regions, centroids):
            spk = "spk0" if c <= pivot else "spk1"
            segments.append({"speaker_id": spk, "start_s": round(a, 6), "end_s": round(b, 6)})
        return {"segments": segments}


class BandSplitSeparator:
    """Two candidates from complementary FFT band masks around 1 kHz."""

    split_hz = 1000.0

    def run(self, audio: Audio) -> dict:
        spectrum = np.fft.rfft(audio.samples)
        freqs = np.fft.rfftfreq(len(audio.samples), 1 / audio.sample_rate_hz)
        low = spectrum.copy()
        low[freqs > self.split_hz] = 0
        high = spectrum - low
        n = len(audio.samples)
        cand1 = np.fft.irfft(low, n=n)
        cand2 = np.fft.irfft(high, n=n)
        return {
            "sample_rate_hz": audio.sample_rate_hz,
            "cand1_pcm16_b64": pcm16_b64_encode(cand1),
            "cand2_pcm16_b64": pcm16_b64_encode(cand2),
        }


class BandEnergyEmbedder:
    """Unit vector of log band energies; crude but speaker-sensitive."""

    def run(self, audio: Audio) -> dict:
        spectrum = np.abs(np.fft.rfft(audio.samples)) ** 2
        if not np.any(spectrum):
            vec = np.ones(EMBED_DIM)
        else:
            bands = np.array_split(spectrum, EMBED_DIM)
            vec = np.log1p(np.array([float(np.sum(b)) for b in bands]))
            if not np.any(vec):
                vec = np.ones(EMBED_DIM)
        vec = vec / np.linalg.norm(vec)
        return {"vector": [round(float(x), 9) for x in vec]}


class FlatnessTagger:
    """Spectral flatness as a stand-in music probability."""

    def run(self, audio: Audio) -> dict:
        spectrum = np.abs(np.fft.rfft(audio.samples)) ** 2 + 1e-12
        flatness = float(np.exp(np.mean(np.log(spectrum))) / np.mean(spectrum))
        return {"music_prob": round(min(max(flatness, 0.0), 1.0), 6)}


class BandpassExtractor:
    """Keep the speech band (150-4000 Hz)."""

    def run(self, audio: Audio) -> dict:
        spectrum = np.fft.rfft(audio.samples)
        freqs = np.fft.rfftfreq(len(audio.samples), 1 / audio.sample_rate_hz)
        spectrum[(freqs < 150) | (freqs > 4000)] = 0
        out = np.fft.irfft(spectrum, n=len(audio.samples))
        return {"sample_rate_hz": audio.sample_rate_hz, "pcm16_b64": pcm16_b64_encode(out)}


class GateDenoiser:
    """Attenuate frames below an energy gate."""

    def run(self, audio: Audio) -> dict:
        hop = max(int(0.02 * audio.sample_rate_hz), 1)
        out = audio.samples.copy()
        rms = _frame_rms(out, hop)
        gate = max(float(np.median(rms)) * 0.2, 1e-4)
        for i, level in enumerate(rms):
            if level < gate:
                out[i * hop: (i + 1) * hop] *= 0.1
        return {"sample_rate_hz": audio.sample_rate_hz, "pcm16_b64": pcm16_b64_encode(out)}


class BurstAsr:
    """Pseudo-recognizer: one token per detected energy burst.

    Word content is meaningless by design; only timestamps and shape
    matter at conformance level.
    """

    def __init__(self, model_id: str = "burst"):
        self.model_id = model_id

    def run(self, audio: Audio, model_id: str | None = None) -> dict:
        words = []
        for k, (a, b) in enumerate(_active_regions(audio.samples, audio.sample_rate_hz)):
            words.append({"surface": f"speech{k}", "start_s": round(a, 6),
                          "end_s": round(b, 6)})
        return {"model_id": model_id or self.model_id, "words": words}


class StatsCaptioner:
    def run(self, audio: Audio, context_count: int = 0) -> dict:
        bursts = len(_active_regions(audio.samples, audio.sample_rate_hz))
        return {
            "text": f"Audio of {audio.duration_s:.1f}s with {bursts} voiced "
                    f"region(s) and {context_count} context clip(s)."
        }


DEFAULT_FACTORIES = {
    "vad": EnergyVad,
    "diarize": CentroidDiarizer,
    "separate2": BandSplitSeparator,
    "embed": BandEnergyEmbedder,
    "tag_audio": FlatnessTagger,
    "extract_vocals": BandpassExtractor,
    "denoise": GateDenoiser,
    "asr": BurstAsr,
    "caption": StatsCaptioner,
}


def load_model(kind: str, spec: dict | None, device: str = "cpu"):
    """Instantiate the adapter for one task kind.

    spec == None selects the built-in default. Otherwise spec["factory"]
    is "module.path:callable", called with (device=..., **spec["params"]).
    Raises on failure; the worker then refuses the handshake for the kind.
    """
    if not spec:
        return DEFAULT_FACTORIES[kind]()
    target = spec["factory"]
    module_name, _, attr = target.partition(":")
    if not attr:
        raise ValueError(f"{kind}: factory must look like module:callable, got {target!r}")
    module = importlib.import_module(module_name)
    factory = getattr(module, attr)
    return factory(device=device, **spec.get("params", {}))
