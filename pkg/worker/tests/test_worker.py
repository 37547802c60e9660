import numpy as np
import pytest

from inference_worker.protocol import (
    PROTOCOL_VERSION,
    FrameError,
    decode_frame,
    encode_frame,
    error_frame,
    handshake_frame,
    pcm16_b64_decode,
    pcm16_b64_encode,
    response_frame,
)
from inference_worker.worker import ReferenceWorker, WorkerConfig


def tone(freq=300.0, duration_s=1.0, rate=16000, amp=0.3):
    t = np.arange(int(duration_s * rate)) / rate
    return amp * np.sin(2 * np.pi * freq * t)


def request(kind, samples, rate=16000, **params):
    return {
        "type": "request",
        "protocol_version": PROTOCOL_VERSION,
        "request_id": "r1",
        "task_kind": kind,
        "audio": {
            "kind": "inline",
            "sample_rate_hz": rate,
            "pcm16_b64": pcm16_b64_encode(samples),
        },
        "params": params,
    }


@pytest.fixture(scope="module")
def worker():
    return ReferenceWorker(WorkerConfig())


class TestCodec:
    def test_roundtrip(self):
        frame = handshake_frame("w", {"vad": [], "asr": ["burst"]})
        msg = decode_frame(frame)
        assert msg["type"] == "handshake"
        assert encode_frame(msg) == frame

    def test_response_frames(self):
        ok = decode_frame(response_frame("id1", {"text": "x"}, 0.5))
        assert ok["ok"] is True and ok["request_id"] == "id1"
        err = decode_frame(error_frame("", "malformed_frame", "bad"))
        assert err["ok"] is False and err["error"]["code"] == "malformed_frame"

    def test_rejects_bad_version(self):
        msg = request("vad", tone())
        msg["protocol_version"] = 9
        with pytest.raises(FrameError):
            decode_frame(encode_frame(msg))

    def test_pcm_roundtrip(self):
        x = np.linspace(-1, 1, 500)
        back = pcm16_b64_decode(pcm16_b64_encode(x))
        assert np.max(np.abs(back - x)) <= 1 / 32767


class TestCapabilities:
    def test_all_kinds_by_default(self, worker):
        assert set(worker.capabilities) == {
            "vad", "diarize", "separate2", "embed", "tag_audio",
            "extract_vocals", "denoise", "asr", "caption",
        }
        assert worker.capabilities["asr"] == ["burst"]

    def test_subset_config(self):
        w = ReferenceWorker(WorkerConfig({"task_kinds": ["vad"]}))
        assert set(w.capabilities) == {"vad"}

    def test_model_load_failure_refuses_kind(self, capsys):
        w = ReferenceWorker(
            WorkerConfig({"models": {"asr": {"factory": "nope.missing:build"}}}),
            log=lambda m: None,
        )
        assert "asr" not in w.capabilities
        assert "vad" in w.capabilities

    def test_unknown_kind_config_rejected(self):
        with pytest.raises(ValueError):
            WorkerConfig({"task_kinds": ["translate"]})


class TestShapes:
    def test_vad(self, worker):
        payload, timing = worker.handle_request(request("vad", tone()))
        assert timing >= 0
        assert payload["hop_s"] > 0
        assert all(0 <= p <= 1 for p in payload["probs"])

    def test_diarize_two_tones(self, worker):
        x = np.concatenate([tone(200, 1.0), np.zeros(8000), tone(2500, 1.0)])
        payload, _ = worker.handle_request(request("diarize", x))
        assert len(payload["segments"]) == 2
        speakers = {s["speaker_id"] for s in payload["segments"]}
        assert speakers == {"spk0", "spk1"}
        for seg in payload["segments"]:
            assert seg["end_s"] > seg["start_s"]

    def test_separate2_lengths_match(self, worker):
        payload, _ = worker.handle_request(request("separate2", tone()))
        c1 = pcm16_b64_decode(payload["cand1_pcm16_b64"])
        c2 = pcm16_b64_decode(payload["cand2_pcm16_b64"])
        assert len(c1) == len(c2) == 16000

    def test_separate2_band_split(self, worker):
        low = tone(300, 1.0)
        high = tone(3000, 1.0)
        payload, _ = worker.handle_request(request("separate2", low + high))
        c1 = pcm16_b64_decode(payload["cand1_pcm16_b64"])
        c2 = pcm16_b64_decode(payload["cand2_pcm16_b64"])
        # the low-band candidate matches the low tone far better
        assert np.mean((c1 - low) ** 2) < np.mean((c1 - high) ** 2)
        assert np.mean((c2 - high) ** 2) < np.mean((c2 - low) ** 2)

    def test_embed_unit_norm(self, worker):
        payload, _ = worker.handle_request(request("embed", tone()))
        vec = np.array(payload["vector"])
        assert vec.shape == (16,)
        assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-6)
        # distinct spectra embed differently
        payload2, _ = worker.handle_request(request("embed", tone(2800)))
        assert not np.allclose(vec, payload2["vector"])

    def test_tag_audio_range(self, worker):
        payload, _ = worker.handle_request(request("tag_audio", tone()))
        assert 0.0 <= payload["music_prob"] <= 1.0

    def test_extract_and_denoise_preserve_length(self, worker):
        for kind in ("extract_vocals", "denoise"):
            payload, _ = worker.handle_request(request(kind, tone()))
            out = pcm16_b64_decode(payload["pcm16_b64"])
            assert len(out) == 16000
            assert payload["sample_rate_hz"] == 16000

    def test_asr_words_monotone(self, worker):
        x = np.concatenate([tone(300, 0.5), np.zeros(8000), tone(300, 0.5)])
        payload, _ = worker.handle_request(request("asr", x, model_id="burst"))
        words = payload["words"]
        assert len(words) == 2
        for w1, w2 in zip(words, words[1:]):
            assert w1["end_s"] <= w2["start_s"]

    def test_asr_unknown_model_rejected(self, worker):
        with pytest.raises(FrameError):
            worker.handle_request(request("asr", tone(), model_id="whopper"))

    def test_caption_counts_context(self, worker):
        payload, _ = worker.handle_request(
            request("caption", tone(), context=[{"a": 1}, {"b": 2}])
        )
        assert "2 context clip(s)" in payload["text"]

    def test_disabled_kind_rejected(self):
        w = ReferenceWorker(WorkerConfig({"task_kinds": ["vad"]}))
        with pytest.raises(FrameError):
            w.handle_request(request("asr", tone()))
