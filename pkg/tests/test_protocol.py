import random
import string

import numpy as np
import pytest

from duplexprep.audio import AudioBuffer
from duplexprep.backend.protocol import (
    PROTOCOL_VERSION,
    TASK_KINDS,
    ProtocolError,
    TaskRequest,
    TaskResponse,
    decode_frame,
    encode_frame,
    handshake_message,
    inline_audio_payload,
    file_audio_payload,
    pcm16_b64_decode,
    pcm16_b64_encode,
    resolve_audio_payload,
    validate_payload,
)
from duplexprep.timeline import TimeInterval


def rand_word(rng, n=8):
    return "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(1, n)))


def random_message(rng):
    roll = rng.random()
    if roll < 0.45:
        audio = None
        if rng.random() < 0.7:
            if rng.random() < 0.5:
                audio = {
                    "kind": "inline",
                    "sample_rate_hz": rng.choice([8000, 16000, 44100]),
                    "pcm16_b64": pcm16_b64_encode(np.array([rng.uniform(-1, 1) for _ in range(8)])),
                }
            else:
                start = rng.uniform(0, 100)
                audio = {"kind": "file", "path": f"/tmp/{rand_word(rng)}.wav",
                         "interval": [start, start + rng.uniform(0.1, 5)]}
        return {
            "type": "request",
            "protocol_version": PROTOCOL_VERSION,
            "request_id": rand_word(rng, 16),
            "task_kind": rng.choice(TASK_KINDS),
            "audio": audio,
            "params": {rand_word(rng): rand_word(rng) for _ in range(rng.randint(0, 3))},
        }
    if roll < 0.8:
        ok = rng.random() < 0.7
        msg = {
            "type": "response",
            "request_id": rand_word(rng, 16),
            "ok": ok,
            "timing_s": round(rng.uniform(0, 2), 6),
        }
        if ok:
            msg["payload"] = {"text": rand_word(rng)}
        else:
            msg["error"] = {"code": "backend_error", "message": rand_word(rng)}
        return msg
    return {
        "type": "handshake",
        "protocol_version": PROTOCOL_VERSION,
        "worker_name": rand_word(rng),
        "capabilities": [
            {"task_kind": k, "model_ids": sorted(rand_word(rng) for _ in range(rng.randint(0, 2)))}
            for k in rng.sample(TASK_KINDS, rng.randint(1, 4))
        ],
    }


class TestFrames:
    def test_roundtrip_fixture_frames(self):
        req = TaskRequest(task_kind="vad", request_id="r1",
                          audio={"kind": "file", "path": "/a.wav", "interval": [0.0, 1.0]})
        for msg in (
            req.to_wire(),
            TaskResponse(request_id="r1", ok=True, timing_s=0.25, payload={"hop_s": 0.03, "probs": []}).to_wire(),
            handshake_message("w", {"vad": [], "asr": ["m1", "m2"]}),
        ):
            frame = encode_frame(msg)
            assert decode_frame(frame) == msg
            assert encode_frame(decode_frame(frame)) == frame

    def test_fuzzed_roundtrip_identity(self):
        rng = random.Random(2024)
        for _ in range(1000):
            msg = random_message(rng)
            frame = encode_frame(msg)
            assert decode_frame(frame) == msg
            assert encode_frame(decode_frame(frame)) == frame

    def test_unknown_task_kind_rejected(self):
        msg = TaskRequest(task_kind="vad", request_id="x").to_wire()
        msg["task_kind"] = "translate"
        with pytest.raises(ProtocolError):
            decode_frame(encode_frame(msg))

    def test_unknown_version_rejected(self):
        msg = TaskRequest(task_kind="vad", request_id="x").to_wire()
        msg["protocol_version"] = 99
        with pytest.raises(ProtocolError):
            decode_frame(encode_frame(msg))

    def test_malformed_json_rejected_with_position(self):
        with pytest.raises(ProtocolError):
            decode_frame(b'{"type": "request", ', position=120)

    def test_bad_audio_payload_rejected(self):
        msg = TaskRequest(task_kind="vad", request_id="x").to_wire()
        msg["audio"] = {"kind": "file", "path": "/a.wav"}  # missing interval
        with pytest.raises(ProtocolError):
            decode_frame(encode_frame(msg))


class TestAudioPayloads:
    def test_pcm_roundtrip(self):
        x = np.linspace(-1, 1, 333)
        back = pcm16_b64_decode(pcm16_b64_encode(x))
        assert np.max(np.abs(back - x)) <= 1.0 / 32767

    def test_inline_resolution(self):
        buf = AudioBuffer(np.linspace(-0.5, 0.5, 160), 16000, 1)
        audio = resolve_audio_payload(inline_audio_payload(buf))
        assert audio.sample_rate_hz == 16000
        assert len(audio.samples) == 160

    def test_file_resolution(self, tmp_path):
        from duplexprep.audio import write_wav

        buf = AudioBuffer(0.3 * np.sin(np.linspace(0, 700, 32000)), 16000, 1)
        path = tmp_path / "x.wav"
        write_wav(path, buf)
        payload = file_audio_payload(path, TimeInterval(0.5, 1.5))
        audio = resolve_audio_payload(payload)
        assert len(audio.samples) == 16000

    def test_shape_validation_catches_problems(self):
        assert validate_payload("vad", {"hop_s": 0.03, "probs": [0.5, 1.0]}) == []
        assert validate_payload("vad", {"hop_s": 0.03, "probs": [1.5]}) != []
        assert validate_payload("embed", {"vector": [0.0, 0.0]}) != []
        assert validate_payload("tag_audio", {"music_prob": 0.4}) == []
        assert validate_payload("asr", {"model_id": "m", "words": [
            {"surface": "a", "start_s": 0.0, "end_s": 0.5},
            {"surface": "b", "start_s": 0.4, "end_s": 0.9},
        ]}) != []  # overlapping word intervals
        assert validate_payload("caption", {"text": "x"}) == []
