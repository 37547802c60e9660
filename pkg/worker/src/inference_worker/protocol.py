"""Wire protocol codec, implemented against docs/protocol.md.

Independent of the pipeline package on purpose: the wire format is the
contract, not a shared library.
"""

from __future__ import annotations

import base64
import json
import wave
from dataclasses import dataclass

import numpy as np

PROTOCOL_VERSION = 1

TASK_KINDS = (
    "vad",
    "diarize",
    "separate2",
    "embed",
    "tag_audio",
    "extract_vocals",
    "denoise",
    "asr",
    "caption",
)

ERR_MALFORMED = "malformed_frame"
ERR_BACKEND = "backend_error"
ERR_CAPABILITY = "capability_mismatch"


class FrameError(ValueError):
    pass


def encode_frame(msg: dict) -> bytes:
    return json.dumps(msg, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"


def decode_frame(line: bytes) -> dict:
    try:
        msg = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FrameError(f"not a JSON frame: {exc}") from exc
    if not isinstance(msg, dict) or "type" not in msg:
        raise FrameError("frame is not an object with a type")
    if msg["type"] == "request":
        for key in ("protocol_version", "request_id", "task_kind"):
            if key not in msg:
                raise FrameError(f"request missing {key}")
        if msg["protocol_version"] != PROTOCOL_VERSION:
            raise FrameError(f"unsupported protocol version {msg['protocol_version']}")
        if msg["task_kind"] not in TASK_KINDS:
            raise FrameError(f"unknown task_kind: {msg['task_kind']}")
    return msg


def handshake_frame(worker_name: str, capabilities: dict) -> bytes:
    return encode_frame(
        {
            "type": "handshake",
            "protocol_version": PROTOCOL_VERSION,
            "worker_name": worker_name,
            "capabilities": [
                {"task_kind": kind, "model_ids": sorted(models)}
                for kind, models in sorted(capabilities.items())
            ],
        }
    )


def response_frame(request_id: str, payload: dict, timing_s: float) -> bytes:
    return encode_frame(
        {
            "type": "response",
            "request_id": request_id,
            "ok": True,
            "timing_s": timing_s,
            "payload": payload,
        }
    )


def error_frame(request_id: str, code: str, message: str, timing_s: float = 0.0) -> bytes:
    return encode_frame(
        {
            "type": "response",
            "request_id": request_id,
            "ok": False,
            "timing_s": timing_s,
            "error": {"code": code, "message": message},
        }
    )


# -- audio payloads ----------------------------------------------------------

PCM_SCALE = 32767


def pcm16_b64_encode(samples: np.ndarray) -> str:
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = (np.sign(x) * np.floor(np.abs(x) * PCM_SCALE + 0.5)).astype("<i2")
    return base64.b64encode(pcm.tobytes()).decode("ascii")


def pcm16_b64_decode(data: str) -> np.ndarray:
    raw = base64.b64decode(data.encode("ascii"), validate=True)
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM_SCALE


@dataclass
class Audio:
    samples: np.ndarray
    sample_rate_hz: int

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


def read_wav_slice(path: str, start_s: float, end_s: float) -> Audio:
    with wave.open(path, "rb") as w:
        if w.getsampwidth() != 2:
            raise FrameError(f"{path}: only 16-bit PCM WAV is supported")
        rate = w.getframerate()
        channels = w.getnchannels()
        i0 = max(int(round(start_s * rate)), 0)
        i1 = min(int(round(end_s * rate)), w.getnframes())
        w.setpos(min(i0, w.getnframes()))
        raw = w.readframes(max(i1 - i0, 0))
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM_SCALE
    if channels > 1:
        pcm = pcm.reshape(-1, channels).mean(axis=1)
    return Audio(pcm, rate)


def resolve_audio(payload: dict | None) -> Audio | None:
    if payload is None:
        return None
    if payload["kind"] == "inline":
        return Audio(pcm16_b64_decode(payload["pcm16_b64"]), payload["sample_rate_hz"])
    if payload["kind"] == "file":
        start, end = payload["interval"]
        return read_wav_slice(payload["path"], start, end)
    raise FrameError(f"unknown audio payload kind {payload['kind']}")
