"""Wire protocol to inference backends.

Newline-delimited JSON frames, canonically encoded (sorted keys, no
spaces), over standard streams or a TCP socket. A connection starts with
one handshake frame from the worker advertising its task kinds and model
ids; after that the client sends request frames and reads response
frames, one at a time per connection. Audio travels inline as base64
little-endian 16-bit PCM below a size threshold, or as a file path plus
time interval. The format is documented field by field in
docs/protocol.md and must stay bit-compatible with it.
"""

from __future__ import annotations

import base64
import json
import uuid
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from duplexprep.audio import AudioBuffer, dequantize_pcm16, quantize_pcm16, read_wav
from duplexprep.timeline import TimeInterval

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

DEFAULT_INLINE_THRESHOLD_S = 10.0

ERR_TIMEOUT = "timeout"
ERR_CAPABILITY = "capability_mismatch"
ERR_MALFORMED = "malformed_frame"
ERR_VERSION = "protocol_version"
ERR_BACKEND = "backend_error"
ERR_SIDECAR = "missing_sidecar"
ERR_CONNECTION = "connection_lost"


class ProtocolError(ValueError):
    def __init__(self, message: str, position: Optional[int] = None):
        super().__init__(f"{message}" + (f" (at byte {position})" if position is not None else ""))
        self.position = position


def pcm16_b64_encode(samples: np.ndarray) -> str:
    return base64.b64encode(quantize_pcm16(samples).astype("<i2").tobytes()).decode("ascii")


def pcm16_b64_decode(data: str) -> np.ndarray:
    raw = base64.b64decode(data.encode("ascii"), validate=True)
    return dequantize_pcm16(np.frombuffer(raw, dtype="<i2"))


def inline_audio_payload(buf: AudioBuffer) -> dict:
    return {
        "kind": "inline",
        "sample_rate_hz": buf.sample_rate_hz,
        "pcm16_b64": pcm16_b64_encode(buf.samples),
    }


def file_audio_payload(path: str, interval: TimeInterval) -> dict:
    return {
        "kind": "file",
        "path": str(path),
        "interval": [interval.start_s, interval.end_s],
    }


def audio_payload_for(
    buf: AudioBuffer,
    path: Optional[str],
    interval: Optional[TimeInterval],
    inline_threshold_s: float = DEFAULT_INLINE_THRESHOLD_S,
) -> dict:
    """Inline short audio; reference long audio by file + interval."""
    if buf.duration_s <= inline_threshold_s or path is None or interval is None:
        return inline_audio_payload(buf)
    return file_audio_payload(path, interval)


def resolve_audio_payload(payload: dict) -> AudioBuffer:
    """Materialize a payload into samples (reads the file form from disk)."""
    if payload["kind"] == "inline":
        return AudioBuffer(pcm16_b64_decode(payload["pcm16_b64"]), payload["sample_rate_hz"], 1)
    buf = read_wav(payload["path"])
    start, end = payload["interval"]
    return buf.slice_interval(TimeInterval(start, end))


@dataclass
class TaskRequest:
    task_kind: str
    request_id: str = field(default_factory=lambda: uuid.uuid4().hex)
    audio: Optional[dict] = None  # audio payload, exactly one form
    params: dict = field(default_factory=dict)
    protocol_version: int = PROTOCOL_VERSION

    def to_wire(self) -> dict:
        return {
            "type": "request",
            "protocol_version": self.protocol_version,
            "request_id": self.request_id,
            "task_kind": self.task_kind,
            "audio": self.audio,
            "params": self.params,
        }

    @staticmethod
    def from_wire(msg: dict) -> "TaskRequest":
        return TaskRequest(
            task_kind=msg["task_kind"],
            request_id=msg["request_id"],
            audio=msg.get("audio"),
            params=msg.get("params", {}),
            protocol_version=msg["protocol_version"],
        )


@dataclass
class TaskResponse:
    request_id: str
    ok: bool
    timing_s: float = 0.0
    payload: Optional[dict] = None
    error: Optional[dict] = None  # {"code", "message"}

    def to_wire(self) -> dict:
        msg = {
            "type": "response",
            "request_id": self.request_id,
            "ok": self.ok,
            "timing_s": self.timing_s,
        }
        if self.ok:
            msg["payload"] = self.payload or {}
        else:
            msg["error"] = self.error or {"code": ERR_BACKEND, "message": ""}
        return msg

    @staticmethod
    def from_wire(msg: dict) -> "TaskResponse":
        return TaskResponse(
            request_id=msg["request_id"],
            ok=msg["ok"],
            timing_s=msg.get("timing_s", 0.0),
            payload=msg.get("payload"),
            error=msg.get("error"),
        )

    @staticmethod
    def failure(request_id: str, code: str, message: str, timing_s: float = 0.0) -> "TaskResponse":
        return TaskResponse(
            request_id=request_id,
            ok=False,
            timing_s=timing_s,
            error={"code": code, "message": message},
        )


def handshake_message(worker_name: str, capabilities: dict) -> dict:
    """capabilities: task_kind -> list of model ids (may be empty)."""
    return {
        "type": "handshake",
        "protocol_version": PROTOCOL_VERSION,
        "worker_name": worker_name,
        "capabilities": [
            {"task_kind": kind, "model_ids": sorted(models)}
            for kind, models in sorted(capabilities.items())
        ],
    }


def encode_frame(msg: dict) -> bytes:
    """Canonical one-line JSON frame."""
    return json.dumps(msg, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"


def _validate_audio_payload(audio, position):
    if audio is None:
        return
    if not isinstance(audio, dict) or "kind" not in audio:
        raise ProtocolError("audio payload must be an object with a kind", position)
    if audio["kind"] == "inline":
        missing = {"sample_rate_hz", "pcm16_b64"} - audio.keys()
        if missing:
            raise ProtocolError(f"inline audio payload missing {sorted(missing)}", position)
    elif audio["kind"] == "file":
        missing = {"path", "interval"} - audio.keys()
        if missing:
            raise ProtocolError(f"file audio payload missing {sorted(missing)}", position)
        iv = audio["interval"]
        if not (isinstance(iv, list) and len(iv) == 2):
            raise ProtocolError("file audio interval must be [start_s, end_s]", position)
    else:
        raise ProtocolError(f"unknown audio payload kind: {audio['kind']}", position)


def decode_frame(line: bytes, position: int = 0) -> dict:
    """Parse and validate one frame; raises ProtocolError with position."""
    try:
        msg = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"not a JSON frame: {exc}", position) from exc
    if not isinstance(msg, dict) or "type" not in msg:
        raise ProtocolError("frame is not an object with a type", position)
    kind = msg["type"]
    if kind == "request":
        for key in ("protocol_version", "request_id", "task_kind"):
            if key not in msg:
                raise ProtocolError(f"request missing {key}", position)
        if msg["protocol_version"] != PROTOCOL_VERSION:
            raise ProtocolError(
                f"unsupported protocol version {msg['protocol_version']}", position
            )
        if msg["task_kind"] not in TASK_KINDS:
            raise ProtocolError(f"unknown task_kind: {msg['task_kind']}", position)
        _validate_audio_payload(msg.get("audio"), position)
    elif kind == "response":
        for key in ("request_id", "ok"):
            if key not in msg:
                raise ProtocolError(f"response missing {key}", position)
        if msg["ok"] and "payload" not in msg:
            raise ProtocolError("ok response missing payload", position)
        if not msg["ok"] and "error" not in msg:
            raise ProtocolError("error response missing error", position)
    elif kind == "handshake":
        for key in ("protocol_version", "capabilities"):
            if key not in msg:
                raise ProtocolError(f"handshake missing {key}", position)
        if msg["protocol_version"] != PROTOCOL_VERSION:
            raise ProtocolError(
                f"unsupported protocol version {msg['protocol_version']}", position
            )
    else:
        raise ProtocolError(f"unknown frame type: {kind}", position)
    return msg


def validate_payload(task_kind: str, payload: dict) -> list[str]:
    """Shape-check a response payload for its task kind.

    Returns a list of problems; empty means the shape is valid. Used by
    both the mock tests and worker conformance.
    """
    problems: list[str] = []

    def need(key, types):
        if key not in payload:
            problems.append(f"missing {key}")
            return None
        if not isinstance(payload[key], types):
            problems.append(f"{key} has wrong type {type(payload[key]).__name__}")
            return None
        return payload[key]

    if task_kind == "vad":
        hop = need("hop_s", (int, float))
        probs = need("probs", list)
        if hop is not None and hop <= 0:
            problems.append("hop_s must be positive")
        if probs is not None and any(
            not isinstance(p, (int, float)) or not 0 <= p <= 1 for p in probs
        ):
            problems.append("probs must lie in [0, 1]")
    elif task_kind == "diarize":
        segments = need("segments", list)
        if segments is not None:
            for seg in segments:
                if not isinstance(seg, dict) or {"speaker_id", "start_s", "end_s"} - seg.keys():
                    problems.append(f"bad segment: {seg!r}")
                    break
                if seg["end_s"] < seg["start_s"]:
                    problems.append("segment ends before it starts")
                    break
    elif task_kind == "separate2":
        need("sample_rate_hz", int)
        for key in ("cand1_pcm16_b64", "cand2_pcm16_b64"):
            data = need(key, str)
            if data is not None:
                try:
                    pcm16_b64_decode(data)
                except Exception:
                    problems.append(f"{key} is not valid base64 PCM")
        if not problems:
            n1 = len(base64.b64decode(payload["cand1_pcm16_b64"]))
            n2 = len(base64.b64decode(payload["cand2_pcm16_b64"]))
            if n1 != n2:
                problems.append("candidate lengths differ")
    elif task_kind == "embed":
        vec = need("vector", list)
        if vec is not None:
            if not vec:
                problems.append("vector is empty")
            elif any(not isinstance(v, (int, float)) for v in vec):
                problems.append("vector entries must be numbers")
            elif not any(v != 0 for v in vec):
                problems.append("vector is all zeros")
    elif task_kind == "tag_audio":
        prob = need("music_prob", (int, float))
        if prob is not None and not 0 <= prob <= 1:
            problems.append("music_prob out of [0, 1]")
    elif task_kind in ("extract_vocals", "denoise"):
        need("sample_rate_hz", int)
        data = need("pcm16_b64", str)
        if data is not None:
            try:
                pcm16_b64_decode(data)
            except Exception:
                problems.append("pcm16_b64 is not valid base64 PCM")
    elif task_kind == "asr":
        need("model_id", str)
        words = need("words", list)
        if words is not None:
            prev_end = None
            for w in words:
                if not isinstance(w, dict) or "surface" not in w:
                    problems.append(f"bad word entry: {w!r}")
                    break
                start, end = w.get("start_s"), w.get("end_s")
                if (start is None) != (end is None):
                    problems.append("word has half an interval")
                    break
                if start is not None:
                    if end < start:
                        problems.append("word interval reversed")
                        break
                    if prev_end is not None and start < prev_end - 1e-6:
                        problems.append("word intervals overlap")
                        break
                    prev_end = end
    elif task_kind == "caption":
        need("text", str)
    else:
        problems.append(f"unknown task kind {task_kind}")
    return problems
