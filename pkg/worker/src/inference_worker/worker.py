"""The worker: capability table + request handling."""

from __future__ import annotations

import sys
import time

from inference_worker.models import load_model
from inference_worker.protocol import TASK_KINDS, FrameError, resolve_audio


class WorkerConfig:
    """Enabled kinds, per-kind model specs, device, inline payload cap."""

    def __init__(self, raw: dict | None = None):
        raw = raw or {}
        self.task_kinds = list(raw.get("task_kinds", TASK_KINDS))
        self.models = raw.get("models", {})
        self.device = raw.get("device", "cpu")
        self.max_inline_payload_s = float(raw.get("max_inline_payload_s", 600.0))
        self.asr_model_ids = list(raw.get("asr_model_ids", ["burst"]))
        unknown = [k for k in self.task_kinds if k not in TASK_KINDS]
        if unknown:
            raise ValueError(f"unknown task kinds in config: {unknown}")


class ReferenceWorker:
    """Loads one adapter per enabled kind; kinds whose model fails to
    load are dropped from the capability table (handshake refused for
    them), everything else keeps serving."""

    def __init__(self, config: WorkerConfig | None = None, log=None):
        self.config = config or WorkerConfig()
        self.log = log or (lambda msg: print(msg, file=sys.stderr))
        self.adapters = {}
        for kind in self.config.task_kinds:
            try:
                self.adapters[kind] = load_model(
                    kind, self.config.models.get(kind), self.config.device
                )
            except Exception as exc:
                self.log(f"model load failed for {kind}: {exc}; capability disabled")
        self.capabilities = {
            kind: (self.config.asr_model_ids if kind == "asr" else [])
            for kind in self.adapters
        }

    def handle_request(self, req) -> tuple[dict, float]:
        """(payload, timing_s); raises on unsupported kinds or bad input."""
        kind = req["task_kind"] if isinstance(req, dict) else req.task_kind
        params = (req.get("params") if isinstance(req, dict) else req.params) or {}
        audio_payload = req.get("audio") if isinstance(req, dict) else req.audio
        if kind not in self.adapters:
            raise FrameError(f"task kind {kind} not enabled")

        started = time.perf_counter()
        audio = resolve_audio(audio_payload)
        if audio is None:
            raise FrameError(f"{kind} request carries no audio")
        if audio.duration_s > self.config.max_inline_payload_s:
            raise FrameError(
                f"payload of {audio.duration_s:.0f}s exceeds the "
                f"{self.config.max_inline_payload_s:.0f}s cap"
            )
        adapter = self.adapters[kind]
        if kind == "asr":
            model_id = params.get("model_id")
            if model_id is not None and model_id not in self.capabilities["asr"]:
                raise FrameError(f"capability mismatch: unknown asr model_id {model_id!r}")
            payload = adapter.run(audio, model_id=model_id)
        elif kind == "caption":
            payload = adapter.run(audio, context_count=len(params.get("context", [])))
        else:
            payload = adapter.run(audio)
        return payload, round(time.perf_counter() - started, 6)
