"""Protocol conformance suite.

Runs the same checks against any backend handle, mock or real: handshake
capabilities, per-kind response payload shapes, request-id matching under
concurrent load, timeout behavior (via the _delay_s param every worker
honors), and, for wire transports, malformed-frame recovery. Model
quality is never asserted, only protocol and shape.
"""

from __future__ import annotations

import concurrent.futures
import uuid
from dataclasses import dataclass, field

import numpy as np

from duplexprep.backend.dispatch import DEFAULT_TIMEOUT_S
from duplexprep.backend.protocol import (
    ERR_MALFORMED,
    ERR_TIMEOUT,
    TASK_KINDS,
    TaskRequest,
    inline_audio_payload,
    validate_payload,
)
from duplexprep.audio import AudioBuffer


@dataclass
class ConformanceCheck:
    name: str
    kind: str
    ok: bool
    detail: str = ""


@dataclass
class ConformanceReport:
    checks: list = field(default_factory=list)

    def add(self, name, kind, ok, detail=""):
        self.checks.append(ConformanceCheck(name, kind, bool(ok), detail))

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "kind": c.kind, "ok": c.ok, "detail": c.detail}
                for c in self.checks
            ],
        }

    def render(self) -> str:
        lines = []
        for c in self.checks:
            status = "PASS" if c.ok else "FAIL"
            kind = f" [{c.kind}]" if c.kind else ""
            detail = f" - {c.detail}" if c.detail and not c.ok else ""
            lines.append(f"{status} {c.name}{kind}{detail}")
        lines.append(f"{'PASS' if self.passed else 'FAIL'} overall")
        return "\n".join(lines)


def _test_tone(duration_s: float = 0.5, rate: int = 16000) -> AudioBuffer:
    t = np.arange(int(duration_s * rate)) / rate
    return AudioBuffer(0.25 * np.sin(2 * np.pi * 250 * t), rate, 1)


def build_request(kind: str, context: dict, model_id: str | None = None) -> TaskRequest:
    """A minimal well-formed request for one task kind.

    context supplies the fixture-plumbing params mocks need (source_id,
    interval, segment_id); real workers ignore them.
    """
    interval = context.get("interval", [0.0, 0.5])
    audio = inline_audio_payload(_test_tone(interval[1] - interval[0]))
    params = {}
    if context.get("source_id"):
        params["source_id"] = context["source_id"]
    params["interval"] = list(interval)
    if kind == "asr":
        params["model_id"] = model_id or "default"
    elif kind == "embed":
        params["intervals"] = [list(interval)]
    elif kind == "tag_audio":
        params["segment_id"] = context.get("segment_id", "seg000")
    elif kind == "caption":
        params["context"] = []
    return TaskRequest(task_kind=kind, audio=audio, params=params)


def run_conformance(
    handle,
    context: dict | None = None,
    kinds=None,
    id_match_requests: int = 100,
    timeout_probe_s: float = 0.05,
) -> ConformanceReport:
    """Run every conformance check against one backend handle."""
    context = context or {}
    report = ConformanceReport()

    capabilities = getattr(handle, "capabilities", {}) or {}
    report.add("handshake_capabilities", "", bool(capabilities),
               "no task kinds advertised" if not capabilities else "")
    check_kinds = [k for k in (kinds or capabilities) if k in capabilities]

    for kind in check_kinds:
        if kind not in TASK_KINDS:
            report.add("known_kind", kind, False, f"{kind} is not a protocol task kind")
            continue
        models = capabilities.get(kind) or [None]
        req = build_request(kind, context, model_id=models[0])
        resp = handle.request(req, timeout_s=DEFAULT_TIMEOUT_S)
        if not resp.ok:
            report.add("payload_shape", kind, False,
                       f"{resp.error.get('code')}: {resp.error.get('message')}")
            continue
        if resp.request_id != req.request_id:
            report.add("payload_shape", kind, False, "request_id mismatch")
            continue
        problems = validate_payload(kind, resp.payload)
        report.add("payload_shape", kind, not problems, "; ".join(problems))
        report.add("timing_reported", kind, resp.timing_s >= 0.0,
                   f"timing_s={resp.timing_s}")

    # request-id matching under concurrent submission to one handle
    probe_kind = next((k for k in check_kinds if k in TASK_KINDS), None)
    if probe_kind:
        models = capabilities.get(probe_kind) or [None]
        reqs = []
        for _ in range(id_match_requests):
            r = build_request(probe_kind, context, model_id=models[0])
            r.request_id = uuid.uuid4().hex
            reqs.append(r)
        with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(lambda r: (r, handle.request(r)), reqs))
        mismatched = [
            (r.request_id, resp.request_id)
            for r, resp in results
            if not resp.ok or resp.request_id != r.request_id
        ]
        report.add(
            "request_id_matching", probe_kind, not mismatched,
            f"{len(mismatched)}/{id_match_requests} responses crossed or failed",
        )

        # timeout surfaces as an error, never a hang or a silent drop
        slow = build_request(probe_kind, context, model_id=models[0])
        slow.params["_delay_s"] = 0.5
        resp = handle.request(slow, timeout_s=timeout_probe_s)
        report.add(
            "timeout_behavior", probe_kind,
            (not resp.ok) and resp.error.get("code") == ERR_TIMEOUT,
            f"expected timeout error, got ok={resp.ok} error={resp.error}",
        )

    # malformed frame recovery (wire transports only)
    if hasattr(handle, "send_raw") and probe_kind:
        frame = handle.send_raw(b'{"not a frame": tru\n')
        ok = (
            frame is not None
            and frame.get("type") == "response"
            and frame.get("ok") is False
            and frame.get("error", {}).get("code") == ERR_MALFORMED
        )
        report.add("malformed_frame_rejected", "", ok, f"got {frame!r}")
        models = capabilities.get(probe_kind) or [None]
        again = handle.request(build_request(probe_kind, context, model_id=models[0]))
        report.add("serves_after_malformed", "", again.ok,
                   "" if again.ok else str(again.error))
    return report


def fixture_context(fixture_dir) -> dict:
    """Conformance context derived from the first fixture sidecar."""
    import json
    from pathlib import Path

    sidecars = sorted(Path(fixture_dir).glob("*.truth.json"))
    if not sidecars:
        return {}
    truth = json.loads(sidecars[0].read_text())
    seg = truth["segments"][0]
    end = min(seg["end_s"], seg["start_s"] + 2.0)
    return {
        "source_id": truth["source_id"],
        "interval": [seg["start_s"], end],
        "segment_id": seg["segment_id"],
    }
