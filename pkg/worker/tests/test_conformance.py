"""Cross-package conformance: the reference worker must pass the same
protocol suite the pipeline's mocks pass.

The pipeline is consumed strictly through its external interfaces: the
`duplexprep backend-conformance` CLI drives this worker over stdio and
over TCP. Requires the duplexprep package on PATH.
"""

import json
import shutil
import subprocess
import sys
import threading

import pytest

DUPLEXPREP = shutil.which("duplexprep")

pytestmark = pytest.mark.skipif(
    DUPLEXPREP is None, reason="duplexprep CLI not installed"
)


def test_stdio_conformance(tmp_path):
    report_path = tmp_path / "report.json"
    worker_cmd = f"{sys.executable} -m inference_worker.cli serve --stdio"
    proc = subprocess.run(
        [DUPLEXPREP, "backend-conformance", "--cmd", worker_cmd,
         "--json-out", str(report_path)],
        capture_output=True, text=True, timeout=180,
    )
    assert proc.returncode == 0, proc.stdout + proc.stderr
    report = json.loads(report_path.read_text())
    assert report["passed"] is True
    names = {c["name"] for c in report["checks"]}
    assert {"handshake_capabilities", "payload_shape", "request_id_matching",
            "timeout_behavior", "malformed_frame_rejected"} <= names
    kinds = {c["kind"] for c in report["checks"] if c["name"] == "payload_shape"}
    assert kinds == {"vad", "diarize", "separate2", "embed", "tag_audio",
                     "extract_vocals", "denoise", "asr", "caption"}


def test_tcp_conformance(tmp_path):
    from inference_worker.server import serve_tcp
    from inference_worker.worker import ReferenceWorker, WorkerConfig

    worker = ReferenceWorker(WorkerConfig())
    ready = threading.Event()
    port_box = []
    threading.Thread(
        target=serve_tcp,
        kwargs=dict(worker=worker, port=0, ready_event=ready, bound_port=port_box),
        daemon=True,
    ).start()
    assert ready.wait(5)

    report_path = tmp_path / "report.json"
    proc = subprocess.run(
        [DUPLEXPREP, "backend-conformance", "--tcp", f"127.0.0.1:{port_box[0]}",
         "--json-out", str(report_path)],
        capture_output=True, text=True, timeout=180,
    )
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert json.loads(report_path.read_text())["passed"] is True


def test_subset_worker_advertises_subset(tmp_path):
    report_path = tmp_path / "report.json"
    worker_cmd = (
        f"{sys.executable} -m inference_worker.cli serve --stdio --kinds vad,embed"
    )
    proc = subprocess.run(
        [DUPLEXPREP, "backend-conformance", "--cmd", worker_cmd,
         "--json-out", str(report_path)],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0, proc.stdout + proc.stderr
    report = json.loads(report_path.read_text())
    kinds = {c["kind"] for c in report["checks"] if c["name"] == "payload_shape"}
    assert kinds == {"vad", "embed"}
