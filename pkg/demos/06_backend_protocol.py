"""
Backend wire protocol and conformance
=====================================

Hosts the deterministic mock backends on a TCP port, dispatches a few
framed requests at them, and runs the conformance suite every backend
endpoint must pass before a production run.
"""

import tempfile
import threading
from pathlib import Path

from duplexprep.backend.conformance import fixture_context, run_conformance
from duplexprep.backend.dispatch import Dispatcher, TcpHandle
from duplexprep.backend.mocks import MockWorker
from duplexprep.backend.protocol import TaskRequest, encode_frame, file_audio_payload
from duplexprep.backend.server import serve_tcp
from duplexprep.synthfix import build_conversation_fixture
from duplexprep.timeline import TimeInterval

work = Path(tempfile.mkdtemp(prefix="protocol_demo_"))
build_conversation_fixture(work, "show", seed=3, n_turns=6)

# serve the mocks over TCP on an ephemeral port
worker = MockWorker(work)
ready = threading.Event()
port_box = []
threading.Thread(
    target=serve_tcp,
    kwargs=dict(worker=worker, port=0, ready_event=ready, bound_port=port_box),
    daemon=True,
).start()
ready.wait(5)
port = port_box[0]
print(f"mock worker serving on 127.0.0.1:{port}")

handle = TcpHandle("127.0.0.1", port)
print(f"handshake capabilities: {sorted(handle.capabilities)}")

dispatcher = Dispatcher(timeout_s=10.0)
dispatcher.add_handle(handle)

# a framed request, and what travels on the wire
req = TaskRequest(
    task_kind="diarize",
    audio=file_audio_payload(work / "show.wav", TimeInterval(0.0, 10.0)),
    params={"source_id": "show", "interval": [0.0, 10.0]},
)
wire = encode_frame(req.to_wire())
print(f"\nrequest frame ({len(wire)} bytes):\n  {wire[:110].decode()}...")

resp = dispatcher.dispatch(req)
print(f"response ok={resp.ok}, timing_s={resp.timing_s}")
for seg in resp.payload["segments"][:4]:
    print(f"  {seg['speaker_id']}  [{seg['start_s']:6.2f}, {seg['end_s']:6.2f}]")

# the conformance suite: shapes, id matching, timeout, malformed frames
report = run_conformance(handle, fixture_context(work))
print("\n" + report.render())
handle.close()
