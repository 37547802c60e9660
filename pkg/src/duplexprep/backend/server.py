"""Serve a worker object over the wire protocol (stdio or TCP).

One handshake frame on connect, then sequential request/response frames.
A malformed input line is answered with an error frame carrying an empty
request_id, and the connection keeps serving.
"""

from __future__ import annotations

import socket
import sys
import threading
import time

from duplexprep.backend.protocol import (
    ERR_BACKEND,
    ERR_MALFORMED,
    ProtocolError,
    TaskRequest,
    TaskResponse,
    decode_frame,
    encode_frame,
    handshake_message,
)


def serve_stream(worker, rfile, wfile, name: str = "worker") -> None:
    """Serve until EOF on rfile."""
    wfile.write(encode_frame(handshake_message(name, worker.capabilities)))
    wfile.flush()
    while True:
        line = rfile.readline()
        if not line:
            return
        if not line.strip():
            continue
        try:
            msg = decode_frame(line)
            if msg["type"] != "request":
                raise ProtocolError(f"expected request frame, got {msg['type']}")
            req = TaskRequest.from_wire(msg)
        except ProtocolError as exc:
            resp = TaskResponse.failure("", ERR_MALFORMED, str(exc))
            wfile.write(encode_frame(resp.to_wire()))
            wfile.flush()
            continue
        delay = float(req.params.get("_delay_s", 0.0) or 0.0)
        if delay:
            time.sleep(delay)
        try:
            payload, timing_s = worker.handle_request(req)
            resp = TaskResponse(request_id=req.request_id, ok=True,
                                timing_s=timing_s, payload=payload)
        except Exception as exc:
            resp = TaskResponse.failure(req.request_id, ERR_BACKEND, str(exc))
        wfile.write(encode_frame(resp.to_wire()))
        wfile.flush()


def serve_stdio(worker, name: str = "worker") -> None:
    serve_stream(worker, sys.stdin.buffer, sys.stdout.buffer, name)


def serve_tcp(worker, host: str = "127.0.0.1", port: int = 0, name: str = "worker",
              ready_event: threading.Event | None = None, bound_port: list | None = None):
    """Accept connections forever; each connection served on a thread."""
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, port))
    srv.listen()
    if bound_port is not None:
        bound_port.append(srv.getsockname()[1])
    if ready_event is not None:
        ready_event.set()
    while True:
        conn, _ = srv.accept()
        rfile = conn.makefile("rb")
        wfile = conn.makefile("wb")

        def run(rf=rfile, wf=wfile, c=conn):
            try:
                serve_stream(worker, rf, wf, name)
            except (BrokenPipeError, ConnectionResetError, ValueError):
                pass
            finally:
                try:
                    c.close()
                except OSError:
                    pass

        threading.Thread(target=run, daemon=True).start()
