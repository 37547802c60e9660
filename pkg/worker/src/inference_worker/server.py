"""Serve the worker over stdio or TCP, sequentially per connection."""

from __future__ import annotations

import socket
import sys
import threading
import time

from inference_worker.protocol import (
    ERR_BACKEND,
    ERR_MALFORMED,
    FrameError,
    decode_frame,
    error_frame,
    handshake_frame,
    response_frame,
)


def serve_stream(worker, rfile, wfile, name: str = "inference-worker") -> None:
    wfile.write(handshake_frame(name, worker.capabilities))
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
                raise FrameError(f"expected request frame, got {msg['type']}")
        except FrameError as exc:
            wfile.write(error_frame("", ERR_MALFORMED, str(exc)))
            wfile.flush()
            continue
        delay = float((msg.get("params") or {}).get("_delay_s", 0.0) or 0.0)
        if delay:
            time.sleep(delay)
        try:
            payload, timing_s = worker.handle_request(msg)
            wfile.write(response_frame(msg["request_id"], payload, timing_s))
        except Exception as exc:
            wfile.write(error_frame(msg["request_id"], ERR_BACKEND, str(exc)))
        wfile.flush()


def serve_stdio(worker, name: str = "inference-worker") -> None:
    serve_stream(worker, sys.stdin.buffer, sys.stdout.buffer, name)


def serve_tcp(worker, host: str = "127.0.0.1", port: int = 0,
              name: str = "inference-worker",
              ready_event: threading.Event | None = None,
              bound_port: list | None = None) -> None:
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

        def run(c=conn):
            rfile = c.makefile("rb")
            wfile = c.makefile("wb")
            try:
                serve_stream(worker, rfile, wfile, name)
            except (BrokenPipeError, ConnectionResetError, ValueError):
                pass
            finally:
                try:
                    c.close()
                except OSError:
                    pass

        threading.Thread(target=run, daemon=True).start()
