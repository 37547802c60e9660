"""Backend handles and the request dispatcher.

A handle owns one connection and processes one request at a time; the
dispatcher multiplexes requests across a pool of handles per task kind,
matching responses to requests by id and converting timeouts, crashes and
capability mismatches into error responses (never silent drops).
"""

from __future__ import annotations

import socket
import subprocess
import threading
import time
from typing import Optional

from duplexprep.backend.protocol import (
    ERR_BACKEND,
    ERR_CAPABILITY,
    ERR_CONNECTION,
    ERR_TIMEOUT,
    TaskRequest,
    TaskResponse,
    ProtocolError,
    decode_frame,
    encode_frame,
)

DEFAULT_TIMEOUT_S = 60.0
DEFAULT_RETRIES = 1


class InProcessHandle:
    """Wraps an in-process worker object (the mocks) as a backend handle.

    The worker exposes `capabilities` (task_kind -> model id list) and
    `handle_request(TaskRequest) -> (payload dict, timing_s)`.
    """

    def __init__(self, worker, name: str = "inprocess"):
        self.worker = worker
        self.name = name
        self._lock = threading.Lock()

    @property
    def capabilities(self) -> dict:
        return self.worker.capabilities

    def request(self, req: TaskRequest, timeout_s: float = DEFAULT_TIMEOUT_S) -> TaskResponse:
        with self._lock:
            delay = float(req.params.get("_delay_s", 0.0) or 0.0)
            if delay > timeout_s:
                time.sleep(timeout_s)
                return TaskResponse.failure(req.request_id, ERR_TIMEOUT,
                                            f"no response within {timeout_s}s")
            if delay:
                time.sleep(delay)
            try:
                payload, timing_s = self.worker.handle_request(req)
            except Exception as exc:
                return TaskResponse.failure(req.request_id, ERR_BACKEND, str(exc))
            return TaskResponse(request_id=req.request_id, ok=True,
                                timing_s=timing_s, payload=payload)

    def close(self):
        pass


class _WireHandle:
    """Shared logic for stream transports: handshake, framed round trips.

    Reads are buffered over select() so a timed-out request leaves the
    connection usable; its late response is skipped by request_id when it
    eventually arrives.
    """

    def __init__(self, name: str):
        self.name = name
        self._lock = threading.Lock()
        self._buf = b""
        self.capabilities: dict = {}

    def _fileno(self) -> int:
        raise NotImplementedError

    def _recv_chunk(self) -> bytes:
        raise NotImplementedError

    def _write(self, data: bytes) -> None:
        raise NotImplementedError

    def _readline(self, timeout_s: float) -> bytes:
        import select

        deadline = time.monotonic() + timeout_s
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TimeoutError
            ready, _, _ = select.select([self._fileno()], [], [], remaining)
            if not ready:
                raise TimeoutError
            try:
                chunk = self._recv_chunk()
            except (BlockingIOError, InterruptedError):
                continue
            if not chunk:
                return b""  # EOF
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line + b"\n"

    def _read_handshake(self, timeout_s: float = 10.0):
        line = self._readline(timeout_s)
        if not line:
            raise ProtocolError("connection closed before handshake")
        msg = decode_frame(line)
        if msg["type"] != "handshake":
            raise ProtocolError(f"expected handshake, got {msg['type']}")
        self.capabilities = {
            cap["task_kind"]: list(cap.get("model_ids", []))
            for cap in msg["capabilities"]
        }

    def send_raw(self, data: bytes, timeout_s: float = DEFAULT_TIMEOUT_S) -> Optional[dict]:
        """Ship raw bytes; return the worker's error frame (request_id "").

        Responses to earlier timed-out requests may still be in flight
        and are skipped.
        """
        with self._lock:
            self._write(data)
            deadline = time.monotonic() + timeout_s
            while True:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                try:
                    line = self._readline(remaining)
                except TimeoutError:
                    return None
                if not line:
                    return None
                msg = decode_frame(line)
                if msg.get("type") == "response" and msg.get("request_id"):
                    continue  # stale response from a timed-out request
                return msg

    def request(self, req: TaskRequest, timeout_s: float = DEFAULT_TIMEOUT_S) -> TaskResponse:
        with self._lock:
            try:
                self._write(encode_frame(req.to_wire()))
            except OSError as exc:
                return TaskResponse.failure(req.request_id, ERR_CONNECTION, str(exc))
            deadline = time.monotonic() + timeout_s
            while True:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return TaskResponse.failure(
                        req.request_id, ERR_TIMEOUT, f"no response within {timeout_s}s"
                    )
                try:
                    line = self._readline(remaining)
                except TimeoutError:
                    return TaskResponse.failure(
                        req.request_id, ERR_TIMEOUT, f"no response within {timeout_s}s"
                    )
                except OSError as exc:
                    return TaskResponse.failure(req.request_id, ERR_CONNECTION, str(exc))
                if not line:
                    return TaskResponse.failure(
                        req.request_id, ERR_CONNECTION, "connection closed"
                    )
                try:
                    msg = decode_frame(line)
                except ProtocolError as exc:
                    return TaskResponse.failure(req.request_id, ERR_BACKEND, str(exc))
                if msg["type"] != "response":
                    continue  # stray frame; keep waiting for ours
                resp = TaskResponse.from_wire(msg)
                if resp.request_id != req.request_id:
                    continue  # sequential protocol: ignore mismatched leftovers
                return resp


class SubprocessHandle(_WireHandle):
    """Talks the protocol to a worker subprocess over its stdio."""

    def __init__(self, cmd: list, name: Optional[str] = None):
        super().__init__(name or " ".join(cmd))
        self.proc = subprocess.Popen(
            cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
        )
        self._read_handshake()

    def _fileno(self) -> int:
        return self.proc.stdout.fileno()

    def _recv_chunk(self) -> bytes:
        import os

        return os.read(self.proc.stdout.fileno(), 65536)

    def _write(self, data: bytes) -> None:
        self.proc.stdin.write(data)
        self.proc.stdin.flush()

    def close(self):
        try:
            self.proc.stdin.close()
            self.proc.wait(timeout=5)
        except Exception:
            self.proc.kill()


class TcpHandle(_WireHandle):
    """Talks the protocol over a TCP connection."""

    def __init__(self, host: str, port: int):
        super().__init__(f"{host}:{port}")
        self.sock = socket.create_connection((host, port), timeout=10.0)
        self.sock.setblocking(False)
        self._read_handshake()

    def _fileno(self) -> int:
        return self.sock.fileno()

    def _recv_chunk(self) -> bytes:
        return self.sock.recv(65536)

    def _write(self, data: bytes) -> None:
        self.sock.setblocking(True)
        try:
            self.sock.sendall(data)
        finally:
            self.sock.setblocking(False)

    def close(self):
        try:
            self.sock.close()
        except Exception:
            pass


class Dispatcher:
    """Routes task requests to capable handles with timeout and retry.

    Thread-safe; handles process sequentially, so concurrency comes from
    the pool. Keeps a per-kind dispatch count so tests can assert that
    disabled stages never reach a backend.
    """

    def __init__(self, timeout_s: float = DEFAULT_TIMEOUT_S, retries: int = DEFAULT_RETRIES):
        self.timeout_s = timeout_s
        self.retries = retries
        self._handles: list = []
        self._rr: dict = {}
        self._lock = threading.Lock()
        self.dispatch_counts: dict = {}

    def add_handle(self, handle) -> None:
        self._handles.append(handle)

    def handles_for(self, task_kind: str) -> list:
        return [h for h in self._handles if task_kind in h.capabilities]

    def dispatch(self, req: TaskRequest) -> TaskResponse:
        candidates = self.handles_for(req.task_kind)
        with self._lock:
            self.dispatch_counts[req.task_kind] = self.dispatch_counts.get(req.task_kind, 0) + 1
        if not candidates:
            return TaskResponse.failure(
                req.request_id, ERR_CAPABILITY, f"no backend advertises {req.task_kind}"
            )
        with self._lock:
            idx = self._rr.get(req.task_kind, 0)
            self._rr[req.task_kind] = idx + 1
        last = None
        for attempt in range(self.retries + 1):
            handle = candidates[(idx + attempt) % len(candidates)]
            resp = handle.request(req, timeout_s=self.timeout_s)
            if resp.ok:
                return resp
            last = resp
        return last

    def close(self):
        for handle in self._handles:
            handle.close()
