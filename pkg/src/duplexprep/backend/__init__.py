"""Versioned request/response protocol to inference backends, transports,
deterministic mock backends, and the conformance suite."""

from duplexprep.backend.protocol import (
    PROTOCOL_VERSION,
    TASK_KINDS,
    ProtocolError,
    TaskRequest,
    TaskResponse,
    decode_frame,
    encode_frame,
)
from duplexprep.backend.dispatch import Dispatcher, InProcessHandle

__all__ = [
    "PROTOCOL_VERSION",
    "TASK_KINDS",
    "ProtocolError",
    "TaskRequest",
    "TaskResponse",
    "decode_frame",
    "encode_frame",
    "Dispatcher",
    "InProcessHandle",
]
