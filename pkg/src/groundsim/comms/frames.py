"""Wire framing: 4-byte little-endian length prefix, JSON object body."""

from __future__ import annotations

import json
import struct

from ..errors import ProtocolError

MAX_FRAME = 16 * 1024 * 1024

OPS = frozenset({
    "HELLO", "ADVERTISE", "SUBSCRIBE", "UNSUBSCRIBE", "PUBLISH", "CALL",
    "REPLY", "ERROR", "LIST_TOPICS", "LIST_CLIENTS", "TOPICS", "CLIENTS",
    "PING", "PONG",
})

_LEN = struct.Struct("<I")


def encode_body(message: dict) -> bytes:
    """Serialize one message body, validating the envelope fields."""
    if not isinstance(message, dict):
        raise ProtocolError("frame body must be a JSON object")
    op = message.get("op")
    if op not in OPS:
        raise ProtocolError(f"unknown op {op!r}")
    if not isinstance(message.get("seq"), int):
        raise ProtocolError("frame needs an integer seq")
    body = json.dumps(message, separators=(",", ":")).encode("utf-8")
    if len(body) > MAX_FRAME:
        raise ProtocolError(f"frame body {len(body)} bytes exceeds "
                            f"{MAX_FRAME}")
    return body


def encode_frame(message: dict) -> bytes:
    body = encode_body(message)
    return _LEN.pack(len(body)) + body


def frame_prefix(body: bytes) -> bytes:
    return _LEN.pack(len(body))


def decode_body(body: bytes) -> dict:
    """Parse and validate one frame body."""
    try:
        message = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"frame body is not valid JSON: {exc}")
    if not isinstance(message, dict):
        raise ProtocolError("frame body must be a JSON object")
    op = message.get("op")
    if op not in OPS:
        raise ProtocolError(f"unknown op {op!r}")
    seq = message.get("seq")
    if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0:
        raise ProtocolError("frame needs a non-negative integer seq")
    return message


class FrameAssembler:
    """Incremental splitter for a TCP byte stream."""

    def __init__(self):
        self._buffer = bytearray()

    def feed(self, data: bytes):
        """Append received bytes and yield each complete frame body."""
        self._buffer.extend(data)
        while True:
            if len(self._buffer) < 4:
                return
            (length,) = _LEN.unpack_from(self._buffer)
            if length > MAX_FRAME:
                raise ProtocolError(f"frame length {length} exceeds "
                                    f"{MAX_FRAME}")
            if len(self._buffer) < 4 + length:
                return
            body = bytes(self._buffer[4:4 + length])
            del self._buffer[:4 + length]
            yield body
