"""Minimal WebSocket implementation, both endpoints.

Covers what a browser needs to exchange JSON text messages: the
upgrade handshake, single and fragmented text/binary frames, masking,
ping/pong, and clean close.  No extensions, no TLS.
"""

from __future__ import annotations

import base64
import hashlib
import os
import struct

from ..errors import ProtocolError
from .frames import MAX_FRAME

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT = 0x0
OP_TEXT = 0x1
OP_BINARY = 0x2
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


class WsClosed(Exception):
    """Peer closed the WebSocket."""


def accept_key(key: str) -> str:
    digest = hashlib.sha1((key + _GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def _read_until_blank_line(sock) -> bytes:
    data = bytearray()
    while b"\r\n\r\n" not in data:
        if len(data) > 16384:
            raise ProtocolError("oversized HTTP header block")
        chunk = sock.recv(4096)
        if not chunk:
            raise WsClosed()
        data.extend(chunk)
    return bytes(data)


def _parse_headers(block: bytes):
    lines = block.split(b"\r\n")
    headers = {}
    for line in lines[1:]:
        if not line:
            break
        name, sep, value = line.partition(b":")
        if sep:
            headers[name.strip().lower().decode("latin-1")] = \
                value.strip().decode("latin-1")
    return lines[0].decode("latin-1"), headers


def server_handshake(sock) -> str:
    """Answer an HTTP upgrade request; returns the requested path."""
    request, headers = _parse_headers(_read_until_blank_line(sock))
    parts = request.split(" ")
    if len(parts) < 3 or parts[0] != "GET":
        raise ProtocolError(f"not a WebSocket upgrade: {request!r}")
    if headers.get("upgrade", "").lower() != "websocket":
        raise ProtocolError("missing Upgrade: websocket header")
    key = headers.get("sec-websocket-key")
    if not key:
        raise ProtocolError("missing Sec-WebSocket-Key header")
    response = ("HTTP/1.1 101 Switching Protocols\r\n"
                "Upgrade: websocket\r\n"
                "Connection: Upgrade\r\n"
                f"Sec-WebSocket-Accept: {accept_key(key)}\r\n"
                "\r\n")
    sock.sendall(response.encode("ascii"))
    return parts[1]


def client_handshake(sock, host: str, port: int, resource: str = "/") -> None:
    key = base64.b64encode(os.urandom(16)).decode("ascii")
    request = (f"GET {resource} HTTP/1.1\r\n"
               f"Host: {host}:{port}\r\n"
               "Upgrade: websocket\r\n"
               "Connection: Upgrade\r\n"
               f"Sec-WebSocket-Key: {key}\r\n"
               "Sec-WebSocket-Version: 13\r\n"
               "\r\n")
    sock.sendall(request.encode("ascii"))
    status, headers = _parse_headers(_read_until_blank_line(sock))
    if " 101 " not in status + " ":
        raise ProtocolError(f"WebSocket upgrade refused: {status!r}")
    if headers.get("sec-websocket-accept") != accept_key(key):
        raise ProtocolError("bad Sec-WebSocket-Accept value")


def _apply_mask(data: bytes, key: bytes) -> bytes:
    out = bytearray(data)
    for i in range(len(out)):
        out[i] ^= key[i & 3]
    return bytes(out)


def encode_ws_frame(opcode: int, payload: bytes, mask: bool) -> bytes:
    header = bytearray([0x80 | opcode])
    length = len(payload)
    mask_bit = 0x80 if mask else 0x00
    if length < 126:
        header.append(mask_bit | length)
    elif length < 65536:
        header.append(mask_bit | 126)
        header.extend(struct.pack(">H", length))
    else:
        header.append(mask_bit | 127)
        header.extend(struct.pack(">Q", length))
    if mask:
        key = os.urandom(4)
        header.extend(key)
        payload = _apply_mask(payload, key)
    return bytes(header) + payload


class WsConnection:
    """Framed message exchange over an already-upgraded socket."""

    def __init__(self, sock, is_server: bool):
        self.sock = sock
        self.is_server = is_server   # servers send unmasked, clients masked
        self._buffer = bytearray()

    def _read_exact(self, n: int) -> bytes:
        while len(self._buffer) < n:
            chunk = self.sock.recv(65536)
            if not chunk:
                raise WsClosed()
            self._buffer.extend(chunk)
        out = bytes(self._buffer[:n])
        del self._buffer[:n]
        return out

    def _read_frame(self):
        b1, b2 = self._read_exact(2)
        fin = bool(b1 & 0x80)
        opcode = b1 & 0x0F
        masked = bool(b2 & 0x80)
        length = b2 & 0x7F
        if length == 126:
            (length,) = struct.unpack(">H", self._read_exact(2))
        elif length == 127:
            (length,) = struct.unpack(">Q", self._read_exact(8))
        if length > MAX_FRAME:
            raise ProtocolError(f"WebSocket payload {length} exceeds "
                                f"{MAX_FRAME}")
        key = self._read_exact(4) if masked else None
        payload = self._read_exact(length)
        if key:
            payload = _apply_mask(payload, key)
        return fin, opcode, payload

    def recv_message(self):
        """Next complete data message as (opcode, payload bytes).

        Control frames are handled inline; close raises WsClosed.
        """
        message = bytearray()
        message_op = None
        while True:
            fin, opcode, payload = self._read_frame()
            if opcode == OP_CLOSE:
                try:
                    self.sock.sendall(encode_ws_frame(
                        OP_CLOSE, payload[:2], not self.is_server))
                except OSError:
                    pass
                raise WsClosed()
            if opcode == OP_PING:
                self.sock.sendall(encode_ws_frame(
                    OP_PONG, payload, not self.is_server))
                continue
            if opcode == OP_PONG:
                continue
            if opcode in (OP_TEXT, OP_BINARY):
                if message_op is not None:
                    raise ProtocolError("interleaved WebSocket messages")
                message_op = opcode
                message.extend(payload)
            elif opcode == OP_CONT:
                if message_op is None:
                    raise ProtocolError("continuation without start frame")
                message.extend(payload)
            else:
                raise ProtocolError(f"unsupported WebSocket opcode {opcode}")
            if fin:
                return message_op, bytes(message)

    def send_text(self, payload: bytes) -> None:
        self.sock.sendall(encode_ws_frame(OP_TEXT, payload,
                                          not self.is_server))

    def send_close(self) -> None:
        try:
            self.sock.sendall(encode_ws_frame(OP_CLOSE, b"",
                                              not self.is_server))
        except OSError:
            pass
