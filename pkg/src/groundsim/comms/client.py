"""Connecting side of the frame protocol, shared by CLI and tests."""

from __future__ import annotations

import json
import socket
import threading
import time
from collections import deque

from ..errors import CallTimeout, NoSuchService, NotAdvertised, ProtocolError
from . import wsproto
from .frames import FrameAssembler, encode_body, frame_prefix


class _Pending:
    __slots__ = ("event", "message")

    def __init__(self):
        self.event = threading.Event()
        self.message = None


class Client:
    """Threaded protocol client: one reader thread, blocking calls.

    Subscription callbacks run on the reader thread; keep them short
    and never issue blocking client calls from inside one.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 23500,
                 name: str = "client", use_ws: bool = False,
                 connect_timeout: float = 5.0):
        self.host = host
        self.port = port
        self.name = name
        self.use_ws = use_ws
        self._seq = 0
        self._seq_lock = threading.Lock()
        self._send_lock = threading.Lock()
        self._pending: dict[int, _Pending] = {}
        self._handlers = {}
        self._advertised = set()
        self.async_errors = deque(maxlen=64)
        self._closed = False
        self.server_info = None

        self._sock = socket.create_connection((host, port),
                                              timeout=connect_timeout)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._ws = None
        if use_ws:
            wsproto.client_handshake(self._sock, host, port)
            self._ws = wsproto.WsConnection(self._sock, is_server=False)
        self._sock.settimeout(None)
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self.server_info = self._request({"op": "HELLO", "name": name},
                                         timeout=connect_timeout)

    # -- plumbing ------------------------------------------------------

    def _next_seq(self) -> int:
        with self._seq_lock:
            self._seq += 1
            return self._seq

    def _send(self, message: dict) -> int:
        seq = self._next_seq()
        message["seq"] = seq
        body = encode_body(message)
        with self._send_lock:
            if self._ws is not None:
                self._ws.send_text(body)
            else:
                self._sock.sendall(frame_prefix(body) + body)
        return seq

    def _request(self, message: dict, timeout: float = 5.0) -> dict:
        pending = _Pending()
        with self._seq_lock:
            self._seq += 1
            seq = self._seq
            self._pending[seq] = pending
        message["seq"] = seq
        body = encode_body(message)
        with self._send_lock:
            if self._ws is not None:
                self._ws.send_text(body)
            else:
                self._sock.sendall(frame_prefix(body) + body)
        if not pending.event.wait(timeout):
            self._pending.pop(seq, None)
            raise CallTimeout(f"no reply to {message['op']} within "
                              f"{timeout} s")
        reply = pending.message
        if reply.get("op") == "ERROR":
            self._raise_error(reply)
        return reply

    def _raise_error(self, reply: dict):
        code = reply.get("code")
        text = reply.get("message", "")
        if code == "NoSuchService":
            raise NoSuchService(text)
        if code == "NotAdvertised":
            raise NotAdvertised(text)
        raise ProtocolError(f"{code}: {text}")

    def _read_loop(self) -> None:
        try:
            if self._ws is not None:
                while True:
                    _op, payload = self._ws.recv_message()
                    self._dispatch(payload)
            else:
                assembler = FrameAssembler()
                while True:
                    data = self._sock.recv(262144)
                    if not data:
                        return
                    for body in assembler.feed(data):
                        self._dispatch(body)
        except (OSError, wsproto.WsClosed, ProtocolError):
            return
        finally:
            for pending in list(self._pending.values()):
                pending.event.set()

    def _dispatch(self, body: bytes) -> None:
        try:
            message = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            return
        if not isinstance(message, dict):
            return
        op = message.get("op")
        if op == "PUBLISH":
            handler = self._handlers.get(message.get("topic"))
            if handler is not None:
                handler(message.get("payload"), message)
            return
        seq = message.get("seq")
        pending = self._pending.pop(seq, None) if isinstance(seq, int) \
            else None
        if pending is not None:
            pending.message = message
            pending.event.set()
        elif op == "ERROR":
            self.async_errors.append(message)

    # -- public operations ---------------------------------------------

    def advertise(self, topic: str, type_name: str = "json") -> None:
        self._request({"op": "ADVERTISE", "topic": topic,
                       "type": type_name})
        self._advertised.add(topic)

    def publish(self, topic: str, payload) -> None:
        """Fire-and-forget; a NotAdvertised violation arrives later on
        async_errors."""
        self._send({"op": "PUBLISH", "topic": topic, "payload": payload})

    def subscribe(self, topic: str, callback) -> None:
        self._handlers[topic] = callback
        self._request({"op": "SUBSCRIBE", "topic": topic})

    def unsubscribe(self, topic: str) -> None:
        self._request({"op": "UNSUBSCRIBE", "topic": topic})
        self._handlers.pop(topic, None)

    def call(self, service: str, request: dict | None = None,
             timeout: float = 2.0) -> dict:
        reply = self._request({"op": "CALL", "service": service,
                               "request": request or {}}, timeout=timeout)
        return reply.get("result")

    def list_topics(self) -> list:
        return self._request({"op": "LIST_TOPICS"}).get("topics", [])

    def list_clients(self) -> list:
        return self._request({"op": "LIST_CLIENTS"}).get("clients", [])

    def ping(self) -> None:
        self._request({"op": "PING"})

    def measure_hz(self, topic: str, window_s: float = 2.0) -> float:
        """Messages per second over one wall-clock window."""
        count = {"n": 0}

        def tally(_payload, _frame):
            count["n"] += 1

        already = topic in self._handlers
        previous = self._handlers.get(topic)
        self.subscribe(topic, tally)
        try:
            time.sleep(window_s)
        finally:
            if already:
                self._handlers[topic] = previous
            else:
                self.unsubscribe(topic)
        return count["n"] / window_s

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        if self._ws is not None:
            self._ws.send_close()
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()
        self._reader.join(timeout=2.0)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False
