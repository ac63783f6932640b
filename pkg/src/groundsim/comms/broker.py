"""Central relay for topics and services.

Every message crosses this process: publishers send PUBLISH frames,
the broker forwards the original body bytes to each subscriber, so
per-publisher ordering is inherited from the transport.  Services are
in-process handlers registered by the simulator.
"""

from __future__ import annotations

import socket
import threading
import time
from collections import deque

from ..errors import BindFailure, ProtocolError
from . import wsproto
from .frames import FrameAssembler, decode_body, encode_body, frame_prefix

_RATE_WINDOW = 64          # publish stamps kept per topic
_STALE_AFTER = 5.0         # seconds without traffic before rate reads 0


class _Topic:
    __slots__ = ("type_name", "publishers", "subscribers", "stamps", "count")

    def __init__(self, type_name: str):
        self.type_name = type_name
        self.publishers = set()
        self.subscribers = set()
        self.stamps = deque(maxlen=_RATE_WINDOW)
        self.count = 0

    def rate_hz(self, now: float) -> float:
        if len(self.stamps) < 2 or now - self.stamps[-1] > _STALE_AFTER:
            return 0.0
        span = self.stamps[-1] - self.stamps[0]
        if span <= 0.0:
            return 0.0
        return (len(self.stamps) - 1) / span


class _Connection:
    """One attached peer, regardless of transport."""

    kind = "?"

    def __init__(self, name: str, addr: str):
        self.name = name
        self.addr = addr
        self.send_lock = threading.Lock()
        self.closed = False

    def send_body(self, body: bytes) -> None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class _TcpConnection(_Connection):
    kind = "tcp"

    def __init__(self, sock, addr):
        super().__init__(name="", addr=f"{addr[0]}:{addr[1]}")
        self.sock = sock

    def send_body(self, body: bytes) -> None:
        with self.send_lock:
            self.sock.sendall(frame_prefix(body) + body)

    def close(self) -> None:
        self.closed = True
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class _WsBrokerConnection(_Connection):
    kind = "ws"

    def __init__(self, ws: wsproto.WsConnection, addr):
        super().__init__(name="", addr=f"{addr[0]}:{addr[1]}")
        self.ws = ws

    def send_body(self, body: bytes) -> None:
        with self.send_lock:
            self.ws.send_text(body)

    def close(self) -> None:
        self.closed = True
        self.ws.send_close()
        try:
            self.ws.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.ws.sock.close()


class _LocalConnection(_Connection):
    """In-process peer for the simulator itself."""

    kind = "local"

    def __init__(self, name: str):
        super().__init__(name=name, addr="in-process")
        self.inbox = deque(maxlen=64)   # acks/errors addressed to the sim

    def send_body(self, body: bytes) -> None:
        self.inbox.append(body)

    def close(self) -> None:
        self.closed = True


class LocalClient:
    """Publish-side handle the simulation thread talks through."""

    def __init__(self, broker: "Broker", name: str):
        self.broker = broker
        self.conn = _LocalConnection(name)
        self._seq = 0
        with broker._lock:
            broker._clients[self.conn] = time.time()

    def next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def advertise(self, topic: str, type_name: str = "json") -> None:
        self.broker._advertise(self.conn, topic, type_name)

    def publish(self, topic: str, body: bytes) -> None:
        """body must be a complete PUBLISH frame body for this topic."""
        self.broker._fan_out(self.conn, topic, body)

    def subscriber_count(self, topic: str) -> int:
        entry = self.broker._topics.get(topic)
        return len(entry.subscribers) if entry else 0

    def close(self) -> None:
        self.broker._cleanup(self.conn)


class Broker:
    """Socket server speaking the frame protocol on TCP and WebSocket."""

    def __init__(self, port: int = 23500, ws_port: int = 23501,
                 host: str = "127.0.0.1"):
        self.host = host
        self.port = port
        self.ws_port = ws_port
        self._lock = threading.RLock()
        self._topics: dict[str, _Topic] = {}
        self._clients: dict[_Connection, float] = {}
        self._services = {}
        self._listeners = []
        self._threads = []
        self._running = False

    # -- lifecycle -----------------------------------------------------

    def start(self) -> None:
        try:
            tcp = self._listen(self.port)
            self.port = tcp.getsockname()[1]
            ws = self._listen(self.ws_port)
            self.ws_port = ws.getsockname()[1]
        except OSError as exc:
            raise BindFailure(f"cannot bind server port: {exc}") from exc
        self._listeners = [tcp, ws]
        self._running = True
        for sock, serve in ((tcp, self._serve_tcp), (ws, self._serve_ws)):
            thread = threading.Thread(target=self._accept_loop,
                                      args=(sock, serve), daemon=True)
            thread.start()
            self._threads.append(thread)

    def _listen(self, port: int):
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((self.host, port))
        sock.listen(64)
        return sock

    def stop(self) -> None:
        self._running = False
        for sock in self._listeners:
            try:
                sock.close()
            except OSError:
                pass
        with self._lock:
            conns = list(self._clients)
        for conn in conns:
            try:
                conn.close()
            except OSError:
                pass

    def register_service(self, name: str, handler) -> None:
        self._services[name] = handler

    def local_client(self, name: str) -> LocalClient:
        return LocalClient(self, name)

    def topic_names(self):
        with self._lock:
            return sorted(self._topics)

    # -- accept/serve loops --------------------------------------------

    def _accept_loop(self, listener, serve) -> None:
        while self._running:
            try:
                sock, addr = listener.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            thread = threading.Thread(target=serve, args=(sock, addr),
                                      daemon=True)
            thread.start()

    def _serve_tcp(self, sock, addr) -> None:
        conn = _TcpConnection(sock, addr)
        with self._lock:
            self._clients[conn] = time.time()
        assembler = FrameAssembler()
        try:
            while True:
                data = sock.recv(262144)
                if not data:
                    break
                for body in assembler.feed(data):
                    self._handle(conn, body)
        except ProtocolError as exc:
            self._send_error(conn, 0, "Protocol", str(exc))
        except OSError:
            pass
        finally:
            self._cleanup(conn)

    def _serve_ws(self, sock, addr) -> None:
        try:
            wsproto.server_handshake(sock)
        except (ProtocolError, wsproto.WsClosed, OSError):
            sock.close()
            return
        conn = _WsBrokerConnection(wsproto.WsConnection(sock, is_server=True),
                                  addr)
        with self._lock:
            self._clients[conn] = time.time()
        try:
            while True:
                _opcode, payload = conn.ws.recv_message()
                self._handle(conn, payload)
        except ProtocolError as exc:
            self._send_error(conn, 0, "Protocol", str(exc))
        except (wsproto.WsClosed, OSError):
            pass
        finally:
            self._cleanup(conn)

    # -- dispatch ------------------------------------------------------

    def _handle(self, conn: _Connection, body: bytes) -> None:
        message = decode_body(body)     # ProtocolError ends the connection
        op = message["op"]
        seq = message["seq"]
        if op == "PUBLISH":
            self._on_publish(conn, message, body)
        elif op == "HELLO":
            name = message.get("name")
            if isinstance(name, str):
                conn.name = name
            self._send(conn, {"op": "HELLO", "seq": seq,
                              "server": "groundsim", "version": 1})
        elif op == "ADVERTISE":
            topic = self._topic_arg(conn, message)
            if topic is not None:
                self._advertise(conn, topic,
                                str(message.get("type", "json")))
                self._ack(conn, seq)
        elif op == "SUBSCRIBE":
            topic = self._topic_arg(conn, message)
            if topic is not None:
                with self._lock:
                    entry = self._topics.get(topic)
                    if entry is None:
                        entry = self._topics[topic] = _Topic("json")
                    entry.subscribers.add(conn)
                self._ack(conn, seq)
        elif op == "UNSUBSCRIBE":
            topic = self._topic_arg(conn, message)
            if topic is not None:
                with self._lock:
                    entry = self._topics.get(topic)
                    if entry is not None:
                        entry.subscribers.discard(conn)
                        self._drop_if_idle(topic, entry)
                self._ack(conn, seq)
        elif op == "CALL":
            self._on_call(conn, message)
        elif op == "LIST_TOPICS":
            self._send(conn, {"op": "TOPICS", "seq": seq,
                              "topics": self._topic_table()})
        elif op == "LIST_CLIENTS":
            self._send(conn, {"op": "CLIENTS", "seq": seq,
                              "clients": self._client_table()})
        elif op == "PING":
            self._send(conn, {"op": "PONG", "seq": seq})
        elif op in ("REPLY", "ERROR", "TOPICS", "CLIENTS", "PONG", "HELLO"):
            pass                        # server-to-client ops; ignore echoes
        else:
            self._send_error(conn, seq, "Protocol", f"unexpected op {op}")

    def _topic_arg(self, conn, message):
        topic = message.get("topic")
        if not isinstance(topic, str) or not topic:
            self._send_error(conn, message["seq"], "Protocol",
                             "missing topic")
            return None
        return topic

    def _on_publish(self, conn, message, body: bytes) -> None:
        topic = message.get("topic")
        if not isinstance(topic, str) or not topic:
            self._send_error(conn, message["seq"], "Protocol",
                             "missing topic")
            return
        entry = self._topics.get(topic)
        if entry is None or conn not in entry.publishers:
            self._send_error(conn, message["seq"], "NotAdvertised",
                             f"publish to {topic!r} before ADVERTISE")
            return
        self._fan_out(conn, topic, body)

    def _fan_out(self, conn, topic: str, body: bytes) -> None:
        with self._lock:
            entry = self._topics.get(topic)
            if entry is None or conn not in entry.publishers:
                raise ProtocolError(f"publish to unadvertised topic {topic!r}")
            entry.stamps.append(time.monotonic())
            entry.count += 1
            targets = list(entry.subscribers)
        for target in targets:
            try:
                target.send_body(body)
            except OSError:
                pass                    # reader thread will clean it up

    def _advertise(self, conn, topic: str, type_name: str) -> None:
        with self._lock:
            entry = self._topics.get(topic)
            if entry is None:
                entry = self._topics[topic] = _Topic(type_name)
            elif type_name != "json":
                entry.type_name = type_name
            entry.publishers.add(conn)

    def _on_call(self, conn, message) -> None:
        service = message.get("service")
        seq = message["seq"]
        handler = self._services.get(service) if isinstance(service, str) \
            else None
        if handler is None:
            self._send_error(conn, seq, "NoSuchService",
                             f"no service {service!r}")
            return
        try:
            result = handler(message.get("request") or {})
        except Exception as exc:      # noqa: BLE001 - isolate service faults
            self._send_error(conn, seq, "ServiceError", str(exc))
            return
        self._send(conn, {"op": "REPLY", "seq": seq, "result": result})

    # -- tables --------------------------------------------------------

    def _topic_table(self):
        now = time.monotonic()
        with self._lock:
            return [{"name": name,
                     "type_name": entry.type_name,
                     "publisher_count": len(entry.publishers),
                     "subscriber_count": len(entry.subscribers),
                     "rate_hz": round(entry.rate_hz(now), 3)}
                    for name, entry in sorted(self._topics.items())]

    def _client_table(self):
        with self._lock:
            return [{"name": conn.name, "addr": conn.addr,
                     "transport": conn.kind}
                    for conn in self._clients]

    # -- plumbing ------------------------------------------------------

    def _send(self, conn, message: dict) -> None:
        try:
            conn.send_body(encode_body(message))
        except OSError:
            pass

    def _send_error(self, conn, seq: int, code: str, text: str) -> None:
        self._send(conn, {"op": "ERROR", "seq": seq, "code": code,
                          "message": text})

    def _ack(self, conn, seq: int) -> None:
        self._send(conn, {"op": "REPLY", "seq": seq, "result": {"ok": True}})

    def _drop_if_idle(self, topic: str, entry: _Topic) -> None:
        if not entry.publishers and not entry.subscribers:
            self._topics.pop(topic, None)

    def _cleanup(self, conn) -> None:
        with self._lock:
            self._clients.pop(conn, None)
            for topic in list(self._topics):
                entry = self._topics[topic]
                entry.publishers.discard(conn)
                entry.subscribers.discard(conn)
                self._drop_if_idle(topic, entry)
        try:
            conn.close()
        except OSError:
            pass
