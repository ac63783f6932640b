"""Frame codec, broker relay, services, and both transports."""

import json
import random
import struct
import threading
import time

import pytest

from groundsim.comms.broker import Broker
from groundsim.comms.client import Client
from groundsim.comms.frames import (
    MAX_FRAME,
    FrameAssembler,
    decode_body,
    encode_body,
    encode_frame,
)
from groundsim.errors import NoSuchService, NotAdvertised, ProtocolError


def wait_for(predicate, timeout=2.0, interval=0.005):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return True
        time.sleep(interval)
    return predicate()


@pytest.fixture
def broker():
    b = Broker(port=0, ws_port=0)
    b.start()
    yield b
    b.stop()


def _client(broker, name="c", use_ws=False):
    port = broker.ws_port if use_ws else broker.port
    return Client(port=port, name=name, use_ws=use_ws)


# --- codec ------------------------------------------------------------------

def test_body_round_trip():
    msg = {"op": "PUBLISH", "seq": 3, "topic": "a/b",
           "payload": {"x": 1.5, "s": "uniçode"}}
    assert decode_body(encode_body(msg)) == msg


def test_frame_prefix_is_little_endian_length():
    frame = encode_frame({"op": "PING", "seq": 1})
    assert struct.unpack("<I", frame[:4])[0] == len(frame) - 4


def test_codec_rejections():
    with pytest.raises(ProtocolError):
        encode_body(["not", "a", "dict"])
    with pytest.raises(ProtocolError):
        encode_body({"op": "NOPE", "seq": 1})
    with pytest.raises(ProtocolError):
        encode_body({"op": "PING"})
    with pytest.raises(ProtocolError):
        decode_body(b"\xff\xfe junk")
    with pytest.raises(ProtocolError):
        decode_body(b"[1,2]")
    with pytest.raises(ProtocolError):
        decode_body(b'{"op":"PING","seq":-1}')
    with pytest.raises(ProtocolError):
        decode_body(b'{"op":"PING","seq":true}')
    with pytest.raises(ProtocolError):
        decode_body(b'{"op":"PING","seq":1.0}')


def test_assembler_reassembles_dribbled_stream():
    frames = [encode_frame({"op": "PING", "seq": i}) for i in (1, 2)]
    stream = b"".join(frames)
    assembler = FrameAssembler()
    got = []
    for i in range(len(stream)):
        got.extend(assembler.feed(stream[i:i + 1]))
    assert [decode_body(b)["seq"] for b in got] == [1, 2]

    both = list(FrameAssembler().feed(stream))
    assert len(both) == 2


def test_assembler_rejects_oversized_length():
    assembler = FrameAssembler()
    with pytest.raises(ProtocolError):
        list(assembler.feed(struct.pack("<I", MAX_FRAME + 1) + b"x"))


def test_stream_fuzz_raises_only_protocol_errors():
    rng = random.Random(1337)
    for _ in range(200):
        blob = bytes(rng.randrange(256)
                     for _ in range(rng.randrange(1, 200)))
        assembler = FrameAssembler()
        try:
            for body in assembler.feed(blob):
                decode_body(body)
        except ProtocolError:
            pass


def test_oversized_body_rejected_at_encode():
    with pytest.raises(ProtocolError):
        encode_body({"op": "PUBLISH", "seq": 1, "topic": "t",
                     "payload": "x" * (MAX_FRAME + 1)})


# --- pub/sub over the broker ------------------------------------------------

def test_fan_out_reaches_all_subscribers(broker):
    with _client(broker, "pub") as pub, _client(broker, "s1") as s1, \
            _client(broker, "s2") as s2:
        got1, got2 = [], []
        s1.subscribe("news", lambda p, _f: got1.append(p))
        s2.subscribe("news", lambda p, _f: got2.append(p))
        pub.advertise("news")
        payload = {"n": 1, "text": "café"}
        pub.publish("news", payload)
        assert wait_for(lambda: got1 and got2)
        assert got1 == [payload]
        assert got2 == [payload]


def test_late_subscriber_misses_earlier_messages(broker):
    with _client(broker, "pub") as pub, _client(broker, "sub") as sub:
        pub.advertise("t")
        pub.publish("t", 1)
        time.sleep(0.1)
        got = []
        sub.subscribe("t", lambda p, _f: got.append(p))
        pub.publish("t", 2)
        assert wait_for(lambda: got)
        assert got == [2]


def test_unsubscribe_stops_delivery(broker):
    with _client(broker, "pub") as pub, _client(broker, "sub") as sub:
        got = []
        sub.subscribe("t", lambda p, _f: got.append(p))
        pub.advertise("t")
        pub.publish("t", "a")
        assert wait_for(lambda: got == ["a"])
        sub.unsubscribe("t")
        pub.publish("t", "b")
        time.sleep(0.15)
        assert got == ["a"]


def test_publish_without_advertise_surfaces_async_error(broker):
    with _client(broker, "pub") as pub:
        pub.publish("never/advertised", 1)
        assert wait_for(lambda: pub.async_errors)
        err = pub.async_errors[0]
        assert err["code"] == "NotAdvertised"


def test_per_publisher_order_preserved(broker):
    n = 500
    with _client(broker, "sub") as sub:
        seen = {"a": [], "b": []}
        done = threading.Event()

        def collect(payload, _frame):
            seen[payload["who"]].append(payload["i"])
            if len(seen["a"]) == n and len(seen["b"]) == n:
                done.set()

        sub.subscribe("stream", collect)

        def pump(name):
            with _client(broker, name) as c:
                c.advertise("stream")
                for i in range(n):
                    c.publish("stream", {"who": name, "i": i})
                time.sleep(0.3)

        threads = [threading.Thread(target=pump, args=(who,))
                   for who in ("a", "b")]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert done.wait(5.0)
        assert seen["a"] == list(range(n))
        assert seen["b"] == list(range(n))


# --- services ---------------------------------------------------------------

def test_service_call_round_trip(broker):
    broker.register_service("math/double", lambda req: {"v": req["v"] * 2})
    with _client(broker) as c:
        assert c.call("math/double", {"v": 21}) == {"v": 42}


def test_unknown_service_raises(broker):
    with _client(broker) as c:
        with pytest.raises(NoSuchService):
            c.call("no/such")


def test_service_exception_becomes_service_error(broker):
    def boom(_req):
        raise ValueError("bad input")
    broker.register_service("explode", boom)
    with _client(broker) as c:
        with pytest.raises(ProtocolError) as err:
            c.call("explode")
        assert "ServiceError" in str(err.value)
        assert "bad input" in str(err.value)


# --- introspection ----------------------------------------------------------

def test_hello_reports_server_identity(broker):
    with _client(broker, "greeter") as c:
        assert c.server_info["server"] == "groundsim"
        assert c.server_info["version"] == 1


def test_topic_table_counts_and_rate(broker):
    with _client(broker, "pub") as pub, _client(broker, "sub") as sub:
        pub.advertise("beat", type_name="heartbeat")
        sub.subscribe("beat", lambda p, _f: None)
        for _ in range(20):
            pub.publish("beat", 0)
            time.sleep(0.01)
        rows = {row["name"]: row for row in pub.list_topics()}
        row = rows["beat"]
        assert row["type_name"] == "heartbeat"
        assert row["publisher_count"] == 1
        assert row["subscriber_count"] == 1
        assert 30.0 < row["rate_hz"] < 300.0


def test_client_table_lists_transports(broker):
    with _client(broker, "alpha") as a, \
            _client(broker, "webby", use_ws=True) as wsc:
        rows = a.list_clients()
        by_name = {row["name"]: row for row in rows}
        assert by_name["alpha"]["transport"] == "tcp"
        assert by_name["webby"]["transport"] == "ws"
        wsc.ping()
        a.ping()


# --- websocket transport ----------------------------------------------------

def test_cross_transport_fan_out(broker):
    with _client(broker, "tcp_pub") as pub, \
            _client(broker, "ws_sub", use_ws=True) as wsc:
        got = []
        wsc.subscribe("mix", lambda p, _f: got.append(p))
        pub.advertise("mix")
        pub.publish("mix", {"k": [1, 2, 3]})
        assert wait_for(lambda: got)
        assert got == [{"k": [1, 2, 3]}]


def test_ws_publisher_reaches_tcp_subscriber(broker):
    with _client(broker, "ws_pub", use_ws=True) as wsp, \
            _client(broker, "tcp_sub") as sub:
        got = []
        sub.subscribe("rev", lambda p, _f: got.append(p))
        wsp.advertise("rev")
        wsp.publish("rev", "hello")
        assert wait_for(lambda: got == ["hello"])


def test_ws_service_call(broker):
    broker.register_service("echo", lambda req: req)
    with _client(broker, "ws", use_ws=True) as c:
        assert c.call("echo", {"roundtrip": True}) == {"roundtrip": True}


# --- rate measurement -------------------------------------------------------

def test_measure_hz_tracks_paced_publisher(broker):
    stop = threading.Event()

    def pace():
        with _client(broker, "metronome") as c:
            c.advertise("tick")
            t0 = time.monotonic()
            i = 0
            while not stop.is_set():
                c.publish("tick", i)
                i += 1
                next_at = t0 + i * 0.02
                delay = next_at - time.monotonic()
                if delay > 0:
                    time.sleep(delay)

    thread = threading.Thread(target=pace)
    thread.start()
    try:
        with _client(broker, "meter") as meter:
            hz = meter.measure_hz("tick", window_s=1.0)
    finally:
        stop.set()
        thread.join()
    assert hz == pytest.approx(50.0, abs=6.0)


# --- in-process peer and cleanup --------------------------------------------

def test_local_client_bytes_reach_socket_subscriber(broker):
    local = broker.local_client("sim")
    local.advertise("sim/clock")
    with _client(broker, "sub") as sub:
        frames = []
        sub.subscribe("sim/clock", lambda p, f: frames.append(f))
        assert local.subscriber_count("sim/clock") == 1
        body = encode_body({"op": "PUBLISH", "seq": local.next_seq(),
                            "topic": "sim/clock", "payload": {"t": 0.5}})
        local.publish("sim/clock", body)
        assert wait_for(lambda: frames)
        assert frames[0]["payload"] == {"t": 0.5}
    local.close()
    assert local.subscriber_count("sim/clock") == 0


def test_disconnect_cleans_topic_and_client_tables(broker):
    c = _client(broker, "fleeting")
    c.advertise("gone")
    c.subscribe("gone", lambda p, _f: None)
    c.close()
    with _client(broker, "checker") as probe:
        assert wait_for(lambda: "gone" not in [row["name"]
                                               for row in probe.list_topics()])
        names = [row["name"] for row in probe.list_clients()]
        assert "fleeting" not in names
