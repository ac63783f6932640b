"""Command line entry points.

  sim launch <world> [--headless] [--rtf X] [--duration S] [--seed N]
                     [--port P] [--ws-port P] [--log-dir D]
  sim topic list|echo <topic>|hz <topic> [--window S]
  sim clients

Inspection commands talk to a running server given by --server or the
MVS_PORT/MVS_WS_PORT environment (default 127.0.0.1:23500).

Exit codes: 0 ok, 2 world file error, 3 port bind failure,
4 server unreachable.
"""

from __future__ import annotations

import argparse
import json
import os
import queue
import signal
import sys
import threading

from .comms.broker import Broker
from .comms.client import Client
from .errors import BindFailure, WorldFileError
from .simulation import Simulation
from .worldfile import load_world

DEFAULT_PORT = 23500
DEFAULT_WS_PORT = 23501


def _env_port(name: str, fallback: int) -> int:
    raw = os.environ.get(name)
    if not raw:
        return fallback
    try:
        return int(raw)
    except ValueError:
        print(f"warning: ignoring non-numeric {name}={raw!r}",
              file=sys.stderr)
        return fallback


def _server_address(value: str | None):
    if value:
        host, sep, port = value.rpartition(":")
        if not sep:
            return value, _env_port("MVS_PORT", DEFAULT_PORT)
        return host, int(port)
    return "127.0.0.1", _env_port("MVS_PORT", DEFAULT_PORT)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sim", description="multi-vehicle ground robot simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    launch = sub.add_parser("launch", help="run a world file")
    launch.add_argument("world", help="world XML file")
    launch.add_argument("--headless", action="store_true",
                        help="accepted for compatibility; there is no "
                             "native GUI, rendering happens in the web UI")
    launch.add_argument("--rtf", type=float, default=None,
                        help="realtime factor override (0 = unthrottled)")
    launch.add_argument("--duration", type=float, default=None,
                        help="stop after this many simulated seconds")
    launch.add_argument("--seed", type=int, default=None,
                        help="random seed override")
    launch.add_argument("--port", type=int, default=None,
                        help="TCP port (default MVS_PORT or 23500)")
    launch.add_argument("--ws-port", type=int, default=None,
                        help="WebSocket port (default MVS_WS_PORT or 23501)")
    launch.add_argument("--log-dir", default=None,
                        help="CSV log directory override")

    topic = sub.add_parser("topic", help="inspect topics")
    topic_sub = topic.add_subparsers(dest="topic_command", required=True)
    t_list = topic_sub.add_parser("list", help="list advertised topics")
    t_list.add_argument("--server", default=None)
    t_list.add_argument("--json", action="store_true", dest="as_json")
    t_echo = topic_sub.add_parser("echo", help="print messages as JSON lines")
    t_echo.add_argument("topic")
    t_echo.add_argument("--server", default=None)
    t_hz = topic_sub.add_parser("hz", help="measure publish rate")
    t_hz.add_argument("topic")
    t_hz.add_argument("--window", type=float, default=2.0)
    t_hz.add_argument("--server", default=None)

    clients = sub.add_parser("clients", help="list connected clients")
    clients.add_argument("--server", default=None)
    clients.add_argument("--json", action="store_true", dest="as_json")
    return parser


def cmd_launch(args) -> int:
    try:
        definition = load_world(args.world, env=os.environ)
    except WorldFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    port = args.port if args.port is not None \
        else _env_port("MVS_PORT", DEFAULT_PORT)
    ws_port = args.ws_port if args.ws_port is not None \
        else _env_port("MVS_WS_PORT", DEFAULT_WS_PORT)
    broker = Broker(port=port, ws_port=ws_port)
    try:
        broker.start()
    except BindFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    sim = Simulation(definition, rtf=args.rtf, seed=args.seed,
                     log_dir=args.log_dir)
    sim.attach(broker)
    stop = threading.Event()
    previous = signal.signal(signal.SIGINT, lambda *_: stop.set())
    try:
        sim.run(duration=args.duration, stop_event=stop)
    finally:
        signal.signal(signal.SIGINT, previous)
        sim.close()
        broker.stop()
    return 0


def _connect(server: str | None, name: str) -> Client:
    host, port = _server_address(server)
    return Client(host=host, port=port, name=name)


def cmd_topic_list(args) -> int:
    try:
        with _connect(args.server, "cli-topic-list") as client:
            topics = client.list_topics()
    except OSError as exc:
        print(f"error: cannot reach server: {exc}", file=sys.stderr)
        return 4
    if args.as_json:
        print(json.dumps(topics, indent=2))
        return 0
    if not topics:
        print("no topics")
        return 0
    header = f"{'TOPIC':<32} {'TYPE':<12} {'PUB':>4} {'SUB':>4} {'HZ':>8}"
    print(header)
    for info in topics:
        print(f"{info['name']:<32} {info['type_name']:<12} "
              f"{info['publisher_count']:>4} {info['subscriber_count']:>4} "
              f"{info['rate_hz']:>8.2f}")
    return 0


def cmd_topic_echo(args) -> int:
    try:
        client = _connect(args.server, "cli-topic-echo")
    except OSError as exc:
        print(f"error: cannot reach server: {exc}", file=sys.stderr)
        return 4
    messages: "queue.Queue" = queue.Queue()
    client.subscribe(args.topic, lambda payload, _frame:
                     messages.put(payload))
    stop = threading.Event()
    previous = signal.signal(signal.SIGINT, lambda *_: stop.set())
    try:
        while not stop.is_set():
            try:
                payload = messages.get(timeout=0.2)
            except queue.Empty:
                continue
            print(json.dumps(payload, separators=(",", ":")))
            sys.stdout.flush()
    finally:
        signal.signal(signal.SIGINT, previous)
        client.close()
    return 0


def cmd_topic_hz(args) -> int:
    try:
        with _connect(args.server, "cli-topic-hz") as client:
            rate = client.measure_hz(args.topic, window_s=args.window)
    except OSError as exc:
        print(f"error: cannot reach server: {exc}", file=sys.stderr)
        return 4
    print(f"{rate:.2f}")
    return 0


def cmd_clients(args) -> int:
    try:
        with _connect(args.server, "cli-clients") as client:
            clients = client.list_clients()
    except OSError as exc:
        print(f"error: cannot reach server: {exc}", file=sys.stderr)
        return 4
    if args.as_json:
        print(json.dumps(clients, indent=2))
        return 0
    print(f"{'NAME':<24} {'TRANSPORT':<10} ADDR")
    for info in clients:
        print(f"{info['name'] or '-':<24} {info['transport']:<10} "
              f"{info['addr']}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "launch":
        return cmd_launch(args)
    if args.command == "topic":
        if args.topic_command == "list":
            return cmd_topic_list(args)
        if args.topic_command == "echo":
            return cmd_topic_echo(args)
        if args.topic_command == "hz":
            return cmd_topic_hz(args)
    if args.command == "clients":
        return cmd_clients(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
