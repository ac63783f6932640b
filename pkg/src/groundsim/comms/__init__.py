"""Pub/sub and service transport: length-prefixed JSON over TCP plus a
WebSocket bridge sharing the same topic space."""

from .broker import Broker  # noqa: F401
from .client import Client  # noqa: F401
from .frames import MAX_FRAME, decode_body, encode_frame  # noqa: F401
