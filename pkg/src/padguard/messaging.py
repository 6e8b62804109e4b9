"""Detection messages sent from the ground station to the UAV.

Wire format is newline-delimited JSON (UTF-8). Every stream opens with a
header line ``{"proto":"padguard/1","rate_cap_hz":30}``; each following line
is one message::

    {"seq":12,"stamp":0.4,"boxes":[{"cx":..,"cy":..,"w":..,"h":..,"confidence":..,"dist":..}]}

Field order is fixed as shown, floats are written in shortest round-trip
form, and non-finite numbers are rejected. Over UDP each datagram carries
exactly one line.
"""

from __future__ import annotations

import json
import logging
import math
import queue
import socket
import threading
from collections import deque
from dataclasses import dataclass
from typing import Iterator

import numpy as np

logger = logging.getLogger(__name__)

PROTO = "padguard/1"
RATE_CAP_HZ = 30.0
BOX_FIELDS = ("cx", "cy", "w", "h", "confidence", "dist")


class MessageError(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    cx: float
    cy: float
    w: float
    h: float
    confidence: float
    dist: float


@dataclass(frozen=True)
class BoundingBoxesDist:
    seq: int
    stamp: float
    boxes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))


def validate(msg: BoundingBoxesDist) -> None:
    if not isinstance(msg.seq, int) or isinstance(msg.seq, bool) or msg.seq < 0:
        raise MessageError(f"bad seq {msg.seq!r}")
    if not math.isfinite(msg.stamp):
        raise MessageError("non-finite stamp")
    for b in msg.boxes:
        vals = [getattr(b, f) for f in BOX_FIELDS]
        if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in vals):
            raise MessageError(f"non-finite box field in {b}")
        if not all(0.0 <= getattr(b, f) <= 1.0 for f in ("cx", "cy", "w", "h", "confidence")):
            raise MessageError(f"box field outside [0, 1] in {b}")
        if b.dist < 0:
            raise MessageError(f"negative distance in {b}")


def header_line(rate_cap_hz: float = RATE_CAP_HZ) -> bytes:
    cap = int(rate_cap_hz) if float(rate_cap_hz).is_integer() else rate_cap_hz
    return (json.dumps({"proto": PROTO, "rate_cap_hz": cap}, separators=(",", ":")) + "\n").encode()


def encode(msg: BoundingBoxesDist) -> bytes:
    validate(msg)
    doc = {
        "seq": msg.seq,
        "stamp": float(msg.stamp),
        "boxes": [{f: float(getattr(b, f)) for f in BOX_FIELDS} for b in msg.boxes],
    }
    return (json.dumps(doc, separators=(",", ":"), allow_nan=False) + "\n").encode("utf-8")


def decode(line: bytes | str) -> BoundingBoxesDist:
    if isinstance(line, bytes):
        line = line.decode("utf-8")
    try:
        doc = json.loads(line)
        boxes = tuple(Box(**{f: float(b[f]) for f in BOX_FIELDS}) for b in doc["boxes"])
        msg = BoundingBoxesDist(seq=doc["seq"], stamp=float(doc["stamp"]), boxes=boxes)
    except (ValueError, KeyError, TypeError) as exc:
        raise MessageError(f"malformed message: {exc}") from exc
    validate(msg)
    return msg


def parse_header(line: bytes | str) -> dict:
    if isinstance(line, bytes):
        line = line.decode("utf-8")
    doc = json.loads(line)
    if doc.get("proto") != PROTO:
        raise MessageError(f"unsupported stream header {doc!r}")
    return doc


def write_stream(fh, msgs, rate_cap_hz: float = RATE_CAP_HZ) -> None:
    fh.write(header_line(rate_cap_hz))
    for m in msgs:
        fh.write(encode(m))


def read_stream(fh) -> Iterator[BoundingBoxesDist]:
    first = fh.readline()
    parse_header(first)
    for line in fh:
        if line.strip():
            yield decode(line)


@dataclass
class ChannelStats:
    published: int = 0
    dropped: int = 0
    rate_hz: float = 0.0

    def __add__(self, other: "ChannelStats") -> "ChannelStats":
        return ChannelStats(self.published + other.published, self.dropped + other.dropped, other.rate_hz)


class RateLimiter:
    """Admit at most ``cap_hz`` messages in any 1 s window of stamps."""

    def __init__(self, cap_hz: float = RATE_CAP_HZ, window: float = 1.0):
        self.cap = int(math.floor(cap_hz * window + 1e-9))
        self.window = window
        self._accepted = deque()

    def admit(self, stamp: float) -> bool:
        while self._accepted and self._accepted[0] <= stamp - self.window + 1e-9:
            self._accepted.popleft()
        if len(self._accepted) >= self.cap:
            return False
        self._accepted.append(stamp)
        return True


# -- transports --------------------------------------------------------------


class InProcessChannel:
    """Thread-safe ordered channel; subscribers see only messages published
    after they subscribe."""

    def __init__(self):
        self._subs = []
        self._lock = threading.Lock()
        self.closed = False

    def send(self, data: bytes) -> None:
        with self._lock:
            subs = list(self._subs)
        for q in subs:
            q.put(data)

    def subscribe(self) -> "InProcessSubscription":
        q = queue.SimpleQueue()
        with self._lock:
            self._subs.append(q)
        return InProcessSubscription(q, self)

    def close(self) -> None:
        self.closed = True
        with self._lock:
            subs = list(self._subs)
        for q in subs:
            q.put(None)


class InProcessSubscription:
    def __init__(self, q, channel):
        self._q = q
        self._channel = channel
        self.gaps = 0
        self._last_seq = None
        self.finished = False

    def _track(self, msg):
        if self._last_seq is not None and msg.seq > self._last_seq + 1:
            self.gaps += msg.seq - self._last_seq - 1
        self._last_seq = msg.seq

    def poll(self, until_seq: int | None = None, timeout: float = 0.0) -> list[BoundingBoxesDist]:
        """Return every message currently available."""
        out = []
        while True:
            try:
                data = self._q.get_nowait()
            except queue.Empty:
                return out
            if data is None:
                self.finished = True
                return out
            msg = decode(data)
            self._track(msg)
            out.append(msg)

    def __iter__(self):
        while True:
            data = self._q.get()
            if data is None:
                self.finished = True
                return
            msg = decode(data)
            self._track(msg)
            yield msg


class UdpSender:
    """Datagram-per-message sender with optional seeded drop injection."""

    def __init__(self, host: str, port: int, drop_prob: float = 0.0, seed: int = 0, rate_cap_hz: float = RATE_CAP_HZ):
        self.addr = (host, port)
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.drop_prob = drop_prob
        self._rng = np.random.default_rng(seed)
        self.injected_drops = 0
        self.send_errors = 0
        self._send_raw(header_line(rate_cap_hz))

    def _send_raw(self, data: bytes) -> bool:
        try:
            self.sock.sendto(data, self.addr)
            return True
        except OSError as exc:
            self.send_errors += 1
            logger.warning("udp send failed: %s", exc)
            return False

    def send(self, data: bytes) -> bool:
        if self.drop_prob > 0 and self._rng.random() < self.drop_prob:
            self.injected_drops += 1
            return True
        return self._send_raw(data)

    def close(self) -> None:
        self.sock.close()


class UdpSubscription:
    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 22)
        self.sock.bind((host, port))
        self.port = self.sock.getsockname()[1]
        self.header = None
        self.gaps = 0
        self.malformed = 0
        self._last_seq = None

    def _handle(self, data: bytes):
        if data.startswith(b'{"proto"'):
            self.header = parse_header(data)
            return None
        try:
            msg = decode(data)
        except MessageError:
            self.malformed += 1
            return None
        if self._last_seq is not None:
            if msg.seq <= self._last_seq:
                return None  # late or duplicate datagram
            self.gaps += msg.seq - self._last_seq - 1
        self._last_seq = msg.seq
        return msg

    def poll(self, until_seq: int | None = None, timeout: float = 0.0) -> list[BoundingBoxesDist]:
        """Drain pending datagrams.

        With ``until_seq`` the call blocks (up to ``timeout`` seconds) until a
        message with that sequence number or later arrives; used for lockstep
        simulation over loopback.
        """
        out = []
        self.sock.settimeout(timeout if until_seq is not None else 0.0)
        while True:
            if until_seq is not None and self._last_seq is not None and self._last_seq >= until_seq:
                self.sock.settimeout(0.0)
            try:
                data = self.sock.recv(65535)
            except (BlockingIOError, socket.timeout):
                return out
            msg = self._handle(data)
            if msg is not None:
                out.append(msg)

    def close(self) -> None:
        self.sock.close()


class Publisher:
    """Rate-limited publisher in front of a transport (anything with ``send``)."""

    def __init__(self, transport, rate_cap_hz: float = RATE_CAP_HZ):
        if rate_cap_hz > RATE_CAP_HZ:
            logger.warning("rate cap %.1f Hz above the %g Hz camera ceiling", rate_cap_hz, RATE_CAP_HZ)
        self.transport = transport
        self.limiter = RateLimiter(rate_cap_hz)
        self.stats = ChannelStats()
        self.last_seq = None
        self._first = None
        self._last = None

    def publish(self, msg: BoundingBoxesDist) -> ChannelStats:
        if not self.limiter.admit(msg.stamp):
            self.stats.dropped += 1
            return ChannelStats(0, 1, self.stats.rate_hz)
        data = encode(msg)
        try:
            ok = self.transport.send(data)
        except Exception as exc:  # transport failures must not take down the loop
            logger.warning("transport failure: %s", exc)
            ok = False
        if ok is False:
            self.stats.dropped += 1
            return ChannelStats(0, 1, self.stats.rate_hz)
        self.stats.published += 1
        self.last_seq = msg.seq
        if self._first is None:
            self._first = msg.stamp
        self._last = msg.stamp
        span = self._last - self._first
        self.stats.rate_hz = (self.stats.published - 1) / span if span > 0 else 0.0
        return ChannelStats(1, 0, self.stats.rate_hz)
