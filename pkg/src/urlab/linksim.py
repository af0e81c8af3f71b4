"""Wire formats and transmission-medium models.

Status packets travel as a fixed 257-byte little-endian record::

    magic "URSP" | version u8 = 1 | seq u32 | timestamp_ns u64 |
    q, qd, qdd_target, torque_target, current  (5 x 6 x f64)

Commands travel as one UTF-8 text line each, e.g.
``speedj([0.3,0,0,0,0,0],a=1.4,t=0.016)``.

A :class:`Channel` gives each message a delivery instant and never lets
deliveries overtake one another (TCP-like ordering).
"""

from __future__ import annotations

import enum
import math
import re
import struct
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np
from scipy import stats as sstats

from .timebase import ms
from .ursim import ActuationCommand, CommandKind, StatusPacket

MAGIC = b"URSP"
VERSION = 1
_PACKET = struct.Struct("<4sBIQ30d")
PACKET_SIZE = _PACKET.size
assert PACKET_SIZE == 257

MIN_SPACING_NS = 1_000  # 1 µs between consecutive deliveries on a channel


class DecodeError(ValueError):
    pass


class PacketLengthError(DecodeError):
    pass


class PacketMagicError(DecodeError):
    pass


class PacketVersionError(DecodeError):
    pass


def encode_status(pkt: StatusPacket) -> bytes:
    return _PACKET.pack(MAGIC, VERSION, pkt.seq, pkt.timestamp,
                        *pkt.q, *pkt.qd, *pkt.qdd_target, *pkt.torque_target, *pkt.current)


def decode_status(data: bytes) -> StatusPacket:
    if len(data) != PACKET_SIZE:
        raise PacketLengthError(f"status packet must be {PACKET_SIZE} bytes, got {len(data)}")
    fields = _PACKET.unpack(data)
    if fields[0] != MAGIC:
        raise PacketMagicError(f"bad magic {fields[0]!r}")
    if fields[1] != VERSION:
        raise PacketVersionError(f"unsupported version {fields[1]}")
    v = fields[4:]
    return StatusPacket(fields[2], fields[3], v[0:6], v[6:12], v[12:18], v[18:24], v[24:30])


# -- command lines ---------------------------------------------------------

def _num(x: float) -> str:
    return format(x, ".9g")


def encode_command(cmd: ActuationCommand) -> bytes:
    vec = "[" + ",".join(_num(v) for v in cmd.values) + "]"
    if cmd.kind is CommandKind.SPEEDJ:
        line = f"speedj({vec},a={_num(cmd.accel_limit)},t={_num(cmd.validity / 1e9)})\n"
    elif cmd.kind is CommandKind.SERVOJ:
        line = (f"servoj({vec},t={_num(cmd.validity / 1e9)},"
                f"lookahead_time={_num(cmd.lookahead)},gain={_num(cmd.gain)})\n")
    else:
        line = "stopj()\n"
    return line.encode("utf-8")


_CMD_RE = re.compile(r"^(speedj|servoj)\(\[([^\]]*)\]((?:,[a-z_]+=[^,()]+)*)\)$")


def decode_command(line: bytes) -> ActuationCommand:
    text = line.decode("utf-8").strip()
    if text == "stopj()":
        return ActuationCommand.stop()
    m = _CMD_RE.match(text)
    if m is None:
        raise DecodeError(f"unrecognized command line {text!r}")
    name, vec, rest = m.groups()
    values = tuple(float(x) for x in vec.split(","))
    kwargs = dict(kv.split("=", 1) for kv in rest.split(",")[1:])
    validity = int(round(float(kwargs["t"]) * 1e9))
    if name == "speedj":
        return ActuationCommand.speedj(values, accel=float(kwargs["a"]), validity=validity)
    return ActuationCommand.servoj(values, validity=validity,
                                   gain=float(kwargs["gain"]),
                                   lookahead=float(kwargs["lookahead_time"]))


# -- delay models ------------------------------------------------------------

class DelayKind(enum.Enum):
    NO_DELAY = "none"
    WIRED = "wired"
    WIRELESS = "wireless"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class DelayModel:
    """Distribution of a medium or an artificial delay injector (times in ns).

    WIRED samples inter-arrival gaps from a normal truncated to
    ``[gap_lo, gap_hi]``; the one-way latency is kept inside
    ``latency_window`` so deliveries cannot drift away from the sender.
    WIRELESS samples a lognormal per-message latency capped at
    ``latency_cap``. EXPONENTIAL samples a latency with the given ``mean``.
    """

    kind: DelayKind = DelayKind.NO_DELAY
    mean: int = 0
    sigma: int = 0
    gap_lo: int = 0
    gap_hi: int = 0
    latency_window: tuple = (0, 0)
    median: int = 0
    log_sigma: float = 0.0
    latency_cap: int = 0

    def __post_init__(self):
        k = self.kind
        if k is DelayKind.WIRED:
            if not (0 < self.gap_lo <= self.mean <= self.gap_hi and self.sigma > 0):
                raise ValueError("wired model needs 0 < gap_lo <= mean <= gap_hi and sigma > 0")
            lo, hi = self.latency_window
            if not 0 <= lo <= hi:
                raise ValueError("latency window must be ordered and non-negative")
        elif k is DelayKind.WIRELESS:
            if not (self.median > 0 and self.log_sigma > 0 and self.latency_cap > 0):
                raise ValueError("wireless model needs positive median, log_sigma and cap")
        elif k is DelayKind.EXPONENTIAL:
            if not self.mean > 0:
                raise ValueError("exponential injector needs a positive mean")

    @classmethod
    def none(cls) -> "DelayModel":
        return cls(DelayKind.NO_DELAY)

    @classmethod
    def wired(cls, mean_ms=8.0, sigma_ms=0.15, bounds_ms=(7.8, 8.6),
              latency_window_ms=(0.1, 0.9)) -> "DelayModel":
        return cls(DelayKind.WIRED, mean=ms(mean_ms), sigma=ms(sigma_ms),
                   gap_lo=ms(bounds_ms[0]), gap_hi=ms(bounds_ms[1]),
                   latency_window=(ms(latency_window_ms[0]), ms(latency_window_ms[1])))

    @classmethod
    def wireless(cls, median_ms=4.0, log_sigma=1.2, cap_ms=122.0) -> "DelayModel":
        return cls(DelayKind.WIRELESS, median=ms(median_ms), log_sigma=log_sigma,
                   latency_cap=ms(cap_ms))

    @classmethod
    def exponential(cls, mean_ms: float) -> "DelayModel":
        return cls(DelayKind.EXPONENTIAL, mean=ms(mean_ms))


class DelaySampler:
    """Draws from a :class:`DelayModel` in blocks for speed; deterministic per stream."""

    BLOCK = 4096

    def __init__(self, model: DelayModel, rng: np.random.Generator):
        self.model = model
        self.rng = rng
        self._buf: list = []
        self._pos = 0
        if model.kind is DelayKind.WIRED:
            a = (model.gap_lo - model.mean) / model.sigma
            b = (model.gap_hi - model.mean) / model.sigma
            # shift loc so the truncated distribution's mean is exactly `mean`
            shift = sstats.truncnorm.mean(a, b)
            loc = model.mean - shift * model.sigma
            self._dist = sstats.truncnorm((model.gap_lo - loc) / model.sigma,
                                          (model.gap_hi - loc) / model.sigma,
                                          loc=loc, scale=model.sigma)

    def _refill(self) -> None:
        m, n = self.model, self.BLOCK
        if m.kind is DelayKind.NO_DELAY:
            draws = np.zeros(n)
        elif m.kind is DelayKind.EXPONENTIAL:
            draws = self.rng.exponential(m.mean, n)
        elif m.kind is DelayKind.WIRELESS:
            draws = np.minimum(m.median * np.exp(m.log_sigma * self.rng.standard_normal(n)),
                               m.latency_cap)
        else:
            draws = np.clip(self._dist.rvs(size=n, random_state=self.rng), m.gap_lo, m.gap_hi)
        self._buf = np.rint(draws).astype(np.int64).tolist()
        self._pos = 0

    def __call__(self) -> int:
        if self._pos >= len(self._buf):
            self._refill()
        x = self._buf[self._pos]
        self._pos += 1
        return x


def sample_delay(model: DelayModel, rng: np.random.Generator) -> int:
    """One draw (ns): a latency, or an inter-arrival gap for the wired model."""
    if model.kind is DelayKind.NO_DELAY:
        return 0
    s = DelaySampler(model, rng)
    s.BLOCK = 1
    return s()


class OutOfOrderSend(ValueError):
    pass


class Channel:
    """One sender, one receiver, ordered delivery.

    ``send`` returns the delivery instant; when a clock and ``on_deliver``
    callback are attached the message is handed over at that instant.
    """

    def __init__(self, model: DelayModel, rng: Optional[np.random.Generator] = None,
                 clock=None, on_deliver=None, name: str = "channel"):
        self.model = model
        self.name = name
        self._draw = DelaySampler(model, rng if rng is not None else np.random.default_rng(0))
        self._clock = clock
        self._on_deliver = on_deliver
        self.last_send: Optional[int] = None
        self.last_delivery: Optional[int] = None
        self.sent = 0

    def _delivery_for(self, send_at: int) -> int:
        kind = self.model.kind
        last = self.last_delivery
        if kind is DelayKind.NO_DELAY:
            return send_at if last is None else max(last, send_at)
        if kind is DelayKind.WIRED:
            lo, hi = self.model.latency_window
            if last is None:
                return send_at + (lo + hi) // 2
            latency = last + self._draw() - send_at
            return send_at + min(hi, max(lo, latency))
        latency = self._draw()
        if last is None:
            return send_at + latency
        return max(last + MIN_SPACING_NS, send_at + latency)

    def send(self, msg: Any, send_at: int) -> int:
        if self.last_send is not None and send_at < self.last_send:
            raise OutOfOrderSend(f"{self.name}: send at {send_at} before previous send {self.last_send}")
        delivery = self._delivery_for(send_at)
        self.last_send = send_at
        self.last_delivery = delivery
        self.sent += 1
        if self._on_deliver is not None:
            cb = self._on_deliver
            self._clock.schedule_at(delivery, self.name, lambda: cb(msg, delivery))
        return delivery


def channel_send(ch: Channel, msg: Any, send_at: int) -> int:
    return ch.send(msg, send_at)


@dataclass(frozen=True)
class InterArrivalSummary:
    p5: float
    p25: float
    p50: float
    p75: float
    p95: float
    min: float
    max: float
    count: int

    def as_ms(self) -> dict:
        d = {k: getattr(self, k) / 1e6 for k in ("p5", "p25", "p50", "p75", "p95", "min", "max")}
        d["count"] = self.count
        return d


def interarrival_stats(timestamps: Sequence[int]) -> InterArrivalSummary:
    """Percentiles (linear interpolation) of consecutive differences, in ns."""
    t = np.asarray(timestamps, dtype=np.float64)
    if t.size < 2:
        raise ValueError("need at least two timestamps")
    gaps = np.diff(t)
    if np.any(gaps < 0):
        raise ValueError("timestamps must be sorted")
    p = np.percentile(gaps, [5, 25, 50, 75, 95])
    return InterArrivalSummary(*(float(x) for x in p), float(gaps.min()), float(gaps.max()), int(gaps.size))
