"""Kinematic stand-in for a URControl-style low-level controller.

The controller runs on a fixed 8 ms tick. Each tick it turns the active
command into a desired joint acceleration, limits it by scaling the whole
vector so the leading axis meets the acceleration limit, and feeds it to a
trajectory generator (the *plan*). The arm then follows the plan through an
actuation pipeline: the acceleration realized on tick ``k`` is the one
planned on tick ``k - accel_lag``, and the measured current reflects the one
planned on tick ``k - current_lag``.

Servoing the plan rather than the delayed measurement keeps the velocity
loop deadbeat; servoing a signal that is two ticks stale oscillates.

The hot path works on plain tuples of floats; numpy's per-call overhead
dominates at six elements.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .timebase import ms

N_JOINTS = 6
TICK_NS = ms(8)
TICK_S = 0.008

QD_LIMIT = math.pi
Q_LIMIT = 2.0 * math.pi

DEFAULT_ACCEL = 1.4
DEFAULT_VALIDITY_NS = 2 * TICK_NS
DEFAULT_SERVO_GAIN = 300.0
DEFAULT_LOOKAHEAD_S = 0.1

Vec = tuple  # tuple of N_JOINTS floats

ZERO6: Vec = (0.0,) * N_JOINTS


class CommandKind(enum.Enum):
    SPEEDJ = "speedj"
    SERVOJ = "servoj"
    STOP = "stopj"


@dataclass(frozen=True)
class ActuationCommand:
    """A ``speedj``/``servoj``/``stopj`` style command.

    ``values`` are joint velocities (rad/s) for SPEEDJ and joint positions
    (rad) for SERVOJ; ``validity`` is in nanoseconds.
    """

    kind: CommandKind
    values: Vec = ZERO6
    accel_limit: float = DEFAULT_ACCEL
    validity: int = DEFAULT_VALIDITY_NS
    gain: float = DEFAULT_SERVO_GAIN
    lookahead: float = DEFAULT_LOOKAHEAD_S

    def __post_init__(self):
        values = tuple([float(v) for v in self.values])
        if len(values) != N_JOINTS:
            raise ValueError(f"command needs {N_JOINTS} values, got {len(values)}")
        if not all(map(math.isfinite, values)):
            raise ValueError(f"non-finite command values {values}")
        object.__setattr__(self, "values", values)
        if self.validity <= 0:
            raise ValueError("validity must be positive")
        if not (self.accel_limit > 0 and math.isfinite(self.accel_limit)):
            raise ValueError("accel_limit must be positive")
        if self.kind is CommandKind.SERVOJ and not self.gain > 0:
            raise ValueError("servoj gain must be positive")

    @classmethod
    def speedj(cls, velocities: Sequence[float], accel: float = DEFAULT_ACCEL,
               validity: int = DEFAULT_VALIDITY_NS) -> "ActuationCommand":
        return cls(CommandKind.SPEEDJ, tuple(velocities), accel, validity)

    @classmethod
    def servoj(cls, positions: Sequence[float], validity: int = DEFAULT_VALIDITY_NS,
               gain: float = DEFAULT_SERVO_GAIN, lookahead: float = DEFAULT_LOOKAHEAD_S,
               accel: float = DEFAULT_ACCEL) -> "ActuationCommand":
        return cls(CommandKind.SERVOJ, tuple(positions), accel, validity, gain, lookahead)

    @classmethod
    def stop(cls, accel: float = DEFAULT_ACCEL) -> "ActuationCommand":
        return cls(CommandKind.STOP, ZERO6, accel)


@dataclass(frozen=True)
class StatusPacket:
    seq: int
    timestamp: int
    q: Vec
    qd: Vec
    qdd_target: Vec
    torque_target: Vec
    current: Vec


def leading_axis_scale(desired: Sequence[float], a_max: float) -> tuple:
    """Scale ``desired`` so its largest-magnitude entry is at most ``a_max``."""
    if not a_max > 0:
        raise ValueError("a_max must be positive")
    peak = max(abs(x) for x in desired)
    if peak <= a_max:
        return tuple(desired)
    k = a_max / peak
    return tuple(x * k for x in desired)


@dataclass
class ControllerStats:
    ticks: int = 0
    commands_received: int = 0
    commands_dropped: int = 0
    expired_ticks: int = 0
    faults: int = 0


@dataclass
class ControllerConfig:
    accel_lag: int = 2
    current_lag: int = 3
    inertia_scale: float = 1.0
    c1: float = 1.0
    c2: float = 0.5
    sigma_c: float = 0.01
    stop_accel: float = DEFAULT_ACCEL

    def __post_init__(self):
        if not self.current_lag >= self.accel_lag >= 0:
            raise ValueError("need current_lag >= accel_lag >= 0")


class URController:
    """Single-owner state machine driven by its controller context.

    Call :meth:`apply_command` for every command delivery and :meth:`tick`
    once per 8 ms tick; ``tick`` returns the emitted :class:`StatusPacket`.
    """

    def __init__(self, config: Optional[ControllerConfig] = None,
                 rng: Optional[np.random.Generator] = None,
                 q0: Sequence[float] = ZERO6, start_tick: int = 0):
        self.config = config or ControllerConfig()
        self._rng = rng if rng is not None else np.random.default_rng(0)
        self._noise: list = []
        self._noise_pos = 0
        self.stats = ControllerStats()
        self.fault = False
        self._seq = 0
        self._tick_index = start_tick
        self._pending: deque = deque()
        self._active: Optional[ActuationCommand] = None
        self._active_since = 0
        self.set_joint_state(q0, ZERO6)

    # -- state --------------------------------------------------------------
    @property
    def next_tick_at(self) -> int:
        return self._tick_index * TICK_NS

    @property
    def active_command(self) -> Optional[ActuationCommand]:
        return self._active

    @property
    def q(self) -> Vec:
        return self._q

    @property
    def qd(self) -> Vec:
        return self._qd

    def set_joint_state(self, q: Sequence[float], qd: Sequence[float]) -> None:
        q = tuple(float(x) for x in q)
        qd = tuple(float(x) for x in qd)
        if len(q) != N_JOINTS or len(qd) != N_JOINTS:
            raise ValueError("joint state vectors must have 6 entries")
        if any(abs(x) > Q_LIMIT for x in q):
            raise ValueError(f"joint angles outside ±{Q_LIMIT:.4f} rad: {q}")
        if any(abs(x) > QD_LIMIT for x in qd):
            raise ValueError(f"joint velocities outside ±π rad/s: {qd}")
        self._q = self._q_plan = q
        self._qd = self._qd_plan = qd
        depth = self.config.current_lag + 1
        self._pipeline: deque = deque([ZERO6] * depth, maxlen=depth)

    # -- commands -----------------------------------------------------------
    def apply_command(self, cmd: ActuationCommand, arrival: int) -> None:
        """Queue ``cmd``; it becomes active at the first tick at or after ``arrival``."""
        if cmd.kind is CommandKind.SERVOJ and any(abs(x) > Q_LIMIT for x in cmd.values):
            self.fault = True
            self.stats.faults += 1
            return
        self.stats.commands_received += 1
        self._pending.append((arrival, cmd))

    def _activate(self, now: int) -> None:
        pending = self._pending
        latest = None
        while pending and pending[0][0] <= now:
            if latest is not None:
                self.stats.commands_dropped += 1
            latest = pending.popleft()[1]
        if latest is not None:
            self._active = latest
            self._active_since = now

    def _desired_accel(self, now: int) -> tuple:
        cmd = self._active
        qd = self._qd_plan
        if cmd is None:
            return tuple([-v / TICK_S for v in qd]), self.config.stop_accel
        kind = cmd.kind
        if kind is not CommandKind.STOP and now - self._active_since >= cmd.validity:
            self.stats.expired_ticks += 1
            kind = CommandKind.STOP
        if kind is CommandKind.SPEEDJ:
            return tuple([(v - w) / TICK_S for v, w in zip(cmd.values, qd)]), cmd.accel_limit
        if kind is CommandKind.SERVOJ:
            kp = cmd.gain
            kd = 2.0 * math.sqrt(kp)
            return (tuple([kp * (t - x) - kd * w for t, x, w in zip(cmd.values, self._q_plan, qd)]),
                    cmd.accel_limit)
        return tuple([-w / TICK_S for w in qd]), cmd.accel_limit

    def _noise6(self) -> tuple:
        pos = self._noise_pos
        if pos + N_JOINTS > len(self._noise):
            self._noise = self._rng.standard_normal(N_JOINTS * 4096).tolist()
            pos = 0
        self._noise_pos = pos + N_JOINTS
        return self._noise[pos:pos + N_JOINTS]

    def tick(self) -> StatusPacket:
        now = self._tick_index * TICK_NS
        if self._pending:
            self._activate(now)
        desired, limit = self._desired_accel(now)
        peak = max(abs(x) for x in desired)
        planned = tuple(x * (limit / peak) for x in desired) if peak > limit else desired

        dt = TICK_S
        lim = QD_LIMIT
        qd_plan = []
        for v, a in zip(self._qd_plan, planned):
            v += a * dt
            qd_plan.append(lim if v > lim else (-lim if v < -lim else v))
        self._q_plan = tuple([x + v * dt for x, v in zip(self._q_plan, qd_plan)])
        self._qd_plan = tuple(qd_plan)

        pipe = self._pipeline
        pipe.appendleft(planned)
        cfg = self.config
        realized = pipe[cfg.accel_lag]
        qd = []
        for v, a in zip(self._qd, realized):
            v += a * dt
            qd.append(lim if v > lim else (-lim if v < -lim else v))
        qd = tuple(qd)
        q = tuple([x + v * dt for x, v in zip(self._q, qd)])
        self._q, self._qd = q, qd

        inertia = cfg.inertia_scale
        torque = realized if inertia == 1.0 else tuple([inertia * a for a in realized])
        drive = pipe[cfg.current_lag]
        c1, c2, sc = cfg.c1 * inertia, cfg.c2, cfg.sigma_c
        noise = self._noise6()
        current = tuple([c1 * a + c2 * v + sc * e for a, v, e in zip(drive, qd, noise)])

        packet = StatusPacket(self._seq, now, q, qd, realized, torque, current)
        self._seq = (self._seq + 1) & 0xFFFFFFFF
        self._tick_index += 1
        self.stats.ticks += 1
        return packet
