"""The Reacher task: kinematics, observation, reward, safety, action spaces.

Two variants share one interface. ``TWO_JOINT`` actuates the shoulder and
elbow (joints 2 and 3 from the base) and lives in the vertical plane of
those joints; ``SIX_JOINT`` actuates everything and uses the standard UR5
Denavit-Hartenberg table.

Two action spaces are provided: direct velocity control
(:func:`velocity_action_to_command`) and smoothed position control
(:func:`smoothed_position_step`), where the action drives the first
derivative of the desired position through a clipped integrator.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .ursim import (DEFAULT_LOOKAHEAD_S, DEFAULT_SERVO_GAIN, N_JOINTS, TICK_NS, TICK_S,
                    ActuationCommand, CommandKind, StatusPacket)

# standard UR5 DH parameters: (a, d, alpha) per joint
UR5_DH = (
    (0.0, 0.089159, math.pi / 2),
    (-0.425, 0.0, 0.0),
    (-0.39225, 0.0, 0.0),
    (0.0, 0.10915, math.pi / 2),
    (0.0, 0.09465, -math.pi / 2),
    (0.0, 0.0823, 0.0),
)


class Variant(enum.Enum):
    TWO_JOINT = "2-joint"
    SIX_JOINT = "6-joint"


@dataclass(frozen=True)
class KinematicChain:
    variant: Variant = Variant.TWO_JOINT
    link_lengths: tuple = (0.425, 0.392)
    dh: tuple = UR5_DH
    actuated: tuple = (1, 2)

    def __post_init__(self):
        if any(not L > 0 for L in self.link_lengths):
            raise ValueError("link lengths must be positive")
        if len(self.dh) != 6:
            raise ValueError("DH table needs 6 rows")

    @property
    def n(self) -> int:
        return len(self.actuated)

    @property
    def space_dim(self) -> int:
        return 2 if self.variant is Variant.TWO_JOINT else 3

    @classmethod
    def two_joint(cls, L1: float = 0.425, L2: float = 0.392) -> "KinematicChain":
        return cls(Variant.TWO_JOINT, (L1, L2), UR5_DH, (1, 2))

    @classmethod
    def six_joint(cls, dh: Sequence = UR5_DH) -> "KinematicChain":
        return cls(Variant.SIX_JOINT, (0.425, 0.39225), tuple(tuple(r) for r in dh), tuple(range(6)))


@dataclass(frozen=True)
class TaskBounds:
    box_lo: tuple
    box_hi: tuple
    q_min: tuple
    q_max: tuple
    v_task: float = 0.3
    a_task: float = 1.4
    margin: float = 0.02

    def __post_init__(self):
        if len(self.box_lo) != len(self.box_hi) or any(h - l <= 0 for l, h in zip(self.box_lo, self.box_hi)):
            raise ValueError("box side lengths must be positive")
        if len(self.q_min) != N_JOINTS or len(self.q_max) != N_JOINTS:
            raise ValueError("joint bounds need 6 entries")
        if any(not lo < hi for lo, hi in zip(self.q_min, self.q_max)):
            raise ValueError("need q_min < q_max componentwise")

    @property
    def diagonal(self) -> float:
        return math.dist(self.box_lo, self.box_hi)

    @property
    def center(self) -> tuple:
        return tuple((l + h) / 2 for l, h in zip(self.box_lo, self.box_hi))


# -- forward kinematics ------------------------------------------------------------

def _planar_fk(qa: float, qb: float, L1: float, L2: float) -> tuple:
    return (L1 * math.cos(qa) + L2 * math.cos(qa + qb),
            L1 * math.sin(qa) + L2 * math.sin(qa + qb))


def _dh_fk(q: Sequence[float], dh: Sequence) -> tuple:
    # accumulate rotation R and origin p of each frame
    R = np.eye(3)
    p = np.zeros(3)
    for theta, (a, d, alpha) in zip(q, dh):
        ct, st = math.cos(theta), math.sin(theta)
        ca, sa = math.cos(alpha), math.sin(alpha)
        p = p + R @ np.array([a * ct, a * st, d])
        R = R @ np.array([[ct, -st * ca, st * sa],
                          [st, ct * ca, -ct * sa],
                          [0.0, sa, ca]])
    return tuple(float(x) for x in p)


def fingertip_position(q: Sequence[float], chain: KinematicChain) -> tuple:
    """Fingertip point for the chain's actuated joint angles."""
    if chain.variant is Variant.TWO_JOINT and len(q) == 2:
        L1, L2 = chain.link_lengths
        a, b = q
        return (L1 * math.cos(a) + L2 * math.cos(a + b), L1 * math.sin(a) + L2 * math.sin(a + b))
    if len(q) != chain.n:
        raise ValueError(f"{chain.variant.value} chain expects {chain.n} angles, got {len(q)}")
    if chain.variant is Variant.TWO_JOINT:
        return _planar_fk(q[0], q[1], *chain.link_lengths)
    return _dh_fk(q, chain.dh)


def planar_ik(point: Sequence[float], L1: float, L2: float) -> tuple:
    """Closed-form 2-link inverse kinematics, elbow-down branch (elbow angle > 0)."""
    x, y = point
    c = (x * x + y * y - L1 * L1 - L2 * L2) / (2 * L1 * L2)
    if not -1.0 <= c <= 1.0:
        raise ValueError(f"point {point} out of reach")
    qb = math.acos(c)
    qa = math.atan2(y, x) - math.atan2(L2 * math.sin(qb), L1 + L2 * math.cos(qb))
    return qa, qb


# -- reward, targets, observation ----------------------------------------------------

def reward(fingertip: Sequence[float], target: Sequence[float]) -> float:
    if len(fingertip) != len(target):
        raise ValueError("points must have the same dimension")
    return -math.dist(fingertip, target)


def sample_target(rng: np.random.Generator, bounds: TaskBounds) -> tuple:
    lo = np.asarray(bounds.box_lo, dtype=float)
    hi = np.asarray(bounds.box_hi, dtype=float)
    if np.any(hi - lo <= 0):
        raise ValueError("degenerate target box")
    return tuple(float(x) for x in rng.uniform(lo, hi))


def assemble_observation(packet: StatusPacket, target: Sequence[float], prev_action: Sequence[float],
                         chain: KinematicChain, bounds: TaskBounds,
                         tip: Optional[Sequence[float]] = None) -> np.ndarray:
    """``[angles/π, velocities/v_task, (target - tip)/box diagonal, previous action]``."""
    idx = chain.actuated
    qa = [packet.q[i] for i in idx]
    if tip is None:
        tip = fingertip_position(qa, chain)
    inv_diag = 1.0 / bounds.diagonal
    inv_v = 1.0 / bounds.v_task
    obs = [x / math.pi for x in qa]
    obs += [packet.qd[i] * inv_v for i in idx]
    obs += [(t - p) * inv_diag for t, p in zip(target, tip)]
    obs += [float(a) for a in prev_action]
    return np.array(obs)


def observation_dim(chain: KinematicChain) -> int:
    return 3 * chain.n + chain.space_dim


# -- action spaces -------------------------------------------------------------------

def _embed(values: Sequence[float], idx: Sequence[int], base: Sequence[float] = (0.0,) * N_JOINTS) -> tuple:
    out = list(base)
    for i, v in zip(idx, values):
        out[i] = v
    return tuple(out)


def velocity_action_to_command(action: Sequence[float], chain: Optional[KinematicChain] = None,
                               bounds: Optional[TaskBounds] = None) -> ActuationCommand:
    chain = chain or KinematicChain.two_joint()
    v_max = bounds.v_task if bounds else 0.3
    a_max = bounds.a_task if bounds else 1.4
    clipped = [min(v_max, max(-v_max, float(a))) for a in action]
    return ActuationCommand.speedj(_embed(clipped, chain.actuated), accel=a_max, validity=2 * TICK_NS)


@dataclass
class SmootherState:
    """First-derivative state ``y`` of smoothed position control; ``tau`` in seconds."""

    y: np.ndarray
    tau: float
    y_min: float = -1.0
    y_max: float = 1.0

    @classmethod
    def zeros(cls, n: int, tau: float) -> "SmootherState":
        return cls(np.zeros(n), tau)


def smoothed_position_step(state: SmootherState, z: Sequence[float], q: Sequence[float],
                           bounds: TaskBounds, chain: Optional[KinematicChain] = None,
                           hold: Optional[Sequence[float]] = None) -> tuple:
    """Advance the smoother by one agent step and build the ``servoj`` command.

    ``q`` holds the measured angles of the actuated joints; joints outside
    the chain are held at ``hold`` (default zeros).
    """
    chain = chain or KinematicChain.two_joint()
    idx = chain.actuated
    tau = state.tau
    y = np.clip(state.y + tau * np.asarray(z, dtype=float), state.y_min, state.y_max)
    qmin = np.array([bounds.q_min[i] for i in idx])
    qmax = np.array([bounds.q_max[i] for i in idx])
    q_des = np.clip(np.asarray(q, dtype=float) + tau * y, qmin, qmax)
    new_state = SmootherState(y, tau, state.y_min, state.y_max)
    base = hold if hold is not None else (0.0,) * N_JOINTS
    cmd = ActuationCommand.servoj(_embed(q_des.tolist(), idx, base), validity=2 * TICK_NS,
                                  gain=DEFAULT_SERVO_GAIN, lookahead=DEFAULT_LOOKAHEAD_S,
                                  accel=bounds.a_task)
    return new_state, cmd


# -- safety ---------------------------------------------------------------------------

def _commanded_velocity(cmd: ActuationCommand, q_full: Sequence[float], idx: Sequence[int],
                        tau: float) -> list:
    if cmd.kind is CommandKind.SPEEDJ:
        return [cmd.values[i] for i in idx]
    if cmd.kind is CommandKind.SERVOJ:
        return [(cmd.values[i] - q_full[i]) / tau for i in idx]
    return [0.0] * len(idx)


_STOPS: dict = {}


def _stop_for(accel: float) -> ActuationCommand:
    cmd = _STOPS.get(accel)
    if cmd is None:
        cmd = _STOPS[accel] = ActuationCommand.stop(accel)
    return cmd


def safety_override(cmd: ActuationCommand, packet: StatusPacket, bounds: TaskBounds,
                    chain: KinematicChain, lookahead: float = 0.0,
                    servo_tau: float = 0.04) -> ActuationCommand:
    """Replace ``cmd`` with a stop when it would leave, or has left, the safe set.

    Hard checks use the measured pose: any actuated joint outside its bounds,
    or the fingertip more than ``margin`` outside the box, stops the arm.
    The soft check looks ahead: the measured pose is extrapolated by
    ``lookahead`` seconds plus the braking distance at ``a_task``, and if that
    pose lies within ``margin`` of a face (or of a joint bound) any command
    whose one-tick displacement points outward is stopped.
    """
    if cmd.kind is CommandKind.STOP:
        return cmd
    idx = chain.actuated
    q, qd = packet.q, packet.qd
    qmin, qmax = bounds.q_min, bounds.q_max
    stop = _stop_for(bounds.a_task)

    qa = [q[i] for i in idx]
    for i, x in zip(idx, qa):
        if x < qmin[i] or x > qmax[i]:
            return stop
    m = bounds.margin
    lo, hi = bounds.box_lo, bounds.box_hi
    tip = fingertip_position(qa, chain)
    for p, l, h in zip(tip, lo, hi):
        if p < l - m or p > h + m:
            return stop

    brake = 0.5 / bounds.a_task
    pred = [x + qd[i] * (lookahead + abs(qd[i]) * brake) for i, x in zip(idx, qa)]
    v = _commanded_velocity(cmd, q, idx, servo_tau)
    for i, x, w in zip(idx, pred, v):
        if (w < 0 and x <= qmin[i] + 0.02) or (w > 0 and x >= qmax[i] - 0.02):
            return stop

    ptip = fingertip_position(pred, chain) if (lookahead > 0 or any(qd[i] for i in idx)) else tip
    near = False
    for p, l, h in zip(ptip, lo, hi):
        if p <= l + m or p >= h - m:
            near = True
            break
    if not near:
        return cmd
    moved = fingertip_position([x + w * TICK_S for x, w in zip(pred, v)], chain)
    for p1, p0, l, h in zip(moved, ptip, lo, hi):
        if (p0 <= l + m and p1 < p0) or (p0 >= h - m and p1 > p0):
            return stop
    return cmd


# -- task bundles ---------------------------------------------------------------------

@dataclass(frozen=True)
class ReacherTask:
    chain: KinematicChain
    bounds: TaskBounds
    start_q: tuple

    @property
    def n(self) -> int:
        return self.chain.n

    @property
    def obs_dim(self) -> int:
        return observation_dim(self.chain)

    def tip(self, q_full: Sequence[float]) -> tuple:
        return fingertip_position([q_full[i] for i in self.chain.actuated], self.chain)


SIX_JOINT_START = (0.0, -2.0, 1.6, -1.17, -math.pi / 2, 0.0)


def two_joint_task(box_lo=(0.20, -0.35), box_hi=(0.70, 0.35), L1=0.425, L2=0.392,
                   joint_window=math.pi / 2, **bound_kw) -> ReacherTask:
    chain = KinematicChain.two_joint(L1, L2)
    center = tuple((l + h) / 2 for l, h in zip(box_lo, box_hi))
    qa, qb = planar_ik(center, L1, L2)
    start = (0.0, qa, qb, 0.0, 0.0, 0.0)
    bounds = TaskBounds(tuple(box_lo), tuple(box_hi),
                        tuple(s - joint_window for s in start),
                        tuple(s + joint_window for s in start), **bound_kw)
    return ReacherTask(chain, bounds, start)


def six_joint_task(start_q=SIX_JOINT_START, box_size=(0.7, 0.5, 0.4), dh=UR5_DH,
                   joint_window=math.pi / 2, **bound_kw) -> ReacherTask:
    chain = KinematicChain.six_joint(dh)
    center = fingertip_position(start_q, chain)
    lo = tuple(c - s / 2 for c, s in zip(center, box_size))
    hi = tuple(c + s / 2 for c, s in zip(center, box_size))
    bounds = TaskBounds(lo, hi, tuple(s - joint_window for s in start_q),
                        tuple(s + joint_window for s in start_q), **bound_kw)
    return ReacherTask(chain, bounds, tuple(start_q))


def make_task(variant: Variant, **kw) -> ReacherTask:
    return two_joint_task(**kw) if variant is Variant.TWO_JOINT else six_joint_task(**kw)
