"""The concurrent computational model: four contexts around one controller.

Robot-communication side
    *sensor*    wakes on every status-packet delivery, decodes it and
                writes the sensor mailbox, then rings the environment.
    *actuator*  wakes every 8 ms and sends whatever command sits in the
                actuator mailbox (repeating it until it changes).

RL side
    *environment*  wakes on each new packet or action. It computes the
                   observation and reward, checks the safety envelope,
                   turns new actions into commands and runs resets.
    *agent*        wakes once per action cycle, reads the latest
                   observation, writes the action, and only then does its
                   bookkeeping. Learning happens between episodes.

A fifth context plays the controller: it ticks the :class:`URController`
every 8 ms and pushes packets onto the downlink channel. The contexts share
nothing but :class:`Mailbox` objects.
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from . import reacher
from .linksim import Channel, DelayModel, decode_command, decode_status, encode_command, encode_status
from .reacher import ReacherTask, SmootherState, Variant
from .timebase import Clock, ClockMode, ms, seconds
from .ursim import TICK_NS, ActuationCommand, CommandKind, ControllerConfig, URController
from .xlab.config import ExperimentConfig
from .xlab.seeds import SeedStreams, derive_streams


# -- mailboxes --------------------------------------------------------------------

class MailboxEmpty(RuntimeError):
    """Read before the first write: contexts were started in the wrong order."""


class Mailbox:
    """Single-slot latest-value exchange.

    The slot is one tuple ``(value, stamp, count)`` replaced by reference, so
    a reader sees either the old or the new write, never a mix.
    """

    __slots__ = ("name", "_slot", "_lock")

    def __init__(self, name: str = "mailbox"):
        self.name = name
        self._slot: Optional[tuple] = None
        self._lock = threading.Lock()

    def write(self, value: Any, now: int) -> None:
        with self._lock:
            count = self._slot[2] + 1 if self._slot is not None else 1
            self._slot = (value, now, count)

    def read(self, now: int) -> tuple:
        """``(value, age)``; age is ``now`` minus the write instant."""
        slot = self._slot
        if slot is None:
            raise MailboxEmpty(f"mailbox {self.name!r} read before first write")
        return slot[0], now - slot[1]

    @property
    def count(self) -> int:
        slot = self._slot
        return 0 if slot is None else slot[2]

    @property
    def stamp(self) -> Optional[int]:
        slot = self._slot
        return None if slot is None else slot[1]

    def peek(self) -> Optional[tuple]:
        return self._slot


def mailbox_write(mb: Mailbox, value: Any, now: int) -> None:
    mb.write(value, now)


def mailbox_read_latest(mb: Mailbox, now: int) -> tuple:
    return mb.read(now)


# -- configuration ------------------------------------------------------------------

@dataclass(frozen=True)
class CycleConfig:
    action_cycle: int = ms(40)
    actuation_cycle: int = TICK_NS
    episode_length: int = seconds(4)
    batch_episodes: int = 20

    def __post_init__(self):
        if self.action_cycle <= 0 or self.episode_length <= 0:
            raise ValueError("action cycle and episode length must be positive")
        if self.episode_length % self.action_cycle:
            raise ValueError("episode length must be a whole number of action cycles")
        if self.actuation_cycle != TICK_NS:
            raise ValueError("the actuation cycle is fixed at 8 ms")
        if self.batch_episodes <= 0:
            raise ValueError("batch_episodes must be positive")

    @property
    def steps_per_episode(self) -> int:
        return self.episode_length // self.action_cycle


class ActionSpace(enum.Enum):
    VELOCITY = "velocity"
    POSITION = "smoothed-position"


@dataclass
class RigSetup:
    task: ReacherTask
    action_space: ActionSpace = ActionSpace.VELOCITY
    cycle: CycleConfig = field(default_factory=CycleConfig)
    medium: DelayModel = field(default_factory=DelayModel.wired)
    action_delay: Optional[DelayModel] = None
    actuation_delay: Optional[DelayModel] = None
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    clock_mode: ClockMode = ClockMode.VIRTUAL
    actuator_phase: int = ms(4)
    # safety: extrapolate the measured pose by packet age plus this horizon (s)
    safety_horizon: float = 0.032
    # actuator sends a stop while the newest packet is older than this
    watchdog: int = 3 * TICK_NS
    reset_gain: float = 5.0
    reset_tolerance: float = 0.01
    reset_timeout: int = seconds(2)
    reset_attempts: int = 5
    tick_log: bool = False
    trace: bool = False


class ControllerFault(RuntimeError):
    pass


class ResetFault(RuntimeError):
    pass


# -- records --------------------------------------------------------------------------

@dataclass
class EpisodeLog:
    obs: np.ndarray           # (T + 1, obs_dim); the last row is the terminal observation
    actions: np.ndarray       # (T, n)
    rewards: np.ndarray       # (T,), reward following each action
    target: tuple
    start: int
    final_distance: float
    obs_age: np.ndarray       # (T + 1,) age of the packet behind each observation, ns

    @property
    def steps(self) -> int:
        return len(self.actions)

    @property
    def episode_return(self) -> float:
        return float(self.rewards.sum())

    @property
    def terminal(self) -> np.ndarray:
        t = np.zeros(self.steps, dtype=bool)
        t[-1] = True
        return t


@dataclass
class BatchStats:
    batch: int
    steps: int
    mean_return: float
    std_return: float
    mean_final_distance: float
    mean_step_reward: float = 0.0
    update_accepted: bool = False
    update_kl: float = 0.0


@dataclass
class TimingAudit:
    obs_to_action_ns: list = field(default_factory=list)
    actions_written: int = 0
    commands_sent: int = 0
    commands_dropped: int = 0
    expired_ticks: int = 0
    safety_stops: int = 0
    watchdog_stops: int = 0
    reset_timeouts: int = 0
    reset_time_ns: int = 0
    controller_faults: int = 0
    max_tip_excursion: float = 0.0
    max_joint_excursion: float = 0.0
    max_tip_excursion_reset: float = 0.0
    max_joint_excursion_reset: float = 0.0
    sends_per_action: dict = field(default_factory=dict)

    def latency_summary(self) -> dict:
        if not self.obs_to_action_ns:
            return {"count": 0}
        a = np.asarray(self.obs_to_action_ns, dtype=float) / 1e6
        return {"count": int(a.size), "mean_ms": float(a.mean()),
                "p95_ms": float(np.percentile(a, 95)), "max_ms": float(a.max())}


@dataclass
class RunResult:
    batches: list = field(default_factory=list)
    episodes: list = field(default_factory=list)
    audit: TimingAudit = field(default_factory=TimingAudit)
    updates: list = field(default_factory=list)
    agent_steps: int = 0
    experience_ns: int = 0
    virtual_ns: int = 0
    episode_returns: list = field(default_factory=list)
    episode_final_distances: list = field(default_factory=list)
    rig: Any = None
    agent: Any = None


# -- the rig ------------------------------------------------------------------------------

class EnvMode(enum.Enum):
    IDLE = "idle"
    RESET = "reset"
    RUN = "run"


@dataclass(frozen=True)
class Observation:
    vector: np.ndarray
    reward: float
    distance: float
    packet_time: int
    packet_seq: int
    episode: int


class Rig:
    """Controller, channels, mailboxes and the four contexts for one run."""

    def __init__(self, setup: RigSetup, streams: SeedStreams):
        self.setup = setup
        self.task = setup.task
        self.streams = streams
        self.clock = Clock(setup.clock_mode)
        if setup.trace:
            self.clock.trace = []
        self.controller = URController(setup.controller, streams.get("controller"),
                                       q0=self.task.start_q)
        self.audit = TimingAudit()
        self.events: Optional[list] = [] if setup.trace else None

        self.sensor_box = Mailbox("sensor")
        self.obs_box = Mailbox("observation")
        self.action_box = Mailbox("action")
        self.actuator_box = Mailbox("actuator")
        self.env_bell = self.clock.signal("environment")
        self.ready = self.clock.signal("episode-ready")

        self.downlink = Channel(setup.medium, streams.get("medium/sensor"), self.clock,
                                self._on_packet, "sensor")
        self.uplink = Channel(setup.medium, streams.get("medium/command"), self.clock,
                              self._on_command, "controller")
        self._actuation_injector = None
        if setup.actuation_delay is not None:
            self._actuation_injector = Channel(setup.actuation_delay, streams.get("injector/actuation"),
                                               self.clock, self._after_actuation_delay, "injector")
        self._action_injector = None
        if setup.action_delay is not None:
            self._action_injector = Channel(setup.action_delay, streams.get("injector/action"),
                                            self.clock, self._after_action_delay, "action-injector")

        # environment state, owned by the environment context
        self.mode = EnvMode.IDLE
        self.episode = -1
        self.target: tuple = tuple(self.task.bounds.center)
        self._target_override: Optional[tuple] = None
        self.prev_action = np.zeros(self.task.n)
        self.smoother = SmootherState.zeros(self.task.n, setup.cycle.action_cycle / 1e9)
        self._agent_cmd = (ActuationCommand.stop(self.task.bounds.a_task), -1)
        self._seen_packet = 0
        self._seen_action = 0
        self._reset_started = 0
        self._reset_attempt = 0
        self._reset_needed = False
        self.fault: Optional[str] = None

        self._stop = ActuationCommand.stop(self.task.bounds.a_task)
        self._stop_line = encode_command(self._stop)
        self.tick_log: Optional[list] = [] if setup.tick_log else None
        self._last_line = (b"", None)
        self.arrivals: Optional[list] = [] if setup.tick_log else None

        self.clock.spawn("controller", self._controller_proc(), start_at=0)
        self.clock.spawn("environment", self._env_proc(), start_at=0)
        self.clock.spawn("actuator", self._actuator_proc(), start_at=setup.actuator_phase)

    # -- controller context ---------------------------------------------------
    def _controller_proc(self):
        ctrl = self.controller
        task = self.task
        idx = task.chain.actuated
        lo, hi = task.bounds.box_lo, task.bounds.box_hi
        qmin, qmax = task.bounds.q_min, task.bounds.q_max
        audit = self.audit
        log = self.tick_log
        while True:
            yield ctrl.next_tick_at
            pkt = ctrl.tick()
            if ctrl.fault and self.fault is None:
                self.fault = "controller rejected an out-of-range servoj target"
                audit.controller_faults = ctrl.stats.faults
            self.downlink.send(encode_status(pkt), pkt.timestamp)

            q = pkt.q
            tip = task.tip(q)
            ex = 0.0
            for p, l, h in zip(tip, lo, hi):
                ex = max(ex, l - p, p - h)
            jx = 0.0
            for i in idx:
                jx = max(jx, qmin[i] - q[i], q[i] - qmax[i])
            if self.mode is EnvMode.RUN:
                if ex > audit.max_tip_excursion:
                    audit.max_tip_excursion = ex
                if jx > audit.max_joint_excursion:
                    audit.max_joint_excursion = jx
            else:
                if ex > audit.max_tip_excursion_reset:
                    audit.max_tip_excursion_reset = ex
                if jx > audit.max_joint_excursion_reset:
                    audit.max_joint_excursion_reset = jx
            if log is not None:
                cmd = ctrl.active_command
                vals = cmd.values if cmd is not None else (0.0,) * 6
                log.append((pkt.seq, pkt.timestamp, self.mode is EnvMode.RUN,
                            tuple(vals[i] for i in idx), tuple(pkt.qdd_target[i] for i in idx),
                            tuple(pkt.torque_target[i] for i in idx), tuple(pkt.current[i] for i in idx)))

    def _on_command(self, msg, arrival: int) -> None:
        line = msg[0]
        # the same line usually arrives several times in a row
        if line is not self._last_line[0] and line != self._last_line[0]:
            self._last_line = (line, decode_command(line))
        self.controller.apply_command(self._last_line[1], arrival)

    def _after_actuation_delay(self, msg, delivered: int) -> None:
        self.uplink.send(msg, delivered)

    # -- sensor context (runs on each packet delivery) --------------------------
    def _on_packet(self, data: bytes, delivered: int) -> None:
        pkt = decode_status(data)
        self.sensor_box.write(pkt, delivered)
        if self.arrivals is not None:
            self.arrivals.append(delivered)
        self.env_bell.fire()

    # -- actuator context ----------------------------------------------------------
    def _actuator_proc(self):
        clock = self.clock
        box = self.actuator_box
        sensor = self.sensor_box
        audit = self.audit
        per_action = audit.sends_per_action
        watchdog = self.setup.watchdog
        stop_line = self._stop_line
        t = self.setup.actuator_phase
        while True:
            yield t
            slot = box.peek()
            if slot is not None:
                line, tag = slot[0]
                latest = sensor.peek()
                if latest is not None and t - latest[0].timestamp > watchdog:
                    line, tag = stop_line, -1
                    audit.watchdog_stops += 1
                elif tag >= 0:
                    per_action[tag] = per_action.get(tag, 0) + 1
                audit.commands_sent += 1
                if self._actuation_injector is not None:
                    self._actuation_injector.send((line, tag), t)
                else:
                    self.uplink.send((line, tag), t)
            t += TICK_NS

    # -- environment context ----------------------------------------------------------
    def _env_proc(self):
        clock = self.clock
        task = self.task
        chain, bounds = task.chain, task.bounds
        setup = self.setup
        idx = chain.actuated
        while True:
            yield self.env_bell
            now = clock.now()
            if self.fault is not None:
                continue
            slot = self.sensor_box.peek()
            if slot is None:
                continue
            pkt = slot[0]
            new_packet = slot[2] != self._seen_packet
            self._seen_packet = slot[2]

            if self._reset_needed:
                self._reset_needed = False
                self.mode = EnvMode.RESET
                self._reset_started = now
                self._reset_attempt = 0

            if self.mode is EnvMode.RESET:
                if self._reset_step(pkt, now):
                    continue

            if self.mode is EnvMode.RUN:
                aslot = self.action_box.peek()
                if aslot is not None and aslot[2] != self._seen_action:
                    self._seen_action = aslot[2]
                    action, episode, tag = aslot[0]
                    if episode == self.episode:
                        self._take_action(action, tag, pkt)
                if new_packet:
                    self._publish_observation(pkt, now)
                cmd, tag = self._agent_cmd
                age = (now - pkt.timestamp) / 1e9
                safe = reacher.safety_override(cmd, pkt, bounds, chain,
                                               lookahead=age + setup.safety_horizon,
                                               servo_tau=self.smoother.tau)
                if safe is not cmd:
                    # the stop still occupies this action's actuation slot
                    self.audit.safety_stops += 1
                    self._send(self._stop_line, tag, now)
                else:
                    self._send(self._line_for(cmd), tag, now)

    def _line_for(self, cmd: ActuationCommand) -> bytes:
        cached = getattr(self, "_line_cache", None)
        if cached is not None and cached[0] is cmd:
            return cached[1]
        line = encode_command(cmd)
        self._line_cache = (cmd, line)
        return line

    def _send(self, line: bytes, tag: int, now: int) -> None:
        slot = self.actuator_box.peek()
        if slot is None or slot[0][0] != line or slot[0][1] != tag:
            self.actuator_box.write((line, tag), now)

    def _take_action(self, action: np.ndarray, tag: int, pkt) -> None:
        task = self.task
        if self.setup.action_space is ActionSpace.VELOCITY:
            cmd = reacher.velocity_action_to_command(action, task.chain, task.bounds)
        else:
            q = [pkt.q[i] for i in task.chain.actuated]
            self.smoother, cmd = reacher.smoothed_position_step(self.smoother, action, q, task.bounds,
                                                                task.chain, hold=task.start_q)
        self._agent_cmd = (cmd, tag)
        self.prev_action = np.array(action, dtype=float)

    def _publish_observation(self, pkt, now: int) -> None:
        task = self.task
        tip = task.tip(pkt.q)
        obs = reacher.assemble_observation(pkt, self.target, self.prev_action, task.chain, task.bounds, tip)
        r = reacher.reward(tip, self.target)
        self.obs_box.write(Observation(obs, r, -r, pkt.timestamp, pkt.seq, self.episode), now)

    def _reset_step(self, pkt, now: int) -> bool:
        """Drive toward the start posture; True while the reset is still running."""
        setup = self.setup
        start = self.task.start_q
        err = [s - q for s, q in zip(start, pkt.q)]
        if max(abs(e) for e in err) <= setup.reset_tolerance:
            self.audit.reset_time_ns += now - self._reset_started
            self._begin_episode(pkt, now)
            return True
        if now - self._reset_started >= setup.reset_timeout * (self._reset_attempt + 1):
            self._reset_attempt += 1
            self.audit.reset_timeouts += 1
            if self._reset_attempt >= setup.reset_attempts:
                self.fault = f"reset did not converge within {setup.reset_attempts} attempts"
                self.ready.fire()
                return True
        v_max = self.task.bounds.v_task
        k = setup.reset_gain
        vel = [min(v_max, max(-v_max, k * e)) for e in err]
        cmd = ActuationCommand.speedj(vel, accel=self.task.bounds.a_task)
        self._send(encode_command(cmd), -1, now)
        return True

    def _begin_episode(self, pkt, now: int) -> None:
        task = self.task
        self.episode += 1
        if self._target_override is not None:
            self.target, self._target_override = self._target_override, None
        else:
            self.target = reacher.sample_target(self.streams.get("targets"), task.bounds)
        self.prev_action = np.zeros(task.n)
        self.smoother = SmootherState.zeros(task.n, self.setup.cycle.action_cycle / 1e9)
        self._agent_cmd = (self._stop, -1)
        self._send(self._stop_line, -1, now)
        self.mode = EnvMode.RUN
        self._publish_observation(pkt, now)
        self.ready.fire()

    # -- action delivery --------------------------------------------------------------
    def _deliver_action(self, item: tuple, now: int) -> None:
        self.action_box.write(item, now)
        self.env_bell.fire()

    def _after_action_delay(self, item: tuple, delivered: int) -> None:
        self._deliver_action(item, delivered)

    def write_action(self, action: np.ndarray, tag: int, now: int) -> None:
        item = (action, self.episode, tag)
        if self._action_injector is not None:
            self._action_injector.send(item, now)
        else:
            self._deliver_action(item, now)

    # -- agent-side helpers (run inside the agent context) -------------------------------
    def request_reset(self, target: Optional[tuple] = None):
        """Generator: ask the environment for a reset and wait until the episode is ready."""
        self._target_override = None if target is None else tuple(target)
        self._reset_needed = True
        # with no packet yet, the environment picks the request up on the first one
        self.env_bell.fire()
        yield self.ready
        if self.fault is not None:
            raise ResetFault(self.fault) if "reset" in self.fault else ControllerFault(self.fault)

    def episode_proc(self, act: Callable[[np.ndarray], np.ndarray], out: list,
                     target: Optional[tuple] = None, step_offset: int = 0):
        """Generator for one episode: reset, then ``steps_per_episode`` agent steps."""
        clock = self.clock
        cycle = self.setup.cycle
        steps = cycle.steps_per_episode
        n = self.task.n
        yield from self.request_reset(target)
        start = clock.now()
        obs_rows, ages, rewards = [], [], []
        actions = np.empty((steps, n))
        latencies = self.audit.obs_to_action_ns
        events = self.events
        for i in range(steps + 1):
            t = start + i * cycle.action_cycle
            if t > clock.now():
                yield t
            if self.fault is not None:
                raise ControllerFault(self.fault)
            now = clock.now()
            ob, _ = self.obs_box.read(now)
            obs_rows.append(ob.vector)
            ages.append(now - ob.packet_time)
            if i > 0:
                rewards.append(ob.reward)
            if i == steps:
                break
            a = np.asarray(act(ob.vector), dtype=float)
            tag = step_offset + i
            self.write_action(a, tag, now)
            if events is not None:
                events.append(("action_write", tag, now))
            latencies.append(now - ob.packet_time)
            actions[i] = a
            self.audit.actions_written += 1
        log = EpisodeLog(np.array(obs_rows), actions, np.array(rewards), self.target, start,
                         float(-rewards[-1]), np.array(ages))
        out.append(log)

    # -- drivers ------------------------------------------------------------------------
    def _drive(self, gen) -> None:
        ctx = self.clock.spawn("agent", gen)
        while not ctx.finished:
            self.clock.advance_to_next()
        self._sync_stats()

    def _sync_stats(self) -> None:
        s = self.controller.stats
        self.audit.commands_dropped = s.commands_dropped
        self.audit.expired_ticks = s.expired_ticks
        self.audit.controller_faults = s.faults

    def run_episode(self, act: Callable, target: Optional[tuple] = None) -> EpisodeLog:
        out: list = []
        self._drive(self.episode_proc(act, out, target))
        return out[0]

    def reset_arm(self) -> int:
        """Reset to the start posture; returns the time it took (ns)."""
        t0 = self.clock.now()
        self._drive(self.request_reset())
        return self.clock.now() - t0


# -- building rigs from configs -----------------------------------------------------------

def build_task(cfg: ExperimentConfig) -> ReacherTask:
    k = cfg.kinematics
    kw = {}
    if k.joint_window is not None:
        kw["joint_window"] = k.joint_window
    if k.margin is not None:
        kw["margin"] = k.margin
    if cfg.variant == "2-joint":
        if k.link_lengths is not None:
            kw["L1"], kw["L2"] = k.link_lengths
        if k.box_lo is not None:
            kw["box_lo"] = k.box_lo
        if k.box_hi is not None:
            kw["box_hi"] = k.box_hi
        return reacher.two_joint_task(**kw)
    if k.dh is not None:
        kw["dh"] = tuple(tuple(r) for r in k.dh)
    if k.start_q is not None:
        kw["start_q"] = tuple(k.start_q)
    if k.box_size is not None:
        kw["box_size"] = tuple(k.box_size)
    return reacher.six_joint_task(**kw)


def setup_from_config(cfg: ExperimentConfig) -> RigSetup:
    cycle = CycleConfig(action_cycle=ms(cfg.action_cycle_ms), episode_length=seconds(cfg.episode_s),
                        batch_episodes=cfg.batch_episodes)
    medium = DelayModel.wired() if cfg.medium == "wired" else DelayModel.wireless()
    return RigSetup(
        task=build_task(cfg),
        action_space=ActionSpace(cfg.action_space),
        cycle=cycle,
        medium=medium,
        action_delay=DelayModel.exponential(cfg.action_delay_ms) if cfg.action_delay_ms > 0 else None,
        actuation_delay=DelayModel.exponential(cfg.actuation_delay_ms) if cfg.actuation_delay_ms > 0 else None,
        clock_mode=ClockMode(cfg.clock),
        tick_log=cfg.tick_log,
    )


def make_agent(cfg: ExperimentConfig, task: ReacherTask, streams: SeedStreams):
    from .trpo import RandomAgent, TrpoAgent, TrpoConfig
    if cfg.agent == "random":
        return RandomAgent(task.n, task.bounds.v_task, streams.exploration)
    g = cfg.trpo
    tc = TrpoConfig(gamma=g.gamma, step_size=g.step_size, cg_iters=g.cg_iters, cg_damping=g.cg_damping,
                    backtrack_ratio=g.backtrack_ratio, max_backtracks=g.max_backtracks,
                    critic_epochs=g.critic_epochs, critic_lr=g.critic_lr,
                    critic_minibatch=g.critic_minibatch)
    return TrpoAgent(task.obs_dim, task.n, streams, tc, init_log_std=g.init_log_std)


def _batch_stats(index: int, steps: int, episodes: list, info) -> BatchStats:
    rets = np.array([e.episode_return for e in episodes])
    dists = np.array([e.final_distance for e in episodes])
    per_step = float(np.mean([e.rewards.mean() for e in episodes]))
    return BatchStats(index, steps, float(rets.mean()), float(rets.std()), float(dists.mean()),
                      per_step, bool(info.accepted) if info is not None else False,
                      float(info.kl) if info is not None else 0.0)


def run_experiment(cfg: ExperimentConfig, keep_episodes: bool = False,
                   rig_hook: Optional[Callable[[Rig], None]] = None,
                   progress: Optional[Callable[[BatchStats], None]] = None) -> RunResult:
    """Run batches of episodes with one learning update after each batch."""
    streams = derive_streams(cfg.seed)
    setup = setup_from_config(cfg)
    rig = Rig(setup, streams)
    if rig_hook is not None:
        rig_hook(rig)
    agent = make_agent(cfg, setup.task, streams)
    result = RunResult()
    steps_per_episode = setup.cycle.steps_per_episode
    per_batch = setup.cycle.batch_episodes * steps_per_episode
    n_batches = cfg.total_steps // per_batch
    events = rig.events

    def proc():
        steps = 0
        for b in range(n_batches):
            episodes: list = []
            for _ in range(setup.cycle.batch_episodes):
                yield from rig.episode_proc(agent.act, episodes, step_offset=steps)
                steps += steps_per_episode
            last = episodes[-1]
            if events is not None:
                events.append(("learn", b, rig.clock.now()))
            info = agent.learn(episodes)
            if info is not None:
                result.updates.append(info)
            stats = _batch_stats(b, steps, episodes, info)
            result.batches.append(stats)
            result.episode_returns.extend(e.episode_return for e in episodes)
            result.episode_final_distances.extend(e.final_distance for e in episodes)
            if keep_episodes:
                result.episodes.extend(episodes)
            if progress is not None:
                progress(stats)
        result.agent_steps = steps

    if n_batches:
        rig._drive(proc())
    result.audit = rig.audit
    result.experience_ns = result.agent_steps * setup.cycle.action_cycle
    result.virtual_ns = rig.clock.now()
    result.rig = rig
    result.agent = agent
    return result
