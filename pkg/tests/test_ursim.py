import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from urlab.ursim import (QD_LIMIT, TICK_NS, ActuationCommand, CommandKind, ControllerConfig,
                         URController, leading_axis_scale)

Z6 = (0.0,) * 6


def test_leading_axis_scale_examples():
    assert leading_axis_scale((2.8, 0.7, 0, 0, 0, 0), 1.4) == pytest.approx((1.4, 0.35, 0, 0, 0, 0))
    assert leading_axis_scale((1.0, -1.0, 0, 0, 0, 0), 1.4) == (1.0, -1.0, 0, 0, 0, 0)
    assert leading_axis_scale(Z6, 1.4) == Z6
    with pytest.raises(ValueError):
        leading_axis_scale(Z6, 0.0)


@given(st.lists(st.floats(-1e3, 1e3), min_size=6, max_size=6), st.floats(0.1, 10))
def test_leading_axis_scale_preserves_direction(vec, a_max):
    out = leading_axis_scale(vec, a_max)
    assert max(abs(x) for x in out) <= a_max + 1e-9
    peak = max(abs(x) for x in vec)
    if peak > a_max:
        k = a_max / peak
        assert out == pytest.approx([x * k for x in vec])


def test_command_validation():
    with pytest.raises(ValueError):
        ActuationCommand.speedj((math.nan, 0, 0, 0, 0, 0))
    with pytest.raises(ValueError):
        ActuationCommand.speedj((0, 0, 0))
    with pytest.raises(ValueError):
        ActuationCommand.speedj(Z6, validity=0)
    with pytest.raises(ValueError):
        ActuationCommand.servoj(Z6, gain=0.0)


def _warm(ctrl, cmd):
    """Deliver ``cmd`` before each tick until the pipeline is warm; return packets."""
    out = []
    for _ in range(ctrl.config.accel_lag + 1):
        ctrl.apply_command(cmd, ctrl.next_tick_at)
        out.append(ctrl.tick())
    return out


def test_speedj_first_realized_tick():
    ctrl = URController(ControllerConfig(sigma_c=0.0))
    pkts = _warm(ctrl, ActuationCommand.speedj((0.3, 0, 0, 0, 0, 0), accel=1.4))
    assert pkts[0].qd == Z6 and pkts[1].qd == Z6  # warm-up: two ticks of zero realized accel
    assert pkts[2].qd[0] == pytest.approx(0.0112)
    assert pkts[2].q[0] == pytest.approx(8.96e-5)


def test_stop_decelerates_within_one_realized_tick():
    ctrl = URController(ControllerConfig(accel_lag=0, current_lag=0, sigma_c=0.0))
    ctrl.set_joint_state(Z6, (0.0112, 0, 0, 0, 0, 0))
    ctrl.apply_command(ActuationCommand.stop(1.4), 0)
    p = ctrl.tick()
    assert p.qd[0] == pytest.approx(0.0, abs=1e-15)


def test_command_takes_effect_at_next_tick_boundary():
    ctrl = URController(ControllerConfig(accel_lag=0, current_lag=0))
    ctrl.tick()  # tick at 0
    ctrl.apply_command(ActuationCommand.speedj((0.3, 0, 0, 0, 0, 0)), TICK_NS + 3_000_000)
    p = ctrl.tick()  # tick at 8 ms: command not yet arrived
    assert p.qd[0] == 0.0
    p = ctrl.tick()  # tick at 16 ms
    assert p.qd[0] > 0


def test_overwrite_within_a_tick_counts_drop():
    ctrl = URController()
    ctrl.apply_command(ActuationCommand.speedj((0.1, 0, 0, 0, 0, 0)), 1_000)
    ctrl.apply_command(ActuationCommand.speedj((0.2, 0, 0, 0, 0, 0)), 2_000)
    ctrl.tick()
    ctrl.tick()
    assert ctrl.active_command.values[0] == 0.2
    assert ctrl.stats.commands_dropped == 1


def test_expiry_decays_velocity_within_limit():
    ctrl = URController(ControllerConfig(accel_lag=0, current_lag=0, sigma_c=0.0))
    ctrl.apply_command(ActuationCommand.speedj((0.3, 0, 0, 0, 0, 0), accel=1.4), 0)
    prev = ctrl.tick().qd[0]
    for _ in range(60):
        p = ctrl.tick()
        assert abs(p.qd[0] - prev) <= 1.4 * 0.008 + 1e-12
        prev = p.qd[0]
    assert prev == pytest.approx(0.0, abs=1e-12)
    assert ctrl.stats.expired_ticks > 0


def test_servoj_out_of_range_sets_fault():
    ctrl = URController()
    ctrl.apply_command(ActuationCommand.servoj((7.0, 0, 0, 0, 0, 0)), 0)
    assert ctrl.fault and ctrl.stats.faults == 1


def test_set_joint_state():
    ctrl = URController()
    ctrl.set_joint_state(Z6, Z6)
    p = ctrl.tick()
    assert p.q == Z6 and p.qd == Z6
    ctrl.set_joint_state((0.1,) * 6, (0.2,) * 6)
    p = ctrl.tick()
    assert p.q == pytest.approx([0.1 + 0.2 * 0.008] * 6)
    with pytest.raises(ValueError):
        ctrl.set_joint_state(Z6, (4.0, 0, 0, 0, 0, 0))
    with pytest.raises(ValueError):
        ctrl.set_joint_state((7.0, 0, 0, 0, 0, 0), Z6)


def test_seq_increments_and_timestamp_is_tick_instant():
    ctrl = URController()
    pkts = [ctrl.tick() for _ in range(5)]
    assert [p.seq for p in pkts] == list(range(5))
    assert [p.timestamp for p in pkts] == [k * TICK_NS for k in range(5)]


def test_zero_input_fixed_point():
    ctrl = URController(ControllerConfig(sigma_c=0.0))
    ctrl.apply_command(ActuationCommand.stop(), 0)
    q0 = ctrl.q
    for _ in range(20):
        p = ctrl.tick()
    assert p.q == q0 and p.qd == Z6


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([CommandKind.SPEEDJ, CommandKind.SERVOJ]))
def test_velocity_and_acceleration_limits(seed, kind):
    rng = np.random.default_rng(seed)
    ctrl = URController(rng=rng)
    prev = None
    limit = 1.4
    for k in range(200):
        if k % 3 == 0:
            if kind is CommandKind.SPEEDJ:
                cmd = ActuationCommand.speedj(rng.uniform(-4, 4, 6), accel=limit)
            else:
                cmd = ActuationCommand.servoj(rng.uniform(-1, 1, 6), accel=limit)
            ctrl.apply_command(cmd, ctrl.next_tick_at - 1 if k else 0)
        p = ctrl.tick()
        assert max(abs(v) for v in p.qd) <= QD_LIMIT
        if prev is not None:
            dv = max(abs(a - b) for a, b in zip(p.qd, prev.qd)) / 0.008
            assert dv <= limit + 1e-9
        prev = p


def _lag_peaks(accel_lag, current_lag):
    from urlab.xlab.analysis import cross_correlation
    rng = np.random.default_rng(3)
    ctrl = URController(ControllerConfig(accel_lag=accel_lag, current_lag=current_lag), rng=rng)
    xs, qdd, cur = [], [], []
    for k in range(4000):
        v = rng.uniform(-0.3, 0.3)
        ctrl.apply_command(ActuationCommand.speedj((v, 0, 0, 0, 0, 0)), ctrl.next_tick_at)
        p = ctrl.tick()
        xs.append(v)
        qdd.append(p.qdd_target[0])
        cur.append(p.current[0])
    return cross_correlation(xs, qdd, 8).argmax(), cross_correlation(xs, cur, 8).argmax()


@pytest.mark.parametrize("lags", [(2, 3), (1, 4), (0, 0)])
def test_pipeline_lags_show_in_correlation(lags):
    assert _lag_peaks(*lags) == lags


def test_pipeline_config_validation():
    with pytest.raises(ValueError):
        ControllerConfig(accel_lag=3, current_lag=2)
