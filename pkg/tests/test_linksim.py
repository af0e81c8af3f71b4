import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from urlab.linksim import (PACKET_SIZE, Channel, DelayModel, OutOfOrderSend, PacketLengthError,
                           PacketMagicError, PacketVersionError, decode_command, decode_status,
                           encode_command, encode_status, interarrival_stats, sample_delay)
from urlab.timebase import ms, virtual_clock
from urlab.ursim import ActuationCommand, StatusPacket

Z6 = (0.0,) * 6
vec6 = st.tuples(*[st.floats(allow_nan=False, allow_infinity=True, width=64)] * 6)


def test_packet_is_257_bytes_and_zero_body():
    pkt = StatusPacket(0, 0, Z6, Z6, Z6, Z6, Z6)
    data = encode_status(pkt)
    assert len(data) == PACKET_SIZE == 4 + 1 + 4 + 8 + 5 * 48
    assert data[:4] == b"URSP" and data[4] == 1
    assert data[17:] == bytes(240)


@given(st.integers(0, 2**32 - 1), st.integers(0, 2**64 - 1), vec6, vec6, vec6, vec6, vec6)
def test_status_round_trip(seq, ts, q, qd, a, t, c):
    pkt = StatusPacket(seq, ts, q, qd, a, t, c)
    data = encode_status(pkt)
    assert decode_status(data) == pkt
    assert encode_status(decode_status(data)) == data


def test_decode_errors_are_distinct():
    data = encode_status(StatusPacket(1, 2, Z6, Z6, Z6, Z6, Z6))
    with pytest.raises(PacketLengthError):
        decode_status(data[:200])
    with pytest.raises(PacketMagicError):
        decode_status(b"XXXX" + data[4:])
    with pytest.raises(PacketVersionError):
        decode_status(data[:4] + b"\x02" + data[5:])


def test_command_lines():
    cmd = ActuationCommand.speedj((0.3, -0.2, 0, 0, 0, 0), accel=1.4, validity=ms(16))
    assert encode_command(cmd) == b"speedj([0.3,-0.2,0,0,0,0],a=1.4,t=0.016)\n"
    assert encode_command(ActuationCommand.stop()) == b"stopj()\n"
    s = ActuationCommand.servoj((0.5016, -0.5016, 0, 0, 0, 0), validity=ms(16))
    assert encode_command(s) == b"servoj([0.5016,-0.5016,0,0,0,0],t=0.016,lookahead_time=0.1,gain=300)\n"
    for c in (cmd, s, ActuationCommand.stop()):
        back = decode_command(encode_command(c))
        assert back.kind is c.kind and back.values == pytest.approx(c.values, rel=1e-9)


def test_nine_significant_digits():
    cmd = ActuationCommand.speedj((1 / 3, 0, 0, 0, 0, 0))
    assert b"0.333333333," in encode_command(cmd)


def test_no_delay_passthrough():
    ch = Channel(DelayModel.none())
    assert [ch.send("a", 0), ch.send("b", ms(8))] == [0, ms(8)]


def test_wireless_burst_rule():
    class Fixed:
        def __init__(self, draws):
            self.draws = list(draws)

        def __call__(self):
            return self.draws.pop(0)

    ch = Channel(DelayModel.wireless())
    ch._draw = Fixed([ms(50), ms(1)])
    assert ch.send("a", 0) == ms(50)
    assert ch.send("b", ms(8)) == ms(50) + 1_000


def test_out_of_order_send_rejected():
    ch = Channel(DelayModel.none())
    ch.send("a", ms(8))
    with pytest.raises(OutOfOrderSend):
        ch.send("b", ms(4))


def test_sample_delay():
    rng = np.random.default_rng(0)
    assert sample_delay(DelayModel.none(), rng) == 0
    wired = [sample_delay(DelayModel.wired(), rng) for _ in range(200)]
    assert min(wired) >= ms(7.8) and max(wired) <= ms(8.6)


def test_exponential_mean_within_two_percent():
    from urlab.linksim import DelaySampler
    s = DelaySampler(DelayModel.exponential(80.0), np.random.default_rng(1))
    draws = np.array([s() for _ in range(100_000)]) / 1e6
    assert 78.4 <= draws.mean() <= 81.6


def _stream(model, n, seed):
    ch = Channel(model, np.random.default_rng(seed))
    return np.array([ch.send(k, k * ms(8)) for k in range(n)])


def test_wired_envelope():
    gaps = np.diff(_stream(DelayModel.wired(), 10_000, 4))
    assert gaps.min() >= ms(7.8) and gaps.max() <= ms(8.6)
    assert abs(gaps.mean() - ms(8)) < ms(0.01)


def test_wireless_spread_and_envelope():
    wired = interarrival_stats(_stream(DelayModel.wired(), 10_000, 4))
    wl = interarrival_stats(_stream(DelayModel.wireless(), 10_000, 5))
    assert wl.p95 - wl.p5 > 10 * (wired.p95 - wired.p5)
    assert wl.min >= 0 and wl.max <= ms(130) and wl.min < ms(1)


def test_delivery_is_ordered_and_deterministic():
    for model in (DelayModel.wired(), DelayModel.wireless(), DelayModel.exponential(2.0)):
        a = _stream(model, 3000, 9)
        assert np.all(np.diff(a) >= 0)
        assert np.array_equal(a, _stream(model, 3000, 9))


def test_channel_delivers_through_clock():
    clock = virtual_clock()
    got = []
    ch = Channel(DelayModel.wired(), np.random.default_rng(0), clock, lambda m, t: got.append((m, t, clock.now())))
    for k in range(5):
        ch.send(k, k * ms(8))
    clock.run()
    assert [g[0] for g in got] == list(range(5))
    assert all(t == now for _, t, now in got)


def test_interarrival_examples():
    s = interarrival_stats([0, ms(8), ms(16), ms(24)])
    assert s.p5 == s.p50 == s.p95 == ms(8)
    stamps = np.cumsum([0] + [ms(k) for k in range(1, 101)])
    assert interarrival_stats(stamps).p50 == pytest.approx(ms(50.5))
    with pytest.raises(ValueError):
        interarrival_stats([0])


def test_interarrival_percentiles_ordered():
    s = interarrival_stats(_stream(DelayModel.wireless(), 2000, 1))
    assert s.min <= s.p5 <= s.p25 <= s.p50 <= s.p75 <= s.p95 <= s.max


def test_delay_model_validation():
    with pytest.raises(ValueError):
        DelayModel.exponential(0.0)
    with pytest.raises(ValueError):
        DelayModel.wired(bounds_ms=(8.6, 7.8))
