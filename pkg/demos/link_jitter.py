"""Inter-arrival times of 10,000 status packets over the wired and wireless links."""

from urlab.linksim import Channel, DelayModel, interarrival_stats
from urlab.ursim import TICK_NS
from urlab.xlab.seeds import stream


def arrivals(model, n=10_001):
    ch = Channel(model, stream(0, "medium/sensor"))
    return [ch.send(None, k * TICK_NS) for k in range(n)]


for name, model in (("wired", DelayModel.wired()), ("wireless", DelayModel.wireless())):
    s = interarrival_stats(arrivals(model)).as_ms()
    print(f"{name:>8}: min {s['min']:7.3f}  p5 {s['p5']:7.3f}  p50 {s['p50']:7.3f}  "
          f"p95 {s['p95']:7.3f}  max {s['max']:8.3f}  (ms)")
