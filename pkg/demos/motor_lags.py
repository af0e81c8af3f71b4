"""Random actions at the 8 ms actuation rate, then correlate commands with motor signals.

The commanded velocity leads the target acceleration and torque by two
packets and the motor current by three.
"""

import sys

from urlab.harness import run_experiment
from urlab.xlab.analysis import cross_correlation
from urlab.xlab.config import ExperimentConfig

ticks = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
cfg = ExperimentConfig(agent="random", action_cycle_ms=8.0, total_steps=ticks,
                       batch_episodes=1, tick_log=True)
rows = [r for r in run_experiment(cfg).rig.tick_log if r[2]]
cmd = [r[3][0] for r in rows]
for name, col in (("qdd_target", 4), ("torque_target", 5), ("current", 6)):
    cg = cross_correlation(cmd, [r[col][0] for r in rows], 6)
    row = " ".join(f"{v:+.2f}" for v in cg.values)
    print(f"{name:>14}: peak at lag {cg.argmax()}   lags -6..6: {row}")
