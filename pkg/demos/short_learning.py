"""A short baseline learning run (20 updates) with a learning-curve SVG.

Pass an output path for the chart; defaults to ``learning.svg``.
"""

import sys

from urlab.harness import run_experiment
from urlab.xlab.config import ExperimentConfig
from urlab.xlab.svg import line_chart

out = sys.argv[1] if len(sys.argv) > 1 else "learning.svg"
cfg = ExperimentConfig(total_steps=40_000)


def show(b):
    print(f"batch {b.batch:2d}  return {b.mean_return:8.2f}  final distance {b.mean_final_distance:.3f}")


r = run_experiment(cfg, progress=show)
steps = [b.steps for b in r.batches]
line_chart({"baseline": (steps, [b.mean_return for b in r.batches])}, out,
           title="2-joint reacher, 40 ms cycle", xlabel="agent steps", ylabel="mean episode return")
print(f"wrote {out}")
