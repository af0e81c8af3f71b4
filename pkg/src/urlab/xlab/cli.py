"""Command line: ``run``, ``analyze xcorr``, ``analyze interarrival``, ``replay``, ``plot``.

Outputs go to ``--out`` or, failing that, ``$URLAB_OUT`` (default ``./runs``).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io as xio
from .analysis import cross_correlation, interarrival_summary
from .config import ConfigError, ExperimentConfig, config_from_dict, load_config

SIGNALS = {"qdd": "qdd_target", "torque": "torque_target", "current": "current"}


def parse_seeds(text: str) -> list:
    """``"3"``, ``"0..4"`` (inclusive) or ``"0,2,5"``."""
    text = text.strip()
    if ".." in text:
        a, b = text.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(s) for s in text.split(",") if s.strip()]


def run_one(cfg: ExperimentConfig, out_dir: Path, stem: str, quiet: bool = False) -> dict:
    from ..harness import run_experiment

    out_dir.mkdir(parents=True, exist_ok=True)
    base = out_dir / f"{stem}_seed{cfg.seed}"

    def progress(b):
        if not quiet:
            print(f"  batch {b.batch:3d}  steps {b.steps:7d}  return {b.mean_return:9.3f}  "
                  f"final distance {b.mean_final_distance:.4f}", flush=True)

    t0 = time.perf_counter()
    result = run_experiment(cfg, progress=progress)
    xio.write_run_csv(result, base.with_suffix(".csv"))
    xio.write_metadata(result, cfg, base.with_suffix(".json"))
    if result.agent is not None and hasattr(result.agent, "save"):
        result.agent.save(base.with_suffix(".ckpt"))
    if cfg.tick_log:
        xio.write_tick_log(result.rig, str(base) + "_ticks.csv")
    if not quiet:
        print(f"seed {cfg.seed}: {len(result.batches)} batches in {time.perf_counter() - t0:.1f}s "
              f"-> {base.with_suffix('.csv')}")
    return {"csv": base.with_suffix(".csv"), "metadata": base.with_suffix(".json")}


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    seeds = args.seeds if args.seeds is not None else [args.seed if args.seed is not None else cfg.seed]
    out = Path(args.out) if args.out else (Path(cfg.out_dir) if cfg.out_dir else xio.default_out_dir())
    stem = Path(args.config).stem
    cfgs = [cfg.replace(seed=s) for s in seeds]
    if args.parallel_seeds and len(cfgs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor() as pool:
            list(pool.map(run_one, cfgs, [out] * len(cfgs), [stem] * len(cfgs), [True] * len(cfgs)))
    else:
        for c in cfgs:
            run_one(c, out, stem, args.quiet)
    return 0


def cmd_xcorr(args) -> int:
    log = xio.read_tick_log(args.log)
    names = [s.strip() for s in args.signals.split(",") if s.strip()]
    x = log[f"command_{args.joint}"]
    print(f"{'signal':<10} {'argmax lag':>10} {'peak':>8}")
    series = {}
    for name in names:
        col = SIGNALS.get(name, name)
        key = f"{col}_{args.joint}"
        if key not in log:
            print(f"error: log has no column {key!r}", file=sys.stderr)
            return 2
        cg = cross_correlation(x, log[key], args.max_lag)
        series[name] = (cg.lags, cg.values)
        print(f"{name:<10} {cg.argmax():>10d} {np.nanmax(cg.values):>8.3f}")
    if args.svg:
        from .svg import line_chart
        line_chart(series, args.svg, title="command vs motor signals", xlabel="lag (packets)",
                   ylabel="correlation")
    return 0


def cmd_interarrival(args) -> int:
    log = xio.read_tick_log(args.log)
    s = interarrival_summary(log["arrival_ns"]).as_ms()
    for k in ("count", "min", "p5", "p25", "p50", "p75", "p95", "max"):
        v = s[k]
        print(f"{k:>5}: {v}" if k == "count" else f"{k:>5}: {v:.4f} ms")
    return 0


def cmd_replay(args) -> int:
    meta = xio.read_metadata(args.metadata)
    cfg = config_from_dict(meta["config"])
    src = Path(args.metadata)
    out = Path(args.out) if args.out else src.parent / "replay"
    stem = src.stem.rsplit("_seed", 1)[0]
    paths = run_one(cfg, out, stem, args.quiet)
    original = src.with_suffix(".csv")
    if original.exists():
        same = original.read_bytes() == Path(paths["csv"]).read_bytes()
        print("replay matches original CSV byte-for-byte" if same else "replay differs from original CSV")
        return 0 if same else 1
    return 0


def cmd_plot(args) -> int:
    from .svg import line_chart
    series = {}
    for path in args.csv:
        data = xio.read_run_csv(path)
        series[Path(path).stem] = (data["steps"], data["mean_return"])
    line_chart(series, args.svg, title="learning curves", xlabel="agent steps",
               ylabel="mean episode return", smooth=args.smooth)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="urlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a TOML config")
    r.add_argument("--config", required=True)
    g = r.add_mutually_exclusive_group()
    g.add_argument("--seed", type=int)
    g.add_argument("--seeds", type=parse_seeds, help="e.g. 0..4 or 0,1,2")
    r.add_argument("--out", help=f"output directory (default ${xio.OUT_ENV} or ./runs)")
    r.add_argument("--parallel-seeds", action="store_true")
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="analyze a per-tick log")
    asub = a.add_subparsers(dest="analysis", required=True)
    x = asub.add_parser("xcorr", help="cross-correlate commands with motor signals")
    x.add_argument("--log", required=True)
    x.add_argument("--signals", default="qdd,torque,current")
    x.add_argument("--max-lag", type=int, default=10)
    x.add_argument("--joint", type=int, default=0, help="actuated-joint index")
    x.add_argument("--svg")
    x.set_defaults(func=cmd_xcorr)
    i = asub.add_parser("interarrival", help="percentiles of packet inter-arrival times")
    i.add_argument("--log", required=True)
    i.set_defaults(func=cmd_interarrival)

    rp = sub.add_parser("replay", help="re-run an experiment from its metadata sidecar")
    rp.add_argument("--metadata", required=True)
    rp.add_argument("--out")
    rp.add_argument("--quiet", action="store_true")
    rp.set_defaults(func=cmd_replay)

    pl = sub.add_parser("plot", help="render learning curves to SVG")
    pl.add_argument("csv", nargs="+")
    pl.add_argument("--svg", required=True)
    pl.add_argument("--smooth", type=int, default=1)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
