"""Run outputs: learning-curve CSV, JSON metadata sidecar, per-tick logs."""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ExperimentConfig, config_to_dict

CSV_HEADER = ("batch", "steps", "mean_return", "std_return", "mean_final_distance")
OUT_ENV = "URLAB_OUT"


def code_version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "0.0.0"


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "runs"))


def _g(x: float) -> str:
    return format(float(x), ".9g")


def write_run_csv(result, path) -> None:
    path = Path(path)
    rows = ["{},{},{},{},{}".format(b.batch, b.steps, _g(b.mean_return), _g(b.std_return),
                                    _g(b.mean_final_distance)) for b in result.batches]
    text = "\n".join([",".join(CSV_HEADER)] + rows) + "\n"
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_run_csv(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    return {k: np.array([float(r[k]) for r in rows]) for k in CSV_HEADER}


def run_summary(result) -> dict:
    a = result.audit
    return {
        "batches": len(result.batches),
        "agent_steps": result.agent_steps,
        "experience_s": result.experience_ns / 1e9,
        "virtual_s": result.virtual_ns / 1e9,
        "updates_accepted": sum(1 for u in result.updates if u.accepted),
        "max_update_kl": max((u.kl for u in result.updates if u.accepted), default=0.0),
        "obs_to_action": a.latency_summary(),
        "commands_sent": a.commands_sent,
        "commands_dropped": a.commands_dropped,
        "expired_ticks": a.expired_ticks,
        "safety_stops": a.safety_stops,
        "watchdog_stops": a.watchdog_stops,
        "reset_timeouts": a.reset_timeouts,
        "max_tip_excursion_m": a.max_tip_excursion,
        "max_joint_excursion_rad": a.max_joint_excursion,
        "max_tip_excursion_reset_m": a.max_tip_excursion_reset,
        "max_joint_excursion_reset_rad": a.max_joint_excursion_reset,
    }


def write_metadata(result, cfg: ExperimentConfig, path, extra: Optional[dict] = None) -> None:
    meta = {
        "config": config_to_dict(cfg),
        "seed": cfg.seed,
        "code_version": code_version(),
        "summary": run_summary(result),
        "episode_returns": [float(_g(x)) for x in result.episode_returns],
        "episode_final_distances": [float(_g(x)) for x in result.episode_final_distances],
        "mean_step_rewards": [float(_g(b.mean_step_reward)) for b in result.batches],
    }
    if extra:
        meta.update(extra)
    text = json.dumps(meta, indent=2, sort_keys=True) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def read_metadata(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_tick_log(rig, path) -> None:
    """One row per controller tick: commanded velocity and motor signals of the actuated joints."""
    log = rig.tick_log or []
    arrivals = rig.arrivals or []
    n = rig.task.n
    head = ["seq", "timestamp_ns", "arrival_ns", "in_episode"]
    for name in ("command", "qdd_target", "torque_target", "current"):
        head += [f"{name}_{j}" for j in range(n)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(head) + "\n")
        for k, (seq, ts, running, cmd, qdd, tq, cur) in enumerate(log):
            arr = str(arrivals[k]) if k < len(arrivals) else ""
            vals = [str(seq), str(ts), arr, "1" if running else "0"]
            vals += [_g(x) for x in (*cmd, *qdd, *tq, *cur)]
            fh.write(",".join(vals) + "\n")


def read_tick_log(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader)
        cols: list = [[] for _ in head]
        for row in reader:
            for c, v in zip(cols, row):
                c.append(v)
    out = {}
    for name, col in zip(head, cols):
        if name in ("seq", "timestamp_ns", "in_episode"):
            out[name] = np.array([int(v) for v in col], dtype=np.int64)
        elif name == "arrival_ns":
            out[name] = np.array([int(v) for v in col if v != ""], dtype=np.int64)
        else:
            out[name] = np.array([float(v) for v in col])
    return out


def signal_columns(log: dict, signal: str) -> list:
    keys = sorted(k for k in log if k.startswith(signal + "_") and k[len(signal) + 1:].isdigit())
    if not keys:
        raise KeyError(f"log has no {signal!r} columns")
    return keys
