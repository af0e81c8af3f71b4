import json
from pathlib import Path

import numpy as np
import pytest

import oracles
from urlab.harness import run_experiment
from urlab.xlab import analysis, io as xio, seeds
from urlab.xlab.cli import main, parse_seeds
from urlab.xlab.config import (ConfigError, ExperimentConfig, config_from_dict, config_to_dict,
                               dumps_config, load_config)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


# -- config ---------------------------------------------------------------------------

def test_empty_config_is_baseline(tmp_path):
    p = tmp_path / "empty.toml"
    p.write_text("")
    cfg = load_config(p)
    assert cfg == ExperimentConfig()
    assert (cfg.variant, cfg.action_space, cfg.action_cycle_ms, cfg.medium) == ("2-joint", "velocity", 40.0, "wired")
    assert cfg.action_delay_ms == 0 and cfg.actuation_delay_ms == 0


def test_config_errors_name_the_key(tmp_path):
    with pytest.raises(ConfigError) as e:
        config_from_dict({"action_cycle_ms": -5})
    assert e.value.key == "action_cycle_ms"
    with pytest.raises(ConfigError) as e:
        config_from_dict({"medium": "carrier-pigeon"})
    assert e.value.key == "medium"
    with pytest.raises(ConfigError):
        config_from_dict({"no_such_key": 1})
    with pytest.raises(ConfigError):
        config_from_dict({"action_cycle_ms": 30.0})
    p = tmp_path / "bad.toml"
    p.write_text("seed = [")
    with pytest.raises(ConfigError):
        load_config(p)


def test_config_round_trip(tmp_path):
    cfg = config_from_dict({"variant": "6-joint", "medium": "wireless", "seed": 7,
                            "trpo": {"gamma": 0.99}, "kinematics": {"margin": 0.03}})
    p = tmp_path / "c.toml"
    p.write_text(dumps_config(cfg))
    assert load_config(p) == cfg
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_shipped_configs_load():
    names = sorted(p.name for p in CONFIGS.glob("*.toml"))
    assert "baseline.toml" in names
    for p in CONFIGS.glob("*.toml"):
        cfg = load_config(p)
        if cfg.agent == "trpo":
            # 100 minutes of agent experience whatever the cycle
            assert cfg.total_steps * cfg.action_cycle_ms == 6_000_000


# -- seeds ------------------------------------------------------------------------------

def test_streams_are_independent_and_reproducible():
    a = seeds.stream(0, "targets").random(5)
    assert np.array_equal(a, seeds.stream(0, "targets").random(5))
    assert not np.array_equal(a, seeds.stream(0, "policy").random(5))
    assert not np.array_equal(a, seeds.stream(1, "targets").random(5))
    with pytest.raises(ValueError):
        seeds.stream(-1, "targets")


def test_streams_do_not_depend_on_config_axes():
    # the same seed gives the same targets and initial networks whatever the medium
    from urlab.harness import make_agent, setup_from_config
    first = []
    for medium in ("wired", "wireless"):
        cfg = ExperimentConfig(medium=medium, seed=0)
        s = seeds.derive_streams(0)
        setup = setup_from_config(cfg)
        agent = make_agent(cfg, setup.task, s)
        first.append((s.get("targets").random(10), agent.policy.flat.copy()))
    assert np.array_equal(first[0][0], first[1][0])
    assert np.array_equal(first[0][1], first[1][1])


def test_cached_stream_continues():
    s = seeds.SeedStreams(3)
    x = s.get("targets").random()
    y = s.get("targets").random()
    assert x != y
    assert s.fresh("targets").random() == x


# -- analysis ----------------------------------------------------------------------------

def test_xcorr_matches_naive_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.normal(size=300)
        y = np.roll(x, 3) + 0.5 * rng.normal(size=300)
        cg = analysis.cross_correlation(x, y, 10)
        naive = oracles.xcorr_naive(x, y, 10)
        assert cg.values == pytest.approx([naive[k] for k in cg.lags], abs=1e-12)
        assert cg.argmax() == 3


def test_xcorr_constant_series_is_undefined():
    cg = analysis.cross_correlation(np.ones(50), np.arange(50.0), 3)
    assert np.all(np.isnan(cg.values))
    with pytest.raises(ValueError):
        analysis.cross_correlation(np.ones(3), np.ones(3), 5)
    with pytest.raises(ValueError):
        analysis.cross_correlation(np.ones(4), np.ones(5), 1)


def test_paired_bootstrap():
    assert analysis.paired_bootstrap([2, 3, 4, 5, 6], [1, 1, 1, 1, 1]) == 0.0
    assert analysis.paired_bootstrap([1, 1, 1, 1, 1], [2, 3, 4, 5, 6]) == 1.0
    p = analysis.paired_bootstrap([1, 2, 3, 4, 5], [2, 1, 4, 3, 5])
    assert 0.3 < p <= 1.0
    with pytest.raises(ValueError):
        analysis.paired_bootstrap([], [])


def test_final_quarter_mean():
    assert analysis.final_quarter_mean([0, 0, 0, 4, 4, 4, 8, 8]) == 8
    assert analysis.final_quarter_mean([5]) == 5


# -- io and determinism -------------------------------------------------------------------

def small_cfg(**kw):
    base = dict(total_steps=1000, batch_episodes=2, seed=1)
    base.update(kw)
    return ExperimentConfig(**base)


def test_csv_and_metadata_are_deterministic(tmp_path):
    outs = []
    for k in range(2):
        cfg = small_cfg()
        r = run_experiment(cfg)
        csv_path, meta_path = tmp_path / f"r{k}.csv", tmp_path / f"r{k}.json"
        xio.write_run_csv(r, csv_path)
        xio.write_metadata(r, cfg, meta_path)
        outs.append((csv_path.read_bytes(), meta_path.read_bytes()))
    assert outs[0] == outs[1]
    lines = outs[0][0].decode().split("\n")
    assert lines[0] == ",".join(xio.CSV_HEADER)
    assert len(lines) == 1 + 5 + 1 and lines[-1] == ""
    data = xio.read_run_csv(tmp_path / "r0.csv")
    assert list(data["steps"]) == [200, 400, 600, 800, 1000]
    meta = json.loads(outs[0][1])
    assert meta["seed"] == 1 and config_from_dict(meta["config"]) == small_cfg()


def test_unwritable_output_reports_path(tmp_path):
    r = run_experiment(small_cfg(total_steps=0))
    bad = tmp_path / "missing" / "x.csv"
    with pytest.raises(OSError, match="missing"):
        xio.write_run_csv(r, bad)


# -- command line ---------------------------------------------------------------------------

def test_parse_seeds():
    assert parse_seeds("0..4") == [0, 1, 2, 3, 4]
    assert parse_seeds("3") == [3]
    assert parse_seeds("0,2,5") == [0, 2, 5]


def test_cli_run_replay_and_analysis(tmp_path, capsys):
    cfg = tmp_path / "tiny.toml"
    cfg.write_text('agent = "random"\naction_cycle_ms = 8.0\ntotal_steps = 1000\n'
                   'batch_episodes = 1\ntick_log = true\n')
    out = tmp_path / "runs"
    assert main(["run", "--config", str(cfg), "--seed", "2", "--out", str(out), "--quiet"]) == 0
    assert (out / "tiny_seed2.csv").exists() and (out / "tiny_seed2_ticks.csv").exists()
    assert main(["replay", "--metadata", str(out / "tiny_seed2.json"), "--quiet"]) == 0
    assert "byte-for-byte" in capsys.readouterr().out
    assert main(["analyze", "xcorr", "--log", str(out / "tiny_seed2_ticks.csv"),
                 "--svg", str(tmp_path / "x.svg")]) == 0
    text = capsys.readouterr().out
    assert "qdd" in text and "current" in text
    assert (tmp_path / "x.svg").read_text().startswith("<svg")
    assert main(["analyze", "interarrival", "--log", str(out / "tiny_seed2_ticks.csv")]) == 0
    assert "p95" in capsys.readouterr().out
    assert main(["plot", str(out / "tiny_seed2.csv"), "--svg", str(tmp_path / "c.svg")]) == 0


def test_cli_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("action_cycle_ms = -5\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "action_cycle_ms" in capsys.readouterr().err
