import csv
import json
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

from qcr import harness
from qcr.agents import Agent, EpisodeTrace, make_agent
from qcr.env import EnvConfig, NoiseConfig
from qcr.harness import (
    Metrics,
    RunConfig,
    aggregate_seeds,
    evaluate,
    format_accuracy,
    metrics_from_traces,
    noise_grid,
    noise_sweep,
    read_training_log,
    rollouts,
    train,
    train_to_dir,
)


class AlwaysGuessZero(Agent):
    agent_type = "C"

    def __init__(self, config):
        super().__init__(config, {})

    def logits_np(self, obs):
        out = np.full(self.config.n_actions, -50.0)
        out[self.config.n_angles] = 50.0
        return out


def fake_trace(true_bit, guess, steps=1):
    return EpisodeTrace(actions=[0] * (steps - 1) + [8 + guess], true_bit=true_bit, guess=guess, copies_used=steps - 1)


def test_accuracy_from_counts():
    traces = [fake_trace(1, 1)] * 440 + [fake_trace(0, 0)] * 440 + [fake_trace(1, 0)] * 60 + [fake_trace(0, 1)] * 60
    m = metrics_from_traces(traces)
    assert m.accuracy == 0.88
    assert m.confusion == [[440, 60], [60, 440]]
    assert m.episodes == 1000


def test_always_guess_zero():
    cfg = EnvConfig(n_copies=2)
    m = evaluate(AlwaysGuessZero(cfg), cfg, 1000, seed=0)
    assert abs(m.accuracy - 0.5) < 0.03
    assert m.confusion[0][1] == 0 and m.confusion[1][1] == 0
    assert m.avg_interactions == 1.0 and m.avg_copies == 0.0
    assert (m.confusion[0][0] + m.confusion[1][1]) / m.episodes == m.accuracy


class TestAggregate:
    def test_example(self):
        ms = [Metrics(a, 1.0, 0.0, [[0, 0], [0, 0]]) for a in (0.87, 0.88, 0.89)]
        mean, std = aggregate_seeds(ms)
        assert mean == pytest.approx(0.88, abs=1e-12)
        assert std == pytest.approx(np.sqrt(2e-4 / 3), abs=1e-12)
        assert format_accuracy(mean, std) == "0.880 ± 0.008"

    def test_single_and_identical(self):
        m = Metrics(0.7, 1.0, 0.0, [[0, 0], [0, 0]])
        assert aggregate_seeds([m]) == (0.7, 0.0)
        assert aggregate_seeds([m, m, m])[1] == 0.0

    def test_empty(self):
        with pytest.raises(ValueError):
            aggregate_seeds([])


def small_run(kind="c", **kw):
    return RunConfig(agent_type=kind, env=EnvConfig(penalty=0.05), epochs=kw.pop("epochs", 3), batch=kw.pop("batch", 8),
                     eval_episodes=kw.pop("eval_episodes", 40), **kw)


def test_run_config_defaults():
    run = RunConfig()
    assert (run.epochs, run.batch, run.seeds, run.eval_episodes, run.greedy) == (300, 30, (0, 1, 2), 1000, False)
    assert run.eval_env.n_copies == 2 and run.env.n_copies == 10
    with pytest.raises(ValueError):
        RunConfig(epochs=0)
    with pytest.raises(ValueError):
        RunConfig(eval_episodes=0)


@pytest.mark.parametrize("kind", ["c", "d", "s"])
def test_one_epoch_one_row(kind):
    _, report = train(small_run(kind, epochs=1), seed=0)
    assert len(report.rows) == 1
    row = report.rows[0]
    assert set(row) == set(harness.TRAINING_LOG_COLUMNS)
    assert (row["critic_loss"] is None) == (kind != "d")


def test_training_is_deterministic():
    a = train(small_run("s"), seed=3)[1].rows
    b = train(small_run("s"), seed=3)[1].rows
    c = train(small_run("s"), seed=4)[1].rows
    assert a == b
    assert a != c


def test_interactions_bounded_by_budget():
    run = small_run("c", epochs=4)
    _, report = train(run, 0)
    for r in report.rows:
        # probes plus the final terminate decision
        assert 1 <= r["avg_steps"] <= run.env.n_copies + 1


def test_parallel_rollouts_match_serial():
    agent = make_agent("s", EnvConfig(), np.random.default_rng(0))
    paths = [(1, 0, i) for i in range(12)]
    serial = rollouts(agent, EnvConfig(), 5, paths)
    with ProcessPoolExecutor(2) as pool:
        parallel = rollouts(agent, EnvConfig(), 5, paths, pool=pool)
    assert [t.actions for t in serial] == [t.actions for t in parallel]
    assert [t.rewards for t in serial] == [t.rewards for t in parallel]


def test_evaluate_same_seed_same_metrics():
    agent = make_agent("c", EnvConfig(), np.random.default_rng(0))
    cfg = EnvConfig(n_copies=2)
    assert evaluate(agent, cfg, 200, 1) == evaluate(agent, cfg, 200, 1)
    m = evaluate(agent, cfg, 200, 1)
    assert m.avg_copies <= 2


def test_noise_grid():
    g = noise_grid()
    assert len(g) == 11 and g[0] == 0.0 and g[-1] == 1.0 and g[3] == 0.3


def test_noise_sweep_zero_matches_noiseless_and_depolarizing_one_is_chance():
    agent = make_agent("c", EnvConfig(), np.random.default_rng(0))
    cfg = EnvConfig(n_copies=2)
    rows = noise_sweep(agent, cfg, "depolarizing", [0.0, 1.0], seeds=(0,), episodes=1000)
    clean = evaluate(agent, cfg, 1000, 0)
    assert rows[0]["accuracy"] == clean.accuracy
    assert abs(rows[1]["accuracy"] - 0.5) < 0.05
    assert rows[0]["channel"] == "depolarizing" and rows[0]["insertion"] == "pre_measurement"


def test_train_to_dir_artifacts_are_reproducible(tmp_path):
    run = small_run("d", epochs=2, batch=4, eval_episodes=20, seeds=(0, 1))
    for name in ("a", "b"):
        train_to_dir(run, 7, tmp_path / name, evaluate_after=True)
    for f in ("training_log.csv", "eval.json", "ckpt.json", "config.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    with open(tmp_path / "a" / "training_log.csv") as fh:
        header = next(csv.reader(fh))
    assert tuple(header) == harness.TRAINING_LOG_COLUMNS
    rows = read_training_log(tmp_path / "a" / "training_log.csv")
    assert len(rows) == 2 and rows[1]["epoch"] == 1.0
    doc = json.loads((tmp_path / "a" / "eval.json").read_text())
    assert set(doc) >= {"agent_type", "seeds", "per_seed", "accuracy_mean", "accuracy_std"}
    assert set(doc["per_seed"]["0"]) >= {"accuracy", "avg_interactions", "confusion"}
    assert sum(map(sum, doc["per_seed"]["0"]["confusion"])) == 20
    cfg = json.loads((tmp_path / "a" / "config.json").read_text())
    assert cfg["version"] and cfg["run"]["agent_type"] == "D"


def test_critic_column_empty_for_reinforce_agents(tmp_path):
    train_to_dir(small_run("c", epochs=2), 0, tmp_path)
    rows = read_training_log(tmp_path / "training_log.csv")
    assert all(r["critic_loss"] is None for r in rows)


def test_noisy_training_config_round_trips():
    cfg = EnvConfig(noise=NoiseConfig("bitflip", 0.1))
    run = RunConfig(env=cfg)
    assert EnvConfig.from_dict(run.to_dict()["env"]) == cfg
