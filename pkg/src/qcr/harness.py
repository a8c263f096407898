"""Training, evaluation, noise sweeps and run persistence."""

from __future__ import annotations

import csv
import json
import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, rng as rngmod
from .agents import Agent, EpisodeTrace, make_agent, save_checkpoint
from .diffnet import TrainingError
from .env import EnvConfig, NoiseConfig, action_mask, reset, step

log = logging.getLogger(__name__)

TRAINING_LOG_COLUMNS = ("epoch", "avg_steps", "batch_accuracy", "avg_return", "actor_loss", "critic_loss")
NOISE_COLUMNS = ("channel", "p", "insertion", "accuracy", "std")


@dataclass
class RunConfig:
    agent_type: str = "S"
    env: EnvConfig = field(default_factory=EnvConfig)
    eval_env: Optional[EnvConfig] = None
    epochs: int = 300
    batch: int = 30
    seeds: tuple[int, ...] = (0, 1, 2)
    eval_episodes: int = 1000
    greedy: bool = False
    jobs: int = 1

    def __post_init__(self):
        if self.epochs < 1 or self.eval_episodes < 1 or self.batch < 1:
            raise ValueError("epochs, batch and eval_episodes must all be >= 1")
        self.agent_type = self.agent_type.upper()
        if self.eval_env is None:
            self.eval_env = self.env.replace(n_copies=2)

    def to_dict(self) -> dict:
        return {
            "agent_type": self.agent_type,
            "env": self.env.to_dict(),
            "eval_env": self.eval_env.to_dict(),
            "epochs": self.epochs,
            "batch": self.batch,
            "seeds": list(self.seeds),
            "eval_episodes": self.eval_episodes,
            "greedy": self.greedy,
            "gamma": 1.0,
        }


@dataclass
class Metrics:
    accuracy: float
    avg_interactions: float
    avg_copies: float
    confusion: list[list[int]]
    accuracy_std: float = 0.0

    @property
    def episodes(self) -> int:
        return sum(map(sum, self.confusion))


@dataclass
class RunReport:
    rows: list[dict] = field(default_factory=list)
    metrics: dict[int, Metrics] = field(default_factory=dict)
    aborted: Optional[str] = None


# -- rollouts ----------------------------------------------------------------


def run_episode(
    agent: Agent,
    config: EnvConfig,
    env_rng: np.random.Generator,
    agent_rng: np.random.Generator,
    greedy: bool = False,
) -> EpisodeTrace:
    state, obs = reset(config, env_rng)
    trace = EpisodeTrace(true_bit=state.j)
    done = False
    while not done:
        o = obs.as_array()
        mask = action_mask(state, config)
        action, logp = agent.act(o, mask, agent_rng, greedy)
        obs, reward, done = step(state, action, config, env_rng)
        trace.observations.append(o)
        trace.actions.append(action.index(config.n_angles))
        trace.masks.append(mask)
        trace.log_probs.append(logp)
        trace.rewards.append(reward)
        trace.next_observations.append(None if done else obs.as_array())
    trace.guess = state.guess
    trace.copies_used = state.copies_used
    return trace


def _episode_job(args) -> EpisodeTrace:
    agent, config, seed, path, greedy = args
    env_rng, agent_rng = rngmod.episode_streams(seed, *path)
    return run_episode(agent, config, env_rng, agent_rng, greedy)


def rollouts(
    agent: Agent,
    config: EnvConfig,
    seed: int,
    paths: Sequence[tuple[int, ...]],
    greedy: bool = False,
    pool: Optional[ProcessPoolExecutor] = None,
) -> list[EpisodeTrace]:
    """One episode per stream path; results are independent of ``pool``."""
    jobs = [(agent, config, seed, p, greedy) for p in paths]
    if pool is None:
        return [_episode_job(j) for j in jobs]
    return list(pool.map(_episode_job, jobs, chunksize=max(1, len(jobs) // 32)))


# -- training ----------------------------------------------------------------


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def train(run: RunConfig, seed: int, pool: Optional[ProcessPoolExecutor] = None) -> tuple[Agent, RunReport]:
    agent = make_agent(run.agent_type, run.env, rngmod.stream(seed, rngmod.INIT))
    report = RunReport()
    own_pool = pool is None and run.jobs > 1
    if own_pool:
        pool = ProcessPoolExecutor(run.jobs)
    try:
        for epoch in range(run.epochs):
            paths = [(rngmod.TRAIN, epoch, i) for i in range(run.batch)]
            traces = rollouts(agent, run.env, seed, paths, pool=pool)
            try:
                losses = agent.update(traces)
            except TrainingError as exc:
                report.aborted = f"epoch {epoch}: {exc}"
                log.error("training aborted: %s", report.aborted)
                break
            report.rows.append(
                {
                    "epoch": epoch,
                    "avg_steps": float(np.mean([t.steps for t in traces])),
                    "batch_accuracy": float(np.mean([t.correct for t in traces])),
                    "avg_return": float(np.mean([t.episode_return() for t in traces])),
                    "actor_loss": losses.get("actor_loss"),
                    "critic_loss": losses.get("critic_loss"),
                }
            )
            if epoch % 25 == 0 or epoch == run.epochs - 1:
                r = report.rows[-1]
                log.info(
                    "%s epoch %d steps %.2f acc %.2f return %.3f",
                    run.agent_type, epoch, r["avg_steps"], r["batch_accuracy"], r["avg_return"],
                )
    finally:
        if own_pool:
            pool.shutdown()
    return agent, report


# -- evaluation --------------------------------------------------------------


def metrics_from_traces(traces: Sequence[EpisodeTrace]) -> Metrics:
    confusion = [[0, 0], [0, 0]]
    for t in traces:
        confusion[t.true_bit][t.guess] += 1
    n = len(traces)
    return Metrics(
        accuracy=(confusion[0][0] + confusion[1][1]) / n,
        avg_interactions=float(np.mean([t.steps for t in traces])),
        avg_copies=float(np.mean([t.copies_used for t in traces])),
        confusion=confusion,
    )


def evaluate(
    agent: Agent,
    config: EnvConfig,
    episodes: int = 1000,
    seed: int = 0,
    greedy: bool = False,
    pool: Optional[ProcessPoolExecutor] = None,
) -> Metrics:
    """Accuracy, mean steps per episode (probes plus the final guess) and confusion matrix."""
    paths = [(rngmod.EVAL, i) for i in range(episodes)]
    return metrics_from_traces(rollouts(agent, config, seed, paths, greedy, pool))


def aggregate_seeds(metrics: Sequence[Metrics]) -> tuple[float, float]:
    """Mean and population standard deviation of accuracy across seeds (exact for equal values)."""
    if not metrics:
        raise ValueError("no metrics to aggregate")
    acc = [m.accuracy for m in metrics]
    return statistics.fmean(acc), statistics.pstdev(acc)


def format_accuracy(mean: float, std: float) -> str:
    return f"{mean:.3f} ± {std:.3f}"


def evaluate_seeds(
    agent: Agent,
    config: EnvConfig,
    seeds: Sequence[int],
    episodes: int = 1000,
    greedy: bool = False,
    pool: Optional[ProcessPoolExecutor] = None,
) -> dict[int, Metrics]:
    return {s: evaluate(agent, config, episodes, s, greedy, pool) for s in seeds}


def noise_grid(start: float = 0.0, stop: float = 1.0, step_size: float = 0.1) -> list[float]:
    n = int(round((stop - start) / step_size))
    return [round(start + i * step_size, 12) for i in range(n + 1)]


def noise_sweep(
    agent: Agent,
    config: EnvConfig,
    channel: str,
    grid: Sequence[float] = tuple(noise_grid()),
    insertion: str = "pre_measurement",
    seeds: Sequence[int] = (0, 1, 2),
    episodes: int = 1000,
    greedy: bool = False,
    pool: Optional[ProcessPoolExecutor] = None,
) -> list[dict]:
    rows = []
    for p in grid:
        noisy = config.replace(noise=NoiseConfig(channel, float(p), insertion))
        per_seed = evaluate_seeds(agent, noisy, seeds, episodes, greedy, pool)
        mean, std = aggregate_seeds(list(per_seed.values()))
        rows.append(
            {"channel": noisy.noise.label, "p": float(p), "insertion": insertion, "accuracy": mean, "std": std}
        )
    return rows


# -- persistence ------------------------------------------------------------


def write_training_log(report: RunReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAINING_LOG_COLUMNS)
        for r in report.rows:
            w.writerow([r["epoch"]] + [_fmt(r[c]) for c in TRAINING_LOG_COLUMNS[1:]])


def read_training_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {k: (float(v) if v != "" else None) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]


def eval_document(agent_type: str, per_seed: dict[int, Metrics]) -> dict:
    mean, std = aggregate_seeds(list(per_seed.values()))
    return {
        "agent_type": agent_type,
        "seeds": list(per_seed),
        "per_seed": {
            str(s): {
                "accuracy": m.accuracy,
                "avg_interactions": m.avg_interactions,
                "avg_copies": m.avg_copies,
                "confusion": m.confusion,
            }
            for s, m in per_seed.items()
        },
        "accuracy_mean": mean,
        "accuracy_std": std,
    }


def write_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


def write_noise_sweep(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NOISE_COLUMNS)
        for r in rows:
            w.writerow([r["channel"], repr(r["p"]), r["insertion"], repr(r["accuracy"]), repr(r["std"])])


def write_config(out_dir, command: str, resolved: dict) -> None:
    write_json({"tool": "qcr", "version": __version__, "command": command, **resolved}, Path(out_dir) / "config.json")


def train_to_dir(run: RunConfig, seed: int, out_dir, evaluate_after: bool = False) -> tuple[Agent, RunReport]:
    """Train, then write ``config.json``, ``training_log.csv``, ``ckpt.json`` (and ``eval.json``)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_config(out, "train", {"run": run.to_dict(), "seed": seed})
    pool = ProcessPoolExecutor(run.jobs) if run.jobs > 1 else None
    try:
        agent, report = train(run, seed, pool)
        write_training_log(report, out / "training_log.csv")
        save_checkpoint(agent, out / "ckpt.json", rng_seed=seed, epoch=len(report.rows))
        if evaluate_after:
            per_seed = evaluate_seeds(agent, run.eval_env, run.seeds, run.eval_episodes, run.greedy, pool)
            report.metrics = per_seed
            write_json(eval_document(run.agent_type, per_seed), out / "eval.json")
    finally:
        if pool is not None:
            pool.shutdown()
    return agent, report
