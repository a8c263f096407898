"""C-, D- and S-agents and their update rules.

* C-agent: MLP 4 -> 128 -> K+2, REINFORCE.
* D-agent: re-uploading circuit actor with a 4 -> 64 -> 1 critic, advantage
  actor-critic.
* S-agent: shallow Ry circuit producing 4 Pauli-Z features, then
  MLP 4 -> 128 -> K+2, REINFORCE; circuit and MLP trained jointly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import pqc
from .diffnet import (
    Adam,
    ParamGroup,
    Tensor,
    TrainingError,
    collect_gradients,
    dense_layer,
    dense_layer_np,
    init_dense,
    log_softmax,
    softmax_np,
    where_mask,
)
from .env import Action, EnvConfig

RETURN_EPS = 1e-8
HIDDEN = "tanh"

# Table of per-group learning rates
LR_CLASSICAL = 0.01
LR_ENCODING = 0.01
LR_VARIATIONAL = 0.01
LR_OUTPUT = 0.005
LR_CRITIC = 0.001


@dataclass
class EpisodeTrace:
    """One finished episode as seen by the learner.

    ``next_observations[t]`` is ``None`` for the terminal step.
    """

    observations: list[np.ndarray] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    masks: list[np.ndarray] = field(default_factory=list)
    log_probs: list[float] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    next_observations: list[Optional[np.ndarray]] = field(default_factory=list)
    guess: Optional[int] = None
    true_bit: Optional[int] = None
    copies_used: int = 0

    @property
    def steps(self) -> int:
        return len(self.actions)

    @property
    def correct(self) -> bool:
        return self.guess == self.true_bit

    def episode_return(self) -> float:
        return math.fsum(self.rewards)

    def returns_to_go(self) -> np.ndarray:
        """Undiscounted ``G_t = sum_{tau >= t} r_tau``; ``G_0`` is the episode return."""
        out = np.empty(len(self.rewards))
        acc = 0.0
        for t in range(len(self.rewards) - 1, -1, -1):
            acc += self.rewards[t]
            out[t] = acc
        out[0] = self.episode_return()
        return out


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF categorical draw; zero-probability entries are never returned."""
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    if idx >= len(probs) or probs[idx] == 0.0:
        idx = int(np.flatnonzero(probs > 0)[-1])
    return idx


class Agent:
    agent_type = "?"
    policy_groups: tuple[str, ...] = ()

    def __init__(self, config: EnvConfig, groups: dict[str, ParamGroup]):
        self.config = config
        self.groups = groups
        self.optimizer = Adam()

    @property
    def n_actions(self) -> int:
        return self.config.n_actions

    def logits_np(self, obs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def logits(self, obs: np.ndarray, params: dict[str, dict[str, Tensor]]) -> Tensor:
        raise NotImplementedError

    def policy(self, obs: np.ndarray, mask: np.ndarray) -> np.ndarray:
        logits = np.where(mask, self.logits_np(np.asarray(obs, float)), -np.inf)
        return softmax_np(logits)

    def act(
        self, obs: np.ndarray, mask: np.ndarray, rng: np.random.Generator, greedy: bool = False
    ) -> tuple[Action, float]:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ValueError("every action is masked")
        probs = self.policy(obs, mask)
        idx = int(np.argmax(probs)) if greedy else sample_action(probs, rng)
        return Action.from_index(idx, self.config.n_angles), float(np.log(probs[idx]))

    def bind(self, names) -> dict[str, dict[str, Tensor]]:
        return {n: self.groups[n].tensors() for n in names}

    def policy_log_probs(self, traces: list[EpisodeTrace], params) -> Tensor:
        obs = np.array([o for t in traces for o in t.observations])
        masks = np.array([m for t in traces for m in t.masks])
        actions = np.array([a for t in traces for a in t.actions])
        lp = log_softmax(where_mask(masks, self.logits(obs, params)))
        return lp[np.arange(len(actions)), actions]

    def update(self, traces: list[EpisodeTrace]) -> dict[str, float]:
        raise NotImplementedError

    # -- persistence ---------------------------------------------------------

    def checkpoint(self, rng_seed: int = 0, epoch: int = 0) -> dict:
        return {
            "agent_type": self.agent_type,
            "env_config": self.config.to_dict(),
            "param_groups": {name: g.to_dict() for name, g in self.groups.items()},
            "rng_seed": rng_seed,
            "epoch": epoch,
        }


def normalized_returns(traces: list[EpisodeTrace]) -> np.ndarray:
    """Returns-to-go pooled over every step of the batch, shifted to mean 0 and scaled by std + eps."""
    g = np.concatenate([t.returns_to_go() for t in traces])
    if np.all(g == g[0]):
        return np.zeros_like(g)
    return (g - g.mean()) / (g.std() + RETURN_EPS)


def reinforce_update(agent: Agent, traces: list[EpisodeTrace]) -> dict[str, float]:
    g_hat = normalized_returns(traces)
    params = agent.bind(agent.policy_groups)
    picked = agent.policy_log_probs(traces, params)
    loss = -(picked * g_hat).sum() * (1.0 / len(traces))
    if not np.isfinite(loss.data):
        raise TrainingError(f"non-finite REINFORCE loss {loss.data}")
    loss.backward()
    grads = collect_gradients(params)
    agent.optimizer.step([agent.groups[n] for n in agent.policy_groups], grads)
    return {"actor_loss": loss.item()}


class _MLPPolicyMixin:
    groups: dict[str, ParamGroup]

    def _mlp_np(self, x: np.ndarray) -> np.ndarray:
        p = self.groups["classical_policy"].values
        h = dense_layer_np(x, p["W1"], p["b1"], HIDDEN)
        return dense_layer_np(h, p["W2"], p["b2"])

    @staticmethod
    def _mlp(x: Tensor, p: dict[str, Tensor]) -> Tensor:
        h = dense_layer(x, p["W1"], p["b1"], HIDDEN)
        return dense_layer(h, p["W2"], p["b2"])


def _mlp_group(name: str, n_in: int, hidden: int, n_out: int, lr: float, rng: np.random.Generator) -> ParamGroup:
    w1, b1 = init_dense(n_in, hidden, rng)
    w2, b2 = init_dense(hidden, n_out, rng)
    return ParamGroup(name, {"W1": w1, "b1": b1, "W2": w2, "b2": b2}, lr)


class CAgent(_MLPPolicyMixin, Agent):
    agent_type = "C"
    policy_groups = ("classical_policy",)

    @classmethod
    def create(cls, config: EnvConfig, rng: np.random.Generator) -> "CAgent":
        return cls(config, {"classical_policy": _mlp_group("classical_policy", 4, 128, config.n_actions, LR_CLASSICAL, rng)})

    def logits_np(self, obs):
        return self._mlp_np(obs)

    def logits(self, obs, params):
        return self._mlp(Tensor(obs), params["classical_policy"])

    def update(self, traces):
        return reinforce_update(self, traces)


class SAgent(_MLPPolicyMixin, Agent):
    agent_type = "S"
    policy_groups = ("variational", "classical_policy")
    # observation component o_i is encoded as the angle Ry(scale * o_i)
    encoding_scale = math.pi

    @classmethod
    def create(cls, config: EnvConfig, rng: np.random.Generator) -> "SAgent":
        theta = rng.uniform(-0.1, 0.1, pqc.N_QUBITS)
        return cls(
            config,
            {
                "variational": ParamGroup("variational", {"theta": theta}, LR_CLASSICAL),
                "classical_policy": _mlp_group("classical_policy", 4, 128, config.n_actions, LR_CLASSICAL, rng),
            },
        )

    def features_np(self, obs):
        return pqc.shallow_features_np(self.groups["variational"].values["theta"], self.encoding_scale * obs)

    def logits_np(self, obs):
        return self._mlp_np(self.features_np(obs))

    def logits(self, obs, params):
        feats = pqc.shallow_features(params["variational"]["theta"], self.encoding_scale * obs)
        return self._mlp(feats, params["classical_policy"])

    def update(self, traces):
        return reinforce_update(self, traces)


class DAgent(Agent):
    agent_type = "D"
    policy_groups = ("encoding", "variational", "output")

    @classmethod
    def create(cls, config: EnvConfig, rng: np.random.Generator) -> "DAgent":
        circuit = pqc.DeepActorCircuit.init(config.n_actions, rng)
        return cls(
            config,
            {
                "encoding": ParamGroup("encoding", {"lambda": circuit.encoding}, LR_ENCODING),
                "variational": ParamGroup("variational", {"theta": circuit.variational}, LR_VARIATIONAL),
                "output": ParamGroup("output", {"w": circuit.output}, LR_OUTPUT),
                "critic": _mlp_group("critic", 4, 64, 1, LR_CRITIC, rng),
            },
        )

    @property
    def circuit(self) -> pqc.DeepActorCircuit:
        return pqc.DeepActorCircuit(
            self.groups["encoding"].values["lambda"],
            self.groups["variational"].values["theta"],
            self.groups["output"].values["w"],
        )

    def logits_np(self, obs):
        return pqc.deep_actor_logits_np(self.circuit, obs)

    def logits(self, obs, params):
        return pqc.deep_actor_logits(
            params["encoding"]["lambda"], params["variational"]["theta"], params["output"]["w"], obs
        )

    def value_np(self, obs: np.ndarray) -> np.ndarray:
        p = self.groups["critic"].values
        h = dense_layer_np(np.atleast_2d(obs), p["W1"], p["b1"], HIDDEN)
        return dense_layer_np(h, p["W2"], p["b2"])[:, 0]

    def value(self, obs: np.ndarray, p: dict[str, Tensor]) -> Tensor:
        h = dense_layer(Tensor(np.atleast_2d(obs)), p["W1"], p["b1"], HIDDEN)
        return dense_layer(h, p["W2"], p["b2"])[:, 0]

    def update(self, traces):
        return actor_critic_update(self, traces)


def td_targets(agent: DAgent, traces: list[EpisodeTrace]) -> np.ndarray:
    """``y_t = r_t + V(o_{t+1})``, and ``y_T = r_T`` on the terminal step."""
    rewards = np.array([r for t in traces for r in t.rewards])
    nxt = [o for t in traces for o in t.next_observations]
    live = np.array([o is not None for o in nxt])
    boot = np.zeros(len(nxt))
    if live.any():
        boot[live] = agent.value_np(np.array([o for o in nxt if o is not None]))
    return rewards + boot


def actor_critic_update(agent: DAgent, traces: list[EpisodeTrace]) -> dict[str, float]:
    obs = np.array([o for t in traces for o in t.observations])
    y = td_targets(agent, traces)
    names = agent.policy_groups + ("critic",)
    params = agent.bind(names)
    v = agent.value(obs, params["critic"])
    advantage = y - v.data  # constant w.r.t. both networks in the actor term
    picked = agent.policy_log_probs(traces, params)
    n = 1.0 / len(traces)
    actor_loss = -(picked * advantage).sum() * n
    critic_loss = ((v - y) ** 2).sum() * (0.5 * n)
    total = actor_loss + critic_loss
    if not np.isfinite(total.data):
        raise TrainingError(f"non-finite actor-critic loss {total.data}")
    total.backward()
    agent.optimizer.step([agent.groups[k] for k in names], collect_gradients(params))
    return {"actor_loss": actor_loss.item(), "critic_loss": critic_loss.item()}


AGENT_TYPES = {"C": CAgent, "D": DAgent, "S": SAgent}


def make_agent(agent_type: str, config: EnvConfig, rng: np.random.Generator) -> Agent:
    try:
        cls = AGENT_TYPES[agent_type.upper()]
    except KeyError:
        raise ValueError(f"unknown agent type {agent_type!r}") from None
    return cls.create(config, rng)


def agent_from_checkpoint(data: dict) -> Agent:
    cls = AGENT_TYPES[data["agent_type"]]
    config = EnvConfig.from_dict(data["env_config"])
    groups = {name: ParamGroup.from_dict(name, g) for name, g in data["param_groups"].items()}
    return cls(config, groups)


def save_checkpoint(agent: Agent, path, rng_seed: int = 0, epoch: int = 0) -> None:
    Path(path).write_text(json.dumps(agent.checkpoint(rng_seed, epoch), indent=1))


def load_checkpoint(path) -> Agent:
    return agent_from_checkpoint(json.loads(Path(path).read_text()))
