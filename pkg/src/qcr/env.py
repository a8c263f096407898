"""Challenge-response environment.

Alice prepares ``|j>``, applies H and Phase(phi1). Bob's probe applies
Phase(-phi2) and H, then measures ``shots`` times. The agent sees the
4-vector ``[sin phi2, cos phi2, p1_hat, t/N]`` and either probes again
(cost ``-X`` per copy) or terminates with a guess (``+1`` / ``-1``).

Actions are integers: ``0..K-1`` probe angle ``k``, ``K`` guesses 0, ``K+1``
guesses 1.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import qsim

INSERTION_POINTS = ("transmission", "pre_measurement")


class UsageError(RuntimeError):
    """Step on a finished episode, or a masked action."""


@dataclass(frozen=True)
class AngularDomain:
    start: float = 0.0

    @property
    def width(self) -> float:
        return math.pi

    @property
    def stop(self) -> float:
        return self.start + math.pi


@dataclass(frozen=True)
class NoiseConfig:
    label: str
    p: float
    insertion: str = "pre_measurement"

    def __post_init__(self):
        object.__setattr__(self, "label", qsim.canonical_channel(self.label))
        if self.insertion not in INSERTION_POINTS:
            raise qsim.ConfigurationError(f"insertion must be one of {INSERTION_POINTS}")
        if not 0.0 <= self.p <= 1.0:
            raise qsim.DomainError(f"noise p must lie in [0, 1], got {self.p}")

    def channel(self) -> qsim.KrausChannel:
        return qsim.make_channel(self.label, self.p)


@dataclass(frozen=True)
class EnvConfig:
    n_copies: int = 10
    penalty: float = 0.5
    shots: int = 4
    n_angles: int = 8
    domain: AngularDomain = field(default_factory=AngularDomain)
    noise: Optional[NoiseConfig] = None
    # where Alice draws phi1 from, when it differs from the agent's probe domain
    challenge_domain: Optional[AngularDomain] = None

    def __post_init__(self):
        if self.n_copies < 1 or self.penalty < 0 or self.shots < 1 or self.n_angles < 2:
            raise qsim.ConfigurationError(f"invalid environment config: {self}")

    @property
    def n_actions(self) -> int:
        return self.n_angles + 2

    @property
    def phi1_domain(self) -> AngularDomain:
        return self.challenge_domain if self.challenge_domain is not None else self.domain

    def replace(self, **changes) -> "EnvConfig":
        data = {f: getattr(self, f) for f in ("n_copies", "penalty", "shots", "n_angles", "domain", "noise", "challenge_domain")}
        data.update(changes)
        return EnvConfig(**data)

    def to_dict(self) -> dict:
        return {
            "n_copies": self.n_copies,
            "penalty": self.penalty,
            "shots": self.shots,
            "n_angles": self.n_angles,
            "domain_start": self.domain.start,
            "noise": asdict(self.noise) if self.noise else None,
            "challenge_start": None if self.challenge_domain is None else self.challenge_domain.start,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        noise = d.get("noise")
        challenge = d.get("challenge_start")
        return cls(
            n_copies=int(d["n_copies"]),
            penalty=float(d["penalty"]),
            shots=int(d["shots"]),
            n_angles=int(d["n_angles"]),
            domain=AngularDomain(float(d.get("domain_start", 0.0))),
            noise=NoiseConfig(**noise) if noise else None,
            challenge_domain=None if challenge is None else AngularDomain(float(challenge)),
        )


@dataclass(frozen=True)
class Observation:
    sin_phi2: float
    cos_phi2: float
    p1_hat: float
    progress: float

    def as_array(self) -> np.ndarray:
        return np.array([self.sin_phi2, self.cos_phi2, self.p1_hat, self.progress])


INITIAL_OBSERVATION = Observation(0.0, 0.0, 0.5, 0.0)


@dataclass(frozen=True)
class Action:
    probe: Optional[int] = None
    guess: Optional[int] = None

    def __post_init__(self):
        if (self.probe is None) == (self.guess is None):
            raise qsim.ConfigurationError("an action is either a probe or a terminate-with-guess")
        if self.guess is not None and self.guess not in (0, 1):
            raise qsim.ConfigurationError(f"guess must be 0 or 1, got {self.guess}")

    @property
    def is_probe(self) -> bool:
        return self.probe is not None

    def index(self, n_angles: int) -> int:
        return self.probe if self.is_probe else n_angles + self.guess

    @classmethod
    def from_index(cls, i: int, n_angles: int) -> "Action":
        if 0 <= i < n_angles:
            return cls(probe=int(i))
        if i in (n_angles, n_angles + 1):
            return cls(guess=int(i - n_angles))
        raise qsim.ConfigurationError(f"action index {i} out of range")


@dataclass
class EpisodeState:
    j: int
    phi1: float
    copies_used: int = 0
    done: bool = False
    last_observation: Observation = INITIAL_OBSERVATION
    trace: list = field(default_factory=list)  # (observation, action, reward)
    guess: Optional[int] = None


def action_mask(state: EpisodeState, config: EnvConfig) -> np.ndarray:
    """Boolean mask over the K+2 actions; probes are masked once copies run out."""
    mask = np.ones(config.n_actions, dtype=bool)
    if state.copies_used >= config.n_copies:
        mask[: config.n_angles] = False
    return mask


def reset(config: EnvConfig, rng: np.random.Generator) -> tuple[EpisodeState, Observation]:
    j = int(rng.random() < 0.5)
    phi1 = config.phi1_domain.start + math.pi * rng.random()
    return EpisodeState(j=j, phi1=phi1), INITIAL_OBSERVATION


def probe_angle(config: EnvConfig, k: int) -> float:
    if not 0 <= k < config.n_angles:
        raise qsim.ConfigurationError(f"probe index {k} out of range for K={config.n_angles}")
    return config.domain.start + (k + 0.5) * math.pi / config.n_angles


def true_p1(j: int, phi1: float, phi2: float) -> float:
    c = math.cos(abs(phi1 - phi2))
    return (1 + c) / 2 if j == 1 else (1 - c) / 2


def pipeline_p1(j: int, phi1: float, phi2: float, noise: Optional[NoiseConfig] = None) -> float:
    """Probability of reading 1 from the simulated Alice -> channel -> Bob circuit."""
    rho = qsim.DensityMatrix.basis(1, j)
    rho = qsim.apply_gate(rho, qsim.H(), 0)
    rho = qsim.apply_gate(rho, qsim.Phase(phi1), 0)
    if noise is not None and noise.insertion == "transmission":
        rho = qsim.apply_channel(rho, noise.channel(), 0)
    rho = qsim.apply_gate(rho, qsim.Phase(-phi2), 0)
    rho = qsim.apply_gate(rho, qsim.H(), 0)
    if noise is not None and noise.insertion == "pre_measurement":
        rho = qsim.apply_channel(rho, noise.channel(), 0)
    return qsim.measure_probability_one(rho, 0)


def step(
    state: EpisodeState, action: Action, config: EnvConfig, rng: np.random.Generator
) -> tuple[Observation, float, bool]:
    if state.done:
        raise UsageError("episode already finished")
    obs_before = state.last_observation
    if action.is_probe:
        if state.copies_used >= config.n_copies:
            raise UsageError("no quantum copies left; only terminate actions are allowed")
        phi2 = probe_angle(config, action.probe)
        p1 = pipeline_p1(state.j, state.phi1, phi2, config.noise)
        bits = qsim.sample_outcomes(p1, config.shots, rng)
        state.copies_used += 1
        obs = Observation(
            math.sin(phi2), math.cos(phi2), float(bits.sum()) / config.shots, state.copies_used / config.n_copies
        )
        reward = -float(config.penalty)
        state.last_observation = obs
    else:
        obs = obs_before
        reward = 1.0 if action.guess == state.j else -1.0
        state.guess = action.guess
        state.done = True
    state.trace.append((obs_before, action, reward))
    return obs, reward, state.done


def episode_return(state: EpisodeState) -> float:
    if not state.done:
        raise UsageError("episode not finished")
    return math.fsum(r for _, _, r in state.trace)


class ChallengeResponseEnv:
    """Gym-style wrapper owning one config and one RNG stream."""

    def __init__(self, config: EnvConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.state: Optional[EpisodeState] = None

    def reset(self) -> Observation:
        self.state, obs = reset(self.config, self.rng)
        return obs

    def mask(self) -> np.ndarray:
        return action_mask(self.state, self.config)

    def step(self, action: Action) -> tuple[Observation, float, bool]:
        return step(self.state, action, self.config, self.rng)
