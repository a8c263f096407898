"""Two-factor challenge-response authentication on top of a trained S-agent.

Enrollment trains (or loads) the verifier's agent on a secret angular domain.
A session first checks a salted password hash; only if that passes are
quantum challenges issued. Each challenge is one two-copy episode, and the
session is accepted when the fraction of correctly inferred bits reaches the
threshold. ``eve_attack`` trains an agent on a shifted domain and measures how
it fares against challenges drawn from the true one.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import rng as rngmod
from .agents import Agent, agent_from_checkpoint, load_checkpoint
from .diffnet import TrainingError
from .env import AngularDomain, EnvConfig, NoiseConfig
from .harness import RunConfig, run_episode, train

COPIES_PER_CHALLENGE = 2
DEFAULT_CHALLENGES = 32
DEFAULT_THRESHOLD = 0.8
# enrollment trains in the low-penalty regime, where the agent settles on a
# two-probe strategy accurate enough for 32-bit sessions at threshold 0.8
ENROLL_PENALTY = 0.05
DEFAULT_EVE_OFFSET = math.pi / 2
PBKDF2_ROUNDS = 100_000


# -- classical factor ----------------------------------------------------------


@dataclass(frozen=True)
class Credential:
    """Salted PBKDF2 digest of a password."""

    salt: bytes
    digest: bytes

    @classmethod
    def create(cls, password: str, salt: Optional[bytes] = None) -> "Credential":
        salt = os.urandom(16) if salt is None else salt
        return cls(salt, _hash(password, salt))

    def check(self, password: str) -> bool:
        return hmac.compare_digest(self.digest, _hash(password, self.salt))


def _hash(password: str, salt: bytes) -> bytes:
    return hashlib.pbkdf2_hmac("sha256", password.encode(), salt, PBKDF2_ROUNDS)


# -- session types ---------------------------------------------------------------


@dataclass
class AuthSession:
    domain_start: float
    n_challenges: int = DEFAULT_CHALLENGES
    threshold: float = DEFAULT_THRESHOLD
    credential: Optional[Credential] = None
    copies: int = COPIES_PER_CHALLENGE

    def __post_init__(self):
        if not 0.5 < self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in (0.5, 1], got {self.threshold}")
        if self.n_challenges < 1:
            raise ValueError("a session needs at least one challenge")
        if self.copies != COPIES_PER_CHALLENGE:
            raise ValueError(f"each challenge uses exactly {COPIES_PER_CHALLENGE} copies")


@dataclass
class VerifierProfile:
    agent: Agent
    domain_start: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        trained_on = self.agent.config.domain.start
        if not math.isclose(trained_on, self.domain_start, abs_tol=1e-12):
            raise ValueError(f"agent was trained on domain start {trained_on}, profile says {self.domain_start}")

    def to_dict(self) -> dict:
        return {
            "domain_start": self.domain_start,
            "metadata": self.metadata,
            "checkpoint": self.agent.checkpoint(self.metadata.get("seed", 0), self.metadata.get("epochs", 0)),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VerifierProfile":
        return cls(agent_from_checkpoint(d["checkpoint"]), float(d["domain_start"]), dict(d.get("metadata", {})))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "VerifierProfile":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ChallengeRecord:
    b: int
    b_hat: int
    steps: int


@dataclass
class SessionResult:
    accepted: bool
    classical_ok: bool
    threshold: float
    challenges: list[ChallengeRecord] = field(default_factory=list)

    @property
    def n_correct(self) -> int:
        return sum(c.b == c.b_hat for c in self.challenges)

    @property
    def correct_fraction(self) -> float:
        return self.n_correct / len(self.challenges) if self.challenges else 0.0

    def to_document(self, domain_start: float, redact_domain: bool = True) -> dict:
        return {
            "domain_start": None if redact_domain else domain_start,
            "domain_redacted": redact_domain,
            "classical_factor": "pass" if self.classical_ok else "fail",
            "n_challenges": len(self.challenges),
            "per_challenge": [{"b": c.b, "b_hat": c.b_hat, "steps": c.steps} for c in self.challenges],
            "correct_fraction": self.correct_fraction,
            "threshold": self.threshold,
            "decision": "accept" if self.accepted else "reject",
        }


# -- decision rule and its exact acceptance probability ------------------------


def min_correct(n: int, threshold: float) -> int:
    """Smallest ``k`` with ``k / n >= threshold``, using the same float comparison as ``decide``."""
    for k in range(n + 1):
        if k / n >= threshold:
            return k
    return n + 1


def decide(challenges: list[ChallengeRecord], threshold: float) -> bool:
    if not challenges:
        return False
    correct = sum(c.b == c.b_hat for c in challenges)
    return correct / len(challenges) >= threshold


def acceptance_probability(per_bit_accuracy: float, n: int, threshold: float) -> float:
    """``P[Bin(n, acc) >= k_min]`` summed exactly term by term."""
    p = float(per_bit_accuracy)
    k_min = min_correct(n, threshold)
    return math.fsum(math.comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(k_min, n + 1))


# -- protocol phases -------------------------------------------------------------


def enroll(
    domain_start: float,
    run: Optional[RunConfig] = None,
    seed: int = 0,
    checkpoint=None,
) -> VerifierProfile:
    """Train an S-agent on ``[a, a + pi)`` or load one from ``checkpoint``."""
    if checkpoint is not None:
        agent = load_checkpoint(checkpoint)
        return VerifierProfile(agent, float(domain_start), {"source": str(checkpoint), "seed": seed})
    domain = AngularDomain(float(domain_start))
    if run is None:
        run = RunConfig(agent_type="S", env=EnvConfig(penalty=ENROLL_PENALTY, domain=domain))
    else:
        run = RunConfig(
            agent_type=run.agent_type,
            env=run.env.replace(domain=domain),
            epochs=run.epochs,
            batch=run.batch,
            jobs=run.jobs,
        )
    agent, report = train(run, seed)
    if report.aborted:
        raise TrainingError(f"enrollment training diverged at {report.aborted}")
    meta = {"seed": seed, "epochs": len(report.rows), "agent_type": run.agent_type, "penalty": run.env.penalty}
    return VerifierProfile(agent, float(domain_start), meta)


def challenge_config(profile: VerifierProfile, session: AuthSession, noise: Optional[NoiseConfig] = None) -> EnvConfig:
    """Two-copy episodes with phi1 drawn from the session domain; probes stay in the agent's own grid."""
    cfg = profile.agent.config.replace(n_copies=session.copies, challenge_domain=AngularDomain(session.domain_start))
    return cfg.replace(noise=noise) if noise is not None else cfg


def run_session(
    profile: VerifierProfile,
    session: AuthSession,
    seed: int,
    session_id: int = 0,
    password: Optional[str] = None,
    noise: Optional[NoiseConfig] = None,
    greedy: bool = False,
) -> SessionResult:
    """Check the classical factor, then issue ``n_challenges`` two-copy challenges."""
    if session.credential is not None and (password is None or not session.credential.check(password)):
        return SessionResult(accepted=False, classical_ok=False, threshold=session.threshold)
    cfg = challenge_config(profile, session, noise)
    records = []
    for i in range(session.n_challenges):
        env_rng, agent_rng = rngmod.episode_streams(seed, rngmod.AUTH, session_id, i)
        trace = run_episode(profile.agent, cfg, env_rng, agent_rng, greedy)
        records.append(ChallengeRecord(trace.true_bit, trace.guess, trace.steps))
    return SessionResult(decide(records, session.threshold), True, session.threshold, records)


def acceptance_rate(
    profile: VerifierProfile,
    session: AuthSession,
    n_sessions: int,
    seed: int,
    noise: Optional[NoiseConfig] = None,
    greedy: bool = False,
) -> tuple[float, float]:
    """Empirical ``(session acceptance rate, per-bit accuracy)`` over ``n_sessions`` sessions."""
    results = [run_session(profile, session, seed, s, noise=noise, greedy=greedy) for s in range(n_sessions)]
    bits = sum(len(r.challenges) for r in results)
    correct = sum(r.n_correct for r in results)
    return float(np.mean([r.accepted for r in results])), correct / bits


@dataclass
class EveReport:
    true_start: float
    eve_start: float
    per_bit_accuracy: float
    n_bits: int
    acceptance_rate: float
    n_sessions: int
    predicted_acceptance: float


def eve_attack(
    true_start: float,
    eve_start: Optional[float] = None,
    n_bits: int = 1000,
    n_sessions: int = 200,
    session_length: int = DEFAULT_CHALLENGES,
    threshold: float = DEFAULT_THRESHOLD,
    seed: int = 0,
    run: Optional[RunConfig] = None,
    eve_profile: Optional[VerifierProfile] = None,
) -> EveReport:
    """Train Eve on ``[a', a' + pi)`` and attack challenges drawn from ``[a, a + pi)``.

    Eve is given the classical factor, so only the quantum phase can stop her.
    """
    if eve_profile is None:
        eve_start = true_start + DEFAULT_EVE_OFFSET if eve_start is None else eve_start
        if math.isclose(eve_start, true_start, abs_tol=1e-12):
            raise ValueError("the attacker's domain must differ from the true one")
        eve_profile = enroll(eve_start, run, seed)
    session = AuthSession(true_start, session_length, threshold)
    # per-bit accuracy on a separate stream family from the sessions
    bit_session = AuthSession(true_start, n_bits, threshold)
    bits = run_session(eve_profile, bit_session, seed + 1, session_id=0)
    rate, _ = acceptance_rate(eve_profile, session, n_sessions, seed + 2)
    acc = bits.correct_fraction
    return EveReport(
        true_start=true_start,
        eve_start=eve_profile.domain_start,
        per_bit_accuracy=acc,
        n_bits=n_bits,
        acceptance_rate=rate,
        n_sessions=n_sessions,
        predicted_acceptance=acceptance_probability(acc, session_length, threshold),
    )
