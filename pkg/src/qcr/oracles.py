"""Quick self-checks against analytic, finite-difference and parameter-shift references."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import pqc, qsim
from .diffnet import Tensor
from .env import Action, EnvConfig, EpisodeState, episode_return, step, true_p1


@dataclass
class OracleResult:
    name: str
    passed: bool
    detail: str


def _bob_p1(j: int, phi1: float, phi2: float) -> float:
    psi = qsim.StateVector.basis(1, j)
    for gate in (qsim.H(), qsim.Phase(phi1), qsim.Phase(-phi2), qsim.H()):
        psi = qsim.apply_gate(psi, gate, 0)
    return qsim.measure_probability_one(psi)


def probability_grid(n: int = 50) -> OracleResult:
    t0 = time.perf_counter()
    grid = np.linspace(0.0, math.pi, n)
    worst = max(abs(_bob_p1(j, a, b) - true_p1(j, a, b)) for j in (0, 1) for a in grid for b in grid)
    dt = time.perf_counter() - t0
    return OracleResult("probability grid", worst < 1e-12, f"max error {worst:.2e} over {2 * n * n} points in {dt:.2f}s")


def reward_example() -> OracleResult:
    cfg = EnvConfig(penalty=0.05)
    state = EpisodeState(j=1, phi1=0.5)
    rng = np.random.default_rng(0)
    for _ in range(5):
        step(state, Action(probe=3), cfg, rng)
    step(state, Action(guess=1), cfg, rng)
    ret = episode_return(state)
    return OracleResult("worked reward example", ret == 0.75, f"return {ret!r}")


def channel_identities() -> OracleResult:
    worst = 0.0
    for label in ("bit_flip", "depolarizing", "amplitude_damping"):
        for p in np.linspace(0, 1, 11):
            worst = max(worst, qsim.make_channel(label, p).completeness_error())
    rng = np.random.default_rng(1)
    depol = qsim.make_channel("depolarizing", 1.0)
    for _ in range(20):
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        rho = a @ a.conj().T
        out = qsim.apply_channel(qsim.DensityMatrix(1, rho / np.trace(rho)), depol)
        worst = max(worst, float(np.max(np.abs(out.matrix - np.eye(2) / 2))))
    relaxed = qsim.apply_channel(qsim.DensityMatrix.basis(1, 1), qsim.make_channel("amplitude_damping", 1.0))
    worst = max(worst, float(np.max(np.abs(relaxed.matrix - np.diag([1.0, 0.0])))))
    return OracleResult("channel identities", worst < 1e-10, f"max deviation {worst:.2e}")


def _central(f: Callable[[np.ndarray], float], x: np.ndarray, h: float) -> np.ndarray:
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def backprop_vs_finite_differences(n_graphs: int = 100, seed: int = 0) -> OracleResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_graphs):
        w1, w2 = rng.normal(size=(3, 5)), rng.normal(size=(5, 2))
        c = rng.normal(size=2)

        def f_np(x):
            h = np.tanh(x @ w1) * np.sin(x @ w1 + 0.3)
            y = np.log(1 + np.exp(h @ w2)) / (1 + (x**2).sum())
            return float((y * c).sum())

        def f_t(x: Tensor) -> Tensor:
            z = x @ Tensor(w1)
            h = z.tanh() * (z + 0.3).sin()
            y = ((h @ Tensor(w2)).exp() + 1.0).log() / ((x * x).sum() + 1.0)
            return (y * Tensor(c)).sum()

        x0 = rng.normal(size=(2, 3))
        xt = Tensor(x0)
        f_t(xt).backward()
        fd = _central(f_np, x0, 1e-6)
        worst = max(worst, float(np.max(np.abs(xt.grad - fd) / (np.abs(fd) + 1e-6))))
    return OracleResult("backprop vs finite differences", worst < 1e-5, f"max relative error {worst:.2e}")


def parameter_shift_checks(trials: int = 20, seed: int = 0) -> OracleResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in range(trials):
        enc = rng.uniform(-1.5, 1.5, (4, 4, 2))
        var = rng.uniform(-math.pi, math.pi, (4, 4, 2))
        out = rng.normal(size=10)
        obs = np.array([*rng.uniform(-1, 1, 2), rng.random(), rng.random()])
        a = t % 10
        tv = Tensor(var)
        pqc.deep_actor_logits(Tensor(enc), tv, Tensor(out), obs[None])[0, a].backward()

        def f_deep(v):
            return pqc.deep_expectations_np(enc, v, obs, 10)[a] * out[a]

        for idx in np.ndindex(var.shape):
            worst = max(worst, abs(tv.grad[idx] - pqc.parameter_shift(f_deep, var, idx)))

        theta = rng.uniform(-math.pi, math.pi, 4)
        w = rng.normal(size=4)
        tt = Tensor(theta)
        (pqc.shallow_features(tt, obs[None])[0] * Tensor(w)).sum().backward()

        def f_shallow(th):
            return float(pqc.shallow_features_np(th, obs) @ w)

        for i in range(4):
            worst = max(worst, abs(tt.grad[i] - pqc.parameter_shift(f_shallow, theta, (i,))))
    return OracleResult("parameter shift (deep and shallow)", worst < 1e-8, f"max abs error {worst:.2e}")


ALL_CHECKS = (probability_grid, reward_example, channel_identities, backprop_vs_finite_differences, parameter_shift_checks)


def run_all() -> list[OracleResult]:
    return [check() for check in ALL_CHECKS]
