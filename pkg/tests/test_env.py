import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcr import env, qsim
from qcr.env import (
    INITIAL_OBSERVATION,
    Action,
    AngularDomain,
    EnvConfig,
    EpisodeState,
    NoiseConfig,
    UsageError,
    action_mask,
    episode_return,
    pipeline_p1,
    probe_angle,
    reset,
    step,
    true_p1,
)


def fixed_state(j=1, phi1=0.4):
    return EpisodeState(j=j, phi1=phi1)


class TestReset:
    def test_deterministic(self):
        cfg = EnvConfig()
        a, _ = reset(cfg, np.random.default_rng(5))
        b, _ = reset(cfg, np.random.default_rng(5))
        assert (a.j, a.phi1) == (b.j, b.phi1)

    def test_bit_frequency(self):
        rng = np.random.default_rng(0)
        cfg = EnvConfig()
        ones = sum(reset(cfg, rng)[0].j for _ in range(100_000))
        assert abs(ones / 100_000 - 0.5) < 0.01

    def test_initial_observation(self):
        _, obs = reset(EnvConfig(), np.random.default_rng(0))
        assert obs.as_array().tolist() == [0, 0, 0.5, 0]
        assert obs == INITIAL_OBSERVATION

    def test_angle_in_domain(self):
        cfg = EnvConfig(domain=AngularDomain(1.3))
        rng = np.random.default_rng(1)
        for _ in range(1000):
            s, _ = reset(cfg, rng)
            assert 1.3 <= s.phi1 < 1.3 + math.pi


class TestProbeAngle:
    @pytest.mark.parametrize(
        "K,k,expected", [(8, 0, math.pi / 16), (8, 7, 15 * math.pi / 16), (2, 1, 3 * math.pi / 4)]
    )
    def test_midpoints(self, K, k, expected):
        assert probe_angle(EnvConfig(n_angles=K), k) == pytest.approx(expected, abs=1e-15)

    def test_out_of_range(self):
        with pytest.raises(qsim.ConfigurationError):
            probe_angle(EnvConfig(), 8)

    def test_domain_shift(self):
        assert probe_angle(EnvConfig(domain=AngularDomain(1.0)), 0) == pytest.approx(1 + math.pi / 16)


class TestTrueP1:
    def test_values(self):
        assert true_p1(1, 0.3, 0.3) == 1.0
        assert true_p1(0, 0.0, math.pi / 2) == pytest.approx(0.5, abs=1e-15)
        assert true_p1(0, 0.0, math.pi) == pytest.approx(1.0, abs=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 1), st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
    def test_pipeline_agrees(self, j, a, b):
        assert abs(pipeline_p1(j, a, b) - true_p1(j, a, b)) < 1e-12


class TestStep:
    def test_worked_example(self):
        cfg = EnvConfig(penalty=0.05)
        s = fixed_state(j=1)
        rng = np.random.default_rng(0)
        for _ in range(5):
            step(s, Action(probe=3), cfg, rng)
        step(s, Action(guess=1), cfg, rng)
        assert episode_return(s) == 0.75
        assert s.copies_used == 5

    def test_immediate_correct_guess(self):
        s = fixed_state(j=0)
        _, r, done = step(s, Action(guess=0), EnvConfig(), np.random.default_rng(0))
        assert (r, done, s.copies_used) == (1.0, True, 0)
        assert episode_return(s) == 1.0

    def test_two_probes_wrong_guess(self):
        cfg = EnvConfig(penalty=0.5)
        s = fixed_state(j=1)
        rng = np.random.default_rng(0)
        step(s, Action(probe=0), cfg, rng)
        step(s, Action(probe=1), cfg, rng)
        step(s, Action(guess=0), cfg, rng)
        assert episode_return(s) == -2.0

    def test_step_after_done(self):
        s = fixed_state()
        step(s, Action(guess=1), EnvConfig(), np.random.default_rng(0))
        with pytest.raises(UsageError):
            step(s, Action(guess=1), EnvConfig(), np.random.default_rng(0))

    def test_return_before_done(self):
        with pytest.raises(UsageError):
            episode_return(fixed_state())

    def test_copies_exhausted(self):
        cfg = EnvConfig(n_copies=2)
        s = fixed_state()
        rng = np.random.default_rng(0)
        step(s, Action(probe=0), cfg, rng)
        assert action_mask(s, cfg).all()
        step(s, Action(probe=0), cfg, rng)
        mask = action_mask(s, cfg)
        assert not mask[:8].any() and mask[8:].all()
        with pytest.raises(UsageError):
            step(s, Action(probe=0), cfg, rng)
        step(s, Action(guess=0), cfg, rng)
        assert s.done

    def test_observation_fields(self):
        cfg = EnvConfig(n_copies=4)
        s = fixed_state()
        obs, r, done = step(s, Action(probe=2), cfg, np.random.default_rng(0))
        phi2 = probe_angle(cfg, 2)
        assert obs.sin_phi2 == math.sin(phi2) and obs.cos_phi2 == math.cos(phi2)
        assert obs.progress == 0.25
        assert obs.p1_hat in (0, 0.25, 0.5, 0.75, 1.0)
        assert r == -0.5 and not done

    def test_progress_monotone(self):
        cfg = EnvConfig()
        s = fixed_state()
        rng = np.random.default_rng(2)
        last = 0.0
        for k in range(10):
            obs, _, _ = step(s, Action(probe=k % 8), cfg, rng)
            assert obs.progress == s.copies_used / cfg.n_copies >= last
            last = obs.progress

    def test_action_index_round_trip(self):
        for i in range(10):
            assert Action.from_index(i, 8).index(8) == i
        with pytest.raises(qsim.ConfigurationError):
            Action.from_index(10, 8)
        with pytest.raises(qsim.ConfigurationError):
            Action(probe=1, guess=0)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.integers(0, 7), max_size=10),
    st.integers(0, 1),
    st.sampled_from([0.0, 0.05, 0.1, 0.5, 0.37]),
    st.integers(0, 2**32 - 1),
)
def test_return_identity(probes, guess, penalty, seed):
    cfg = EnvConfig(penalty=penalty)
    rng = np.random.default_rng(seed)
    s, _ = reset(cfg, rng)
    for k in probes:
        step(s, Action(probe=k), cfg, rng)
    step(s, Action(guess=guess), cfg, rng)
    r = 1.0 if guess == s.j else -1.0
    assert s.copies_used == len(probes)
    assert episode_return(s) == pytest.approx(r - penalty * s.copies_used, abs=1e-12)


def test_p1_hat_converges():
    cfg = EnvConfig()
    rng = np.random.default_rng(9)
    j, phi1, k = 1, 0.9, 2
    est = []
    for _ in range(10_000):
        s = fixed_state(j, phi1)
        obs, _, _ = step(s, Action(probe=k), cfg, rng)
        est.append(obs.p1_hat)
    assert abs(np.mean(est) - true_p1(j, phi1, probe_angle(cfg, k))) < 0.02


def _probe_bits(cfg, seed, n=200):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        s = fixed_state(i % 2, 0.01 * i)
        obs, _, _ = step(s, Action(probe=i % 8), cfg, rng)
        out.append(obs.p1_hat)
    return np.array(out)


@pytest.mark.parametrize("label", ["bit_flip", "depolarizing", "amplitude_damping"])
@pytest.mark.parametrize("insertion", ["transmission", "pre_measurement"])
def test_zero_noise_is_noiseless(label, insertion):
    clean = _probe_bits(EnvConfig(), 4)
    noisy = _probe_bits(EnvConfig(noise=NoiseConfig(label, 0.0, insertion)), 4)
    assert np.array_equal(clean, noisy)


def test_full_bit_flip_inverts_outcomes():
    clean = _probe_bits(EnvConfig(), 8)
    flipped = _probe_bits(EnvConfig(noise=NoiseConfig("bit_flip", 1.0, "pre_measurement")), 8)
    assert np.array_equal(flipped, 1 - clean)


def test_transmission_bit_flip_mirrors_angle():
    # X after Alice's phase maps phi1 -> -phi1 (up to global phase), flipping the sign of j's signature
    noise = NoiseConfig("bit_flip", 1.0, "transmission")
    for phi1, phi2 in [(0.3, 1.1), (2.0, 0.5)]:
        assert pipeline_p1(1, phi1, phi2, noise) == pytest.approx(true_p1(1, -phi1, phi2), abs=1e-12)


def test_full_depolarizing_is_uninformative():
    noise = NoiseConfig("depolarizing", 1.0)
    for j in (0, 1):
        assert pipeline_p1(j, 0.3, 1.2, noise) == pytest.approx(0.5, abs=1e-12)


def test_config_json_round_trip():
    cfg = EnvConfig(n_copies=2, penalty=0.05, domain=AngularDomain(0.3), noise=NoiseConfig("amplitude", 0.2, "transmission"))
    doc = json.loads(json.dumps(cfg.to_dict()))
    assert set(doc) == {"n_copies", "penalty", "shots", "n_angles", "domain_start", "noise", "challenge_start"}
    assert set(doc["noise"]) == {"label", "p", "insertion"}
    assert EnvConfig.from_dict(doc) == cfg


def test_challenge_domain_moves_phi1_only():
    cfg = EnvConfig(domain=AngularDomain(0.0), challenge_domain=AngularDomain(2.0))
    rng = np.random.default_rng(0)
    for _ in range(200):
        s, _ = reset(cfg, rng)
        assert 2.0 <= s.phi1 < 2.0 + math.pi
    assert probe_angle(cfg, 0) == math.pi / 16
    assert EnvConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("kwargs", [{"n_copies": 0}, {"penalty": -1}, {"shots": 0}, {"n_angles": 1}])
def test_invalid_config(kwargs):
    with pytest.raises(qsim.ConfigurationError):
        EnvConfig(**kwargs)


def test_env_wrapper():
    e = env.ChallengeResponseEnv(EnvConfig(n_copies=1), np.random.default_rng(0))
    e.reset()
    e.step(Action(probe=0))
    assert not e.mask()[:8].any()
    _, r, done = e.step(Action(guess=e.state.j))
    assert done and r == 1.0
