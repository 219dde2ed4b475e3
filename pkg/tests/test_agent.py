import os

import numpy as np
import numpy.testing as npt
import pytest

from acorm import agent

DATA = os.path.join(os.path.dirname(__file__), "data")


def zero_params(obs_dim=10, n_actions=6, embed_dim=128):
    rng = np.random.default_rng(0)
    p = agent.agent_params(rng, obs_dim, n_actions, embed_dim)
    return {k: np.zeros_like(v) for k, v in p.items()}


def seeded_params(seed=0, obs_dim=10, n_actions=6, embed_dim=128):
    return agent.agent_params(np.random.default_rng(seed), obs_dim, n_actions, embed_dim)


def test_zero_everything_gives_zero_embedding():
    p = zero_params()
    e = agent.embed_step(p, np.zeros(10), np.zeros(6), np.zeros(128))
    npt.assert_array_equal(e, np.zeros(128))


def test_embed_step_deterministic():
    p = seeded_params()
    obs = np.random.default_rng(1).uniform(-1, 1, 10)
    la = np.zeros(6)
    e1 = agent.embed_step(p, obs, la, np.zeros(128))
    e2 = agent.embed_step(p, obs, la, np.zeros(128))
    npt.assert_array_equal(e1, e2)


def test_embed_step_golden():
    golden = np.load(os.path.join(DATA, "golden_nets.npz"))
    p = seeded_params()
    e = agent.embed_step(p, golden["obs"], golden["la"], np.zeros(128))
    npt.assert_allclose(e, golden["e1"], atol=1e-10)


def test_embed_step_dimension_mismatch():
    p = seeded_params()
    with pytest.raises(ValueError):
        agent.embed_step(p, np.zeros(9), np.zeros(6), np.zeros(128))
    with pytest.raises(ValueError):
        agent.embed_step(p, np.zeros(10), np.zeros(6), np.zeros(64))


def test_q_values_zero_head():
    p = seeded_params()
    p["agent.head.W"][:] = 0.0
    p["agent.head.b"][:] = 0.0
    q = agent.q_values(p, np.random.default_rng(2).normal(size=128))
    npt.assert_array_equal(q, np.zeros(6))


def test_q_values_bias_only():
    p = seeded_params()
    p["agent.head.W"][:] = 0.0
    b = np.arange(6.0)
    p["agent.head.b"] = b.copy()
    q = agent.q_values(p, np.random.default_rng(2).normal(size=128))
    npt.assert_array_equal(q, b)


def test_q_values_golden():
    golden = np.load(os.path.join(DATA, "golden_nets.npz"))
    p = seeded_params()
    npt.assert_allclose(agent.q_values(p, golden["e1"]), golden["q1"], atol=1e-10)


def test_parameter_sharing_identical_histories():
    p = seeded_params()
    rng = np.random.default_rng(4)
    obs = rng.uniform(-1, 1, size=(2, 10))
    obs[1] = obs[0]
    la = np.zeros((2, 6))
    h = np.zeros((2, 128))
    e = agent.embed_step(p, obs, la, h)
    npt.assert_array_equal(e[0], e[1])
    q = agent.q_values(p, e)
    npt.assert_array_equal(q[0], q[1])


def test_recurrent_consistency_stepwise_vs_unrolled():
    p = seeded_params()
    rng = np.random.default_rng(5)
    T, B = 12, 3
    obs = rng.uniform(-1, 1, size=(T, B, 10))
    la = rng.uniform(0, 1, size=(T, B, 6))
    h = np.zeros((B, 128))
    stepwise = []
    for t in range(T):
        h = agent.embed_step(p, obs[t], la[t], h)
        stepwise.append(h)
    unrolled, _ = agent.embed_sequence(p, obs, la, np.zeros((B, 128)))
    npt.assert_allclose(np.asarray(stepwise), unrolled, atol=1e-6)


def test_select_action_greedy_argmax():
    rng = np.random.default_rng(0)
    assert agent.select_action(np.array([1.0, 5.0, 3.0]), [True] * 3, 0.0, rng) == 1


def test_select_action_tie_lowest_index():
    rng = np.random.default_rng(0)
    assert agent.select_action(np.array([9.0, 9.0, 1.0]), [True] * 3, 0.0, rng) == 0


def test_select_action_respects_mask():
    rng = np.random.default_rng(0)
    q = np.array([10.0, 1.0, 2.0])
    assert agent.select_action(q, [False, True, True], 0.0, rng) == 2


def test_select_action_empty_mask_raises():
    with pytest.raises(ValueError):
        agent.select_action(np.zeros(3), [False] * 3, 0.5, np.random.default_rng(0))


def test_select_action_uniform_frequencies():
    rng = np.random.default_rng(123)
    q = np.array([0.0, 0.0, 0.0])
    mask = [True, False, True]
    draws = 100_000
    counts = np.zeros(3)
    for _ in range(draws):
        counts[agent.select_action(q, mask, 1.0, rng)] += 1
    assert counts[1] == 0
    assert abs(counts[0] / draws - 0.5) < 0.01
    assert abs(counts[2] / draws - 0.5) < 0.01


def test_masked_greedy_never_unavailable_random_draws():
    rng = np.random.default_rng(9)
    for _ in range(200):
        n = int(rng.integers(2, 12))
        q = rng.normal(size=n)
        mask = rng.random(n) < 0.5
        if not mask.any():
            mask[int(rng.integers(n))] = True
        a = agent.select_action(q, mask, float(rng.random()), rng)
        assert mask[a]
