import copy

import numpy as np
import pytest

from demoguide.approximator import log_prob_batch, log_prob_grad
from demoguide.errors import NonFiniteError, ShapeError
from demoguide.ppo_lfd import (
    TrainConfig,
    clip_objective,
    clip_objective_grad,
    demo_advantage,
    demo_gradient,
    mc_advantage,
    merged_policy_gradient,
    ppo_gradient,
    standardize_against,
    update,
)
from demoguide.rollout import Frames
from demoguide.approximator import MlpSpec
from fixtures_ppo import make_batch, make_demo, make_learner, td_config


def test_defaults():
    c = TrainConfig()
    assert (c.pi_lr, c.vf_lr, c.gamma, c.lam, c.clip_ratio, c.target_kl, c.update_iters) == (
        3e-4, 1e-3, 0.99, 0.97, 0.2, 0.01, 40)


def test_clip_examples():
    adv = np.array([0.5, -1.0, 2.0])
    lp = np.array([-1.0, -0.3, 0.2])
    assert clip_objective(lp, lp, adv, 0.2) == pytest.approx(-adv.mean(), abs=1e-15)
    assert clip_objective([np.log(2.0)], [0.0], [1.0], 0.2) == pytest.approx(-1.2, abs=1e-12)
    assert clip_objective([np.log(0.5)], [0.0], [-1.0], 0.2) == pytest.approx(0.8, abs=1e-12)


def test_clip_rejects_bad_input():
    with pytest.raises(ShapeError):
        clip_objective([0.0, 0.0], [0.0], [1.0, 1.0], 0.2)
    with pytest.raises(NonFiniteError):
        clip_objective([np.nan], [0.0], [1.0], 0.2)


def test_clip_gradient_wrt_logp_matches_fd():
    rng = np.random.default_rng(0)
    old = rng.normal(size=20)
    new = old + rng.normal(size=20) * 0.3
    adv = rng.normal(size=20)
    _, g = clip_objective_grad(new, old, adv, 0.2)
    h = 1e-7
    for i in range(20):
        e = np.zeros(20)
        e[i] = h
        fd = (clip_objective(new + e, old, adv, 0.2) - clip_objective(new - e, old, adv, 0.2)) / (2 * h)
        assert g[i] == pytest.approx(fd, abs=1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_clip_gradient_wrt_params_matches_fd(seed):
    learner = make_learner(seed)
    batch = make_batch(learner, n=16, seed=seed + 10)
    # move away from the collection policy so some ratios clip
    params = learner.policy + np.random.default_rng(seed).normal(size=len(learner.policy)) * 0.05
    grad, _, _ = ppo_gradient(params, learner.pspec, batch, 0.2)
    fr = batch.frames

    def loss(p):
        return clip_objective(log_prob_batch(p, learner.pspec, fr.s, fr.a), fr.logp, batch.adv, 0.2)

    h = 1e-6
    fd = np.array([(loss(params + h * e) - loss(params - h * e)) / (2 * h) for e in np.eye(len(params))])
    err = np.abs(-grad - fd) / np.maximum(1e-6, np.abs(grad) + np.abs(fd))
    assert err.max() < 1e-4


def test_demo_advantage_examples():
    spec = MlpSpec(2, (), 1)
    fr = Frames(np.ones((2, 2)), np.ones((2, 2)), [0.0, 0.5], np.zeros((2, 1)), [False, True])
    zero = np.zeros(spec.n_params)
    np.testing.assert_array_equal(demo_advantage(zero, spec, fr, 0.99), [0.0, 0.5])
    const = np.array([0.0, 0.0, 1.0])  # V == 1 everywhere
    adv = demo_advantage(const, spec, fr, 0.99)
    assert adv[0] == pytest.approx(-0.01, abs=1e-15)
    assert adv[1] == 0.5 - 1.0


def test_mc_advantage_and_standardize():
    spec = MlpSpec(2, (), 1)
    fr = Frames(np.ones((2, 2)), np.ones((2, 2)), [0.0, 0.5], np.zeros((2, 1)), [False, True])
    const = np.array([0.0, 0.0, 1.0])
    np.testing.assert_array_equal(mc_advantage(const, spec, fr, [3.0, -1.0]), [2.0, -2.0])
    with pytest.raises(ShapeError):
        mc_advantage(const, spec, fr, [1.0])
    np.testing.assert_allclose(standardize_against(np.array([3.0]), np.array([1.0, 3.0])), [1.0], atol=1e-7)


def test_empty_demo_is_bitwise_vanilla():
    learner = make_learner()
    batch = make_batch(learner)
    empty = Frames.empty(4, 2)
    a, la, _ = merged_policy_gradient(learner.policy, learner.pspec, batch, empty, np.zeros(0))
    b, lb, _ = ppo_gradient(learner.policy, learner.pspec, batch, 0.2)
    assert a.tobytes() == b.tobytes() and la == lb


def test_single_demo_frame_equals_score():
    learner = make_learner(3)
    batch = make_batch(learner, adv=np.zeros(64))
    demo = make_demo(learner, n=1)
    g, _, _ = merged_policy_gradient(learner.policy, learner.pspec, batch, demo, np.array([1.0]))
    expected = log_prob_grad(learner.policy, learner.pspec, demo.s[0], demo.a[0])
    np.testing.assert_allclose(g, expected, rtol=0, atol=1e-15)


def test_demo_term_linear():
    learner = make_learner(4)
    demo = make_demo(learner, n=6)
    adv = np.random.default_rng(0).normal(size=6)
    g1 = demo_gradient(learner.policy, learner.pspec, demo, adv)
    g2 = demo_gradient(learner.policy, learner.pspec, demo, 2.0 * adv)
    assert g2.tobytes() == (2.0 * g1).tobytes()


def test_demo_adv_length_checked():
    learner = make_learner()
    with pytest.raises(ShapeError):
        merged_policy_gradient(learner.policy, learner.pspec, make_batch(learner), make_demo(learner), np.ones(2))


def test_nonfinite_gradient_aborts():
    learner = make_learner()
    batch = make_batch(learner)
    demo = make_demo(learner, n=2)
    with pytest.raises(NonFiniteError):
        merged_policy_gradient(learner.policy, learner.pspec, batch, demo, np.array([np.inf, 1.0]))


def test_target_kl_zero_stops_after_one_iteration():
    learner = make_learner()
    stats = update(learner, make_batch(learner), None, td_config(target_kl=0.0))
    assert stats.stop_iter == 1
    assert stats.kl_history[-1] > 0


def test_zero_policy_lr():
    learner = make_learner()
    before = learner.policy.copy()
    stats = update(learner, make_batch(learner), make_demo(learner), td_config(pi_lr=0.0))
    assert np.array_equal(learner.policy, before)
    assert stats.approx_kl == 0.0 and stats.stop_iter == 40
    assert stats.demo_frames_used == 5


def test_kl_guard_fires_on_measured_sequence():
    learner = make_learner()
    cfg = td_config(pi_lr=3e-2, target_kl=0.01)
    stats = update(learner, make_batch(learner), None, cfg)
    assert stats.stop_iter < 40
    assert stats.kl_history[-1] > 1.5 * cfg.target_kl
    assert all(k <= 1.5 * cfg.target_kl for k in stats.kl_history[1:-1])


@pytest.mark.parametrize("seed", range(5))
def test_demo_amplification(seed):
    learner = make_learner(seed)
    batch = make_batch(learner, seed=seed + 100)
    demo = make_demo(learner, n=5, seed=seed + 200, reward=1.0)
    before = log_prob_batch(learner.policy, learner.pspec, demo.s, demo.a).mean()
    cfg = td_config(pi_lr=1e-4)
    # zero critic: one-step advantages equal the positive demo rewards
    learner.critic = np.zeros_like(learner.critic)
    adv = demo_advantage(learner.critic, learner.cspec, demo, cfg.gamma)
    assert np.all(adv > 0)
    update(learner, batch, demo, cfg)
    after = log_prob_batch(learner.policy, learner.pspec, demo.s, demo.a).mean()
    assert after > before


def test_update_mc_requires_returns():
    learner = make_learner()
    with pytest.raises(ValueError):
        update(learner, make_batch(learner), make_demo(learner), TrainConfig())
    stats = update(learner, make_batch(learner), make_demo(learner), TrainConfig(), dp_returns=np.ones(5))
    assert stats.demo_frames_used == 5


def test_update_reduces_value_loss():
    learner = make_learner()
    batch = make_batch(learner)
    first = update(learner, batch, None, td_config()).vf_loss
    second = update(copy.deepcopy(learner), batch, None, td_config()).vf_loss
    assert second < first


def test_approx_kl_estimator():
    from demoguide.ppo_lfd import approx_kl

    lp = np.array([-1.0, 0.3])
    assert approx_kl(lp, lp) == 0.0
    assert approx_kl(lp, lp + np.array([0.1, -0.2])) > 0
    # exact for two unit Gaussians in expectation: KL = (mu_new - mu_old)^2 / 2
    rng = np.random.default_rng(0)
    x = rng.normal(size=400_000)
    old, new = -0.5 * x**2, -0.5 * (x - 0.3) ** 2
    assert approx_kl(old, new) == pytest.approx(0.045, abs=2e-3)
