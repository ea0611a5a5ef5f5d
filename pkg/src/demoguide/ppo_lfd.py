"""PPO-clip learner with an additional score-function term over selected
demonstration frames.

The policy ascent direction is the clipped-surrogate gradient over the
exploration batch plus ``weight / |D_p| * sum_n A_n * grad log p(a_n | s_n)``
over the selected demonstration frames. By default ``A_n`` is the demo
return-to-go minus the critic's value, expressed relative to the same quantity
on the exploration batch, so an immature critic cannot flip its sign. With no
demonstration frames the update is plain PPO, bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .approximator import (
    OptimizerState,
    adam_step,
    backward,
    forward,
    log_prob_batch,
    weighted_log_prob_grad,
)
from .errors import NonFiniteError, ShapeError
from .similarity import GuidanceConfig


@dataclass
class TrainConfig:
    pi_lr: float = 3e-4
    vf_lr: float = 1e-3
    gamma: float = 0.99
    lam: float = 0.97
    clip_ratio: float = 0.2
    target_kl: float = 0.01
    update_iters: int = 40
    epochs: int = 50
    steps_per_epoch: int = 1000
    hidden: tuple = (64, 64)
    seed: int = 0
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)

    def validate(self):
        if not (self.pi_lr >= 0 and self.vf_lr >= 0):
            raise ValueError("learning rates must be non-negative")
        if not 0 < self.clip_ratio < 1:
            raise ValueError(f"clip_ratio must lie in (0, 1), got {self.clip_ratio}")
        if self.update_iters < 1 or self.epochs < 1 or self.steps_per_epoch < 1:
            raise ValueError("update_iters, epochs and steps_per_epoch must be positive")
        self.guidance.validate(self.epochs)
        return self


@dataclass
class UpdateStats:
    pi_loss: float
    vf_loss: float
    approx_kl: float
    demo_frames_used: int
    stop_iter: int
    kl_history: list = field(default_factory=list)


def _require_finite(name, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteError(f"{name}: non-finite input")


def clip_objective(logp_new, logp_old, adv, eps):
    """Clipped-surrogate loss ``-mean(min(ratio * adv, clip(ratio) * adv))``."""
    return clip_objective_grad(logp_new, logp_old, adv, eps)[0]


def clip_objective_grad(logp_new, logp_old, adv, eps):
    """Loss and its derivative with respect to each ``logp_new`` entry."""
    logp_new = np.asarray(logp_new, dtype=np.float64)
    logp_old = np.asarray(logp_old, dtype=np.float64)
    adv = np.asarray(adv, dtype=np.float64)
    if not (logp_new.shape == logp_old.shape == adv.shape):
        raise ShapeError(
            f"shape mismatch: logp_new {logp_new.shape}, logp_old {logp_old.shape}, adv {adv.shape}"
        )
    _require_finite("clip_objective", logp_new, logp_old, adv)
    n = len(adv)
    ratio = np.exp(logp_new - logp_old)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    loss = -np.mean(np.minimum(unclipped, clipped))
    # the clipped branch is flat in logp_new; ties take the unclipped slope
    active = unclipped <= clipped
    dlogp = np.where(active, -unclipped / n, 0.0)
    return float(loss), dlogp


def ppo_gradient(params, pspec, batch, clip_ratio, logp=None):
    """Ascent direction of the clipped surrogate, its loss, and the current log-probs."""
    fr = batch.frames
    if logp is None:
        logp = log_prob_batch(params, pspec, fr.s, fr.a)
    loss, dlogp = clip_objective_grad(logp, fr.logp, batch.adv, clip_ratio)
    grad = weighted_log_prob_grad(params, pspec, fr.s, fr.a, -dlogp)
    return grad, loss, logp


def demo_advantage(critic, cspec, frames, gamma):
    """One-step TD advantage ``r + gamma * V(s') * (1 - done) - V(s)`` per frame."""
    if len(frames) == 0:
        return np.zeros(0)
    if frames.obs_dim != cspec.input_dim:
        raise ShapeError(f"demo observation dim {frames.obs_dim} != critic input {cspec.input_dim}")
    v = forward(critic, cspec, frames.s)[:, 0]
    v_next = forward(critic, cspec, frames.s_next)[:, 0]
    return frames.r + gamma * v_next * (1.0 - frames.done) - v


def standardize_against(demo_adv, explore_adv):
    """Express demo advantages in units of the exploration batch's advantage spread.

    Critic bias shifts both sets of one-step advantages alike, so centering on
    the exploration mean keeps only how much better the demonstrated
    transitions score than the explored ones.
    """
    return (demo_adv - explore_adv.mean()) / (explore_adv.std() + 1e-8)


def mc_advantage(critic, cspec, frames, returns):
    """Monte-Carlo advantage ``G - V(s)`` from discounted returns-to-go."""
    if len(frames) == 0:
        return np.zeros(0)
    returns = np.asarray(returns, dtype=np.float64)
    if len(returns) != len(frames):
        raise ShapeError(f"{len(returns)} returns for {len(frames)} frames")
    return returns - forward(critic, cspec, frames.s)[:, 0]


def demo_advantages_for(learner, batch, dp_frames, dp_returns, cfg):
    """Demo advantages per the guidance config's estimator and normalization."""
    g = cfg.guidance
    if g.demo_adv_estimator == "mc":
        if dp_returns is None:
            raise ValueError("Monte-Carlo demo advantages need the demo frames' returns-to-go")
        adv = mc_advantage(learner.critic, learner.cspec, dp_frames, dp_returns)
        ref = None if g.demo_adv_norm == "raw" else mc_advantage(
            learner.critic, learner.cspec, batch.frames, batch.ret)
    else:
        adv = demo_advantage(learner.critic, learner.cspec, dp_frames, cfg.gamma)
        ref = None if g.demo_adv_norm == "raw" else demo_advantage(
            learner.critic, learner.cspec, batch.frames, cfg.gamma)
    return adv if ref is None else standardize_against(adv, ref)


def demo_gradient(params, pspec, dp_frames, demo_adv, weight=1.0):
    """``weight / |D_p| * sum_n A_n * grad log p(a_n | s_n)``."""
    scale = weight / len(dp_frames)
    return weighted_log_prob_grad(params, pspec, dp_frames.s, dp_frames.a,
                                  np.asarray(demo_adv, dtype=np.float64) * scale)


def demo_loss(params, pspec, dp_frames, demo_adv, weight=1.0):
    if len(dp_frames) == 0:
        return 0.0
    logp = log_prob_batch(params, pspec, dp_frames.s, dp_frames.a)
    return float(-weight * np.mean(demo_adv * logp))


def merged_policy_gradient(params, pspec, batch, dp_frames, demo_adv, clip_ratio=0.2,
                           weight=1.0, logp=None):
    """Ascent direction over exploration plus selected demonstrations.

    Returns ``(grad, ppo_loss, logp)``; the demo term is skipped entirely when
    ``dp_frames`` is empty so the result equals ``ppo_gradient`` exactly.
    """
    grad, loss, logp = ppo_gradient(params, pspec, batch, clip_ratio, logp)
    if dp_frames is not None and len(dp_frames):
        if len(demo_adv) != len(dp_frames):
            raise ShapeError(f"{len(demo_adv)} demo advantages for {len(dp_frames)} frames")
        grad = grad + demo_gradient(params, pspec, dp_frames, demo_adv, weight)
    if not np.all(np.isfinite(grad)):
        bad = np.flatnonzero(~np.isfinite(grad))
        raise NonFiniteError(
            f"merged policy gradient has {len(bad)} non-finite entries (first {bad[:5].tolist()}); "
            f"|D_p| = {0 if dp_frames is None else len(dp_frames)}, "
            f"max |adv| = {np.max(np.abs(batch.adv)):.3g}"
        )
    return grad, loss, logp


def approx_kl(logp_old, logp_new):
    """Sample estimate of KL(old || new) as ``mean((ratio - 1) - log ratio)``.

    Unlike ``mean(logp_old - logp_new)`` every term is non-negative, so any
    change of the policy on the batch registers as positive divergence.
    """
    d = np.asarray(logp_new) - np.asarray(logp_old)
    return float(np.mean(np.expm1(d) - d))


@dataclass
class Learner:
    """Mutable training state: both networks and their optimizer moments."""

    pspec: object
    policy: np.ndarray
    cspec: object
    critic: np.ndarray
    pi_opt: OptimizerState = None
    vf_opt: OptimizerState = None

    def __post_init__(self):
        if self.pi_opt is None:
            self.pi_opt = OptimizerState.zeros(len(self.policy))
        if self.vf_opt is None:
            self.vf_opt = OptimizerState.zeros(len(self.critic))


def update(learner, batch, dp_frames, cfg, dp_returns=None):
    """One PPO round on ``batch`` with demonstration guidance from ``dp_frames``.

    Up to ``cfg.update_iters`` policy steps, stopping once the approximate KL
    to the collection policy exceeds ``1.5 * target_kl``, then the same
    number of critic regression steps on the returns. Mutates ``learner``.
    """
    fr = batch.frames
    weight = cfg.guidance.weight
    has_demo = dp_frames is not None and len(dp_frames) > 0
    demo_adv = None
    if has_demo:
        demo_adv = demo_advantages_for(learner, batch, dp_frames, dp_returns, cfg)

    pi_loss = None
    kl = 0.0
    kl_history = []
    stop_iter = cfg.update_iters
    for i in range(cfg.update_iters):
        logp = log_prob_batch(learner.policy, learner.pspec, fr.s, fr.a)
        kl = approx_kl(fr.logp, logp)
        kl_history.append(kl)
        # iteration 0 evaluates the collection policy itself, so it never stops
        if i > 0 and kl > 1.5 * cfg.target_kl:
            stop_iter = i
            break
        grad, loss, _ = merged_policy_gradient(
            learner.policy, learner.pspec, batch, dp_frames if has_demo else None, demo_adv,
            cfg.clip_ratio, weight, logp=logp,
        )
        if pi_loss is None:
            pi_loss = loss + (demo_loss(learner.policy, learner.pspec, dp_frames, demo_adv, weight)
                              if has_demo else 0.0)
        learner.policy, learner.pi_opt = adam_step(learner.policy, -grad, learner.pi_opt, cfg.pi_lr)

    vf_loss = None
    n = len(fr)
    for _ in range(cfg.update_iters):
        v = forward(learner.critic, learner.cspec, fr.s)[:, 0]
        diff = v - batch.ret
        if vf_loss is None:
            vf_loss = float(np.mean(diff * diff))
        grad = backward(learner.critic, learner.cspec, fr.s, (2.0 / n) * diff[:, None])
        learner.critic, learner.vf_opt = adam_step(learner.critic, grad, learner.vf_opt, cfg.vf_lr)

    return UpdateStats(
        pi_loss=float(pi_loss),
        vf_loss=vf_loss,
        approx_kl=kl,
        demo_frames_used=len(dp_frames) if has_demo else 0,
        stop_iter=stop_iter,
        kl_history=kl_history,
    )
