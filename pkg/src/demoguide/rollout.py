"""On-policy data collection and advantage estimation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import envs, kernels
from .approximator import forward, log_prob, policy_output, sample_action
from .errors import RolloutError, ShapeError


class Frame(NamedTuple):
    s: np.ndarray
    s_next: np.ndarray
    r: float
    a: np.ndarray
    done: bool
    logp: Optional[float] = None


def _rows(x, n):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(n, -1) if n else x.reshape(0, 0)
    return x


@dataclass
class Frames:
    """Column-oriented storage for a sequence of transitions."""

    s: np.ndarray
    s_next: np.ndarray
    r: np.ndarray
    a: np.ndarray
    done: np.ndarray
    logp: Optional[np.ndarray] = None

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.float64)
        self.s = _rows(self.s, len(self.r))
        self.s_next = _rows(self.s_next, len(self.r))
        self.a = _rows(self.a, len(self.r))
        self.done = np.asarray(self.done, dtype=bool)
        if self.logp is not None:
            self.logp = np.asarray(self.logp, dtype=np.float64)
        n = len(self.r)
        lengths = [len(self.s), len(self.s_next), len(self.a), len(self.done)]
        if self.logp is not None:
            lengths.append(len(self.logp))
        if any(m != n for m in lengths):
            raise ShapeError(f"frame columns have inconsistent lengths {[n, *lengths]}")

    def __len__(self):
        return len(self.r)

    @property
    def obs_dim(self):
        return self.s.shape[1]

    @property
    def act_dim(self):
        return self.a.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Frames(
            self.s[idx],
            self.s_next[idx],
            self.r[idx],
            self.a[idx],
            self.done[idx],
            None if self.logp is None else self.logp[idx],
        )

    def frame(self, i):
        return Frame(
            self.s[i],
            self.s_next[i],
            float(self.r[i]),
            self.a[i],
            bool(self.done[i]),
            None if self.logp is None else float(self.logp[i]),
        )

    def __iter__(self):
        return (self.frame(i) for i in range(len(self)))

    @classmethod
    def empty(cls, obs_dim, act_dim, with_logp=False):
        return cls(
            np.zeros((0, obs_dim)),
            np.zeros((0, obs_dim)),
            np.zeros(0),
            np.zeros((0, act_dim)),
            np.zeros(0, dtype=bool),
            np.zeros(0) if with_logp else None,
        )

    @classmethod
    def from_frames(cls, frames, obs_dim=None, act_dim=None):
        frames = list(frames)
        if not frames:
            return cls.empty(obs_dim or 0, act_dim or 0)
        has_logp = all(f.logp is not None for f in frames)
        return cls(
            np.array([f.s for f in frames]),
            np.array([f.s_next for f in frames]),
            np.array([f.r for f in frames]),
            np.array([f.a for f in frames]),
            np.array([f.done for f in frames]),
            np.array([f.logp for f in frames]) if has_logp else None,
        )

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        has_logp = all(p.logp is not None for p in parts)
        return cls(
            np.concatenate([p.s for p in parts]),
            np.concatenate([p.s_next for p in parts]),
            np.concatenate([p.r for p in parts]),
            np.concatenate([p.a for p in parts]),
            np.concatenate([p.done for p in parts]),
            np.concatenate([p.logp for p in parts]) if has_logp else None,
        )

    def equals(self, other):
        if (self.logp is None) != (other.logp is None):
            return False
        pairs = [(self.s, other.s), (self.s_next, other.s_next), (self.r, other.r),
                 (self.a, other.a), (self.done, other.done)]
        if self.logp is not None:
            pairs.append((self.logp, other.logp))
        return all(x.shape == y.shape and np.array_equal(x, y) for x, y in pairs)


@dataclass
class Trajectory:
    frames: Frames
    # critic estimate of V(s_T) when the episode was cut off by the epoch budget
    last_value: float = 0.0
    truncated: bool = False

    @property
    def episode_return(self):
        return float(self.frames.r.sum())


@dataclass
class AdvantageBatch:
    frames: Frames
    adv: np.ndarray
    ret: np.ndarray

    def __post_init__(self):
        if not (len(self.frames) == len(self.adv) == len(self.ret)):
            raise ShapeError("frames, adv and ret must have equal length")


def run_episode_steps(env_spec, act_fn, rng, max_steps, seed=None):
    """Roll out one episode (or ``max_steps`` of it) with ``act_fn(obs) -> (action, logp)``."""
    if seed is None:
        seed = int(rng.integers(0, 2**31 - 1))
    state, obs = envs.reset(env_spec, seed)
    s, s_next, r, a, done, logp = [], [], [], [], [], []
    finished = False
    while len(r) < max_steps:
        action, lp = act_fn(obs)
        state, next_obs, reward, finished = envs.step(env_spec, state, action)
        s.append(obs)
        s_next.append(next_obs)
        r.append(reward)
        a.append(action)
        done.append(finished)
        logp.append(lp)
        obs = next_obs
        if finished:
            break
    has_logp = all(x is not None for x in logp)
    frames = Frames(np.array(s), np.array(s_next), np.array(r), np.array(a), np.array(done),
                    np.array(logp) if has_logp else None)
    return frames, finished


def collect(env_spec, policy, pspec, critic, cspec, steps_per_epoch, rng):
    """Gather exactly ``steps_per_epoch`` on-policy frames as whole episodes.

    The final episode is cut at the budget and bootstrapped with the critic.
    """
    if steps_per_epoch < env_spec.horizon:
        raise ValueError(
            f"steps_per_epoch ({steps_per_epoch}) must be >= horizon ({env_spec.horizon})"
        )
    if pspec.obs_dim != env_spec.obs_dim or pspec.act_dim != env_spec.act_dim:
        raise ShapeError(
            f"policy dims ({pspec.obs_dim}, {pspec.act_dim}) do not fit {env_spec.name} "
            f"({env_spec.obs_dim}, {env_spec.act_dim})"
        )

    def act(obs):
        out = policy_output(policy, pspec, obs)
        if not np.all(np.isfinite(out.mean)):
            raise RolloutError(
                f"policy produced non-finite mean {out.mean.tolist()} for observation {obs.tolist()}; "
                f"max |param| = {np.max(np.abs(policy)):.3g}"
            )
        action = sample_action(out, rng)
        return action, float(log_prob(out, action))

    trajectories = []
    remaining = steps_per_epoch
    while remaining > 0:
        frames, finished = run_episode_steps(env_spec, act, rng, remaining)
        remaining -= len(frames)
        if finished:
            trajectories.append(Trajectory(frames))
        else:
            v = float(forward(critic, cspec, frames.s_next[-1])[0])
            trajectories.append(Trajectory(frames, last_value=v, truncated=True))
    return trajectories


def gae(rewards, values, last_value, dones, gamma, lam):
    """Generalized advantage estimates in one backward pass, reset at episode ends."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if not (len(rewards) == len(values) == len(dones)):
        raise ShapeError(
            f"length mismatch: rewards {len(rewards)}, values {len(values)}, dones {len(dones)}"
        )
    if not (0.0 <= gamma <= 1.0 and 0.0 <= lam <= 1.0):
        raise ValueError(f"gamma and lambda must lie in [0, 1], got {gamma}, {lam}")
    return kernels.gae(rewards, values, last_value, dones, gamma, lam)


def returns_to_go(rewards, dones, last_value, gamma):
    if len(rewards) != len(dones):
        raise ShapeError(f"length mismatch: rewards {len(rewards)}, dones {len(dones)}")
    return kernels.discounted_returns(rewards, dones, last_value, gamma)


def normalize_advantages(adv):
    adv = np.asarray(adv, dtype=np.float64)
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def build_batch(trajectories, critic, cspec, gamma, lam, normalize=True):
    frames = Frames.concat([t.frames for t in trajectories])
    values = forward(critic, cspec, frames.s)[:, 0]
    last_value = trajectories[-1].last_value if trajectories[-1].truncated else 0.0
    adv = gae(frames.r, values, last_value, frames.done, gamma, lam)
    ret = returns_to_go(frames.r, frames.done, last_value, gamma)
    if normalize:
        adv = normalize_advantages(adv)
    return AdvantageBatch(frames, adv, ret)


def completed_returns(trajectories):
    return [t.episode_return for t in trajectories if not t.truncated]
