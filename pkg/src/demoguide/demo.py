"""Demonstration datasets: recording from a trained policy, JSONL persistence
and validation.

File layout: the first line is ``{"meta": {...}}``; every following line is
one frame ``{"s": [...], "s_next": [...], "r": float, "a": [...], "done": bool}``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .approximator import policy_output, sample_action
from .errors import DemoFormatError, ShapeError
from . import rollout
from .rollout import Frames, run_episode_steps

_FRAME_KEYS = ("s", "s_next", "r", "a", "done")


@dataclass
class DemoDataset:
    frames: Frames
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.frames)

    def __eq__(self, other):
        if not isinstance(other, DemoDataset):
            return NotImplemented
        return self.meta == other.meta and self.frames.equals(other.frames)


def checkpoint_id(checkpoint):
    return hashlib.sha256(checkpoint.to_json().encode()).hexdigest()[:16]


def record(env_spec, checkpoint, episodes, deterministic=True, rng=None):
    """Replay ``checkpoint``'s policy for ``episodes`` full episodes.

    Deterministic recording acts with the policy mean. Stored actions are the
    ones the environment executed, i.e. clipped to the action box.
    """
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    pspec, params = checkpoint.policy_spec, checkpoint.policy
    if pspec.obs_dim != env_spec.obs_dim or pspec.act_dim != env_spec.act_dim:
        raise ShapeError(
            f"checkpoint policy dims ({pspec.obs_dim}, {pspec.act_dim}) do not match "
            f"{env_spec.name} ({env_spec.obs_dim}, {env_spec.act_dim})"
        )
    if rng is None:
        rng = np.random.default_rng(0)

    def act(obs):
        out = policy_output(params, pspec, obs)
        a = out.mean if deterministic else sample_action(out, rng)
        return np.clip(a, env_spec.act_low, env_spec.act_high), None

    parts = []
    returns = []
    for _ in range(episodes):
        frames, _ = run_episode_steps(env_spec, act, rng, env_spec.horizon)
        parts.append(frames)
        returns.append(float(frames.r.sum()))
    frames = Frames.concat(parts)
    meta = {
        "env": env_spec.name,
        "checkpoint_id": checkpoint_id(checkpoint),
        "episodes": episodes,
        "mean_episode_reward": float(np.mean(returns)),
        "deterministic": bool(deterministic),
    }
    return DemoDataset(frames, meta)


def episode_returns(dataset):
    """Per-episode reward sums, splitting the frame stream at done flags."""
    ends = np.flatnonzero(dataset.frames.done)
    out = []
    start = 0
    for e in ends:
        out.append(float(dataset.frames.r[start:e + 1].sum()))
        start = e + 1
    return out


def returns_to_go(dataset, gamma):
    """Discounted return from every frame to the end of its recorded episode."""
    return rollout.returns_to_go(dataset.frames.r, dataset.frames.done, 0.0, gamma)


def save(dataset, path):
    if len(dataset) == 0:
        raise DemoFormatError("refusing to save a demonstration dataset with no frames")
    fr = dataset.frames
    meta = dict(dataset.meta, n_frames=len(fr))
    with open(path, "w") as f:
        f.write(json.dumps({"meta": meta}) + "\n")
        for i in range(len(fr)):
            row = {
                "s": fr.s[i].tolist(),
                "s_next": fr.s_next[i].tolist(),
                "r": float(fr.r[i]),
                "a": fr.a[i].tolist(),
                "done": bool(fr.done[i]),
            }
            f.write(json.dumps(row) + "\n")


def load(path):
    with open(path) as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DemoFormatError(f"{path}: empty file")
    try:
        head = json.loads(lines[0])
        meta = head["meta"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DemoFormatError(f"{path}: line 1: bad meta record ({exc})") from None
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            row = json.loads(line)
            rows.append(tuple(row[k] for k in _FRAME_KEYS))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DemoFormatError(f"{path}: line {lineno}: malformed frame ({exc})") from None
    expected = meta.pop("n_frames", None)
    if expected is not None and expected != len(rows):
        raise DemoFormatError(
            f"{path}: line {len(lines) + 1}: expected {expected} frames, found {len(rows)} "
            "(file truncated?)"
        )
    if not rows:
        raise DemoFormatError(f"{path}: no frames")
    s, s_next, r, a, done = zip(*rows)
    try:
        frames = Frames(np.array(s, dtype=np.float64), np.array(s_next, dtype=np.float64),
                        np.array(r, dtype=np.float64), np.array(a, dtype=np.float64),
                        np.array(done, dtype=bool))
    except ValueError as exc:
        raise DemoFormatError(f"{path}: ragged frame vectors ({exc})") from None
    return DemoDataset(frames, meta)


@dataclass
class ValidationReport:
    passed: bool
    n_frames: int
    n_episodes: int
    failures: list

    def summary(self):
        status = "pass" if self.passed else "FAIL"
        return f"{status}: {self.n_frames} frames, {self.n_episodes} episodes, {len(self.failures)} problems"


def validate(dataset, env_spec):
    """Check dimensions, finiteness and done-flag consistency. Never raises."""
    fr = dataset.frames
    failures = []
    n = len(fr)
    if n == 0:
        failures.append((None, "dataset has no frames"))
    if fr.s.shape[1] != env_spec.obs_dim or fr.s_next.shape[1] != env_spec.obs_dim:
        failures.append((None, f"observation dim {fr.s.shape[1]} != {env_spec.obs_dim}"))
    if fr.a.shape[1] != env_spec.act_dim:
        failures.append((None, f"action dim {fr.a.shape[1]} != {env_spec.act_dim}"))
    for name, col in (("s", fr.s), ("s_next", fr.s_next), ("a", fr.a), ("r", fr.r)):
        bad = ~np.isfinite(col)
        if bad.ndim > 1:
            bad = bad.any(axis=1)
        failures.extend((int(i), f"non-finite {name}") for i in np.flatnonzero(bad))
    if n and not fr.done[-1]:
        failures.append((n - 1, "last frame does not end an episode"))
    if fr.s.shape == fr.s_next.shape and n > 1:
        cont = ~fr.done[:-1]
        broken = cont & ~np.all(fr.s_next[:-1] == fr.s[1:], axis=1)
        failures.extend((int(i), "s_next differs from next frame's s inside an episode")
                        for i in np.flatnonzero(broken))
    n_episodes = int(fr.done.sum())
    declared = dataset.meta.get("episodes")
    if declared is not None and declared != n_episodes:
        failures.append((None, f"meta declares {declared} episodes, done flags give {n_episodes}"))
    return ValidationReport(not failures, n, n_episodes, failures)

