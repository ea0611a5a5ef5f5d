"""Planar point-mass reaching tasks.

``point_reach`` rewards closeness to a random target; ``obstacle_reach`` adds
a disc halfway to the target that costs an extra penalty while the mass is
inside it. Both are pure transition functions over immutable states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NonFiniteError, ShapeError


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int = 6
    act_dim: int = 2
    horizon: int = 100
    dt: float = 0.1
    damping: float = 0.9
    success_radius: float = 0.05
    target_min: float = 0.5
    target_max: float = 1.5
    obstacle_radius: float = 0.2
    obstacle_penalty: float = 1.0
    act_low: float = -1.0
    act_high: float = 1.0

    @property
    def has_obstacle(self):
        return self.name == "obstacle_reach"


ENV_NAMES = ("point_reach", "obstacle_reach")


def make_env(name):
    if name not in ENV_NAMES:
        raise ValueError(f"unknown environment {name!r}; choose from {ENV_NAMES}")
    return EnvSpec(name)


@dataclass(frozen=True)
class Obstacle:
    center: tuple
    radius: float


@dataclass(frozen=True)
class EnvState:
    pos: tuple
    vel: tuple
    target: tuple
    obstacle: Optional[Obstacle] = None
    t: int = 0


def observation(state):
    px, py = state.pos
    return np.array(
        [px, py, state.vel[0], state.vel[1], state.target[0] - px, state.target[1] - py]
    )


def reset(spec, seed):
    rng = np.random.default_rng(seed)
    # uniform over the annulus area, not over the radius
    radius = math.sqrt(rng.uniform(spec.target_min**2, spec.target_max**2))
    angle = rng.uniform(0.0, 2.0 * math.pi)
    target = (radius * math.cos(angle), radius * math.sin(angle))
    obstacle = None
    if spec.has_obstacle:
        obstacle = Obstacle((0.5 * target[0], 0.5 * target[1]), spec.obstacle_radius)
    state = EnvState((0.0, 0.0), (0.0, 0.0), target, obstacle, 0)
    return state, observation(state)


def step(spec, state, action):
    """Advance one step. Returns ``(state, observation, reward, done)``."""
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (spec.act_dim,):
        raise ShapeError(f"action must have shape ({spec.act_dim},), got {action.shape}")
    if not np.all(np.isfinite(action)):
        raise NonFiniteError(f"non-finite action {action.tolist()}")
    ax = min(max(float(action[0]), spec.act_low), spec.act_high)
    ay = min(max(float(action[1]), spec.act_low), spec.act_high)
    vx = spec.damping * state.vel[0] + ax * spec.dt
    vy = spec.damping * state.vel[1] + ay * spec.dt
    px = state.pos[0] + vx * spec.dt
    py = state.pos[1] + vy * spec.dt
    dist = math.hypot(px - state.target[0], py - state.target[1])
    reward = -dist
    obs_ = state.obstacle
    if obs_ is not None and math.hypot(px - obs_.center[0], py - obs_.center[1]) < obs_.radius:
        reward -= spec.obstacle_penalty
    t = state.t + 1
    done = t == spec.horizon or dist < spec.success_radius
    new_state = EnvState((px, py), (vx, vy), state.target, obs_, t)
    return new_state, observation(new_state), reward, done
