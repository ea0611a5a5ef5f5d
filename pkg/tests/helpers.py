"""Small fixtures shared across test modules."""
import numpy as np

from demoguide.approximator import AgentCheckpoint, MlpSpec, PolicySpec, default_critic_spec, init_params


def proportional_checkpoint(gain=3.0, damping=1.0):
    """A linear policy that pushes toward the target and brakes on velocity."""
    pspec = PolicySpec(MlpSpec(6, (), 2))
    w = np.zeros((6, 2))
    w[4, 0] = w[5, 1] = gain
    w[2, 0] = w[3, 1] = -damping
    params = np.concatenate([w.ravel(), np.zeros(2), np.full(2, -1.0)])
    cspec = default_critic_spec(6)
    return AgentCheckpoint(pspec, params, cspec, init_params(cspec, np.random.default_rng(0)), {})
