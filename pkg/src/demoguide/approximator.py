"""Small numpy MLPs with hand-written backprop, a diagonal Gaussian policy head
and an Adam optimizer.

Parameters live in flat float64 vectors. Each layer stores its weight matrix
as ``(fan_in, fan_out)`` in row-major order followed by its bias, so a layer
computes ``h @ W + b``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import NonFiniteError, ShapeError

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_STD_INIT = -0.5
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

_ACTIVATIONS = ("tanh", "identity")


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden: tuple = ()
    output_dim: int = 1
    activation: str = "tanh"
    # the output layer is linear unless asked otherwise
    output_activation: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        dims = (self.input_dim, *self.hidden, self.output_dim)
        if any(int(d) < 1 for d in dims):
            raise ShapeError(f"all MLP dimensions must be >= 1, got {dims}")
        if self.activation != "tanh":
            raise ValueError(f"unsupported hidden activation {self.activation!r}")
        if self.output_activation not in _ACTIVATIONS:
            raise ValueError(f"unsupported output activation {self.output_activation!r}")

    @property
    def layer_dims(self):
        dims = (self.input_dim, *self.hidden, self.output_dim)
        return list(zip(dims[:-1], dims[1:]))

    @property
    def n_params(self):
        return sum((fan_in + 1) * fan_out for fan_in, fan_out in self.layer_dims)

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "output_dim": self.output_dim,
            "activation": self.activation,
            "output_activation": self.output_activation,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            input_dim=int(d["input_dim"]),
            hidden=tuple(d["hidden"]),
            output_dim=int(d["output_dim"]),
            activation=d.get("activation", "tanh"),
            output_activation=d.get("output_activation", "identity"),
        )


@lru_cache(maxsize=None)
def _offsets(spec):
    out = []
    pos = 0
    for fan_in, fan_out in spec.layer_dims:
        w_end = pos + fan_in * fan_out
        out.append((pos, w_end, w_end + fan_out, fan_in, fan_out))
        pos = w_end + fan_out
    return tuple(out)


def _layers(params, spec):
    return [
        (params[a:b].reshape(fan_in, fan_out), params[b:c])
        for a, b, c, fan_in, fan_out in _offsets(spec)
    ]


def _check_params(params, n):
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.shape[0] != n:
        raise ShapeError(f"expected a parameter vector of length {n}, got shape {params.shape}")
    return params


def _as_batch(x, dim, what="input"):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ShapeError(f"{what} must have trailing dimension {dim}, got shape {x.shape}")
    return x, single


def init_params(spec, rng, last_layer_scale=1.0):
    """Glorot-uniform weights, zero biases; the final layer is scaled by ``last_layer_scale``."""
    params = np.zeros(spec.n_params)
    layers = _layers(params, spec)
    for i, (w, _) in enumerate(layers):
        fan_in, fan_out = w.shape
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
        if i == len(layers) - 1:
            w *= last_layer_scale
    return params


def _forward_trace(params, spec, x):
    acts = [x]
    layers = _layers(params, spec)
    h = x
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        last = i == len(layers) - 1
        if not last or spec.output_activation == "tanh":
            z = np.tanh(z)
        acts.append(z)
        h = z
    return acts


def forward(params, spec, x):
    """Evaluate the network on one input vector or a ``(batch, input_dim)`` array."""
    params = _check_params(params, spec.n_params)
    xb, single = _as_batch(x, spec.input_dim)
    out = _forward_trace(params, spec, xb)[-1]
    return out[0] if single else out


def backward(params, spec, x, output_grad):
    """Gradient of ``sum(forward(x) * output_grad)`` with respect to the parameters.

    Batched inputs contribute the sum of their per-row gradients.
    """
    params = _check_params(params, spec.n_params)
    xb, _ = _as_batch(x, spec.input_dim)
    gb, _ = _as_batch(output_grad, spec.output_dim, "output_grad")
    if gb.shape[0] != xb.shape[0]:
        raise ShapeError(f"batch sizes differ: input {xb.shape[0]}, output_grad {gb.shape[0]}")
    acts = _forward_trace(params, spec, xb)
    grad = np.zeros_like(params)
    glayers = _layers(grad, spec)
    layers = _layers(params, spec)
    delta = gb
    for i in range(len(layers) - 1, -1, -1):
        last = i == len(layers) - 1
        if not last or spec.output_activation == "tanh":
            delta = delta * (1.0 - acts[i + 1] ** 2)
        gw, gbias = glayers[i]
        gw[...] = acts[i].T @ delta
        gbias[...] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ layers[i][0].T
    return grad


# -- Gaussian policy ---------------------------------------------------------


@dataclass(frozen=True)
class PolicySpec:
    """An MLP producing the action mean plus a state-independent log-std vector.

    The flat policy vector is ``[mlp params..., log_std...]``.
    """

    body: MlpSpec

    @property
    def act_dim(self):
        return self.body.output_dim

    @property
    def obs_dim(self):
        return self.body.input_dim

    @property
    def n_params(self):
        return self.body.n_params + self.act_dim

    def split(self, params):
        n = self.body.n_params
        return params[:n], params[n:]

    def to_dict(self):
        return {"kind": "gaussian_policy", "body": self.body.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(MlpSpec.from_dict(d["body"]))


@dataclass
class GaussianPolicyOutput:
    mean: np.ndarray
    log_std: np.ndarray


def default_policy_spec(obs_dim, act_dim, hidden=(64, 64)):
    return PolicySpec(MlpSpec(obs_dim, tuple(hidden), act_dim))


def default_critic_spec(obs_dim, hidden=(64, 64)):
    return MlpSpec(obs_dim, tuple(hidden), 1)


def init_policy(pspec, rng):
    body = init_params(pspec.body, rng, last_layer_scale=0.01)
    return np.concatenate([body, np.full(pspec.act_dim, LOG_STD_INIT)])


def policy_output(params, pspec, obs):
    params = _check_params(params, pspec.n_params)
    body, log_std = pspec.split(params)
    mean = forward(body, pspec.body, obs)
    return GaussianPolicyOutput(mean, np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX))


def log_prob(out, action):
    """Diagonal Gaussian log-density; a batch of actions gives one value per row."""
    action = np.asarray(action, dtype=np.float64)
    mean = np.asarray(out.mean, dtype=np.float64)
    if action.shape[-1] != mean.shape[-1]:
        raise ShapeError(f"action dimension {action.shape[-1]} != mean dimension {mean.shape[-1]}")
    z = (action - mean) * np.exp(-out.log_std)
    return np.sum(-0.5 * z * z - out.log_std - _HALF_LOG_2PI, axis=-1)


def sample_action(out, rng):
    return out.mean + np.exp(out.log_std) * rng.standard_normal(np.shape(out.mean))


def weighted_log_prob_grad(params, pspec, states, actions, weights):
    """``sum_i weights[i] * grad log p(actions[i] | states[i])`` over the policy vector."""
    params = _check_params(params, pspec.n_params)
    sb, _ = _as_batch(states, pspec.obs_dim, "state")
    ab, _ = _as_batch(actions, pspec.act_dim, "action")
    w = np.atleast_1d(np.asarray(weights, dtype=np.float64))
    if not (sb.shape[0] == ab.shape[0] == w.shape[0]):
        raise ShapeError(
            f"batch sizes differ: states {sb.shape[0]}, actions {ab.shape[0]}, weights {w.shape[0]}"
        )
    body, raw_log_std = pspec.split(params)
    log_std = np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX)
    mean = forward(body, pspec.body, sb)
    inv_var = np.exp(-2.0 * log_std)
    diff = ab - mean
    mean_cot = w[:, None] * diff * inv_var
    grad = np.empty_like(params)
    n = pspec.body.n_params
    grad[:n] = backward(body, pspec.body, sb, mean_cot)
    g_log_std = (w[:, None] * (diff * diff * inv_var - 1.0)).sum(axis=0)
    # clamp has zero slope outside its range
    inside = (raw_log_std >= LOG_STD_MIN) & (raw_log_std <= LOG_STD_MAX)
    grad[n:] = np.where(inside, g_log_std, 0.0)
    return grad


def log_prob_grad(params, pspec, state, action):
    """Gradient of ``log p(action | state)`` for a single state-action pair."""
    return weighted_log_prob_grad(params, pspec, state, action, [1.0])


def log_prob_batch(params, pspec, states, actions):
    return log_prob(policy_output(params, pspec, states), actions)


# -- Adam ----------------------------------------------------------------------


@dataclass
class OptimizerState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam descent step on ``grads``; returns ``(new_params, new_state)``."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.shape or state.first_moment.shape != params.shape:
        raise ShapeError(
            f"length mismatch: params {params.shape}, grads {grads.shape}, "
            f"state {state.first_moment.shape}"
        )
    # lr == 0 is allowed: it freezes the parameters while still advancing the moments
    if not lr >= 0:
        raise ValueError(f"learning rate must be >= 0, got {lr}")
    if not np.all(np.isfinite(grads)):
        bad = np.flatnonzero(~np.isfinite(grads))
        raise NonFiniteError(f"non-finite gradient entries at {bad[:10].tolist()}")
    t = state.step_count + 1
    m = beta1 * state.first_moment + (1.0 - beta1) * grads
    v = beta2 * state.second_moment + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, OptimizerState(m, v, t)


# -- checkpoints ---------------------------------------------------------------


def params_to_dict(spec, values):
    return {"spec": spec.to_dict(), "values": [float(v) for v in values]}


def params_from_dict(d):
    raw = d["spec"]
    spec = PolicySpec.from_dict(raw) if raw.get("kind") == "gaussian_policy" else MlpSpec.from_dict(raw)
    values = np.array(d["values"], dtype=np.float64)
    _check_params(values, spec.n_params)
    return spec, values


def save_params(path, spec, values):
    with open(path, "w") as f:
        json.dump(params_to_dict(spec, values), f)


def load_params(path):
    with open(path) as f:
        return params_from_dict(json.load(f))


@dataclass
class AgentCheckpoint:
    policy_spec: PolicySpec
    policy: np.ndarray
    critic_spec: MlpSpec
    critic: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(
            {
                "policy": params_to_dict(self.policy_spec, self.policy),
                "critic": params_to_dict(self.critic_spec, self.critic),
                "meta": self.meta,
            },
            sort_keys=True,
        )

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.to_json())

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        pspec, pvals = params_from_dict(d["policy"])
        cspec, cvals = params_from_dict(d["critic"])
        return cls(pspec, pvals, cspec, cvals, d.get("meta", {}))

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_json(f.read())
