"""Pick demonstration frames that resemble the current exploration batch.

Observations and actions of the exploration batch are z-scored and clustered
separately with k-means. A demonstration frame is kept when its observation
and its action both land close enough to some centroid of the respective
model; distances are measured in the normalized space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError

STD_FLOOR = 1e-8


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), np.ones(dim))

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}


def fit_norm(points):
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) < 2:
        raise ShapeError(f"need at least 2 points as a (n, d) array, got shape {points.shape}")
    return NormStats(points.mean(axis=0), np.maximum(points.std(axis=0), STD_FLOOR))


def apply_norm(stats, points):
    points = np.asarray(points, dtype=np.float64)
    if points.shape[-1] != stats.mean.shape[0]:
        raise ShapeError(f"point dim {points.shape[-1]} != stats dim {stats.mean.shape[0]}")
    return (points - stats.mean) / stats.std


@dataclass
class ClusterModel:
    centroids: np.ndarray
    norm: NormStats
    inertia: float
    # median distance of the fitted points to their own centroid
    median_distance: float = 0.0
    n_points: int = 0
    n_iter: int = 0
    inertia_history: list = field(default_factory=list)
    labels: np.ndarray = None

    @property
    def k(self):
        return len(self.centroids)

    @property
    def dim(self):
        return self.centroids.shape[1]

    def to_dict(self):
        return {
            "k": self.k,
            "centroids": self.centroids.tolist(),
            "norm": self.norm.to_dict(),
            "inertia": self.inertia,
            "median_distance": self.median_distance,
            "n_points": self.n_points,
            "n_iter": self.n_iter,
        }


def _kmeans_pp(points, k, rng):
    n = len(points)
    centers = [int(rng.integers(n))]
    d2 = np.sum((points - points[centers[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centers.append(idx)
        d2 = np.minimum(d2, np.sum((points - points[idx]) ** 2, axis=1))
    return points[centers].copy()


def _update_centroids(points, labels, dist2, k, centroids):
    sums, counts = kernels.centroid_sums(points, labels, k)
    new = centroids.copy()
    filled = counts > 0
    new[filled] = sums[filled] / counts[filled, None]
    empty = np.flatnonzero(~filled)
    if len(empty):
        # reseed each empty cluster onto the point currently worst served
        d2 = dist2.copy()
        for j in empty:
            far = int(np.argmax(d2))
            new[j] = points[far]
            d2[far] = -1.0
    return new


def kmeans(points, k, max_iter=100, rng=None, norm=None):
    """Lloyd's algorithm from k-means++ seeds on already-normalized ``points``.

    Stops when assignments no longer change or after ``max_iter`` updates.
    ``inertia_history`` holds the objective after every assignment step.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ShapeError(f"points must be a (n, d) array, got shape {points.shape}")
    n = len(points)
    if not 1 <= k <= n:
        raise ShapeError(f"need 1 <= k <= number of points ({n}), got k={k}")
    if rng is None:
        rng = np.random.default_rng(0)
    centroids = _kmeans_pp(points, k, rng)
    labels, dist2 = kernels.assign_nearest(points, centroids)
    history = [float(dist2.sum())]
    it = 0
    for it in range(1, max_iter + 1):
        centroids = _update_centroids(points, labels, dist2, k, centroids)
        new_labels, dist2 = kernels.assign_nearest(points, centroids)
        history.append(float(dist2.sum()))
        stable = np.array_equal(new_labels, labels)
        labels = new_labels
        if stable:
            break
    return ClusterModel(
        centroids=centroids,
        norm=norm if norm is not None else NormStats.identity(points.shape[1]),
        inertia=history[-1],
        median_distance=float(np.median(np.sqrt(dist2))),
        n_points=n,
        n_iter=it,
        inertia_history=history,
        labels=labels,
    )


def fit_cluster_model(raw_points, k, rng, max_iter=100):
    """Normalize ``raw_points`` and cluster them; the model remembers the normalization."""
    stats = fit_norm(raw_points)
    return kmeans(apply_norm(stats, raw_points), k, max_iter=max_iter, rng=rng, norm=stats)


def nearest_batch(model, points):
    """Nearest-centroid index and Euclidean distance for raw points, in normalized space."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != model.dim:
        raise ShapeError(f"points must be (n, {model.dim}), got shape {points.shape}")
    labels, d2 = kernels.assign_nearest(apply_norm(model.norm, points), model.centroids)
    return labels, np.sqrt(d2)


def nearest(model, point):
    """``(index, distance)`` of the centroid closest to ``point``; ties go to the lower index."""
    point = np.asarray(point, dtype=np.float64)
    if point.shape != (model.dim,):
        raise ShapeError(f"point must have shape ({model.dim},), got {point.shape}")
    labels, dist = nearest_batch(model, point[None, :])
    return int(labels[0]), float(dist[0])


THRESHOLD_MODES = ("adaptive_median", "absolute")
DEMO_ADV_NORMS = ("raw", "explore")
DEMO_ADV_ESTIMATORS = ("td", "mc")


@dataclass
class GuidanceConfig:
    k_obs: int = 16
    k_act: int = 16
    threshold_mode: str = "adaptive_median"
    H_obs: float = 1.0
    H_act: float = 1.0
    demo_ratio: float = 0.2
    cutoff_epoch: int = 0
    weight: float = 1.0
    kmeans_iters: int = 100
    # "td": one-step TD under the critic; "mc": demo return-to-go minus V(s)
    demo_adv_estimator: str = "mc"
    # "explore": standardize against the same estimator on the exploration batch
    demo_adv_norm: str = "explore"

    def validate(self, epochs=None):
        if self.k_obs < 1 or self.k_act < 1:
            raise ConfigError("cluster counts must be positive")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ConfigError(f"threshold_mode must be one of {THRESHOLD_MODES}")
        if not (self.H_obs >= 0 and self.H_act >= 0):
            raise ConfigError("thresholds must be non-negative")
        if not 0 < self.demo_ratio <= 1:
            raise ConfigError(f"demo_ratio must lie in (0, 1], got {self.demo_ratio}")
        if self.demo_adv_estimator not in DEMO_ADV_ESTIMATORS:
            raise ConfigError(f"demo_adv_estimator must be one of {DEMO_ADV_ESTIMATORS}")
        if self.demo_adv_norm not in DEMO_ADV_NORMS:
            raise ConfigError(f"demo_adv_norm must be one of {DEMO_ADV_NORMS}")
        if self.cutoff_epoch < 0 or (epochs is not None and self.cutoff_epoch > epochs):
            raise ConfigError(f"cutoff_epoch must lie in [0, epochs], got {self.cutoff_epoch}")
        return self


def thresholds(obs_model, act_model, cfg):
    if cfg.threshold_mode == "adaptive_median":
        return obs_model.median_distance, act_model.median_distance
    return cfg.H_obs, cfg.H_act


def similar_mask(demo_frames, obs_model, act_model, cfg):
    """Boolean mask over demo frames passing both distance thresholds (no subsampling)."""
    if demo_frames.obs_dim != obs_model.dim or demo_frames.act_dim != act_model.dim:
        raise ShapeError(
            f"demo dims ({demo_frames.obs_dim}, {demo_frames.act_dim}) do not match cluster "
            f"models ({obs_model.dim}, {act_model.dim})"
        )
    h_obs, h_act = thresholds(obs_model, act_model, cfg)
    _, d_obs = nearest_batch(obs_model, demo_frames.s)
    _, d_act = nearest_batch(act_model, demo_frames.a)
    return (d_obs <= h_obs) & (d_act <= h_act)


@dataclass
class Selection:
    frames: object
    indices: np.ndarray
    n_passing: int
    cap: int


def select_similar(demo, obs_model, act_model, cfg, rng, n_explore=None):
    """Build the guided subset of demonstration frames.

    ``demo`` is a ``DemoDataset`` or ``Frames``. When more frames pass than
    ``demo_ratio * |E|`` allows, a uniform subset of that size is kept in
    original order. ``|E|`` defaults to the number of points the observation
    model was fitted on.
    """
    frames = getattr(demo, "frames", demo)
    mask = similar_mask(frames, obs_model, act_model, cfg)
    passing = np.flatnonzero(mask)
    n_explore = obs_model.n_points if n_explore is None else n_explore
    cap = int(math.floor(cfg.demo_ratio * n_explore + 1e-9))
    if len(passing) > cap:
        passing = np.sort(rng.choice(passing, size=cap, replace=False))
    return Selection(frames.subset(passing), passing, int(mask.sum()), cap)
