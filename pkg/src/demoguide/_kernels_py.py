"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def gae(rewards, values, last_value, dones, gamma, lam):
    n = len(rewards)
    rewards, values, dones = rewards.tolist(), values.tolist(), dones.tolist()
    adv = [0.0] * n
    next_value = float(last_value)
    running = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
        next_value = values[t]
    return np.array(adv, dtype=np.float64)


def discounted_returns(rewards, dones, last_value, gamma):
    n = len(rewards)
    rewards, dones = rewards.tolist(), dones.tolist()
    ret = [0.0] * n
    running = float(last_value)
    for t in range(n - 1, -1, -1):
        running = rewards[t] + gamma * running * (1.0 - dones[t])
        ret[t] = running
    return np.array(ret, dtype=np.float64)


def assign_nearest(points, centroids):
    diff = points[:, None, :] - centroids[None, :, :]
    d2 = np.einsum("nkd,nkd->nk", diff, diff)
    labels = np.argmin(d2, axis=1).astype(np.int64)
    return labels, d2[np.arange(len(points)), labels]


def centroid_sums(points, labels, k):
    sums = np.zeros((k, points.shape[1]), dtype=np.float64)
    np.add.at(sums, labels, points)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    return sums, counts
