"""Shared test utilities: independent oracles and the finite-difference
gradient checker.  Everything here is deliberately straight-line code with
no reuse of the package's own numerics."""

import math

import numpy as np


def brute_force_infonce(zq, zk, labels, w):
    """Straight-line InfoNCE evaluation: explicit sums, plain exp/log."""
    n = len(labels)
    total = 0.0
    for i in range(n):
        pos = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not pos:
            pos = [i]
        neg = [j for j in range(n) if labels[j] != labels[i]]
        num = sum(math.exp(float(zq[i] @ w @ zk[j])) for j in pos)
        den = num + sum(math.exp(float(zq[i] @ w @ zk[j])) for j in neg)
        total += -math.log(num / den)
    return total / n


def lloyd_oracle(points, k, seed, max_iters=50):
    """Independent Lloyd clustering with the declared init and tie rules."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    rng = np.random.default_rng(seed)
    centroids = [points[i].copy() for i in rng.choice(n, size=k, replace=False)]
    labels = None
    for _ in range(max_iters):
        new_labels = []
        for x in points:
            best, best_d = 0, math.inf
            for j in range(k):
                d = float(((x - centroids[j]) ** 2).sum())
                if d < best_d:  # strict: ties keep the lowest index
                    best, best_d = j, d
            new_labels.append(best)
        for j in range(k):
            if j not in new_labels:
                dists = [
                    float(((points[i] - centroids[new_labels[i]]) ** 2).sum())
                    for i in range(n)
                ]
                far = int(np.argmax(dists))
                centroids[j] = points[far].copy()
                new_labels[far] = j
        if labels is not None and new_labels == labels:
            break
        labels = new_labels
        for j in range(k):
            members = [points[i] for i in range(n) if labels[i] == j]
            centroids[j] = np.mean(members, axis=0)
    return labels


def central_difference(f, arr, h=1e-5):
    """Central finite-difference gradient of scalar f wrt every entry of arr."""
    grad = np.zeros_like(arr, dtype=float)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + h
        fp = f()
        flat[j] = orig - h
        fm = f()
        flat[j] = orig
        gflat[j] = (fp - fm) / (2.0 * h)
    return grad


def max_rel_error(analytic, numeric, floor=1e-8):
    """Worst relative disagreement, with an absolute floor for near-zeros."""
    a = np.asarray(analytic).reshape(-1)
    n = np.asarray(numeric).reshape(-1)
    denom = np.maximum(np.abs(a) + np.abs(n), floor)
    err = np.abs(a - n) / denom
    err[np.abs(a - n) < 1e-9] = 0.0
    return float(err.max())


def rollout_random(env, rng, max_steps=None):
    """Roll an episode with uniformly random available actions."""
    res = env.reset(int(rng.integers(1 << 31)))
    results = [res]
    while not res.terminated:
        acts = []
        for i in range(env.n_agents):
            avail = np.flatnonzero(res.available_actions[i])
            acts.append(int(avail[rng.integers(avail.size)]))
        res = env.step(acts)
        results.append(res)
        if max_steps and len(results) > max_steps:
            break
    return results
