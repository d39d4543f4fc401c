"""k-means (Lloyd + k-means++), Silhouette and Davies-Bouldin."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass
class Clustering:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    ids: list[str]
    objective: float
    history: list[float] = field(default_factory=list)

    @property
    def assignment(self) -> dict[str, int]:
        return {i: int(c) for i, c in zip(self.ids, self.labels)}

    def members(self, j: int) -> list[str]:
        return [i for i, c in zip(self.ids, self.labels) if c == j]

    def to_dict(self) -> dict:
        return {"k": self.k, "centroids": self.centroids.tolist(),
                "assignment": self.assignment, "objective": self.objective}


def _sqdist(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def kmeans_objective(x: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    return float(((x - centroids[labels]) ** 2).sum())


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    for _ in range(1, k):
        d = _sqdist(x, np.array(centers)).min(axis=1)
        total = d.sum()
        if total <= 0:
            centers.append(x[rng.integers(len(x))])
        else:
            centers.append(x[rng.choice(len(x), p=d / total)])
    return np.array(centers, dtype=float)


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int):
    k = len(centroids)
    labels = None
    history = []
    for _ in range(max_iter):
        new = np.argmin(_sqdist(x, centroids), axis=1)
        # empty-cluster repair: hand the farthest point to the empty cluster
        for j in range(k):
            if not np.any(new == j):
                own = ((x - centroids[new]) ** 2).sum(axis=1)
                counts = np.bincount(new, minlength=k)
                own[counts[new] <= 1] = -1.0
                far = int(np.argmax(own))
                new[far] = j
        centroids = np.array([x[new == j].mean(axis=0) for j in range(k)])
        obj = kmeans_objective(x, new, centroids)
        if history and obj > history[-1] + 1e-9 * max(1.0, abs(history[-1])):
            raise AssertionError("k-means objective increased")
        history.append(obj)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
    return new, centroids, history


def kmeans_fit(points: Sequence[tuple[str, np.ndarray]], k: int, rng_seed: int = 0,
               max_iter: int = 300, restarts: int = 10) -> Clustering:
    """Best-of-``restarts`` k-means++/Lloyd fit minimizing within-cluster squared distance."""
    if k < 1 or len(points) < k:
        raise ValueError(f"need at least k={k} points, got {len(points)}")
    ids = [i for i, _ in points]
    x = np.array([np.asarray(v, dtype=float) for _, v in points])
    seeds = np.random.SeedSequence(rng_seed).spawn(restarts)
    best = None
    for s in seeds:
        rng = np.random.default_rng(s)
        labels, centroids, hist = _lloyd(x, _kmeanspp(x, k, rng), max_iter)
        if best is None or hist[-1] < best.objective:
            best = Clustering(k, centroids, labels, ids, hist[-1], hist)
    return best


def _check(x, labels, k):
    if k < 2:
        raise ValueError("metric requires k >= 2")
    if len(np.unique(labels)) != k:
        raise ValueError("every cluster must have at least one member")


def silhouette(points: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette with Euclidean distances; singleton members score 0."""
    x = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    k = int(labels.max()) + 1
    _check(x, labels, k)
    d = np.sqrt(_sqdist(x, x))
    s = np.zeros(len(x))
    for i in range(len(x)):
        own = labels == labels[i]
        n_own = own.sum()
        if n_own == 1:
            continue
        a = d[i, own].sum() / (n_own - 1)
        b = min(d[i, labels == j].mean() for j in range(k) if j != labels[i])
        m = max(a, b)
        s[i] = 0.0 if m == 0 else (b - a) / m
    return float(s.mean())


def davies_bouldin(points: np.ndarray, labels: np.ndarray) -> float:
    x = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    k = int(labels.max()) + 1
    _check(x, labels, k)
    mu = np.array([x[labels == j].mean(axis=0) for j in range(k)])
    s = np.array([np.sqrt(((x[labels == j] - mu[j]) ** 2).sum(axis=1)).mean() for j in range(k)])
    dmu = np.sqrt(_sqdist(mu, mu))
    total = 0.0
    for i in range(k):
        worst = 0.0
        for j in range(k):
            if i == j:
                continue
            if dmu[i, j] == 0:
                raise ZeroDivisionError(f"centroids {i} and {j} coincide")
            worst = max(worst, (s[i] + s[j]) / dmu[i, j])
        total += worst
    return total / k


def sweep_k(points: Sequence[tuple[str, np.ndarray]], k_range: Sequence[int],
            rng_seed: int = 0) -> list[tuple[int, float, float]]:
    """(k, silhouette, DBI) for each k, each from its own seeded fit."""
    rows = []
    x = np.array([v for _, v in points], dtype=float)
    for k in k_range:
        if not 2 <= k <= len(points):
            raise ValueError(f"k={k} outside [2, {len(points)}]")
        c = kmeans_fit(points, k, rng_seed=rng_seed + k)
        rows.append((k, silhouette(x, c.labels), davies_bouldin(x, c.labels)))
    return rows
