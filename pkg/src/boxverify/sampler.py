"""Latin hypercube sampling with multidimensional uniformity (LHSMDU).

A pool of ``OVERSAMPLING * n`` uniform points is thinned by repeatedly
dropping the most crowded point, then each coordinate is replaced by a
uniform draw inside the stratum given by its rank. The RNG is numpy's
counter-based Philox generator keyed by the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .vnnlib import Box

__all__ = ["OVERSAMPLING", "Box", "SampleSet", "lhsmdu", "nearest_neighbor_prune", "strata"]

OVERSAMPLING = 5


@dataclass
class SampleSet:
    points: np.ndarray
    seed: int
    outputs: np.ndarray | None = None

    def __len__(self) -> int:
        return self.points.shape[0]


def _row_distances(points: np.ndarray, i: int, alive: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.sum((points - points[i]) ** 2, axis=1))
    d[~alive] = np.inf
    d[i] = np.inf
    return d


def _crowding(d: np.ndarray, k: int) -> float:
    # mean distance to the k nearest live neighbours
    if k == 1:
        return float(d.min())
    return float(np.partition(d, k - 1)[:k].mean())


def nearest_neighbor_prune(points, target: int) -> np.ndarray:
    """Drop points until ``target`` remain, always removing the point whose
    mean distance to its two nearest neighbours is smallest (lowest index on
    ties). Survivors keep their original order."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    m = points.shape[0]
    if not 1 <= target <= m:
        raise ValueError(f"target must be in [1, {m}], got {target}")
    alive = np.ones(m, dtype=bool)
    if target == m:
        return points.copy()

    def neighbours(i: int, k: int):
        d = _row_distances(points, i, alive)
        order = np.argsort(d, kind="stable")[:k]
        return set(order.tolist()), _crowding(d, k)

    k = min(2, m - 1)
    nn: list[set] = [set()] * m
    score = np.full(m, np.inf)
    for i in range(m):
        nn[i], score[i] = neighbours(i, k)

    count = m
    while count > target:
        p = int(np.argmin(score))
        alive[p] = False
        score[p] = np.inf
        count -= 1
        new_k = min(2, count - 1)
        for i in np.flatnonzero(alive):
            if new_k != k or p in nn[i]:
                nn[i], score[i] = neighbours(i, new_k) if new_k > 0 else (set(), 0.0)
        k = new_k
    return points[alive]


def strata(points, box: Box) -> np.ndarray:
    """Stratum index of each coordinate, ``floor(n (x - lo) / (hi - lo))``."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    lo = np.asarray(box.lo)
    width = np.asarray(box.hi) - lo
    safe = np.where(width > 0, width, 1.0)
    idx = np.floor(n * (points - lo) / safe).astype(np.int64)
    return np.clip(idx, 0, n - 1)


def lhsmdu(n: int, box: Box, seed: int = 42, oversampling: int = OVERSAMPLING) -> SampleSet:
    if n < 1:
        raise ValueError("n must be positive")
    d = box.dim
    rng = np.random.Generator(np.random.Philox(seed))
    pool = rng.random((oversampling * n, d))
    kept = nearest_neighbor_prune(pool, n)

    ranks = np.argsort(np.argsort(kept, axis=0, kind="stable"), axis=0, kind="stable")
    unit = (ranks + rng.random((n, d))) / n

    lo = np.asarray(box.lo)
    hi = np.asarray(box.hi)
    x = np.clip(lo + unit * (hi - lo), lo, hi)
    # rounding can push a coordinate across a stratum edge; recentre those
    bad = (strata(x, box) != ranks) & (hi > lo)
    if bad.any():
        mid = np.clip(lo + (ranks + 0.5) / n * (hi - lo), lo, hi)
        x = np.where(bad, mid, x)
    return SampleSet(points=x, seed=seed)
