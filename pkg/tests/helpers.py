"""Shared synthetic-data and calibration helpers for the test suite."""

from __future__ import annotations

import numpy as np

from racekde import DataVector, KernelEval, exact_kde


def gaussian_clusters(
    n: int,
    dim: int,
    n_clusters: int,
    seed: int,
    center_scale: float = 1.0,
    spread: float = 0.25,
    extra_queries: int = 0,
):
    """Clustered point cloud plus held-out queries from the same mixture."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=center_scale, size=(n_clusters, dim))
    total = n + extra_queries
    assignment = rng.integers(n_clusters, size=total)
    points = centers[assignment] + rng.normal(scale=spread, size=(total, dim))
    return points[:n], points[n:]


def tune_sigma(
    X: np.ndarray,
    queries: np.ndarray,
    kind: str,
    power: int,
    target: float,
    tol: float = 0.01,
) -> float:
    """Bisect the bandwidth until the mean density over queries hits target."""

    def mean_density(sigma: float) -> float:
        kernel = KernelEval(kind=kind, sigma=sigma, power=power)
        return float(
            np.mean([exact_kde(X, DataVector.dense(q), kernel) for q in queries])
        )

    lo, hi = 1e-6, 1.0
    while mean_density(hi) < target:
        hi *= 2.0
        if hi > 1e9:
            raise RuntimeError("bandwidth search diverged")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        val = mean_density(mid)
        if abs(val - target) < tol:
            return mid
        if val < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
