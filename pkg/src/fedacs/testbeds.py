"""Convex quadratic testbed: client ``i`` minimizes ``1/2 ||w - c_i||^2``.

Centers come in clusters, so the attention threshold has real structure
to find, and gradients and Lipschitz constants are known in closed form
(the loss Hessian is the identity).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ClientShard, _cluster_centers
from .models import Batch, ModelSpec


@dataclass(frozen=True)
class QuadraticTestbed:
    spec: ModelSpec
    shards: list
    centers: np.ndarray
    groups: np.ndarray
    w0: np.ndarray


def make_quadratic_testbed(n_clients: int = 10, dim: int = 20, n_clusters: int = 2,
                           separation: float = 10.0, spread: float = 1.0,
                           init_scale: float = 1.0, seed: int = 0) -> QuadraticTestbed:
    """Client ``i`` belongs to cluster ``i % n_clusters``; its center is the
    cluster mean plus ``N(0, spread^2)`` noise. All clients share one
    seeded initial model."""
    rng = np.random.default_rng([seed, 42])
    means = _cluster_centers(n_clusters, dim, separation, rng) if n_clusters > 1 else \
        rng.normal(size=(1, dim)) * separation
    groups = np.arange(n_clients) % n_clusters
    centers = means[groups] + spread * rng.normal(size=(n_clients, dim))
    shards = []
    for i, c in enumerate(centers):
        b = Batch(c[None, :], np.zeros(1, dtype=np.int64))
        shards.append(ClientShard(i, b, b))
    w0 = init_scale * rng.normal(size=dim)
    return QuadraticTestbed(ModelSpec("quadratic", dim), shards, centers, groups, w0)
