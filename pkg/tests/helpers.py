import numpy as np

from fedacs.data import ClientShard
from fedacs.models import Batch, ModelSpec


def quadratic_shard(cid, center):
    """Client whose loss is 1/2 ||w - center||^2."""
    b = Batch(np.asarray(center, dtype=np.float64)[None, :], np.zeros(1, dtype=np.int64))
    return ClientShard(cid, b, b)


def quadratic_problem(centers):
    centers = np.asarray(centers, dtype=np.float64)
    spec = ModelSpec("quadratic", centers.shape[1])
    return spec, [quadratic_shard(i, c) for i, c in enumerate(centers)]
