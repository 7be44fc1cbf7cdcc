"""Synthetic data, non-IID client partitioning and scarcity subsampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import ContractViolation, PartitionError
from .models import Batch

DIRICHLET_RETRIES = 100


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0] or y.size == 0:
            raise ContractViolation("dataset needs a non-empty N x d matrix and N labels")
        if self.num_classes < 1:
            raise ContractViolation("num_classes must be positive")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise ContractViolation("label out of range for num_classes")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ClientShard:
    """One client's private data. ``*_index`` point back into the source dataset."""

    client_id: int
    train: Batch
    test: Batch
    train_index: np.ndarray = field(default=None, repr=False)
    test_index: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.train) == 0 or len(self.test) == 0:
            raise ContractViolation(f"client {self.client_id}: train and test must be non-empty")


@dataclass(frozen=True)
class PartitionConfig:
    scheme: str
    n_clients: int
    dirichlet_alpha: float = 0.5
    classes_per_client: int = 2
    samples_per_client: Optional[int] = None
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in ("dirichlet", "pathological"):
            raise ContractViolation(f"unknown partition scheme {self.scheme!r}")
        if self.n_clients < 1:
            raise ContractViolation("n_clients must be positive")
        if not self.dirichlet_alpha > 0:
            raise ContractViolation("dirichlet_alpha must be positive")
        if self.classes_per_client < 1:
            raise ContractViolation("classes_per_client must be positive")
        if self.samples_per_client is not None and self.samples_per_client < 2:
            raise ContractViolation("samples_per_client must be at least 2")
        if not 0.0 < self.test_fraction < 1.0:
            raise ContractViolation("test_fraction must lie in (0, 1)")


def make_synthetic_clusters(
    n_clusters: int,
    input_dim: int,
    samples_per_cluster: int,
    separation: float,
    noise_sigma: float,
    seed: int,
) -> LabeledDataset:
    """Isotropic Gaussian blobs, one class per blob.

    Centers are pairwise at least ``separation`` apart. When
    ``n_clusters <= input_dim`` they sit on a randomly rotated scaled
    simplex, so every pair is exactly ``separation`` apart; otherwise they
    are rejection-sampled.
    """
    if n_clusters < 2 or input_dim < 2:
        raise ContractViolation("need n_clusters >= 2 and input_dim >= 2")
    if samples_per_cluster < 1 or not separation > 0 or noise_sigma < 0:
        raise ContractViolation("samples_per_cluster and separation must be positive")
    rng = np.random.default_rng(seed)
    centers = _cluster_centers(n_clusters, input_dim, separation, rng)
    labels = rng.permutation(np.repeat(np.arange(n_clusters), samples_per_cluster))
    noise = rng.normal(size=(labels.size, input_dim))
    return LabeledDataset(centers[labels] + noise_sigma * noise, labels, n_clusters)


def _cluster_centers(n, d, separation, rng):
    if n <= d:
        Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
        return (separation / np.sqrt(2.0)) * Q[:, :n].T
    radius = separation * n ** (1.0 / d)
    for _ in range(1000):
        centers = [rng.uniform(-radius, radius, size=d)]
        while len(centers) < n:
            for _ in range(1000):
                c = rng.uniform(-radius, radius, size=d)
                if min(np.linalg.norm(c - o) for o in centers) >= separation:
                    centers.append(c)
                    break
            else:
                break
        if len(centers) == n:
            return np.array(centers)
        radius *= 1.25
    raise ContractViolation("could not place cluster centers")  # pragma: no cover


def _test_count(size, test_fraction):
    return max(1, int(round(test_fraction * size)))


def _min_client_size(cfg: PartitionConfig) -> int:
    need_train = cfg.samples_per_client or 1
    size = need_train + 1
    while size - _test_count(size, cfg.test_fraction) < need_train:
        size += 1
    return size


def _make_shards(data: LabeledDataset, client_idx, cfg: PartitionConfig, rng) -> List[ClientShard]:
    shards = []
    for cid, idx in enumerate(client_idx):
        idx = rng.permutation(idx)
        n_test = _test_count(idx.size, cfg.test_fraction)
        if idx.size - n_test < 1:
            raise PartitionError(f"client {cid} has too few samples ({idx.size}) to split")
        test_idx, train_idx = np.sort(idx[:n_test]), np.sort(idx[n_test:])
        shard = ClientShard(
            cid,
            Batch(data.features[train_idx], data.labels[train_idx]),
            Batch(data.features[test_idx], data.labels[test_idx]),
            train_idx,
            test_idx,
        )
        if cfg.samples_per_client is not None:
            shard = subsample_train(shard, cfg.samples_per_client, [cfg.seed, cid])
        shards.append(shard)
    return shards


def partition_dirichlet(data: LabeledDataset, cfg: PartitionConfig) -> List[ClientShard]:
    """Label-skewed split: per class, client shares ~ Dirichlet(alpha * 1_n).

    Proportions are redrawn (up to ``DIRICHLET_RETRIES`` times) until every
    client can hold a non-empty test set and a train set of at least
    ``samples_per_client`` (or 1) samples.
    """
    if cfg.scheme != "dirichlet":
        raise ContractViolation("partition_dirichlet needs scheme='dirichlet'")
    rng = np.random.default_rng([cfg.seed, 0])
    n = cfg.n_clients
    by_class = [rng.permutation(np.flatnonzero(data.labels == c)) for c in range(data.num_classes)]
    min_size = _min_client_size(cfg)

    for _ in range(DIRICHLET_RETRIES):
        parts = [[] for _ in range(n)]
        for idx in by_class:
            props = rng.dirichlet(np.full(n, cfg.dirichlet_alpha))
            cuts = (np.cumsum(props) * idx.size).astype(np.int64)[:-1]
            for cid, piece in enumerate(np.split(idx, cuts)):
                parts[cid].append(piece)
        client_idx = [np.concatenate(p) for p in parts]
        if min(c.size for c in client_idx) >= min_size:
            return _make_shards(data, client_idx, cfg, rng)
    raise PartitionError(
        f"no Dirichlet(alpha={cfg.dirichlet_alpha}) draw gave all {n} clients "
        f">= {min_size} samples after {DIRICHLET_RETRIES} attempts"
    )


def partition_pathological(data: LabeledDataset, cfg: PartitionConfig) -> List[ClientShard]:
    """Each client holds exactly ``classes_per_client`` classes.

    Classes are dealt round-robin over a seeded class order, so client ``i``
    claims positions ``i*k .. i*k+k-1`` (mod C). Every class is then split
    evenly among the clients that claimed it; unclaimed classes are dropped.
    """
    if cfg.scheme != "pathological":
        raise ContractViolation("partition_pathological needs scheme='pathological'")
    C, k = data.num_classes, cfg.classes_per_client
    if k > C:
        raise ContractViolation(f"classes_per_client={k} exceeds num_classes={C}")
    rng = np.random.default_rng([cfg.seed, 1])
    order = rng.permutation(C)
    claims = [[] for _ in range(C)]
    for cid in range(cfg.n_clients):
        for j in range(k):
            claims[order[(cid * k + j) % C]].append(cid)

    parts = [[] for _ in range(cfg.n_clients)]
    for c in range(C):
        if not claims[c]:
            continue
        idx = rng.permutation(np.flatnonzero(data.labels == c))
        for cid, piece in zip(claims[c], np.array_split(idx, len(claims[c]))):
            if piece.size == 0:
                raise PartitionError(f"class {c} has too few samples for {len(claims[c])} clients")
            parts[cid].append(piece)
    client_idx = [np.concatenate(p) for p in parts]
    min_size = _min_client_size(cfg)
    for cid, idx in enumerate(client_idx):
        if idx.size < min_size:
            raise PartitionError(f"client {cid} received {idx.size} < {min_size} samples")
    return _make_shards(data, client_idx, cfg, rng)


def partition(data: LabeledDataset, cfg: PartitionConfig) -> List[ClientShard]:
    if cfg.scheme == "dirichlet":
        return partition_dirichlet(data, cfg)
    return partition_pathological(data, cfg)


def subsample_train(shard: ClientShard, m: int, seed) -> ClientShard:
    """Keep ``m`` train samples drawn uniformly without replacement; test is untouched."""
    n = len(shard.train)
    if m < 1 or m > n:
        raise ContractViolation(f"cannot keep {m} of {n} train samples")
    if m == n:
        return shard
    keep = np.sort(np.random.default_rng(seed).choice(n, size=m, replace=False))
    train_index = shard.train_index[keep] if shard.train_index is not None else None
    return ClientShard(shard.client_id, shard.train.take(keep), shard.test, train_index, shard.test_index)


def group_permutation(group: int, num_classes: int, swapped_pairs: int) -> np.ndarray:
    """Label map for a client group: group 0 is the identity, group ``g``
    swaps ``swapped_pairs`` adjacent class pairs starting at class
    ``2 * swapped_pairs * (g - 1)`` (mod C)."""
    perm = np.arange(num_classes)
    if group == 0:
        return perm
    start = 2 * swapped_pairs * (group - 1)
    for k in range(swapped_pairs):
        a = (start + 2 * k) % num_classes
        b = (a + 1) % num_classes
        perm[a], perm[b] = perm[b], perm[a]
    return perm


def swap_labels_by_group(shards: List[ClientShard], n_groups: int, num_classes: int,
                         swapped_pairs: int = 2) -> List[ClientShard]:
    """Concept shift between client groups.

    Client ``i`` joins group ``i % n_groups`` and its labels (train and test)
    go through :func:`group_permutation`. Groups then disagree on a few
    classes but agree on the rest, so their models stay positively but
    imperfectly similar.
    """
    if n_groups < 1:
        raise ContractViolation("n_groups must be positive")
    if swapped_pairs < 1 or 2 * swapped_pairs > num_classes:
        raise ContractViolation(f"cannot swap {swapped_pairs} pairs among {num_classes} classes")
    out = []
    for s in shards:
        g = s.client_id % n_groups
        if g == 0:
            out.append(s)
            continue
        perm = group_permutation(g, num_classes, swapped_pairs)
        out.append(ClientShard(
            s.client_id,
            Batch(s.train.features, perm[s.train.labels]),
            Batch(s.test.features, perm[s.test.labels]),
            s.train_index,
            s.test_index,
        ))
    return out


def class_counts(shard: ClientShard, num_classes: int) -> np.ndarray:
    labels = np.concatenate((shard.train.labels, shard.test.labels))
    return np.bincount(labels, minlength=num_classes)


def label_entropy(counts) -> float:
    p = np.asarray(counts, dtype=np.float64)
    p = p[p > 0] / p.sum()
    return float(-(p * np.log(p)).sum())
