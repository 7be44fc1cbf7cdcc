"""Round-based federated training: FedACS and the FedAvg, FedAMP-style and
local-only baselines.

A round is a pure function ``state -> state``. Randomness is keyed by
``(seed, round)`` for participant sampling and ``(seed, round, client)``
for local mini-batches, so a trajectory replays identically whether
clients are processed serially or in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .attention import (
    AttentionWeights,
    attention_matrix,
    quantile_threshold,
    relaxed_intermediates,
    similarity_matrix,
)
from .data import ClientShard
from .errors import ContractViolation, DivergenceError
from .models import ModelSpec, loss_and_gradient
from .schedules import Schedule

ALGORITHMS = ("fedacs", "fedavg", "fedamp", "local")


@dataclass(frozen=True)
class AlgoConfig:
    algorithm: str = "fedacs"
    lam: float = 1.0
    p: float = 0.5
    rounds: int = 50
    local_steps: int = 1
    batch_size: int = 32
    participation: float = 1.0
    alpha: Schedule = field(default_factory=lambda: Schedule("fixed", 1.0))
    beta: Schedule = field(default_factory=lambda: Schedule("fixed", 0.1))
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ContractViolation(f"unknown algorithm {self.algorithm!r}")
        if not self.lam > 0:
            raise ContractViolation("lambda must be positive")
        if not 0.0 <= self.p <= 1.0:
            raise ContractViolation("p must lie in [0, 1]")
        if self.rounds < 0:
            raise ContractViolation("rounds must be non-negative")
        if self.local_steps < 0:
            raise ContractViolation("local_steps must be non-negative")
        if self.batch_size < 1:
            raise ContractViolation("batch_size must be positive")
        if not 0.0 < self.participation <= 1.0:
            raise ContractViolation("participation must lie in (0, 1]")

    def step_sizes(self, k: int):
        K = max(self.rounds, 1)
        return (
            self.alpha.step(k, K, self.lam, "alpha"),
            self.beta.step(k, K, self.lam, "beta"),
        )


@dataclass(frozen=True)
class FederatedState:
    """Client models ``W^k`` and intermediates ``U^k`` as ``(n, d)`` arrays."""

    round: int
    models: np.ndarray
    intermediates: np.ndarray
    participants: np.ndarray
    global_model: Optional[np.ndarray] = None
    delta: Optional[float] = None
    attention: Optional[AttentionWeights] = None

    @property
    def n_clients(self) -> int:
        return self.models.shape[0]


def initial_state(n_clients: int, w0, with_global: bool = False) -> FederatedState:
    """Every client starts from the same vector ``w0``."""
    w0 = np.asarray(w0, dtype=np.float64)
    models = np.tile(w0, (n_clients, 1))
    return FederatedState(
        round=0,
        models=models,
        intermediates=models.copy(),
        participants=np.arange(n_clients),
        global_model=w0.copy() if with_global else None,
    )


def participant_rng(seed: int, round_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, round_index, 0])


def client_rng(seed: int, round_index: int, client_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, round_index, 1, client_id])


def sample_participants(n: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted ids of ``max(1, round(fraction * n))`` clients drawn without replacement."""
    if not 0.0 < fraction <= 1.0:
        raise ContractViolation("fraction must lie in (0, 1]")
    count = max(1, int(np.floor(fraction * n + 0.5)))
    if count >= n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=count, replace=False))


def batch_schedule(n: int, batch_size: int, steps: int, rng: np.random.Generator):
    """Index arrays for ``steps`` mini-batches.

    Batches walk a random permutation without replacement and the
    permutation is redrawn once exhausted; the final batch of an epoch may
    be short. ``None`` means the full batch (``batch_size >= n``).
    """
    if batch_size >= n:
        return [None] * steps
    out = []
    perm, pos = rng.permutation(n), 0
    for _ in range(steps):
        if pos >= n:
            perm, pos = rng.permutation(n), 0
        out.append(perm[pos:pos + batch_size])
        pos += batch_size
    return out


def local_update(spec: ModelSpec, u, shard: ClientShard, beta: float, local_steps: int,
                 batch_size: int, rng: np.random.Generator, round_index=None) -> np.ndarray:
    """Mini-batch SGD from ``u`` with rate ``beta``.

    One full-batch step is exactly ``u - beta * grad F_i(u)``.
    """
    w = np.array(u, dtype=np.float64)
    train = shard.train
    for idx in batch_schedule(len(train), batch_size, local_steps, rng):
        batch = train if idx is None else train.take(idx)
        loss, g = loss_and_gradient(spec, w, batch)
        if not (np.isfinite(loss) and np.all(np.isfinite(g))):
            raise DivergenceError("non-finite loss or gradient", round_index, shard.client_id)
        w = w - beta * g
    if not np.all(np.isfinite(w)):
        raise DivergenceError("non-finite parameters", round_index, shard.client_id)
    return w


def _train_participants(state, start, participants, cfg, shards, spec, k, beta):
    models = state.models.copy()
    for row, cid in enumerate(participants):
        models[cid] = local_update(
            spec, start[row], shards[cid], beta, cfg.local_steps, cfg.batch_size,
            client_rng(cfg.seed, k, cid), round_index=k,
        )
    return models


def fedacs_round(state: FederatedState, cfg: AlgoConfig, shards: Sequence[ClientShard],
                 spec: ModelSpec, delta: Optional[float] = None) -> FederatedState:
    """One round: sample, score, threshold, aggregate, fine-tune locally.

    Similarities and aggregation cover participants only; everyone else is
    left untouched. ``delta`` overrides the p-quantile threshold.
    """
    k = state.round + 1
    alpha, beta = cfg.step_sizes(k)
    P = sample_participants(state.n_clients, cfg.participation, participant_rng(cfg.seed, k))
    Wp = state.models[P]
    S = similarity_matrix(Wp, client_ids=P)
    d = quantile_threshold(S, cfg.p) if delta is None else float(delta)
    att = attention_matrix(S, d, cfg.p)
    Up = relaxed_intermediates(Wp, att, alpha)

    intermediates = state.intermediates.copy()
    intermediates[P] = Up
    models = _train_participants(state, Up, P, cfg, shards, spec, k, beta)
    return FederatedState(k, models, intermediates, P, state.global_model, d, att)


def fedamp_round(state: FederatedState, cfg: AlgoConfig, shards: Sequence[ClientShard],
                 spec: ModelSpec) -> FederatedState:
    """FedACS without thresholding: every positively similar client is a neighbor.

    With ``local_steps = 0`` the round returns ``W^k = U^k``.
    """
    return fedacs_round(state, cfg, shards, spec, delta=-np.inf)


def local_round(state: FederatedState, cfg: AlgoConfig, shards: Sequence[ClientShard],
                spec: ModelSpec) -> FederatedState:
    k = state.round + 1
    _, beta = cfg.step_sizes(k)
    P = sample_participants(state.n_clients, cfg.participation, participant_rng(cfg.seed, k))
    start = state.models[P]
    intermediates = state.intermediates.copy()
    intermediates[P] = start
    models = _train_participants(state, start, P, cfg, shards, spec, k, beta)
    return FederatedState(k, models, intermediates, P, state.global_model)


def fedavg_round(state: FederatedState, cfg: AlgoConfig, shards: Sequence[ClientShard],
                 spec: ModelSpec) -> FederatedState:
    """Participants train from the global model; the server replaces it with
    the train-size-weighted mean. Participants receive the new global model."""
    k = state.round + 1
    _, beta = cfg.step_sizes(k)
    P = sample_participants(state.n_clients, cfg.participation, participant_rng(cfg.seed, k))
    g = state.global_model if state.global_model is not None else state.models[0]
    start = np.tile(g, (P.size, 1))
    trained = _train_participants(state, start, P, cfg, shards, spec, k, beta)

    sizes = np.array([len(shards[cid].train) for cid in P], dtype=np.float64)
    weights = sizes / sizes.sum()
    new_global = np.zeros_like(g)
    for wt, cid in zip(weights, P):
        new_global += wt * trained[cid]

    models = state.models.copy()
    models[P] = new_global
    intermediates = state.intermediates.copy()
    intermediates[P] = g
    return FederatedState(k, models, intermediates, P, new_global)


ROUNDS = {
    "fedacs": fedacs_round,
    "fedavg": fedavg_round,
    "fedamp": fedamp_round,
    "local": local_round,
}


def run_rounds(state: FederatedState, cfg: AlgoConfig, shards, spec, rounds: Optional[int] = None,
               callback=None) -> FederatedState:
    """Advance ``rounds`` (default ``cfg.rounds``) rounds, calling ``callback(state)`` after each."""
    step = ROUNDS[cfg.algorithm]
    for _ in range(cfg.rounds if rounds is None else rounds):
        state = step(state, cfg, shards, spec)
        if callback is not None:
            callback(state)
    return state


def evaluation_models(state: FederatedState, algorithm: str) -> np.ndarray:
    """The model each client is scored with: the global one for FedAvg."""
    if algorithm == "fedavg" and state.global_model is not None:
        return np.tile(state.global_model, (state.n_clients, 1))
    return state.models


__all__ = [
    "ALGORITHMS", "AlgoConfig", "FederatedState", "initial_state", "sample_participants",
    "batch_schedule", "local_update", "fedacs_round", "fedamp_round", "local_round",
    "fedavg_round", "run_rounds", "evaluation_models", "participant_rng", "client_rng",
]
