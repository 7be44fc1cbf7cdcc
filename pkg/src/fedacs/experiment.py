"""Seeded end-to-end experiments and their per-round metrics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .algorithms import ROUNDS, FederatedState, evaluation_models, initial_state
from .config import ExperimentConfig
from .data import (
    ClientShard,
    LabeledDataset,
    make_synthetic_clusters,
    partition,
    swap_labels_by_group,
)
from .diagnostics import (
    assumption_probe,
    attention_snapshot,
    objective_gradient,
    personalized_objective,
)
from .errors import FedACSError
from .loaders import load_csv, load_idx
from .models import ModelSpec, accuracy, init_params
from .testbeds import make_quadratic_testbed

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "round",
    "mean_test_accuracy",
    "std_test_accuracy",
    "delta",
    "participants",
    "objective",
    "grad_norm_sq",
)


@dataclass(frozen=True)
class RoundRecord:
    round: int
    mean_test_accuracy: float
    std_test_accuracy: float
    delta: Optional[float]
    participants: int
    objective: Optional[float] = None
    grad_norm_sq: Optional[float] = None

    def csv_row(self) -> List[str]:
        def fmt(v):
            return "" if v is None else repr(float(v))
        return [
            str(self.round), fmt(self.mean_test_accuracy), fmt(self.std_test_accuracy),
            fmt(self.delta), str(self.participants), fmt(self.objective), fmt(self.grad_norm_sq),
        ]


@dataclass
class MetricsSeries:
    """Per-seed round records plus the across-seed summary of final accuracy.

    Standard deviations (across clients and across seeds) are population
    standard deviations.
    """

    algorithm: str
    records: Dict[int, List[RoundRecord]] = field(default_factory=dict)
    probes: Dict[int, dict] = field(default_factory=dict)
    attention_log: Dict[int, List[dict]] = field(default_factory=dict)

    def final_accuracies(self) -> List[float]:
        return [recs[-1].mean_test_accuracy for recs in self.records.values()]

    def summary(self) -> dict:
        finals = self.final_accuracies()
        out = {
            "final_accuracy_mean": float(np.mean(finals)),
            "final_accuracy_std": float(np.std(finals)),
            "final_accuracy_per_seed": {str(s): r[-1].mean_test_accuracy for s, r in self.records.items()},
            "rounds": len(next(iter(self.records.values()))) - 1,
        }
        if self.probes:
            out["assumption_probe"] = {str(s): p for s, p in self.probes.items()}
        return out


@dataclass(frozen=True)
class Problem:
    spec: ModelSpec
    shards: List[ClientShard]
    w0: np.ndarray
    num_classes: int


def load_dataset(config: ExperimentConfig, seed: int) -> Optional[LabeledDataset]:
    ds = config.dataset
    if ds["kind"] == "synthetic":
        return make_synthetic_clusters(
            ds["n_clusters"], ds["input_dim"], ds["samples_per_cluster"],
            ds["separation"], ds["noise_sigma"], seed,
        )
    if ds["kind"] == "idx":
        return load_idx(ds["images"], ds["labels"], ds["num_classes"])
    if ds["kind"] == "csv":
        return load_csv(ds["path"], ds["num_classes"], header=ds["header"])
    return None


def build_problem(config: ExperimentConfig, seed: int, data: Optional[LabeledDataset] = None) -> Problem:
    """Data, client shards, model spec and the shared initial model for one seed."""
    ds, m = config.dataset, config.model
    if ds["kind"] == "quadratic":
        tb = make_quadratic_testbed(
            ds["n_clients"], ds["dim"], ds["n_clusters"], ds["separation"],
            ds["spread"], ds["init_scale"], seed,
        )
        return Problem(tb.spec, tb.shards, tb.w0, 1)
    if data is None:
        data = load_dataset(config, seed)
    shards = partition(data, config.partition_config(seed))
    if ds.get("client_groups", 1) > 1:
        shards = swap_labels_by_group(shards, ds["client_groups"], data.num_classes,
                                      ds["swapped_pairs"])
    spec = ModelSpec(m["kind"], data.input_dim, data.num_classes, m["hidden_dim"], m["activation"])
    w0 = init_params(spec, np.random.default_rng([seed, 3]), m["init_scale"])
    return Problem(spec, shards, w0, data.num_classes)


def evaluate(state: FederatedState, algorithm: str, problem: Problem, config: ExperimentConfig,
             delta=None, participants: int = 0) -> RoundRecord:
    W = evaluation_models(state, algorithm)
    accs = np.array([accuracy(problem.spec, W[i], s.test) for i, s in enumerate(problem.shards)])
    objective = grad_sq = None
    if config.diagnostics:
        A = attention_snapshot(W, config.algo.p)
        objective = personalized_objective(W, problem.shards, problem.spec, config.algo.lam, A)
        G = objective_gradient(W, problem.shards, problem.spec, config.algo.lam, A)
        grad_sq = float(np.sum(G * G))
    return RoundRecord(state.round, float(accs.mean()), float(accs.std()), delta, participants,
                       objective, grad_sq)


def _attention_entry(state: FederatedState) -> dict:
    A = state.attention.weights
    return {
        "round": state.round,
        "delta": state.delta,
        "participants": [int(c) for c in state.participants],
        "weights": [
            [[int(state.participants[j]), float(A[i, j])] for j in np.flatnonzero(A[i])]
            for i in range(A.shape[0])
        ],
    }


def run_seed(config: ExperimentConfig, algorithm: str, seed: int, data=None, series=None):
    problem = build_problem(config, seed, data)
    cfg = config.algo_config(algorithm, seed)
    state = initial_state(len(problem.shards), problem.w0, with_global=(algorithm == "fedavg"))
    records = [evaluate(state, algorithm, problem, config)]
    history = [evaluation_models(state, algorithm)] if config.diagnostics else None
    attention = []
    step = ROUNDS[algorithm]
    for _ in range(cfg.rounds):
        try:
            state = step(state, cfg, problem.shards, problem.spec)
        except FedACSError as exc:
            raise type(exc)(f"{algorithm} seed {seed}: {exc}") from exc
        delta = state.delta if algorithm == "fedacs" else None
        records.append(evaluate(state, algorithm, problem, config, delta, len(state.participants)))
        if history is not None:
            history.append(evaluation_models(state, algorithm))
        if config.log_attention and state.attention is not None:
            attention.append(_attention_entry(state))
    if series is not None:
        series.records[seed] = records
        if history is not None and len(history) >= 2:
            series.probes[seed] = assumption_probe(
                history, problem.shards, problem.spec, cfg.lam, cfg.p
            ).as_dict()
        if attention:
            series.attention_log[seed] = attention
    return records


def run_experiment(config: ExperimentConfig, algorithm: Optional[str] = None) -> MetricsSeries:
    """Run one algorithm over every configured seed."""
    algorithm = algorithm or config.algorithms[0]
    series = MetricsSeries(algorithm)
    shared = None
    if config.dataset["kind"] in ("idx", "csv"):
        shared = load_dataset(config, config.seeds[0])
    for seed in config.seeds:
        run_seed(config, algorithm, seed, shared, series)
        log.info("%s seed %d: final accuracy %.4f", algorithm, seed,
                 series.records[seed][-1].mean_test_accuracy)
    return series
