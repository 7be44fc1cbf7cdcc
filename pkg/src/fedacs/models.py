"""Flat-parameter classifiers: multinomial logistic regression and a
one-hidden-layer MLP, plus a quadratic toy loss used by the convergence
testbed.

Every model is a single float64 vector so the server side can treat
clients' models as plain rows of a matrix. The per-client loss is the
mean softmax cross-entropy over a batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .errors import ContractViolation

KINDS = ("linear", "mlp", "quadratic")
ACTIVATIONS = {"relu": 0, "tanh": 1}


@dataclass(frozen=True)
class ModelSpec:
    """Architecture of a client model.

    ``quadratic`` is the convex toy ``mean_s 1/2 ||w - x_s||^2`` whose
    parameter vector lives in feature space; labels are ignored.
    """

    kind: str
    input_dim: int
    num_classes: int = 2
    hidden_dim: Optional[int] = None
    activation: str = "relu"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractViolation(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1:
            raise ContractViolation("input_dim must be positive")
        if self.kind != "quadratic" and self.num_classes < 2:
            raise ContractViolation("num_classes must be at least 2")
        if self.kind == "mlp":
            if self.hidden_dim is None or self.hidden_dim < 1:
                raise ContractViolation("mlp requires a positive hidden_dim")
            if self.activation not in ACTIVATIONS:
                raise ContractViolation(f"unknown activation {self.activation!r}")

    @property
    def param_dim(self) -> int:
        d, C = self.input_dim, self.num_classes
        if self.kind == "linear":
            return (d + 1) * C
        if self.kind == "mlp":
            H = self.hidden_dim
            return (d + 1) * H + (H + 1) * C
        return d


def param_dim(spec: ModelSpec) -> int:
    return spec.param_dim


@dataclass(frozen=True)
class Batch:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ContractViolation(
                f"features {X.shape} and labels {y.shape} are inconsistent"
            )
        if y.size and y.min() < 0:
            raise ContractViolation("labels must be non-negative")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.shape[0]

    def take(self, idx) -> "Batch":
        return Batch(self.features[idx], self.labels[idx])


def _check(spec: ModelSpec, params, batch: Batch):
    params = np.ascontiguousarray(params, dtype=np.float64)
    if params.ndim != 1 or params.shape[0] != spec.param_dim:
        raise ContractViolation(
            f"params has shape {params.shape}, expected ({spec.param_dim},)"
        )
    if len(batch) == 0:
        raise ContractViolation("batch is empty")
    if batch.features.shape[1] != spec.input_dim:
        raise ContractViolation(
            f"batch has {batch.features.shape[1]} features, spec expects {spec.input_dim}"
        )
    if spec.kind != "quadratic" and batch.labels.max() >= spec.num_classes:
        raise ContractViolation("label out of range for num_classes")
    return params


def logits(spec: ModelSpec, params, features) -> np.ndarray:
    X = np.ascontiguousarray(features, dtype=np.float64)
    params = np.ascontiguousarray(params, dtype=np.float64)
    if spec.kind == "linear":
        return _kernels.linear_logits(X, params, spec.num_classes)
    if spec.kind == "mlp":
        return _kernels.mlp_logits(
            X, params, spec.hidden_dim, spec.num_classes, ACTIVATIONS[spec.activation]
        )
    raise ContractViolation("quadratic models have no logits")


def loss_and_gradient(spec: ModelSpec, params, batch: Batch):
    """Return ``(mean loss, gradient)`` in one pass."""
    params = _check(spec, params, batch)
    X, y = batch.features, batch.labels
    if spec.kind == "linear":
        return _kernels.linear_loss_grad(X, y, params, spec.num_classes)
    if spec.kind == "mlp":
        return _kernels.mlp_loss_grad(
            X, y, params, spec.hidden_dim, spec.num_classes,
            ACTIVATIONS[spec.activation],
        )
    return _kernels.quadratic_loss_grad(X, params)


def forward_loss(spec: ModelSpec, params, batch: Batch) -> float:
    params = _check(spec, params, batch)
    if spec.kind == "quadratic":
        return float(_kernels.quadratic_loss_grad(batch.features, params)[0])
    return float(_kernels.mean_xent(logits(spec, params, batch.features), batch.labels))


def gradient(spec: ModelSpec, params, batch: Batch) -> np.ndarray:
    return loss_and_gradient(spec, params, batch)[1]


def accuracy(spec: ModelSpec, params, data: Batch) -> float:
    """Fraction of samples whose argmax logit (lowest index on ties) is the label."""
    params = _check(spec, params, data)
    pred = np.argmax(logits(spec, params, data.features), axis=1)
    return float(np.mean(pred == data.labels))


def init_params(spec: ModelSpec, rng: np.random.Generator, scale: float = 0.01) -> np.ndarray:
    """Seeded initial parameters, nonzero so cosine similarities are defined.

    The MLP uses fan-in scaled normal weights and zero biases; the other
    kinds draw every entry from ``N(0, scale^2)``.
    """
    if spec.kind != "mlp":
        return rng.normal(0.0, scale, size=spec.param_dim)
    d, H, C = spec.input_dim, spec.hidden_dim, spec.num_classes
    W1 = np.zeros((d + 1, H))
    W1[:d] = rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, H))
    W2 = np.zeros((H + 1, C))
    W2[:H] = rng.normal(0.0, 1.0 / np.sqrt(H), size=(H, C))
    return np.concatenate((W1.ravel(), W2.ravel()))
