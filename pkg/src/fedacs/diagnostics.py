"""Objective and stationarity instrumentation.

``F_lambda(W) = sum_i F_i(w_i) + lambda * R(W)`` is evaluated full-batch
with the similarity matrix frozen. Two gradients are available:

``stated``  ``grad F_i(w_i) + lambda * (w_i - sum_j s_ij w_j)``, the closed
            form the server step descends. Passing the realized attention
            weights as ``S`` makes this the field FedACS actually follows,
            which is what the stationarity trace measures.
``exact``   the true derivative of the objective above for a frozen ``S``;
            this is the one finite differences agree with.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .algorithms import AlgoConfig, fedacs_round, initial_state
from .attention import (
    as_model_matrix,
    attention_matrix,
    quantile_threshold,
    regularizer,
    regularizer_grad,
    regularizer_grad_exact,
    similarity_matrix,
)
from .errors import ContractViolation, OracleError
from .models import ModelSpec, forward_loss, gradient
from .schedules import make_schedule  # noqa: F401  (re-exported)


def client_losses(models, shards, spec: ModelSpec) -> np.ndarray:
    W = as_model_matrix(models)
    return np.array([forward_loss(spec, W[i], s.train) for i, s in enumerate(shards)])


def client_gradients(models, shards, spec: ModelSpec) -> np.ndarray:
    W = as_model_matrix(models)
    return np.stack([gradient(spec, W[i], s.train) for i, s in enumerate(shards)])


def personalized_objective(models, shards, spec: ModelSpec, lam: float, S) -> float:
    return float(client_losses(models, shards, spec).sum() + lam * regularizer(models, S))


def objective_gradient(models, shards, spec: ModelSpec, lam: float, S,
                       mode: str = "stated", normalize_rows: bool = False) -> np.ndarray:
    if mode == "stated":
        reg = regularizer_grad(models, S, normalize_rows=normalize_rows)
    elif mode == "exact":
        reg = regularizer_grad_exact(models, S)
    else:
        raise ContractViolation(f"unknown gradient mode {mode!r}")
    return client_gradients(models, shards, spec) + lam * reg


def objective_grad_norm(models, shards, spec: ModelSpec, lam: float, S,
                        mode: str = "stated", normalize_rows: bool = False) -> float:
    """Frobenius norm (not squared) of the stacked per-client gradients."""
    G = objective_gradient(models, shards, spec, lam, S, mode, normalize_rows)
    return float(np.sqrt(np.sum(G * G)))


def finite_difference_grad(f: Callable[[np.ndarray], float], w, h: float = 1e-5) -> np.ndarray:
    """Central differences ``(f(w + h e_j) - f(w - h e_j)) / 2h`` per coordinate."""
    if not h > 0:
        raise ContractViolation("step h must be positive")
    w = np.array(w, dtype=np.float64)
    flat = w.reshape(-1)
    out = np.empty(flat.size)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + h
        fp = f(w)
        flat[j] = orig - h
        fm = f(w)
        flat[j] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise OracleError(f"non-finite function value at coordinate {j}")
        out[j] = (fp - fm) / (2.0 * h)
    return out.reshape(w.shape)


def attention_snapshot(models, p: float, delta: Optional[float] = None) -> np.ndarray:
    """Row-normalized thresholded similarities at ``models``, as the server would form them."""
    S = similarity_matrix(models)
    d = quantile_threshold(S, p) if delta is None else delta
    return attention_matrix(S, d, p).weights


@dataclass
class StationarityTrace:
    rounds: List[int] = field(default_factory=list)
    objective: List[float] = field(default_factory=list)
    grad_norm_sq: List[float] = field(default_factory=list)
    running_min: List[float] = field(default_factory=list)

    def record(self, k: int, objective: float, grad_norm_sq: float):
        if not (np.isfinite(objective) and np.isfinite(grad_norm_sq)):
            raise OracleError(f"non-finite diagnostic at round {k}")
        prev = self.running_min[-1] if self.running_min else np.inf
        self.rounds.append(int(k))
        self.objective.append(float(objective))
        self.grad_norm_sq.append(float(grad_norm_sq))
        self.running_min.append(float(min(prev, grad_norm_sq)))

    def value_at(self, k: int) -> float:
        return self.running_min[self.rounds.index(k)]

    def __len__(self):
        return len(self.rounds)


def record_state(trace: StationarityTrace, k: int, models, shards, spec, lam, p,
                 delta: Optional[float] = None):
    A = attention_snapshot(models, p, delta)
    G = objective_gradient(models, shards, spec, lam, A, mode="stated")
    trace.record(k, personalized_objective(models, shards, spec, lam, A), float(np.sum(G * G)))


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual: float
    ks: tuple
    values: tuple


def loglog_fit(ks: Sequence[float], values: Sequence[float]) -> RateFit:
    """Least-squares line through ``(log k, log value)``; residual is the RMS error."""
    ks = np.asarray(ks, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    if ks.size < 2:
        raise ContractViolation("need at least 2 checkpoints for a rate fit")
    if np.any(ks <= 0) or np.any(vals <= 0):
        raise ContractViolation("rate fit needs positive checkpoints and values")
    x, y = np.log(ks), np.log(vals)
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return RateFit(float(slope), float(intercept), resid, tuple(ks.tolist()), tuple(vals.tolist()))


def rate_fit(trace: StationarityTrace, checkpoints: Sequence[int]) -> RateFit:
    """Slope of ``log running_min`` against ``log k`` at the given rounds of one trace."""
    if len(checkpoints) < 2:
        raise ContractViolation("need at least 2 checkpoints for a rate fit")
    if max(checkpoints) > trace.rounds[-1]:
        raise ContractViolation("trace does not reach the last checkpoint")
    return loglog_fit(checkpoints, [trace.value_at(k) for k in checkpoints])


def run_stationarity(spec: ModelSpec, shards, cfg: AlgoConfig, w0,
                     keep_models: bool = False):
    """Run FedACS for ``cfg.rounds`` rounds recording the trace from round 0.

    Returns ``(trace, final_state, models_per_round or None)``.
    """
    state = initial_state(len(shards), w0)
    trace = StationarityTrace()
    history = [state.models] if keep_models else None
    record_state(trace, 0, state.models, shards, spec, cfg.lam, cfg.p)
    for _ in range(cfg.rounds):
        state = fedacs_round(state, cfg, shards, spec)
        record_state(trace, state.round, state.models, shards, spec, cfg.lam, cfg.p)
        if keep_models:
            history.append(state.models)
    return trace, state, history


@dataclass(frozen=True)
class AssumptionProbe:
    max_loss_grad_norm: float
    max_reg_grad_norm: float
    bound_estimate: float
    lipschitz_loss: tuple
    lipschitz_reg: tuple

    @property
    def max_lipschitz_loss(self) -> float:
        return max(self.lipschitz_loss, default=0.0)

    @property
    def max_lipschitz_reg(self) -> float:
        return max(self.lipschitz_reg, default=0.0)

    def as_dict(self) -> dict:
        return {
            "max_loss_grad_norm": self.max_loss_grad_norm,
            "max_reg_grad_norm": self.max_reg_grad_norm,
            "bound_estimate": self.bound_estimate,
            "max_lipschitz_loss": self.max_lipschitz_loss,
            "max_lipschitz_reg": self.max_lipschitz_reg,
            "n_secants": len(self.lipschitz_loss),
        }


def assumption_probe(models_trace: Sequence[np.ndarray], shards, spec: ModelSpec, lam: float,
                     p: float = 0.5) -> AssumptionProbe:
    """Empirical bound and Lipschitz estimates along a trajectory.

    ``bound_estimate`` is the smallest B consistent with the observed
    ``||grad F|| <= B`` and ``||grad R|| <= B / lambda``. Lipschitz values are
    secants between consecutive distinct iterates.
    """
    if len(models_trace) < 2:
        raise ContractViolation("assumption probe needs at least 2 recorded rounds")
    gF, gR = [], []
    for W in models_trace:
        gF.append(client_gradients(W, shards, spec))
        gR.append(regularizer_grad(W, attention_snapshot(W, p)))
    nF = [float(np.linalg.norm(g)) for g in gF]
    nR = [float(np.linalg.norm(g)) for g in gR]
    lipF, lipR = [], []
    for a in range(1, len(models_trace)):
        step = float(np.linalg.norm(models_trace[a] - models_trace[a - 1]))
        if step == 0.0:
            continue
        lipF.append(float(np.linalg.norm(gF[a] - gF[a - 1])) / step)
        lipR.append(float(np.linalg.norm(gR[a] - gR[a - 1])) / step)
    return AssumptionProbe(
        max_loss_grad_norm=max(nF),
        max_reg_grad_norm=max(nR),
        bound_estimate=max(max(nF), lam * max(nR)),
        lipschitz_loss=tuple(lipF),
        lipschitz_reg=tuple(lipR),
    )
