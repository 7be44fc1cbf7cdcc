"""Server-side aggregation: cosine similarity between client models, the
p-quantile threshold, attention-weighted intermediate models and the
similarity-weighted pairwise regularizer.

Models are passed as an ``(n, d)`` array, one client per row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import ContractViolation, DegenerateModelError


@dataclass(frozen=True)
class AttentionWeights:
    """Row ``i`` holds the convex-combination weights client ``i`` receives."""

    weights: np.ndarray
    threshold_delta: float
    pick_ratio_p: Optional[float] = None

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.weights[i])


def as_model_matrix(models) -> np.ndarray:
    W = np.ascontiguousarray(models, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] == 0:
        raise ContractViolation(f"expected an (n, d) model matrix, got shape {W.shape}")
    return W


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractViolation(f"length mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateModelError("cosine similarity of a zero-norm model")
    return float(min(1.0, max(-1.0, (a @ b) / (na * nb))))


def similarity_matrix(models, client_ids: Optional[Sequence[int]] = None) -> np.ndarray:
    """Symmetric matrix of pairwise cosine similarities with a unit diagonal."""
    W = as_model_matrix(models)
    norms = _kernels.row_norms(W)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        cid = int(zero[0]) if client_ids is None else int(client_ids[zero[0]])
        raise DegenerateModelError(f"client {cid} has a zero-norm model", client_id=cid)
    return _kernels.cosine_matrix(W, norms)


def quantile_threshold(S, p: float) -> float:
    """p-quantile of all ``n*n`` entries of ``S`` (diagonal included).

    Convention: sort ascending and take index ``ceil(p * n^2) - 1`` clamped
    to the valid range, so ``p=0`` gives the minimum and ``p=1`` the maximum.
    """
    if not 0.0 <= p <= 1.0:
        raise ContractViolation(f"p={p} outside [0, 1]")
    flat = np.sort(np.asarray(S, dtype=np.float64), axis=None)
    N = flat.size
    # the 1e-12 slack keeps e.g. 0.07 * 100 = 7.000000000000001 from rounding up
    k = math.ceil(p * N - 1e-12 * N) - 1
    return float(flat[min(max(k, 0), N - 1)])


def attention_matrix(S, delta: float, p: Optional[float] = None) -> AttentionWeights:
    """Row-normalized similarities over ``{i} U {j : s_ij > max(delta, 0)}``.

    Self is always kept, even when ``delta >= 1``; negative similarities
    never contribute.
    """
    S = np.ascontiguousarray(S, dtype=np.float64)
    return AttentionWeights(_kernels.attention_weights(S, float(delta)), float(delta), p)


def attention_aggregate(models, S, delta: float, p: Optional[float] = None):
    """Intermediate models ``u_i = sum_j a_ij w_j`` and the weights used."""
    W = as_model_matrix(models)
    if np.shape(S) != (W.shape[0], W.shape[0]):
        raise ContractViolation("similarity matrix does not match the number of models")
    att = attention_matrix(S, delta, p)
    return att.weights @ W, att


def relaxed_intermediates(models, att: AttentionWeights, alpha: float) -> np.ndarray:
    """Gradient-step form ``U = W - alpha * (W - A W)``, written as
    ``(1 - alpha) W + alpha A W`` so that ``alpha = 1`` reproduces
    ``attention_aggregate`` bit-for-bit."""
    W = as_model_matrix(models)
    return (1.0 - alpha) * W + alpha * (att.weights @ W)


def regularizer(models, S) -> float:
    """``sum_{i,j} s_ij ||w_i - w_j||^2`` over ordered pairs."""
    W = as_model_matrix(models)
    return float(_kernels.regularizer(W, np.ascontiguousarray(S, dtype=np.float64)))


def regularizer_grad(models, S, normalize_rows: bool = False) -> np.ndarray:
    """Column formula ``w_i - sum_j s_ij w_j`` with ``S`` held constant.

    This is the closed form used by the algorithm's server step, not the
    exact derivative of :func:`regularizer` (see :func:`regularizer_grad_exact`).
    """
    W = as_model_matrix(models)
    S = np.asarray(S, dtype=np.float64)
    if normalize_rows:
        S = S / S.sum(axis=1, keepdims=True)
    return W - S @ W


def regularizer_grad_exact(models, S) -> np.ndarray:
    """True gradient of :func:`regularizer` for a frozen ``S``:
    ``2 * sum_j (s_ij + s_ji) (w_i - w_j)``."""
    W = as_model_matrix(models)
    S = np.asarray(S, dtype=np.float64)
    M = S + S.T
    return 2.0 * (M.sum(axis=1)[:, None] * W - M @ W)
