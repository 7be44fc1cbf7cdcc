"""Per-round step sizes for the server step (alpha) and the client step (beta).

``constant_theorem``  alpha_k = lambda / sqrt(K), beta_k = 1 / sqrt(K)
``diminishing``       alpha_k = a / (k + b),     beta_k = alpha_k / lambda
``fixed``             user-supplied constants
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractViolation

SCHEDULE_KINDS = ("constant_theorem", "diminishing", "fixed")


@dataclass(frozen=True)
class Schedule:
    kind: str = "fixed"
    value: Optional[float] = None
    a: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ContractViolation(f"unknown schedule kind {self.kind!r}")
        if self.kind == "fixed" and (self.value is None or self.value < 0):
            raise ContractViolation("fixed schedule needs a non-negative value")
        if self.kind == "diminishing" and (not self.a > 0 or self.b < 0):
            raise ContractViolation("diminishing schedule needs a > 0 and b >= 0")

    def step(self, k: int, K: int, lam: float, role: str) -> float:
        """Step size for round ``k`` (1-based) of ``K``; ``role`` is 'alpha' or 'beta'."""
        if self.kind == "fixed":
            return float(self.value)
        if self.kind == "constant_theorem":
            base = 1.0 / np.sqrt(K)
            return float(lam * base) if role == "alpha" else float(base)
        alpha = self.a / (k + self.b)
        return float(alpha) if role == "alpha" else float(alpha / lam)


def make_schedule(kind: str, K: int, lam: float, a: float = 1.0, b: float = 0.0,
                  alpha: Optional[float] = None, beta: Optional[float] = None):
    """Arrays ``(alphas, betas)`` of length ``K``; entry ``k-1`` is round ``k``.

    For ``fixed`` the constants come from ``alpha`` and ``beta``.
    """
    if K < 1:
        raise ContractViolation("K must be at least 1")
    if not lam > 0:
        raise ContractViolation("lambda must be positive")
    if kind == "fixed":
        if alpha is None or beta is None:
            raise ContractViolation("fixed schedule needs alpha and beta")
        sa, sb = Schedule("fixed", alpha), Schedule("fixed", beta)
    else:
        sa = sb = Schedule(kind, a=a, b=b)
    ks = range(1, K + 1)
    return (
        np.array([sa.step(k, K, lam, "alpha") for k in ks]),
        np.array([sb.step(k, K, lam, "beta") for k in ks]),
    )
