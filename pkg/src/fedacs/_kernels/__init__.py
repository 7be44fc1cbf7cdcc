"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is picked once at import time. Set ``FEDACS_NUMBA=0`` to force
the numpy path; numba is also skipped automatically when it is not
importable. Both kernel modules stay importable for parity tests and the
benchmark.
"""

import os

from . import _numpy as numpy_kernels

_FLAG = os.environ.get("FEDACS_NUMBA", "1").strip().lower()

numba_kernels = None
if _FLAG not in ("0", "false", "no", "off"):
    try:
        from . import _numba as numba_kernels
    except ImportError:  # pragma: no cover - numba missing
        numba_kernels = None

_impl = numba_kernels if numba_kernels is not None else numpy_kernels
BACKEND = "numba" if _impl is numba_kernels else "numpy"

mean_xent = _impl.mean_xent
linear_logits = _impl.linear_logits
linear_loss_grad = _impl.linear_loss_grad
mlp_logits = _impl.mlp_logits
mlp_loss_grad = _impl.mlp_loss_grad
quadratic_loss_grad = _impl.quadratic_loss_grad
row_norms = _impl.row_norms
cosine_matrix = _impl.cosine_matrix
attention_weights = _impl.attention_weights
regularizer = _impl.regularizer

__all__ = [
    "BACKEND",
    "numpy_kernels",
    "numba_kernels",
    "mean_xent",
    "linear_logits",
    "linear_loss_grad",
    "mlp_logits",
    "mlp_loss_grad",
    "quadratic_loss_grad",
    "row_norms",
    "cosine_matrix",
    "attention_weights",
    "regularizer",
]
