"""Hot numeric kernels with an optional compiled fast path.

The Cython extension ``lazypaint._fastcore`` accelerates the no-grad
attention forward and the masked-Laplacian stencil used by the Poisson
solver. Fallbacks are plain numpy and produce the same values within float
tolerance. ``LAZYPAINT_BACKEND`` = auto|numpy|compiled picks at import.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from . import _fastcore  # type: ignore[attr-defined]

    _HAVE_COMPILED = True
except ImportError:
    _fastcore = None
    _HAVE_COMPILED = False

_mode = os.environ.get("LAZYPAINT_BACKEND", "auto").lower()
if _mode not in ("auto", "numpy", "compiled"):
    raise ValueError(f"LAZYPAINT_BACKEND must be auto|numpy|compiled, got {_mode!r}")
if _mode == "compiled" and not _HAVE_COMPILED:
    raise ImportError("LAZYPAINT_BACKEND=compiled but lazypaint._fastcore is not built")

BACKEND = "compiled" if (_HAVE_COMPILED and _mode != "numpy") else "numpy"


def backend_name() -> str:
    return BACKEND


def attention_numpy(q: np.ndarray, k: np.ndarray, v: np.ndarray, scale: float) -> np.ndarray:
    """softmax(q k^T * scale) v over the last two axes, max-shifted."""
    s = np.matmul(q, k.swapaxes(-1, -2)) * scale
    s -= s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    e /= e.sum(axis=-1, keepdims=True)
    return np.matmul(e, v)


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, scale: float) -> np.ndarray:
    """Batched single-head attention on (..., n, dh) float arrays.

    Inference path only; gradients never flow through this function.
    """
    if BACKEND == "compiled" and q.dtype == np.float32 and q.ndim >= 2:
        lead = q.shape[:-2]
        q3 = np.ascontiguousarray(q.reshape((-1,) + q.shape[-2:]))
        k3 = np.ascontiguousarray(k.reshape((-1,) + k.shape[-2:]))
        v3 = np.ascontiguousarray(v.reshape((-1,) + v.shape[-2:]))
        out = _fastcore.attn_forward(q3, k3, v3, float(scale))
        return out.reshape(lead + out.shape[-2:])
    return attention_numpy(q, k, v, scale)


def laplacian_apply_numpy(x: np.ndarray, nbr: np.ndarray, deg: np.ndarray) -> np.ndarray:
    """y[i] = deg[i] * x[i] - sum_j x[nbr[i, j]] with nbr < 0 meaning absent."""
    vals = x[np.clip(nbr, 0, x.size - 1)]
    vals[nbr < 0] = 0.0
    return deg * x - vals.sum(axis=1)


def laplacian_apply(x: np.ndarray, nbr: np.ndarray, deg: np.ndarray) -> np.ndarray:
    if BACKEND == "compiled" and x.dtype == np.float64:
        return _fastcore.laplacian_apply(
            np.ascontiguousarray(x),
            np.ascontiguousarray(nbr, dtype=np.int64),
            np.ascontiguousarray(deg),
        )
    return laplacian_apply_numpy(x, nbr, deg)
