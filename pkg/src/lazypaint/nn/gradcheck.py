"""Finite-difference gradient verification for the autodiff engine."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor


def grad_check(
    f: Callable[..., Tensor],
    inputs: Sequence[np.ndarray | Tensor],
    eps: float = 1e-3,
) -> float:
    """Compare backward() gradients of scalar-valued f against central finite
    differences and return the worst normalized error
    |analytic - numeric| / max(1, |analytic|, |numeric|) over all elements.

    Runs in float64: the given tensors are promoted in place and perturbed in
    place, so f may either use its arguments or close over the same Tensor
    objects (e.g. the parameters of a model already cast with astype).
    """
    xs: list[Tensor] = []
    for t in inputs:
        if not isinstance(t, Tensor):
            t = Tensor(np.asarray(t))
        t.data = t.data.astype(np.float64)
        t.requires_grad = True
        t.grad = None
        xs.append(t)

    out = f(*xs)
    if out.data.size != 1:
        raise ValueError("grad_check expects f to return a scalar")
    out.backward()
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in xs]

    worst = 0.0
    for x, a in zip(xs, analytic):
        flat = x.data.reshape(-1)
        num = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f(*xs).data)
            flat[i] = orig - eps
            lo = float(f(*xs).data)
            flat[i] = orig
            num[i] = (hi - lo) / (2.0 * eps)
        num = num.reshape(x.shape)
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(num)))
        err = float((np.abs(a - num) / denom).max()) if a.size else 0.0
        worst = max(worst, err)
    return worst
