"""Finite-difference checks for reverse-mode gradients."""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_errors(
    fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    eps: float = 1e-3,
    samples: int = 8,
    rng: np.random.Generator | None = None,
    floor: float = 1e-6,
) -> dict[str, float]:
    """Worst relative error per parameter between backprop and central differences.

    ``fn`` must be deterministic and return a scalar tensor. Up to ``samples``
    entries of each parameter are probed; pass float64 parameters for tight
    comparisons.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    for p in params.values():
        p.zero_grad()
    out = fn()
    if not np.isfinite(out.data).all():
        raise FloatingPointError("grad_check: non-finite value at the unperturbed point")
    out.backward()
    analytic = {name: p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
                for name, p in params.items()}

    worst: dict[str, float] = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        picks = np.arange(n) if n <= samples else rng.choice(n, size=samples, replace=False)
        err = 0.0
        for i in picks:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = fn().item()
            flat[i] = orig - eps
            f_minus = fn().item()
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise FloatingPointError(f"grad_check: non-finite value perturbing {name}[{int(i)}]")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = max(err, relative_error(float(analytic[name].reshape(-1)[i]), numeric, floor))
        worst[name] = err
    return worst


def grad_check(fn: Callable[[], Tensor], params: Mapping[str, Tensor], eps: float = 1e-3, **kwargs) -> float:
    """Maximum relative error over all probed parameter entries."""
    return max(grad_errors(fn, params, eps=eps, **kwargs).values())
