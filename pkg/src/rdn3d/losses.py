"""Normalized discrepancy losses between a predicted and a target box field."""
from __future__ import annotations

from dataclasses import dataclass

from .core import Tensor, square, sub, tensor_sum, vector_norm
from .network import BoxField

EPS = 1e-8


@dataclass(frozen=True)
class LossReport:
    L_p: float
    L_c: float
    L_s: float
    L_total: float

    def log_line(self, step: int) -> str:
        return (f"step={step} L_p={self.L_p:.8g} L_c={self.L_c:.8g} "
                f"L_s={self.L_s:.8g} L_total={self.L_total:.8g}")


def _check(a: Tensor, b: Tensor, name: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{name}: shape mismatch {a.shape} vs {b.shape}")


def loss_p(p: Tensor, p_hat: Tensor) -> Tensor:
    """``1 - 2 sum(p p_hat) / sum(p^2 + p_hat^2)``.

    Evaluated as ``sum((p - p_hat)^2) / (sum(p^2 + p_hat^2) + eps)``, which is
    the same quantity but stays at 0 when both fields vanish.
    """
    _check(p, p_hat, "loss_p")
    num = tensor_sum(square(sub(p, p_hat)))
    den = tensor_sum(square(p)) + tensor_sum(square(p_hat)) + EPS
    return num / den


def loss_vector(v: Tensor, v_hat: Tensor, name: str = "loss_vector") -> Tensor:
    """``sum ||v - v_hat|| / (sum ||v|| + ||v_hat||)`` over cells and structures.

    ``v`` holds 3-vectors along axis 0, grouped per structure:
    shape ``(3l, Mz, My, Mx)``.
    """
    _check(v, v_hat, name)
    if v.shape[0] % 3:
        raise ValueError(f"{name}: channel count {v.shape[0]} is not a multiple of 3")
    shape = (v.shape[0] // 3, 3) + v.shape[1:]
    v = _reshape(v, shape)
    v_hat = _reshape(v_hat, shape)
    num = tensor_sum(vector_norm(sub(v, v_hat), axis=1))
    den = tensor_sum(vector_norm(v, axis=1)) + tensor_sum(vector_norm(v_hat, axis=1)) + EPS
    return num / den


def loss_c(t: Tensor, t_hat: Tensor) -> Tensor:
    return loss_vector(t, t_hat, "loss_c")


def loss_s(s: Tensor, s_hat: Tensor) -> Tensor:
    return loss_vector(s, s_hat, "loss_s")


def _reshape(x: Tensor, shape) -> Tensor:
    return Tensor._result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def loss_terms(output: BoxField, target: BoxField) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Differentiable ``(L_p, L_c, L_s, L_total)``."""
    if output.values.shape != target.values.shape:
        raise ValueError(f"loss: field shape mismatch {output.values.shape} vs {target.values.shape}")
    lp = loss_p(output.select([0]), target.select([0]))
    lc = loss_c(output.select([1, 2, 3]), target.select([1, 2, 3]))
    ls = loss_s(output.select([4, 5, 6]), target.select([4, 5, 6]))
    return lp, lc, ls, lp + lc + ls


def loss_total(output: BoxField, target: BoxField) -> tuple[Tensor, LossReport]:
    lp, lc, ls, total = loss_terms(output, target)
    report = LossReport(lp.item(), lc.item(), ls.item(), lp.item() + lc.item() + ls.item())
    return total, report
