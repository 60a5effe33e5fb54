"""Box-field decoding and center-distance evaluation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .network import BoxField
from .volume import BoxAnnotation

DEFAULT_THRESHOLD = 0.1
AXIS_NAMES = ("Left-Right", "Anterior-Posterior", "Superior-Inferior")


@dataclass(frozen=True)
class Detection:
    label: int
    probability: float
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    cell: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    @property
    def center_mm(self) -> tuple[float, float, float]:
        return tuple(c * s for c, s in zip(self.center, self.spacing))

    @property
    def size_mm(self) -> tuple[float, float, float]:
        return tuple(c * s for c, s in zip(self.size, self.spacing))

    def as_box(self) -> BoxAnnotation:
        return BoxAnnotation(self.label, self.center, tuple(max(s, 1e-6) for s in self.size))


def decode(field: BoxField, threshold: float = DEFAULT_THRESHOLD,
           spacing=(1.0, 1.0, 1.0)) -> list[Detection]:
    """One detection per structure whose peak probability reaches ``threshold``."""
    detections = []
    rates = field.rates
    for label in range(field.structures):
        p = field.p(label)
        flat = int(np.argmax(p))  # first maximum in scan order
        k, j, i = np.unravel_index(flat, p.shape)
        p_max = float(p[k, j, i])
        if not p_max >= threshold:
            continue
        cell = (int(i), int(j), int(k))
        t = field.t(label)[:, k, j, i]
        s = field.s(label)[:, k, j, i]
        center = tuple((c + 0.5) * r - float(ta) * r for c, r, ta in zip(cell, rates, t))
        size = tuple(max(0.0, float(sa)) * r for sa, r in zip(s, rates))
        detections.append(Detection(label, p_max, center, size, cell, tuple(float(x) for x in spacing)))
    return detections


def peak_probability(field: BoxField, label: int = 0) -> float:
    return float(field.p(label).max())


@dataclass(frozen=True)
class ErrorStats:
    """Signed center errors (prediction minus truth, mm).

    Means are plain averages and standard deviations use the sample
    (``n - 1``) estimator; with fewer than two samples they are ``nan``.
    """

    axis_mean: tuple[float, float, float]
    axis_std: tuple[float, float, float]
    total_mean: float
    total_std: float
    failures: int
    count: int
    axis_errors: np.ndarray
    distances: np.ndarray

    def table(self, title: str = "") -> str:
        cols = [*AXIS_NAMES, "Total Distance"]
        width = max(len(c) for c in cols) + 2
        lines = []
        if title:
            lines.append(title)
        lines.append(" " * 6 + "".join(c.rjust(width) for c in cols))
        lines.append(" " * 6 + "".join("mm".rjust(width) for _ in cols))
        if self.count - self.failures > 0:
            lines.append("mu".ljust(6) + "".join(f"{v:.2f}".rjust(width) for v in (*self.axis_mean, self.total_mean)))
            lines.append("sigma".ljust(6) + "".join(f"{v:.2f}".rjust(width) for v in (*self.axis_std, self.total_std)))
        lines.append(f"detected {self.count - self.failures}/{self.count}, failures {self.failures}")
        return "\n".join(lines)


def _std(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if len(x) > 1 else float("nan")


def evaluate(results: Sequence[tuple[Detection | None, BoxAnnotation]], spacing=(1.0, 1.0, 1.0)) -> ErrorStats:
    """Center-distance statistics over a test set.

    Each entry pairs the detection for one volume (``None`` when nothing was
    detected) with its ground-truth box. Missing detections count as failures
    and are left out of the distance averages.
    """
    if not results:
        raise ValueError("evaluate: empty test set")
    spacing = np.asarray(spacing, dtype=np.float64)
    errors = []
    failures = 0
    for det, truth in results:
        if det is None:
            failures += 1
            continue
        errors.append((np.asarray(det.center) - np.asarray(truth.center)) * spacing)
    axis_errors = np.asarray(errors, dtype=np.float64).reshape(-1, 3)
    distances = np.linalg.norm(axis_errors, axis=1)
    if len(axis_errors):
        axis_mean = tuple(float(v) for v in axis_errors.mean(axis=0))
        total_mean = float(distances.mean())
    else:
        axis_mean = (float("nan"),) * 3
        total_mean = float("nan")
    axis_std = tuple(_std(axis_errors[:, a]) for a in range(3))
    return ErrorStats(axis_mean, axis_std, total_mean, _std(distances), failures, len(results),
                      axis_errors, distances)
