"""Volumes and box annotations.

Coordinate convention used throughout the package: arrays are stored
``[z, y, x]`` (x fastest), while every dims/center/size/spacing tuple is
ordered ``(x, y, z)``. Voxel ``i`` covers ``[i, i + 1)`` so its center sits
at ``i + 0.5``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Volume:
    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ValueError(f"Volume data must be 3D [z, y, x], got shape {self.data.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    def copy(self) -> "Volume":
        return Volume(self.data.copy(), self.spacing)


@dataclass(frozen=True)
class BoxAnnotation:
    label: int
    center: tuple[float, float, float]
    size: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "size", tuple(float(s) for s in self.size))
        if any(s <= 0 for s in self.size):
            raise ValueError(f"box size must be positive on every axis, got {self.size}")

    @property
    def lower(self) -> tuple[float, float, float]:
        return tuple(c - s / 2 for c, s in zip(self.center, self.size))

    @property
    def upper(self) -> tuple[float, float, float]:
        return tuple(c + s / 2 for c, s in zip(self.center, self.size))

    def contains(self, point, tol: float = 0.0) -> bool:
        return all(lo - tol <= p <= hi + tol for p, lo, hi in zip(point, self.lower, self.upper))

    def within(self, dims) -> bool:
        return all(lo >= 0 and hi <= n for lo, hi, n in zip(self.lower, self.upper, dims))

    def overlaps(self, other: "BoxAnnotation") -> bool:
        return all(a_lo < b_hi and b_lo < a_hi for a_lo, a_hi, b_lo, b_hi
                   in zip(self.lower, self.upper, other.lower, other.upper))

    def shifted(self, offset) -> "BoxAnnotation":
        return BoxAnnotation(self.label, tuple(c + o for c, o in zip(self.center, offset)), self.size)
