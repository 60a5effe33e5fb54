"""Synthetic spine-like phantoms.

A column of near-identical ellipsoidal blobs is stacked along z (inferior
first) inside a soft-tissue cylinder. Blobs above the target ordinal carry a
pair of rib-like bars, so the target is recognisable only as the top
rib-free blob: its own appearance matches every other blob.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .targets import box_from_mask
from .volume import BoxAnnotation, Volume


@dataclass
class PhantomConfig:
    dims: tuple[int, int, int] = (64, 64, 48)
    spacing: tuple[float, float, float] = (1.0, 1.0, 2.0)
    n_blobs: int = 6
    blob_radii: tuple[float, float, float] = (10.0, 8.0, 2.5)
    gap: float = 1.5
    target_ordinal: int = 3
    background: float = 0.0
    body: float = 0.25
    blob: float = 1.0
    rib: float = 0.9
    rib_length: float = 10.0
    rib_half_thickness: float = 1.5
    # per-blob perturbations
    center_jitter: float = 1.0
    radius_jitter: float = 0.06
    intensity_jitter: float = 0.04
    pitch_jitter: float = 0.3
    # whole-column placement range in x/y (z placement uses the free slack)
    column_shift: float = 4.0

    @property
    def pitch(self) -> float:
        return 2 * self.blob_radii[2] + self.gap

    def validate(self) -> None:
        nx, ny, nz = self.dims
        rx, ry, rz = self.blob_radii
        if not 1 <= self.target_ordinal <= self.n_blobs:
            raise ValueError(f"target ordinal {self.target_ordinal} outside [1, {self.n_blobs}]")
        if self.gap - 2 * self.pitch_jitter - 2 * rz * self.radius_jitter <= 0:
            raise ValueError("blob gap too small for the configured jitter: neighbours could touch")
        column = self.n_blobs * self.pitch + 2 * self.pitch_jitter
        if column > nz:
            raise ValueError(f"{self.n_blobs} blobs of pitch {self.pitch} overflow {nz} slices")
        half_w = rx * (1 + self.radius_jitter) + self.center_jitter + self.column_shift
        if self.target_ordinal < self.n_blobs:
            half_w += self.rib_length
        if 2 * half_w > nx or 2 * (ry * (1 + self.radius_jitter) + self.center_jitter + self.column_shift) > ny:
            raise ValueError("blobs overflow the in-plane extent of the volume")


@dataclass(frozen=True)
class Blob:
    center: tuple[float, float, float]
    radii: tuple[float, float, float]
    intensity: float
    ribs: bool


@dataclass
class Phantom:
    volume: Volume
    mask: np.ndarray
    box: BoxAnnotation
    blobs: list[Blob] = field(default_factory=list)

    def blob_boxes(self) -> list[BoxAnnotation]:
        """Mask-derived box of every blob, inferior first."""
        return [box_from_mask(_ellipsoid(self.mask.shape, b.center, b.radii), 0) for b in self.blobs]


def _grid(shape):
    nz, ny, nx = shape
    return (np.arange(nz)[:, None, None] + 0.5,
            np.arange(ny)[None, :, None] + 0.5,
            np.arange(nx)[None, None, :] + 0.5)


def _ellipsoid(shape, center, radii) -> np.ndarray:
    z, y, x = _grid(shape)
    cx, cy, cz = center
    rx, ry, rz = radii
    return ((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 + ((z - cz) / rz) ** 2 <= 1.0


def gen_phantom(config: PhantomConfig, rng: np.random.Generator) -> Phantom:
    """Noise-free phantom, the target blob's mask and its box (label 0)."""
    config.validate()
    nx, ny, nz = config.dims
    shape = (nz, ny, nx)
    data = np.full(shape, config.background, dtype=np.float32)

    z, y, x = _grid(shape)
    body = ((x - nx / 2) / (0.45 * nx)) ** 2 + ((y - ny / 2) / (0.4 * ny)) ** 2 <= 1.0
    data[np.broadcast_to(body, shape)] = config.body

    cx0 = nx / 2 + rng.uniform(-config.column_shift, config.column_shift)
    cy0 = ny / 2 + rng.uniform(-config.column_shift, config.column_shift)
    slack = nz - config.n_blobs * config.pitch - 2 * config.pitch_jitter
    z0 = config.pitch_jitter + rng.uniform(0.0, slack)

    blobs = []
    target_mask = None
    for k in range(config.n_blobs):
        center = (
            cx0 + rng.uniform(-config.center_jitter, config.center_jitter),
            cy0 + rng.uniform(-config.center_jitter, config.center_jitter),
            z0 + config.pitch * (k + 0.5) + rng.uniform(-config.pitch_jitter, config.pitch_jitter),
        )
        radii = tuple(r * (1 + rng.uniform(-config.radius_jitter, config.radius_jitter))
                      for r in config.blob_radii)
        level = config.blob * (1 + rng.uniform(-config.intensity_jitter, config.intensity_jitter))
        ribs = k + 1 > config.target_ordinal
        blob = Blob(center, radii, level, ribs)
        blobs.append(blob)
        inside = _ellipsoid(shape, center, radii)
        data[inside] = level
        if ribs:
            bx, by, bz = center
            in_z = np.abs(z - bz) <= max(radii[2] * 0.5, 1.0)
            in_y = np.abs(y - (by + 0.3 * radii[1])) <= config.rib_half_thickness
            ax = np.abs(x - bx)
            in_x = (ax >= radii[0] - 1.0) & (ax <= radii[0] + config.rib_length)
            bars = in_z & in_y & in_x & ~inside
            data[bars] = config.rib
        if k + 1 == config.target_ordinal:
            target_mask = inside
    mask = target_mask.astype(np.uint8)
    return Phantom(Volume(data, config.spacing), mask, box_from_mask(mask, 0), blobs)


@dataclass(frozen=True)
class NoiseModel:
    """CT-like models add Gaussian noise only; CBCT-like models add cupping
    shading and streak lines as well."""

    kind: Literal["ct", "cbct"] = "ct"
    sigma: float = 0.0
    shading: float = 0.0
    streak_amplitude: float = 0.0
    streak_count: int = 0

    def __post_init__(self):
        if self.kind not in ("ct", "cbct"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if min(self.sigma, self.shading, self.streak_amplitude, self.streak_count) < 0:
            raise ValueError("noise amplitudes must be non-negative")

    @classmethod
    def ct(cls, sigma: float = 0.05) -> "NoiseModel":
        return cls("ct", sigma)

    @classmethod
    def cbct(cls, sigma: float = 0.12, shading: float = 0.2, streak_amplitude: float = 0.3,
             streak_count: int = 6) -> "NoiseModel":
        return cls("cbct", sigma, shading, streak_amplitude, streak_count)


def apply_noise(volume: Volume, model: NoiseModel, rng: np.random.Generator) -> Volume:
    data = volume.data.astype(np.float64)
    nz, ny, nx = data.shape
    if model.kind == "cbct" and model.shading > 0:
        y = (np.arange(ny)[:, None] + 0.5 - ny / 2) / (ny / 2)
        x = (np.arange(nx)[None, :] + 0.5 - nx / 2) / (nx / 2)
        r2 = np.clip((x ** 2 + y ** 2) / 2, 0, 1)
        data = data * (1.0 - model.shading * (1.0 - r2))[None]
    if model.kind == "cbct" and model.streak_count > 0 and model.streak_amplitude > 0:
        yy, xx = np.meshgrid(np.arange(ny) + 0.5, np.arange(nx) + 0.5, indexing="ij")
        for _ in range(model.streak_count):
            theta = rng.uniform(0, np.pi)
            px, py = nx / 2 + rng.normal(0, nx / 8), ny / 2 + rng.normal(0, ny / 8)
            dist = np.abs((xx - px) * np.sin(theta) - (yy - py) * np.cos(theta))
            line = model.streak_amplitude * rng.choice([-1.0, 1.0]) * np.exp(-0.5 * dist ** 2)
            z_lo = int(rng.integers(0, nz))
            z_hi = min(nz, z_lo + int(rng.integers(2, 9)))
            data[z_lo:z_hi] += line[None]
    if model.sigma > 0:
        data = data + rng.normal(0.0, model.sigma, size=data.shape)
    return Volume(data.astype(np.float32), volume.spacing)


def make_dataset(config: PhantomConfig, count: int, seed: int,
                 noise: NoiseModel | None = None) -> list[Phantom]:
    """``count`` phantoms; case ``i`` depends only on ``(config, seed, i)``."""
    cases = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        ph = gen_phantom(config, rng)
        if noise is not None:
            ph = replace(ph, volume=apply_noise(ph.volume, noise, rng))
        cases.append(ph)
    return cases
