"""Slice-wise elastic deformation.

A 3x3 lattice of Gaussian displacement vectors (corners, edge midpoints and
center of the axial slice) is interpolated to every pixel with a cubic
spline; the resulting in-plane field warps every z-slice identically.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from .volume import Volume

CONTROL_POINTS = 3
DEFAULT_SIGMA = (10.0, 10.0)
DEFAULT_COUNT = 25


@dataclass
class DisplacementField:
    """In-plane displacements; ``dense[0]`` is dx and ``dense[1]`` is dy, each ``(ny, nx)``."""

    control: np.ndarray  # (2, 3, 3), same component order
    dense: np.ndarray

    @property
    def slice_dims(self) -> tuple[int, int]:
        return (self.dense.shape[2], self.dense.shape[1])


def derive_seed(base: int, index: int) -> int:
    return int(base) ^ int(index)


def sample_field(rng: np.random.Generator, slice_dims, sigma=DEFAULT_SIGMA) -> DisplacementField:
    """Draw control displacements and interpolate them to pixel level.

    ``slice_dims`` is ``(nx, ny)``; ``sigma`` is ``(sigma_x, sigma_y)`` in pixels.
    """
    nx, ny = (int(n) for n in slice_dims)
    if nx < CONTROL_POINTS or ny < CONTROL_POINTS:
        raise ValueError(f"slice dims {slice_dims} smaller than the {CONTROL_POINTS}x{CONTROL_POINTS} control grid")
    sigma = np.asarray(sigma, dtype=np.float64).reshape(2, 1, 1)
    control = rng.standard_normal((2, CONTROL_POINTS, CONTROL_POINTS)) * sigma
    # pixel centers of the first/last row map onto the outer control points
    gy = np.linspace(0, CONTROL_POINTS - 1, ny)
    gx = np.linspace(0, CONTROL_POINTS - 1, nx)
    yy, xx = np.meshgrid(gy, gx, indexing="ij")
    dense = np.stack([
        map_coordinates(control[c], [yy, xx], order=3, mode="mirror") for c in range(2)
    ])
    return DisplacementField(control, dense)


def _sampling_grid(field: DisplacementField) -> list[np.ndarray]:
    ny, nx = field.dense.shape[1:]
    yy, xx = np.meshgrid(np.arange(ny, dtype=np.float64), np.arange(nx, dtype=np.float64), indexing="ij")
    # output(p) = input(p - d): content moves by +d
    return [yy - field.dense[1], xx - field.dense[0]]


def deform_volume(volume, field: DisplacementField, interpolation: str = "spline"):
    """Warp every axial slice of ``volume`` by the same in-plane field.

    ``interpolation`` is ``"spline"`` (cubic, for images) or ``"nearest"``
    (for masks). Samples falling outside the slice take the border value.
    Accepts a :class:`Volume` or a ``[z, y, x]`` array and returns the same kind.
    """
    order = {"spline": 3, "nearest": 0}.get(interpolation)
    if order is None:
        raise ValueError(f"unknown interpolation {interpolation!r}; use 'spline' or 'nearest'")
    data = volume.data if isinstance(volume, Volume) else np.asarray(volume)
    if data.shape[1:] != field.dense.shape[1:]:
        raise ValueError(f"field slice shape {field.dense.shape[1:]} does not match volume slices {data.shape[1:]}")
    coords = _sampling_grid(field)
    src = data.astype(np.float64) if order else data
    out = np.empty_like(data)
    for z in range(data.shape[0]):
        out[z] = map_coordinates(src[z], coords, order=order, mode="nearest")
    if isinstance(volume, Volume):
        return Volume(out, volume.spacing)
    return out


def augment_dataset(volume: Volume, masks, seed: int, count: int = DEFAULT_COUNT,
                    sigma=DEFAULT_SIGMA) -> list[tuple[Volume, list[np.ndarray]]]:
    """``count`` independently deformed copies of ``volume`` and its masks.

    Copy ``i`` draws its field from seed ``seed ^ i`` so results do not depend
    on the order in which copies are produced.
    """
    masks = list(masks)
    for m in masks:
        if np.shape(m) != volume.data.shape:
            raise ValueError(f"mask shape {np.shape(m)} does not match volume {volume.data.shape}")
    out = []
    for i in range(count):
        rng = np.random.default_rng(derive_seed(seed, i))
        field = sample_field(rng, (volume.dims[0], volume.dims[1]), sigma)
        warped = deform_volume(volume, field, "spline")
        warped_masks = [deform_volume(np.asarray(m), field, "nearest") for m in masks]
        out.append((warped, warped_masks))
    return out
