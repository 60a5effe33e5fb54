"""Ground-truth box fields built from annotations."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .network import BOX_PARAMS, BoxField
from .volume import BoxAnnotation, Volume


def cell_centers(n: int, rate: int) -> np.ndarray:
    """Fine-voxel coordinate of each grid cell center."""
    return (np.arange(n) + 0.5) * rate


def make_target(boxes: Sequence[BoxAnnotation], grid_dims, rates, structures: int | None = None) -> BoxField:
    """Build the (p, t, s) target field for at most one box per label.

    Inside box ``b`` a cell with center ``g`` gets
    ``p = prod_a max(0, 1 - 2|g_a - c_a| / size_a)``, ``t = (g - c) / r`` and
    ``s = size / r``; every channel is zero outside.
    """
    grid_dims = tuple(int(m) for m in grid_dims)
    rates = tuple(int(r) for r in rates)
    if structures is None:
        structures = max((b.label for b in boxes), default=-1) + 1
        structures = max(structures, 1)
    seen: dict[int, BoxAnnotation] = {}
    for b in boxes:
        if not 0 <= b.label < structures:
            raise ValueError(f"box label {b.label} outside [0, {structures})")
        if b.label in seen:
            kind = "overlapping" if seen[b.label].overlaps(b) else "multiple"
            raise ValueError(f"{kind} boxes with label {b.label}: ambiguous target")
        seen[b.label] = b

    mx, my, mz = grid_dims
    out = np.zeros((BOX_PARAMS * structures, mz, my, mx), dtype=np.float32)
    for b in boxes:
        inside = []
        factor = []
        offset = []
        for n, r, c, s in zip(grid_dims, rates, b.center, b.size):
            d = cell_centers(n, r) - c
            inside.append(np.abs(d) <= s / 2)
            factor.append(np.maximum(0.0, 1.0 - 2.0 * np.abs(d) / s))
            offset.append(d / r)
        mask = inside[2][:, None, None] & inside[1][None, :, None] & inside[0][None, None, :]
        base = BOX_PARAMS * b.label
        out[base] = factor[2][:, None, None] * factor[1][None, :, None] * factor[0][None, None, :] * mask
        out[base + 1] = offset[0][None, None, :] * mask
        out[base + 2] = offset[1][None, :, None] * mask
        out[base + 3] = offset[2][:, None, None] * mask
        for a, (s, r) in enumerate(zip(b.size, rates)):
            out[base + 4 + a] = (s / r) * mask
    return BoxField(out, rates)


def box_from_mask(mask, label: int = 0) -> BoxAnnotation:
    """Tight bounding box of the foreground of a ``[z, y, x]`` mask."""
    data = mask.data if isinstance(mask, Volume) else np.asarray(mask)
    nz = np.nonzero(data)
    if len(nz[0]) == 0:
        raise ValueError("no structure: mask has no foreground voxels")
    lo = [int(a.min()) for a in reversed(nz)]
    hi = [int(a.max()) for a in reversed(nz)]
    center = tuple((l + h + 1) / 2 for l, h in zip(lo, hi))
    size = tuple(h - l + 1 for l, h in zip(lo, hi))
    return BoxAnnotation(label, center, size)
