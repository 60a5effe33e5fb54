"""Slice-wise elastic deformation of a phantom and its mask.

Run: python3 demos/05_elastic_augmentation.py
"""
import numpy as np

from rdn3d.augment import augment_dataset, sample_field
from rdn3d.phantom import PhantomConfig, gen_phantom
from rdn3d.targets import box_from_mask

ph = gen_phantom(PhantomConfig(), np.random.default_rng(1))
field = sample_field(np.random.default_rng(2), (64, 64))
print("control displacements (px), dx then dy:")
print(np.round(field.control, 2))
print("dense field max |d|:", float(np.abs(field.dense).max()))

print("\noriginal target box", ph.box)
for i, (vol, (mask,)) in enumerate(augment_dataset(ph.volume, [ph.mask], seed=7, count=5)):
    box = box_from_mask(mask)
    print(f"copy {i}: mask voxels {int(mask.sum()):5d} (was {int(ph.mask.sum())}),"
          f" center {tuple(round(c, 1) for c in box.center)}, size {box.size}")
