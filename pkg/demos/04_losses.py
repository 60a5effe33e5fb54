"""The three normalized losses on a target field and a few perturbations of it.

Run: python3 demos/04_losses.py
"""
import numpy as np

from rdn3d.core import Tensor
from rdn3d.losses import loss_total
from rdn3d.network import BoxField
from rdn3d.targets import make_target
from rdn3d.volume import BoxAnnotation

grid, rates = (8, 8, 12), (8, 8, 4)
target = make_target([BoxAnnotation(0, (30.0, 26.0, 21.5), (20.0, 16.0, 5.0))], grid, rates)
rng = np.random.default_rng(0)


def report(name, values):
    _, rep = loss_total(BoxField(Tensor(values), rates), target)
    print(f"{name:28s} {rep.log_line(0)}")


v = target.values.data
report("perfect prediction", v.copy())
report("all zeros", np.zeros_like(v))
noisy = v + 0.05 * rng.standard_normal(v.shape).astype(np.float32)
noisy[0] = np.clip(noisy[0], 0, 1)
report("small noise everywhere", noisy)
shifted = np.roll(v, 1, axis=3)  # one cell along x
report("shifted one cell in x", shifted)
report("uniform p=0.125", np.concatenate([np.full_like(v[:1], 0.125), np.zeros_like(v[1:])]))
