"""Target fields for one box, and decoding them back into a box.

Run: python3 demos/03_targets_and_decoding.py
"""
import numpy as np

from rdn3d.detector import decode
from rdn3d.targets import make_target
from rdn3d.volume import BoxAnnotation

grid, rates = (8, 8, 12), (8, 8, 4)
box = BoxAnnotation(0, center=(30.0, 26.0, 21.5), size=(20.0, 16.0, 5.0))
target = make_target([box], grid, rates)

p = target.p()  # (z, y, x)
inside = np.argwhere(p > 0)
print("box", box)
print("cells with p > 0:", len(inside))
for z, y, x in inside:
    tx, ty, tz = target.t()[:, z, y, x]
    print(f"  cell x={x} y={y} z={z}  p={p[z, y, x]:.3f}  t=({tx:+.3f}, {ty:+.3f}, {tz:+.3f})")
print("size channel inside:", target.s()[:, inside[0][0], inside[0][1], inside[0][2]])

(det,) = decode(target, threshold=0.0, spacing=(1.0, 1.0, 2.0))
print("\ndecoded center", det.center, "size", det.size)
print("decoded center in mm", det.center_mm)
