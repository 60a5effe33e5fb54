"""Reverse-mode gradients of a small 3D conv stack, checked against finite differences.

Run: python3 demos/01_autodiff_and_gradcheck.py
"""
import numpy as np

from rdn3d.core import Tensor, conv3d, grad_errors, maxpool3d, relu, sigmoid, tensor_sum, upsample3d_nearest

rng = np.random.default_rng(0)

# A single-channel 8x8x8 volume and two conv layers, all float64 so the
# finite differences are meaningful at eps=1e-6.
x = Tensor(rng.standard_normal((1, 8, 8, 8)), dtype=np.float64)
params = {
    "w1": Tensor(0.3 * rng.standard_normal((4, 1, 3, 3, 3)), requires_grad=True, dtype=np.float64),
    "b1": Tensor(np.zeros(4), requires_grad=True, dtype=np.float64),
    "w2": Tensor(0.3 * rng.standard_normal((2, 4, 3, 3, 3)), requires_grad=True, dtype=np.float64),
}


def forward():
    h = relu(conv3d(x, params["w1"], params["b1"]))
    h = upsample3d_nearest(maxpool3d(h, (2, 2, 2)), (2, 2, 2))
    return tensor_sum(sigmoid(conv3d(h, params["w2"])))


loss = forward()
loss.backward()
print("loss", loss.item())
for name, p in params.items():
    print(f"  grad {name}: shape {p.grad.shape}, |g| = {np.abs(p.grad).sum():.4f}")

errs = grad_errors(forward, params, eps=1e-6, samples=6, rng=rng)
for name, e in errs.items():
    print(f"  worst relative error {name}: {e:.2e}")
