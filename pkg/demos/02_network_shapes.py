"""Shape propagation through the feature and detection networks.

The first configuration is the full-size one (416x288x128 input, k=64); no
weights are allocated. The second is the desk model used by the phantom demo,
which is built and run once.

Run: python3 demos/02_network_shapes.py
"""
import numpy as np

from rdn3d.network import NetworkConfig, build_model, infer_shapes, model_forward
from rdn3d.volume import Volume

full = NetworkConfig(input_dims=(416, 288, 128), feature_channels=64)
print("full-size config: grid", full.grid_dims, "rates", full.rates)
for name, shape in infer_shapes(full).items():
    print(f"  {name:12s} {shape}")

desk = NetworkConfig(input_dims=(64, 64, 48), base_channels=4, feature_channels=32, branch_channels=16)
params = build_model(desk, np.random.default_rng(0))
print("\ndesk config: grid", desk.grid_dims, "rates", desk.rates, "parameters", params.count())
print("  detection head parameters:", params.count("rdn."))
field = model_forward(params, Volume(np.zeros((48, 64, 64), np.float32), (1, 1, 2)))
print("  box field", field.values.shape, "p range", float(field.p().min()), float(field.p().max()))
