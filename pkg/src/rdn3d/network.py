"""Feature extraction network (a 3D U-Net with a shortened up-path) and the
region detection head that turns its features into a box field."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field, asdict
from math import prod

import numpy as np

from .core import Tensor, concat_channels, conv3d, dropout, maxpool3d, multiply, relu, sigmoid
from .core import take_channels, upsample3d_nearest
from .volume import Volume

BOX_PARAMS = 7  # p, t_x, t_y, t_z, s_x, s_y, s_z


def _zyx_to_xyz(t):
    return (t[2], t[1], t[0])


@dataclass
class NetworkConfig:
    """Architecture hyper-parameters.

    ``input_dims`` is ``(x, y, z)``; pool and up-sampling factors are given in
    array order ``(z, y, x)``, so the anisotropic first pool ``(1, 2, 2)``
    leaves z untouched. ``structure_size`` (voxels, ``(x, y, z)``) is optional;
    when set, the config is rejected unless the structure spans at least three
    cells per axis at the detection grid.
    """

    input_dims: tuple[int, int, int] = (416, 288, 128)
    base_channels: int = 16
    pool_sizes: tuple[tuple[int, int, int], ...] = ((1, 2, 2), (2, 2, 2), (2, 2, 2), (2, 2, 2))
    up_factors: tuple[tuple[int, int, int], ...] = ((2, 2, 2),)
    feature_channels: int = 64
    structures: int = 1
    branch_channels: int = 32
    dropout_rate: float = 0.2
    structure_size: tuple[float, float, float] | None = None

    def __post_init__(self):
        self.input_dims = tuple(int(n) for n in self.input_dims)
        self.pool_sizes = tuple(tuple(int(p) for p in ps) for ps in self.pool_sizes)
        self.up_factors = tuple(tuple(int(f) for f in fs) for fs in self.up_factors)
        if self.structure_size is not None:
            self.structure_size = tuple(float(s) for s in self.structure_size)

    @property
    def levels(self) -> int:
        return len(self.pool_sizes)

    @property
    def up_blocks(self) -> int:
        return len(self.up_factors)

    @property
    def total_pool(self) -> tuple[int, int, int]:
        """Cumulative pooling, ``(x, y, z)``."""
        return _zyx_to_xyz(tuple(prod(p[a] for p in self.pool_sizes) for a in range(3)))

    @property
    def rates(self) -> tuple[int, int, int]:
        """Fine voxels per detection-grid cell, ``(x, y, z)``."""
        up = _zyx_to_xyz(tuple(prod(f[a] for f in self.up_factors) for a in range(3)))
        return tuple(p // u for p, u in zip(self.total_pool, up))

    @property
    def grid_dims(self) -> tuple[int, int, int]:
        return tuple(n // r for n, r in zip(self.input_dims, self.rates))

    def level_channels(self, level: int) -> int:
        return self.base_channels * 2 ** level

    def validate(self) -> None:
        problems = []
        if self.levels < 1:
            problems.append("at least one down level is required")
        if self.up_blocks > self.levels:
            problems.append(f"{self.up_blocks} up blocks exceed {self.levels} down levels")
        for name, v in (("base_channels", self.base_channels), ("feature_channels", self.feature_channels),
                        ("structures", self.structures), ("branch_channels", self.branch_channels)):
            if v < 1:
                problems.append(f"{name} must be positive, got {v}")
        if not 0.0 <= self.dropout_rate < 1.0:
            problems.append(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        for j, f in enumerate(self.up_factors):
            skip_pool = self.pool_sizes[self.levels - 1 - j] if j < self.levels else None
            if f != skip_pool:
                problems.append(f"up block {j} factor {f} must undo pool {skip_pool} of its skip level")
        up = _zyx_to_xyz(tuple(prod(f[a] for f in self.up_factors) for a in range(3)))
        for axis, n, p, u in zip("xyz", self.input_dims, self.total_pool, up):
            if p % u:
                problems.append(f"axis {axis}: pooling {p} is not a multiple of up-sampling {u}")
            if n % p:
                problems.append(f"axis {axis}: input extent {n} is not divisible by cumulative pooling {p}")
        if self.structure_size is not None and not problems:
            for axis, s, r in zip("xyz", self.structure_size, self.rates):
                if s / r < 3:
                    problems.append(f"axis {axis}: structure of {s} voxels spans {s / r:.2f} < 3 grid cells")
        if problems:
            raise ValueError("invalid NetworkConfig: " + "; ".join(problems))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pool_sizes"] = [list(p) for p in self.pool_sizes]
        d["up_factors"] = [list(f) for f in self.up_factors]
        return d


@dataclass
class ModelParams:
    config: NetworkConfig
    tensors: "OrderedDict[str, Tensor]" = field(default_factory=OrderedDict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def named(self):
        return self.tensors.items()

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def count(self, prefix: str = "") -> int:
        return sum(t.size for n, t in self.tensors.items() if n.startswith(prefix))

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, OrderedDict(
            (n, Tensor(t.data.copy(), requires_grad=t.requires_grad, dtype=t.dtype, name=n))
            for n, t in self.tensors.items()))

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, OrderedDict(
            (n, Tensor(t.data, requires_grad=True, dtype=dtype, name=n)) for n, t in self.tensors.items()))


@dataclass
class BoxField:
    """Per-cell box parameters, tensor shape ``(7 * l, Mz, My, Mx)``.

    Channels for structure ``b`` occupy ``7b .. 7b + 6`` in the order
    ``p, t_x, t_y, t_z, s_x, s_y, s_z``.
    """

    values: Tensor
    rates: tuple[int, int, int]

    def __post_init__(self):
        if not isinstance(self.values, Tensor):
            self.values = Tensor(self.values)
        if self.values.ndim != 4 or self.values.shape[0] % BOX_PARAMS:
            raise ValueError(f"box field needs shape (7l, Mz, My, Mx), got {self.values.shape}")
        self.rates = tuple(int(r) for r in self.rates)

    @property
    def structures(self) -> int:
        return self.values.shape[0] // BOX_PARAMS

    @property
    def grid_dims(self) -> tuple[int, int, int]:
        return _zyx_to_xyz(self.values.shape[1:])

    def channel(self, label: int, offset: int) -> int:
        if not 0 <= label < self.structures:
            raise IndexError(f"structure {label} out of range [0, {self.structures})")
        return BOX_PARAMS * label + offset

    def p(self, label: int = 0) -> np.ndarray:
        return self.values.data[self.channel(label, 0)]

    def t(self, label: int = 0) -> np.ndarray:
        return self.values.data[self.channel(label, 1):self.channel(label, 4)]

    def s(self, label: int = 0) -> np.ndarray:
        return self.values.data[self.channel(label, 4):self.channel(label, 7)]

    def select(self, offsets) -> Tensor:
        """Differentiable gather of the given per-structure offsets for every structure."""
        idx = [BOX_PARAMS * b + o for b in range(self.structures) for o in offsets]
        return take_channels(self.values, idx)


TargetField = BoxField


def _fan_in_uniform(rng: np.random.Generator, shape) -> np.ndarray:
    fan_in = prod(shape[1:])
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def _add_conv(params: OrderedDict, rng, name: str, c_in: int, c_out: int, k: int = 3) -> None:
    w = Tensor(_fan_in_uniform(rng, (c_out, c_in, k, k, k)), requires_grad=True, name=f"{name}.weight")
    b = Tensor(np.zeros(c_out, dtype=np.float32), requires_grad=True, name=f"{name}.bias")
    params[w.name] = w
    params[b.name] = b


def build_model(config: NetworkConfig, rng: np.random.Generator) -> ModelParams:
    """Allocate seeded weights for every FEN and RDN convolution."""
    config.validate()
    params: OrderedDict[str, Tensor] = OrderedDict()
    c_in = 1
    for i in range(config.levels):
        c = config.level_channels(i)
        _add_conv(params, rng, f"down{i}.conv1", c_in, c)
        _add_conv(params, rng, f"down{i}.conv2", c, c)
        c_in = c
    c = config.level_channels(config.levels)
    _add_conv(params, rng, "bottleneck.conv1", c_in, c)
    _add_conv(params, rng, "bottleneck.conv2", c, c)
    c_in = c
    for j in range(config.up_blocks):
        skip = config.level_channels(config.levels - 1 - j)
        last = j == config.up_blocks - 1
        c = config.feature_channels if last else skip
        _add_conv(params, rng, f"up{j}.conv1", c_in + skip, c)
        _add_conv(params, rng, f"up{j}.conv2", c, c)
        c_in = c
    if config.up_blocks == 0:
        # no up-path: a 1x1x1 projection pins the attachment width to k
        _add_conv(params, rng, "proj", c_in, config.feature_channels, k=1)
    for axis in "xyz":
        _add_conv(params, rng, f"rdn.{axis}.conv", config.feature_channels, config.branch_channels)
        _add_conv(params, rng, f"rdn.{axis}.head", config.branch_channels, 3 * config.structures, k=1)
    return ModelParams(config, params)


def _conv(params: ModelParams, x: Tensor, name: str) -> Tensor:
    return conv3d(x, params[f"{name}.weight"], params[f"{name}.bias"])


def _block(params, x, name, rate, rng, training):
    x = relu(_conv(params, x, f"{name}.conv1"))
    x = relu(_conv(params, x, f"{name}.conv2"))
    return dropout(x, rate, rng, training)


def _as_input(config: NetworkConfig, volume) -> Tensor:
    if isinstance(volume, Volume):
        volume = volume.data
    if isinstance(volume, Tensor):
        x = volume
    else:
        x = Tensor(np.asarray(volume)[None] if np.ndim(volume) == 3 else volume)
    if x.ndim == 3:
        x = Tensor(x.data[None], dtype=x.dtype)
    expected = (1,) + tuple(reversed(config.input_dims))
    if x.shape != expected:
        raise ValueError(f"input shape {x.shape} does not match configured (1, z, y, x) = {expected}")
    return x


def fen_forward(params: ModelParams, volume, training: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
    """Feature map ``(k, Mz, My, Mx)`` for a single-channel volume."""
    cfg = params.config
    x = _as_input(cfg, volume)
    if x.dtype != params[next(iter(params.tensors))].dtype:
        x = Tensor(x.data, dtype=params[next(iter(params.tensors))].dtype)
    skips = []
    for i in range(cfg.levels):
        x = _block(params, x, f"down{i}", cfg.dropout_rate, rng, training)
        skips.append(x)
        x = maxpool3d(x, cfg.pool_sizes[i])
    x = _block(params, x, "bottleneck", cfg.dropout_rate, rng, training)
    for j in range(cfg.up_blocks):
        x = upsample3d_nearest(x, cfg.up_factors[j])
        x = concat_channels(x, skips[cfg.levels - 1 - j])
        x = _block(params, x, f"up{j}", cfg.dropout_rate, rng, training)
    if cfg.up_blocks == 0:
        x = _conv(params, x, "proj")
    return x


def rdn_axis_outputs(params: ModelParams, features: Tensor) -> dict[str, Tensor]:
    """Per-axis head outputs ``(3l, Mz, My, Mx)``: ``(p_a, t_a, s_a)`` per structure,
    with ``p_a`` already squashed into (0, 1)."""
    cfg = params.config
    if features.shape[0] != cfg.feature_channels:
        raise ValueError(f"rdn_forward: expected {cfg.feature_channels} feature channels, got {features.shape[0]}")
    out = {}
    for axis in "xyz":
        h = sigmoid(_conv(params, features, f"rdn.{axis}.conv"))
        head = _conv(params, h, f"rdn.{axis}.head")
        parts = []
        for b in range(cfg.structures):
            parts.append(sigmoid(take_channels(head, 3 * b)))
            parts.append(take_channels(head, [3 * b + 1, 3 * b + 2]))
        out[axis] = concat_channels(*parts)
    return out


def rdn_forward(params: ModelParams, features: Tensor) -> BoxField:
    """Three axis branches; the joint probability is ``p_x * p_y * p_z``."""
    heads = rdn_axis_outputs(params, features)
    pieces = []
    for b in range(params.config.structures):
        px, py, pz = (take_channels(heads[a], 3 * b) for a in "xyz")
        pieces.append(multiply(multiply(px, py, strict=True), pz, strict=True))
        pieces.extend(take_channels(heads[a], 3 * b + 1) for a in "xyz")
        pieces.extend(take_channels(heads[a], 3 * b + 2) for a in "xyz")
    return BoxField(concat_channels(*pieces), params.config.rates)


def model_forward(params: ModelParams, volume, training: bool = False,
                  rng: np.random.Generator | None = None) -> BoxField:
    return rdn_forward(params, fen_forward(params, volume, training, rng))


def infer_shapes(config: NetworkConfig) -> "OrderedDict[str, tuple[int, ...]]":
    """Shape propagation without weights; shapes are ``(C, z, y, x)``."""
    config.validate()
    shapes: OrderedDict[str, tuple[int, ...]] = OrderedDict()
    spatial = tuple(reversed(config.input_dims))
    shapes["input"] = (1,) + spatial
    skip_shapes = []
    for i in range(config.levels):
        c = config.level_channels(i)
        shapes[f"down{i}"] = (c,) + spatial
        skip_shapes.append(shapes[f"down{i}"])
        spatial = tuple(n // p for n, p in zip(spatial, config.pool_sizes[i]))
        shapes[f"pool{i}"] = (c,) + spatial
    c = config.level_channels(config.levels)
    shapes["bottleneck"] = (c,) + spatial
    for j in range(config.up_blocks):
        spatial = tuple(n * f for n, f in zip(spatial, config.up_factors[j]))
        skip = skip_shapes[config.levels - 1 - j]
        shapes[f"concat{j}"] = (c + skip[0],) + spatial
        c = config.feature_channels if j == config.up_blocks - 1 else skip[0]
        shapes[f"up{j}"] = (c,) + spatial
    shapes["features"] = (config.feature_channels,) + spatial
    shapes["branch"] = (config.branch_channels,) + spatial
    shapes["box_field"] = (BOX_PARAMS * config.structures,) + spatial
    return shapes
