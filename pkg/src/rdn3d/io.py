"""File formats: volumes, box/detection text files, checkpoints and run configs.

Volume file::

    RDN3D-VOLUME
    version 1
    dims <nx> <ny> <nz>
    spacing <sx> <sy> <sz>
    dtype float32
    byteorder little
    end
    <nx*ny*nz little-endian float32, x fastest>

Checkpoint file: a ``RDN3D-CHECKPOINT <version>`` line, one line of JSON
(network config, tensor table, optimizer scalars), then the tensor blobs as
little-endian float32 in table order.
"""
from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import AdamState, Tensor
from .detector import Detection
from .network import ModelParams, NetworkConfig
from .phantom import NoiseModel, PhantomConfig
from .trainer import TrainConfig
from .volume import BoxAnnotation, Volume

VOLUME_MAGIC = "RDN3D-VOLUME"
VOLUME_VERSION = 1
CHECKPOINT_MAGIC = "RDN3D-CHECKPOINT"
CHECKPOINT_VERSION = 1
BOXES_FORMAT = "rdn3d-boxes"
DETECTIONS_FORMAT = "rdn3d-detections"
TEXT_VERSION = 1
_F32 = np.dtype("<f4")


class FormatError(ValueError):
    """A file did not match its declared format."""


# volumes

def write_volume(path, volume: Volume) -> None:
    nx, ny, nz = volume.dims
    header = (
        f"{VOLUME_MAGIC}\nversion {VOLUME_VERSION}\ndims {nx} {ny} {nz}\n"
        f"spacing {' '.join(repr(float(s)) for s in volume.spacing)}\n"
        "dtype float32\nbyteorder little\nend\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(volume.data, dtype=_F32).tobytes())


def read_volume(path) -> Volume:
    raw = Path(path).read_bytes()
    lines = []
    pos = 0
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0 or len(lines) > 16:
            raise FormatError(f"{path}: unterminated volume header")
        line = raw[pos:nl].decode("ascii", errors="replace")
        pos = nl + 1
        if not lines and line != VOLUME_MAGIC:
            raise FormatError(f"{path}: bad magic {line[:32]!r}, expected {VOLUME_MAGIC!r}")
        lines.append(line)
        if line == "end":
            break
    meta = {}
    for line in lines[1:-1]:
        key, _, value = line.partition(" ")
        meta[key] = value.split()
    try:
        version = int(meta["version"][0])
        dims = tuple(int(v) for v in meta["dims"])
        spacing = tuple(float(v) for v in meta["spacing"])
        dtype = meta["dtype"][0]
        order = meta["byteorder"][0]
    except (KeyError, IndexError, ValueError) as exc:
        raise FormatError(f"{path}: malformed volume header ({exc})") from None
    if version != VOLUME_VERSION:
        raise FormatError(f"{path}: unsupported volume version {version}")
    if dtype != "float32" or order != "little":
        raise FormatError(f"{path}: unsupported payload encoding {dtype}/{order}")
    if len(dims) != 3 or len(spacing) != 3 or min(dims) < 1:
        raise FormatError(f"{path}: dims/spacing must have three positive entries")
    expected = int(np.prod(dims)) * _F32.itemsize
    actual = len(raw) - pos
    if actual != expected:
        raise FormatError(f"{path}: payload mismatch, expected {expected} bytes, got {actual}")
    nx, ny, nz = dims
    data = np.frombuffer(raw, dtype=_F32, offset=pos).reshape(nz, ny, nx).astype(np.float32)
    return Volume(data, spacing)


def crop_or_pad(volume: Volume, target_dims, boxes: Sequence[BoxAnnotation] = ()):
    """Center-crop or symmetrically zero-pad to ``target_dims`` (x, y, z).

    Returns the new volume, the boxes shifted into its frame, and the applied
    shift so that ``new = old + shift``.
    """
    target = tuple(int(n) for n in target_dims)
    data = volume.data
    shift = []
    for axis, (n, t) in enumerate(zip(volume.dims, target)):
        arr_axis = 2 - axis
        if t < n:
            start = (n - t) // 2
            data = np.take(data, np.arange(start, start + t), axis=arr_axis)
            shift.append(-start)
        elif t > n:
            before = (t - n) // 2
            pad = [(0, 0)] * 3
            pad[arr_axis] = (before, t - n - before)
            data = np.pad(data, pad)
            shift.append(before)
        else:
            shift.append(0)
    shift = tuple(shift)
    return Volume(data, volume.spacing), [b.shifted(shift) for b in boxes], shift


# text formats

def _format_line(name: str) -> str:
    return f"# format: {name} {TEXT_VERSION}"


def _check_format_line(path, line: str, name: str) -> None:
    parts = line[len("# format:"):].split()
    if len(parts) != 2 or parts[0] != name:
        raise FormatError(f"{path}: expected format {name!r}, found {line.strip()!r}")
    if parts[1] != str(TEXT_VERSION):
        raise FormatError(f"{path}: unsupported {name} version {parts[1]}")


def write_boxes(path, boxes: Iterable[BoxAnnotation]) -> None:
    lines = [_format_line(BOXES_FORMAT), "# label cx cy cz w l h (voxels)"]
    for b in boxes:
        lines.append(" ".join([str(b.label), *(repr(v) for v in (*b.center, *b.size))]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_boxes(path) -> list[BoxAnnotation]:
    boxes = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if line.startswith("# format:"):
            _check_format_line(path, line, BOXES_FORMAT)
            continue
        body = line.split("#", 1)[0].split()
        if not body:
            continue
        if len(body) != 7:
            raise FormatError(f"{path}:{n}: expected 7 fields 'label cx cy cz w l h', got {len(body)}")
        try:
            vals = [float(v) for v in body[1:]]
            boxes.append(BoxAnnotation(int(body[0]), vals[:3], vals[3:]))
        except ValueError as exc:
            raise FormatError(f"{path}:{n}: {exc}") from None
    return boxes


def write_detections(path, detections: Iterable[Detection], units: str = "voxel") -> None:
    if units not in ("voxel", "mm"):
        raise ValueError(f"units must be 'voxel' or 'mm', got {units!r}")
    lines = [_format_line(DETECTIONS_FORMAT), f"# units: {units}", "# label p cx cy cz w l h"]
    for d in detections:
        center, size = (d.center, d.size) if units == "voxel" else (d.center_mm, d.size_mm)
        lines.append(" ".join([str(d.label), repr(d.probability), *(repr(float(v)) for v in (*center, *size))]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_detections(path) -> list[tuple[int, float, tuple, tuple]]:
    """Rows of ``(label, p, center, size)`` in the file's units."""
    rows = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if line.startswith("# format:"):
            _check_format_line(path, line, DETECTIONS_FORMAT)
            continue
        body = line.split("#", 1)[0].split()
        if not body:
            continue
        if len(body) != 8:
            raise FormatError(f"{path}:{n}: expected 8 fields 'label p cx cy cz w l h'")
        v = [float(x) for x in body[1:]]
        rows.append((int(body[0]), v[0], tuple(v[1:4]), tuple(v[4:7])))
    return rows


# checkpoints

def save_checkpoint(path, params: ModelParams, state: AdamState | None = None) -> None:
    blobs = [(name, t.data) for name, t in params.tensors.items()]
    header = {"network": params.config.to_dict(), "tensors": [], "optimizer": None}
    if state is not None:
        header["optimizer"] = {"step_count": state.step_count, "beta1": state.beta1,
                               "beta2": state.beta2, "epsilon": state.epsilon}
        blobs += [(f"adam.m.{n}", state.first_moment[n]) for n in params.tensors]
        blobs += [(f"adam.v.{n}", state.second_moment[n]) for n in params.tensors]
    for name, arr in blobs:
        header["tensors"].append({"name": name, "shape": list(arr.shape)})
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n".encode("ascii"))
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8") + b"\n")
        for _, arr in blobs:
            fh.write(np.ascontiguousarray(arr, dtype=_F32).tobytes())
    tmp.replace(path)


def load_checkpoint(path) -> tuple[ModelParams, AdamState | None]:
    raw = Path(path).read_bytes()
    first = raw.find(b"\n")
    second = raw.find(b"\n", first + 1)
    if first < 0 or second < 0:
        raise FormatError(f"{path}: truncated checkpoint header")
    magic, _, version = raw[:first].decode("ascii", errors="replace").partition(" ")
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic[:32]!r}, expected {CHECKPOINT_MAGIC!r}")
    if version != str(CHECKPOINT_VERSION):
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[first + 1:second])
    config = NetworkConfig(**header["network"])
    offset = second + 1
    arrays: OrderedDict[str, np.ndarray] = OrderedDict()
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        nbytes = count * _F32.itemsize
        if offset + nbytes > len(raw):
            raise FormatError(f"{path}: payload mismatch, tensor {entry['name']} runs past end of file")
        arrays[entry["name"]] = np.frombuffer(raw, _F32, count, offset).reshape(entry["shape"]).astype(np.float32)
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"{path}: payload mismatch, {len(raw) - offset} trailing bytes")
    tensors = OrderedDict(
        (n, Tensor(a, requires_grad=True, name=n)) for n, a in arrays.items() if not n.startswith("adam.")
    )
    state = None
    if header.get("optimizer"):
        opt = header["optimizer"]
        state = AdamState(
            first_moment={n: arrays[f"adam.m.{n}"] for n in tensors},
            second_moment={n: arrays[f"adam.v.{n}"] for n in tensors},
            step_count=int(opt["step_count"]), beta1=opt["beta1"], beta2=opt["beta2"], epsilon=opt["epsilon"],
        )
    return ModelParams(config, tensors), state


# run configuration

@dataclass
class AugmentConfig:
    count: int = 25
    sigma: float = 10.0


@dataclass
class NoiseConfig:
    kind: str = "ct"  # none | ct | cbct
    sigma: float | None = None
    shading: float | None = None
    streak_amplitude: float | None = None
    streak_count: int | None = None

    def model(self) -> NoiseModel | None:
        if self.kind == "none":
            return None
        overrides = {f.name: getattr(self, f.name) for f in fields(self)
                     if f.name != "kind" and getattr(self, f.name) is not None}
        if self.kind == "ct":
            return NoiseModel.ct(**overrides)
        if self.kind == "cbct":
            return NoiseModel.cbct(**overrides)
        raise ValueError(f"unknown noise kind {self.kind!r}")


@dataclass
class EvaluationConfig:
    threshold: float = 0.1


@dataclass
class RunConfig:
    network: NetworkConfig = field(default_factory=lambda: NetworkConfig(
        input_dims=(64, 64, 48), base_channels=4, feature_channels=32, branch_channels=16))
    training: TrainConfig = field(default_factory=TrainConfig)
    augmentation: AugmentConfig = field(default_factory=AugmentConfig)
    phantom: PhantomConfig = field(default_factory=PhantomConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)


def _section_dict(section) -> dict:
    if isinstance(section, NetworkConfig):
        return section.to_dict()
    return {f.name: getattr(section, f.name) for f in fields(section)}


def load_run_config(path=None) -> RunConfig:
    """Read a JSON run config; missing sections and keys take their defaults,
    unknown ones are rejected."""
    base = RunConfig()
    if path is None:
        return base
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise FormatError(f"{path}: top level must be a mapping of sections")
    names = [f.name for f in fields(RunConfig)]
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise FormatError(f"{path}: unknown config sections {', '.join(unknown)}")
    kwargs = {}
    for name in names:
        default = getattr(base, name)
        incoming = data.get(name, {})
        if not isinstance(incoming, dict):
            raise FormatError(f"{path}: section {name!r} must be a mapping")
        merged = _section_dict(default)
        bad = sorted(set(incoming) - set(merged))
        if bad:
            raise FormatError(f"{path}: section {name!r} has unknown keys {', '.join(bad)}")
        merged.update(incoming)
        kwargs[name] = type(default)(**merged)
    return RunConfig(**kwargs)


def dump_run_config(config: RunConfig) -> str:
    return json.dumps({f.name: _section_dict(getattr(config, f.name)) for f in fields(RunConfig)}, indent=2)
