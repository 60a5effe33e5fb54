"""Joint end-to-end training of the feature and detection networks."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .augment import augment_dataset
from .core import AdamState, adam_step
from .losses import LossReport, loss_total
from .network import BoxField, ModelParams, model_forward
from .targets import box_from_mask, make_target
from .volume import BoxAnnotation, Volume

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Training produced a non-finite loss; ``last_good`` holds the parameters before that step."""

    def __init__(self, message: str, last_good: ModelParams, step: int):
        super().__init__(message)
        self.last_good = last_good
        self.step = step


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    max_steps: int = 2000
    batch_size: int = 1
    seed: int = 0
    checkpoint_every: int = 0
    checkpoint_path: str | None = None
    patience: int = 200
    min_delta: float = 1e-4
    smoothing_window: int = 50

    def validate(self) -> None:
        if self.batch_size != 1:
            raise ValueError(f"batch_size must be 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")


@dataclass
class Sample:
    volume: Volume
    boxes: list[BoxAnnotation]
    name: str = ""


@dataclass
class TrainResult:
    params: ModelParams
    history: list[LossReport] = field(default_factory=list)
    state: AdamState | None = None
    stopped_early: bool = False
    grad_seen: dict[str, bool] = field(default_factory=dict)


def build_training_set(cases: Sequence[tuple[Volume, Sequence[np.ndarray]]], aug_count: int,
                       sigma: float, seed: int, include_original: bool = True) -> list[Sample]:
    """Original cases plus ``aug_count`` elastic copies each.

    ``cases`` pairs each volume with one mask per structure label; boxes of the
    copies are re-derived from the deformed masks.
    """
    samples = []
    for i, (volume, masks) in enumerate(cases):
        masks = list(masks)
        if include_original:
            samples.append(Sample(volume, [box_from_mask(m, b) for b, m in enumerate(masks)], f"case{i}"))
        copies = augment_dataset(volume, masks, seed=(int(seed) << 20) ^ (i << 8), count=aug_count,
                                 sigma=(sigma, sigma))
        for j, (v, ms) in enumerate(copies):
            samples.append(Sample(v, [box_from_mask(m, b) for b, m in enumerate(ms)], f"case{i}_aug{j}"))
    return samples


def train(params: ModelParams, dataset: Sequence[Sample], config: TrainConfig,
          state: AdamState | None = None,
          on_step: Callable[[int, LossReport], None] | None = None) -> TrainResult:
    """Adam on ``L_total`` with batch size one, shuffled per epoch from ``config.seed``.

    ``params`` is updated in place. Stops after ``max_steps`` or once the
    windowed mean loss fails to improve by ``min_delta`` for ``patience`` steps.
    """
    config.validate()
    cfg = params.config
    for s in dataset:
        if s.volume.dims != cfg.input_dims:
            raise ValueError(f"sample {s.name!r} has dims {s.volume.dims}, network expects {cfg.input_dims}")
    targets = [make_target(s.boxes, cfg.grid_dims, cfg.rates, cfg.structures) for s in dataset]
    tensors = params.tensors
    if state is None:
        state = AdamState.for_params(tensors)
    rng = np.random.default_rng(config.seed)
    result = TrainResult(params, state=state, grad_seen={n: False for n in tensors})
    order: deque[int] = deque()
    window: deque[float] = deque(maxlen=config.smoothing_window)
    best = np.inf
    best_step = 0
    last_good = params.copy()

    for step in range(config.max_steps):
        if not order:
            order.extend(int(i) for i in rng.permutation(len(dataset)))
        idx = order.popleft()
        params.zero_grad()
        out = model_forward(params, dataset[idx].volume, training=True, rng=rng)
        total, report = loss_total(out, targets[idx])
        if not np.isfinite(report.L_total):
            _save(config, last_good, None)
            raise NumericalError(f"non-finite loss at step {step}", last_good, step)
        total.backward()
        for n, t in tensors.items():
            if not result.grad_seen[n] and t.grad is not None and np.any(t.grad != 0):
                result.grad_seen[n] = True
        adam_step(tensors, state, config.learning_rate)
        result.history.append(report)
        if on_step is not None:
            on_step(step, report)
        if config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
            if not all(np.all(np.isfinite(t.data)) for t in tensors.values()):
                _save(config, last_good, None)
                raise NumericalError(f"non-finite parameters after step {step}", last_good, step)
            last_good = params.copy()
            _save(config, params, state)

        window.append(report.L_total)
        if len(window) == window.maxlen:
            mean = float(np.mean(window))
            if mean < best - config.min_delta:
                best, best_step = mean, step
            elif step - best_step >= config.patience:
                log.info("early stop at step %d (best windowed loss %.5f at %d)", step, best, best_step)
                result.stopped_early = True
                break
    if config.checkpoint_path:
        _save(config, params, state)
    return result


def _save(config: TrainConfig, params: ModelParams, state: AdamState | None) -> None:
    if not config.checkpoint_path:
        return
    from .io import save_checkpoint

    save_checkpoint(Path(config.checkpoint_path), params, state)


def predict_field(params: ModelParams, volume: Volume) -> BoxField:
    return model_forward(params, volume, training=False)
