"""Command-line pipeline: gen-phantom, augment, train, predict, evaluate.

Data directories hold ``<case>.vol`` volumes, ``<case>.boxes.txt`` annotations
and optional ``<case>.mask<label>.vol`` structure masks. Failures print one
``error code=<n> kind=<kind> message=<text>`` line to stderr and exit with
1 (usage), 2 (data) or 3 (numerical).
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .augment import augment_dataset
from .detector import Detection, decode, evaluate
from .network import build_model, model_forward
from .phantom import make_dataset
from .targets import box_from_mask
from .trainer import NumericalError, Sample, train
from .volume import Volume

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _cases(data_dir: Path) -> list[Path]:
    if not data_dir.is_dir():
        raise FileNotFoundError(f"data directory {data_dir} does not exist")
    vols = sorted(p for p in data_dir.glob("*.vol") if ".mask" not in p.name)
    if not vols:
        raise FileNotFoundError(f"no volumes (*.vol) in {data_dir}")
    return vols


def _stem(path: Path) -> str:
    return path.name[: -len(".vol")]


def _masks(vol_path: Path) -> list[np.ndarray]:
    masks = []
    label = 0
    while (p := vol_path.with_name(f"{_stem(vol_path)}.mask{label}.vol")).exists():
        masks.append(io.read_volume(p).data)
        label += 1
    return masks


def cmd_gen_phantom(args, cfg: io.RunConfig) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    count = args.count if args.count is not None else 1
    noise = cfg.noise
    if args.noise is not None:
        noise = io.NoiseConfig(kind=args.noise)
    for i, ph in enumerate(make_dataset(cfg.phantom, count, args.seed, noise.model())):
        stem = f"{args.prefix}{i:03d}"
        io.write_volume(out / f"{stem}.vol", ph.volume)
        io.write_volume(out / f"{stem}.mask0.vol", Volume(ph.mask, ph.volume.spacing))
        io.write_boxes(out / f"{stem}.boxes.txt", [ph.box])
    print(f"wrote {count} phantoms to {out}")


def cmd_augment(args, cfg: io.RunConfig) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    count = cfg.augmentation.count if args.aug_count is None else args.aug_count
    sigma = cfg.augmentation.sigma if args.aug_sigma is None else args.aug_sigma
    written = 0
    for i, vp in enumerate(_cases(Path(args.data))):
        volume = io.read_volume(vp)
        masks = _masks(vp)
        if not masks:
            raise FileNotFoundError(f"{vp}: augmentation needs at least {_stem(vp)}.mask0.vol")
        copies = augment_dataset(volume, masks, seed=(args.seed << 20) ^ (i << 8), count=count,
                                 sigma=(sigma, sigma))
        for j, (v, ms) in enumerate(copies):
            stem = f"{_stem(vp)}_aug{j:02d}"
            io.write_volume(out / f"{stem}.vol", v)
            for label, m in enumerate(ms):
                io.write_volume(out / f"{stem}.mask{label}.vol", Volume(m, v.spacing))
            io.write_boxes(out / f"{stem}.boxes.txt", [box_from_mask(m, b) for b, m in enumerate(ms)])
            written += 1
    print(f"wrote {written} augmented volumes to {out}")


def _load_samples(dirs, dims) -> list[Sample]:
    samples = []
    for d in dirs:
        for vp in _cases(Path(d)):
            boxes = io.read_boxes(vp.with_name(f"{_stem(vp)}.boxes.txt"))
            volume, boxes, _ = io.crop_or_pad(io.read_volume(vp), dims, boxes)
            samples.append(Sample(volume, boxes, _stem(vp)))
    return samples


def cmd_train(args, cfg: io.RunConfig) -> None:
    tc = cfg.training
    tc.seed = args.seed
    if args.steps is not None:
        tc.max_steps = args.steps
    tc.checkpoint_path = str(args.out)
    samples = _load_samples(args.data, cfg.network.input_dims)
    params = build_model(cfg.network, np.random.default_rng(args.seed))
    log_path = Path(args.log) if args.log else Path(str(args.out) + ".log")
    with open(log_path, "w") as log_fh:
        result = train(params, samples, tc, on_step=lambda s, r: log_fh.write(r.log_line(s) + "\n"))
    final = result.history[-1].L_total if result.history else float("nan")
    print(f"trained {len(result.history)} steps on {len(samples)} samples, final L_total={final:.5f}; "
          f"checkpoint {args.out}, log {log_path}")


def cmd_predict(args, cfg: io.RunConfig) -> None:
    params, _ = io.load_checkpoint(args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    threshold = cfg.evaluation.threshold if args.threshold is None else args.threshold
    for vp in _cases(Path(args.data)):
        start = time.perf_counter()
        volume, _, shift = io.crop_or_pad(io.read_volume(vp), params.config.input_dims)
        dets = decode(model_forward(params, volume), threshold, volume.spacing)
        dets = [type(d)(d.label, d.probability, tuple(c - s for c, s in zip(d.center, shift)),
                        d.size, d.cell, d.spacing) for d in dets]
        elapsed = time.perf_counter() - start
        io.write_detections(out / f"{_stem(vp)}.det.txt", dets, "voxel")
        io.write_detections(out / f"{_stem(vp)}.det_mm.txt", dets, "mm")
        print(f"{_stem(vp)}: {len(dets)} detection(s) in {elapsed:.2f} s")


def cmd_evaluate(args, cfg: io.RunConfig) -> None:
    pred = Path(args.pred)
    results = []
    spacing = None
    for vp in _cases(Path(args.data)):
        volume = io.read_volume(vp)
        if spacing is None:
            spacing = volume.spacing
        elif volume.spacing != spacing:
            raise ValueError(f"{vp}: spacing {volume.spacing} differs from {spacing}")
        truth = {b.label: b for b in io.read_boxes(vp.with_name(f"{_stem(vp)}.boxes.txt"))}
        det_path = pred / f"{_stem(vp)}.det.txt"
        rows = io.read_detections(det_path) if det_path.exists() else []
        found = {label: (p, c, s) for label, p, c, s in rows}
        for label, box in truth.items():
            if label in found:
                p, c, s = found[label]
                results.append((Detection(label, p, c, s, (0, 0, 0), spacing), box))
            else:
                results.append((None, box))
    stats = evaluate(results, spacing)
    report = stats.table("center error (prediction - truth)")
    if args.out:
        Path(args.out).write_text(report + "\n")
    print(report)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rdn3d", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="JSON run config (defaults when omitted)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    p = common(sub.add_parser("gen-phantom", help="write synthetic phantoms"))
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int)
    p.add_argument("--noise", choices=["none", "ct", "cbct"])
    p.add_argument("--prefix", default="case")
    p.set_defaults(func=cmd_gen_phantom)

    p = common(sub.add_parser("augment", help="write elastically deformed copies"))
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--aug-count", type=int)
    p.add_argument("--aug-sigma", type=float)
    p.set_defaults(func=cmd_augment)

    p = common(sub.add_parser("train", help="train a model"))
    p.add_argument("--data", required=True, action="append", help="repeatable")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--steps", type=int)
    p.add_argument("--log", help="loss log path (default <out>.log)")
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("predict", help="detect structures"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_predict)

    p = common(sub.add_parser("evaluate", help="center-distance report"))
    p.add_argument("--data", required=True, help="ground-truth directory")
    p.add_argument("--pred", required=True, help="prediction directory")
    p.add_argument("--out", help="report path")
    p.set_defaults(func=cmd_evaluate)
    return parser


def _fail(code: int, kind: str, message) -> int:
    text = " ".join(str(message).split())
    print(f"error code={code} kind={kind} message={text}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", exc)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = io.load_run_config(args.config)
        args.func(args, cfg)
    except NumericalError as exc:
        return _fail(EXIT_NUMERIC, "numerical", exc)
    except (io.FormatError, FileNotFoundError, ValueError, OSError) as exc:
        return _fail(EXIT_DATA, "data", exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
