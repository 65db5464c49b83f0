"""Command-line entry point: ``vfr <command> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import checkpoint as C
from . import config as cfgmod
from .arch import SpecError, count_flops, count_parameters
from .datagen.corpus import CorpusError
from .datagen.generate import GenerationError, GeneratorConfig, default_workers, generate
from .datagen.render import RenderError
from .dataset import DataError, Dataset, apply_split, import_directory
from .evaluate import evaluate
from .metrics import bench_latency
from .models import image_to_tensor, predict_font
from .tensor import ContractError
from .train import NumericFailure, TrainConfig, checkpoint_classes, report_path, train

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_fields(p: argparse.ArgumentParser, cls, skip=()) -> None:
    """One string-valued flag per dataclass field; parsing happens in config.build."""
    for name in cfgmod.field_types(cls):
        if name not in skip:
            p.add_argument(_flag(name), dest=f"field_{name}", metavar="VALUE", default=None)


def _field_values(args, cls) -> dict:
    return {name: getattr(args, f"field_{name}") for name in cfgmod.field_types(cls)
            if getattr(args, f"field_{name}", None) is not None}


def _merged(args, cls) -> dict:
    """Config-file values overridden by command-line flags."""
    values = cfgmod.read_config(args.config) if args.config else {}
    values.update(_field_values(args, cls))
    return values


# -- commands ------------------------------------------------------------------


def cmd_gen(args) -> int:
    values = _merged(args, GeneratorConfig)
    values["seed"] = str(args.seed)
    cfg = cfgmod.build(GeneratorConfig, values)
    res = generate(cfg, args.out, workers=args.workers or default_workers())
    print(f"{res.emitted} samples ({res.each_font_samples} per font, shortfall {res.shortfall}) -> {args.out}")
    print(f"manifest sha256 {res.manifest_sha256}")
    if args.split_seed is not None:
        sm = apply_split(args.out, args.split_seed)
        print("split " + " ".join(f"{k}={v}" for k, v in sm.counts.items()))
    return EXIT_OK


def cmd_split(args) -> int:
    sm = apply_split(args.dataset, args.seed)
    print(" ".join(f"{k}={v}" for k, v in sm.counts.items()))
    return EXIT_OK


def _train(args, task: str) -> int:
    values = _merged(args, TrainConfig)
    values.pop("task", None)
    types = cfgmod.field_types(TrainConfig)
    typed = {k: cfgmod.parse_value(v, types[k], k) for k, v in values.items() if k in types}
    unknown = sorted(set(values) - set(types))
    if unknown:
        raise cfgmod.ConfigError(f"unknown TrainConfig keys: {', '.join(unknown)}")
    typed["seed"] = args.seed
    try:
        cfg = TrainConfig.for_task(task, **typed)
    except (TypeError, ValueError) as exc:
        raise cfgmod.ConfigError(str(exc)) from None
    log = None if args.quiet else (lambda s: print(s, flush=True))
    rep = train(cfg, args.dataset, args.out, log=log)
    print(f"best epoch {rep.best_epoch} ({cfg.monitor} {rep.best_val:.4f}); "
          f"lr switch {rep.lr_switch_epoch}; {rep.wall_clock:.1f}s")
    print(rep.test.table())
    print(f"report -> {report_path(args.out)}")
    return EXIT_OK


def cmd_train_seg(args) -> int:
    return _train(args, "seg")


def cmd_train_cls(args) -> int:
    return _train(args, "cls")


def _load_pair(args):
    seg = C.load_checkpoint(args.seg) if args.seg else None
    cls = C.load_checkpoint(args.cls) if args.cls else None
    return seg, cls


def cmd_eval(args) -> int:
    seg_ck, cls_ck = _load_pair(args)
    if seg_ck is None and cls_ck is None:
        raise cfgmod.ConfigError("eval needs --seg and/or --cls")
    names = checkpoint_classes(cls_ck) if cls_ck else None
    color = seg_ck.meta.get("color_mode", "rgb") if seg_ck else "rgb"
    ds = Dataset(args.dataset, args.split, names)
    rep = evaluate(ds, C.model_from_checkpoint(seg_ck) if seg_ck else None,
                   C.model_from_checkpoint(cls_ck) if cls_ck else None,
                   test_augmentation=args.test_augmentation, seed=args.eval_seed,
                   color_mode=color, class_names=names)
    print(rep.table())
    if args.report:
        Path(args.report).write_text(rep.to_text(), encoding="utf-8")
    return EXIT_OK


def _read_image(path, hw, color_mode: str) -> np.ndarray:
    from PIL import Image

    try:
        img = Image.open(path)
        img.load()
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}") from None
    img = img.convert("L" if color_mode == "grayscale" else "RGB")
    if img.size != (hw[1], hw[0]):
        img = img.resize((hw[1], hw[0]), Image.BILINEAR)
    return np.asarray(img)


def cmd_predict(args) -> int:
    seg_ck, cls_ck = C.load_checkpoint(args.seg), C.load_checkpoint(args.cls)
    seg, cls = C.model_from_checkpoint(seg_ck), C.model_from_checkpoint(cls_ck)
    color = seg_ck.meta.get("color_mode", "rgb")
    x = image_to_tensor(_read_image(args.image, seg.spec.input_shape[1:], color))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pred = predict_font(seg, cls, x, k=args.top, class_names=checkpoint_classes(cls_ck))
    for note in pred.warnings:
        print(f"warning: {note}", file=sys.stderr)
    for rank, (name, p) in enumerate(pred.ranking, 1):
        print(f"{rank}. {name}  {p:.4f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.noop:
        pipeline, what = (lambda: None), "no-op"
    else:
        if not (args.seg and args.cls):
            raise cfgmod.ConfigError("bench needs --seg and --cls, or --noop")
        seg_ck, cls_ck = C.load_checkpoint(args.seg), C.load_checkpoint(args.cls)
        seg, cls = C.model_from_checkpoint(seg_ck), C.model_from_checkpoint(cls_ck)
        hw = seg.spec.input_shape[1:]
        color = seg_ck.meta.get("color_mode", "rgb")
        if args.image:
            img = _read_image(args.image, hw, color)
        else:
            shape = hw if color == "grayscale" else (*hw, 3)
            img = np.random.default_rng(0).integers(0, 256, shape, dtype=np.uint8)
        x = image_to_tensor(img)
        pipeline, what = (lambda: predict_font(seg, cls, x, k=1)), "segment + classify, one image"
    st = bench_latency(pipeline, args.runs)
    print(f"pipeline   {what}")
    print(f"runs       {st.runs}")
    for k in ("mean", "std", "min", "max"):
        print(f"{k:<10} {getattr(st, k) * 1e3:.4f} ms")
    print(f"processor  {st.processor}")
    return EXIT_OK


def cmd_info(args) -> int:
    ck = C.load_checkpoint(args.checkpoint)
    C.model_from_checkpoint(ck)
    pc = count_parameters(ck.spec)
    print(f"model        {ck.spec.name}")
    print(f"input        {ck.spec.input_shape}")
    print(f"output       {ck.spec.output_shape}")
    print(f"trainable    {pc.trainable}")
    print(f"non-train    {pc.non_trainable}")
    print(f"macs         {count_flops(ck.spec).macs}")
    meta = {k: v for k, v in ck.meta.items() if k not in ("train_config", "optimizer")}
    print(f"meta         {json.dumps(meta, sort_keys=True)}")
    if args.spec:
        print(ck.spec.to_json())
    return EXIT_OK


def cmd_import(args) -> int:
    n = import_directory(args.source, args.out, image_size=args.image_size, threshold=args.threshold)
    print(f"imported {n} masks -> {args.out}")
    if args.split_seed is not None:
        sm = apply_split(args.out, args.split_seed)
        print("split " + " ".join(f"{k}={v}" for k, v in sm.counts.items()))
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vfr", description="Synthetic-data font recognition pipeline.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a PFR or PTISEG dataset")
    p.add_argument("--config", help="key = value generator config file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--split-seed", type=int, default=None, help="also write a train/val/test split")
    _add_fields(p, GeneratorConfig, skip=("seed",))
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("split", help="stratified 64/16/20 split of a dataset")
    p.add_argument("dataset")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_split)

    for name, func in (("train-seg", cmd_train_seg), ("train-cls", cmd_train_cls)):
        p = sub.add_parser(name, help=f"train the {'segmenter' if name == 'train-seg' else 'classifier'}")
        p.add_argument("dataset")
        p.add_argument("--out", required=True, help="checkpoint path")
        p.add_argument("--config", help="key = value training config file")
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--quiet", action="store_true")
        _add_fields(p, TrainConfig, skip=("seed", "task"))
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="score checkpoints on a dataset split")
    p.add_argument("dataset")
    p.add_argument("--seg")
    p.add_argument("--cls")
    p.add_argument("--split", default="test")
    p.add_argument("--test-augmentation", action="store_true")
    p.add_argument("--eval-seed", type=int, default=0, help="seed of the test-time augmentation draws")
    p.add_argument("--report", help="write the text record here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="rank fonts for one image")
    p.add_argument("image")
    p.add_argument("--seg", required=True)
    p.add_argument("--cls", required=True)
    p.add_argument("--top", type=int, default=5)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bench", help="latency of the full pipeline")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--seg")
    p.add_argument("--cls")
    p.add_argument("--image")
    p.add_argument("--noop", action="store_true", help="time an empty pipeline (harness overhead)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("info", help="parameters, MACs and spec of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--spec", action="store_true", help="also print the spec JSON")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("import", help="binarize a directory-per-font image folder into PFR layout")
    p.add_argument("source")
    p.add_argument("--out", required=True)
    p.add_argument("--image-size", type=int, default=224)
    p.add_argument("--threshold", type=int, default=None)
    p.add_argument("--split-seed", type=int, default=None)
    p.set_defaults(func=cmd_import)
    return ap


CONFIG_ERRORS = (cfgmod.ConfigError, SpecError, ContractError)
DATA_ERRORS = (DataError, C.CheckpointError, GenerationError, CorpusError, RenderError, OSError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericFailure as exc:
        print(f"numeric failure (epoch {exc.epoch}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # remaining validation failures come from config dataclasses
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
