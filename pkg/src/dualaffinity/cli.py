"""Command line entry point: ``dualaffinity <subcommand> [flags]``."""
import argparse
import glob
import logging
import os
import sys

import numpy as np

from .data import DatasetSpec, SyntheticSample, generate_dataset, multi_hot
from .io import (load_checkpoint, read_pgm, read_saliency, save_checkpoint, write_labelmap,
                 write_pgm, write_ppm, write_saliency)
from .metrics import format_metric
from .pipeline import evaluate, run_pipeline
from .report import emit_report, read_rows
from .tensor import load_tensor, save_tensor

EXIT_USAGE = 2
EXIT_IO = 3

DEFAULTS = {
    "seed": 0,
    "stages": 3,
    "scales": "0.5,1.0,1.5",
    "cam_thresh": 0.2,
    "sal_thresh": 0.06,
    "out": "out",
    "data": None,
    "n_samples": 200,
    "epochs": 15,
    "cls_epochs": 15,
    "patience": 5,
    "lr0": 0.1,
    "stage_lr0": 0.03,
    "momentum": 0.9,
    "batch_size": 4,
    "crf_iterations": 5,
    "dump_limit": 8,
    "n_classes": 4,
    "checkpoint": None,
    "pred": None,
    "gt": None,
}
TYPES = {"seed": int, "stages": int, "scales": str, "cam_thresh": float, "sal_thresh": float,
         "out": str, "data": str, "n_samples": int, "epochs": int, "cls_epochs": int,
         "patience": int, "lr0": float, "stage_lr0": float, "momentum": float, "batch_size": int,
         "crf_iterations": int, "dump_limit": int, "n_classes": int, "checkpoint": str,
         "pred": str, "gt": str}

log = logging.getLogger("dualaffinity")


class UsageError(Exception):
    pass


def read_config(path):
    """Parse a UTF-8 ``key = value`` file; '#' starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in TYPES:
                raise UsageError(f"{path}:{lineno}: unknown config key '{key}'")
            try:
                values[key] = TYPES[key](value)
            except ValueError:
                raise UsageError(f"{path}:{lineno}: bad value for '{key}': {value!r}") from None
    return values


def parse_scales(text):
    try:
        scales = tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise UsageError(f"bad --scales value {text!r}") from None
    if not scales or any(s <= 0 for s in scales):
        raise UsageError("--scales needs positive comma-separated ratios")
    return scales


def build_parser():
    common = argparse.ArgumentParser(add_help=False, argument_default=None)
    common.add_argument("--config", help="key = value settings file; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--data", help="dataset directory written by gen-data")
    common.add_argument("--n-samples", type=int, dest="n_samples")
    common.add_argument("-v", "--verbose", action="store_true", default=False)

    train = argparse.ArgumentParser(add_help=False, argument_default=None)
    train.add_argument("--stages", type=int)
    train.add_argument("--scales", help="comma-separated CAM scales (default 0.5,1.0,1.5)")
    train.add_argument("--cam-thresh", type=float, dest="cam_thresh")
    train.add_argument("--sal-thresh", type=float, dest="sal_thresh")
    train.add_argument("--epochs", type=int)
    train.add_argument("--cls-epochs", type=int, dest="cls_epochs")
    train.add_argument("--patience", type=int)
    train.add_argument("--lr0", type=float, help="classifier learning rate")
    train.add_argument("--stage-lr0", type=float, dest="stage_lr0", help="multi-task learning rate")
    train.add_argument("--momentum", type=float)
    train.add_argument("--batch-size", type=int, dest="batch_size")
    train.add_argument("--crf-iterations", type=int, dest="crf_iterations")
    train.add_argument("--dump-limit", type=int, dest="dump_limit")

    parser = argparse.ArgumentParser(prog="dualaffinity", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="write a synthetic dataset")
    sub.add_parser("train-cls", parents=[common, train], help="train the classifier only")
    sub.add_parser("run-pipeline", parents=[common, train], help="full train/refine/relabel run")
    p = sub.add_parser("refine-cam", parents=[common, train], help="refined multi-scale CAMs")
    p.add_argument("--checkpoint", required=False)
    p = sub.add_parser("eval", parents=[common], help="score predicted label maps")
    p.add_argument("--pred")
    p.add_argument("--gt")
    p.add_argument("--n-classes", type=int, dest="n_classes")
    sub.add_parser("report", parents=[common], help="print a metrics.csv report")
    return parser


def resolve(args):
    opts = dict(DEFAULTS)
    if args.config:
        opts.update(read_config(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    opts["scales"] = parse_scales(opts["scales"]) if isinstance(opts["scales"], str) else opts["scales"]
    for key in ("stages", "n_samples", "epochs", "cls_epochs", "patience", "batch_size", "n_classes"):
        if opts[key] < 1:
            raise UsageError(f"--{key.replace('_', '-')} must be >= 1")
    for key in ("cam_thresh", "sal_thresh"):
        if not 0 < opts[key] < 1:
            raise UsageError(f"--{key.replace('_', '-')} must lie in (0, 1)")
    return opts


def load_dataset(opts):
    if not opts["data"]:
        return generate_dataset(DatasetSpec(n_samples=opts["n_samples"], seed=opts["seed"]))
    directory = opts["data"]
    samples = []
    with open(os.path.join(directory, "labels.txt"), encoding="utf-8") as fh:
        for raw in fh:
            parts = raw.split()
            if not parts:
                continue
            sid = parts[0]
            labels = frozenset(int(c) for c in parts[1].split(",")) if len(parts) > 1 else frozenset()
            image = load_tensor(os.path.join(directory, f"{sid}_image.axt"))
            gt = read_pgm(os.path.join(directory, f"{sid}_gt.pgm"))
            sal = read_saliency(os.path.join(directory, f"{sid}_sal.pgm"))
            samples.append(SyntheticSample(image, gt, labels, sal, sid))
    if not samples:
        raise OSError(f"{directory}: no samples listed in labels.txt")
    return samples


def estimator_params(opts):
    return {"num_stages": opts["stages"], "scales": opts["scales"],
            "cam_thresh": opts["cam_thresh"], "sal_thresh": opts["sal_thresh"],
            "cls_epochs": opts["cls_epochs"], "max_epochs": opts["epochs"],
            "patience": opts["patience"], "lr0": opts["lr0"],
            "stage_lr0": opts["stage_lr0"], "momentum": opts["momentum"],
            "batch_size": opts["batch_size"], "crf_iterations": opts["crf_iterations"],
            "random_state": opts["seed"]}


def cmd_gen_data(opts):
    out = opts["out"]
    os.makedirs(out, exist_ok=True)
    samples = generate_dataset(DatasetSpec(n_samples=opts["n_samples"], seed=opts["seed"]))
    lines = []
    for s in samples:
        save_tensor(os.path.join(out, f"{s.sample_id}_image.axt"), s.image)
        write_ppm(os.path.join(out, f"{s.sample_id}_image.ppm"), s.image)
        write_labelmap(os.path.join(out, f"{s.sample_id}_gt.pgm"), s.gt_mask)
        write_saliency(os.path.join(out, f"{s.sample_id}_sal.pgm"), s.oracle_saliency)
        lines.append(f"{s.sample_id} {','.join(str(c) for c in sorted(s.image_labels))}".rstrip())
    with open(os.path.join(out, "labels.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {len(samples)} samples to {out}")


def cmd_train_cls(opts):
    from .estimator import DualAffinitySegmenter
    from .model import ToyModel
    from .training import train_classification

    samples = load_dataset(opts)
    est = DualAffinitySegmenter(**estimator_params(opts))
    model = ToyModel(seed=opts["seed"])
    cfg = est._stage_config(opts["cls_epochs"])
    train_classification(model, [s.image for s in samples],
                         [multi_hot(s.image_labels, model.n_classes) for s in samples], cfg)
    path = os.path.join(opts["out"], "checkpoint_cls")
    save_checkpoint(path, model, cfg)
    print(f"classifier checkpoint written to {path}")


def cmd_run_pipeline(opts):
    out = opts["out"]
    os.makedirs(out, exist_ok=True)
    samples = load_dataset(opts)
    result = run_pipeline(samples, **estimator_params(opts))
    ids = [s.sample_id for s in samples]
    emit_report(result.rows, out, result.stages, ids, opts["dump_limit"],
                [s.image_labels for s in samples])
    pred_dir = os.path.join(out, "pred")
    os.makedirs(pred_dir, exist_ok=True)
    for sid, pred in zip(ids, result.predictions):
        write_labelmap(os.path.join(pred_dir, f"{sid}.pgm"), pred)
    est = result.estimator
    save_checkpoint(os.path.join(out, "checkpoint"), est.model_, est._stage_config(est.max_epochs, est.stage_lr0))
    print(f"thresholds cam={opts['cam_thresh']} sal={opts['sal_thresh']}")
    for row in sorted(result.rows, key=lambda r: (r["stage"], r["split"])):
        print(f"stage {row['stage']} {row['split']}: precision {format_metric(row['precision'])} "
              f"recall {format_metric(row['recall'])} miou {format_metric(row['miou'])}")


def cmd_refine_cam(opts):
    from .cam import multiscale_cam
    from .pipeline import refined_cam

    if not opts["checkpoint"]:
        raise UsageError("refine-cam needs --checkpoint")
    model = load_checkpoint(opts["checkpoint"])
    samples = load_dataset(opts)
    out = opts["out"]
    os.makedirs(out, exist_ok=True)
    fwd = refined_cam(model)
    for s in samples:
        cams = multiscale_cam(fwd, s.image, opts["scales"])
        save_tensor(os.path.join(out, f"{s.sample_id}_refined_cam.axt"), cams.maps)
        for c in sorted(s.image_labels):
            write_pgm(os.path.join(out, f"{s.sample_id}_refined_cam{c}.pgm"),
                      np.rint(cams.maps[c - 1] * 255).astype(np.uint8))
    print(f"refined CAMs for {len(samples)} samples written to {out}")


def cmd_eval(opts):
    if not opts["pred"] or not opts["gt"]:
        raise UsageError("eval needs --pred and --gt")
    names = sorted(os.path.basename(p) for p in glob.glob(os.path.join(opts["pred"], "*.pgm")))
    if not names:
        raise OSError(f"{opts['pred']}: no .pgm files")
    preds = [read_pgm(os.path.join(opts["pred"], n)) for n in names]
    gts = [read_pgm(os.path.join(opts["gt"], n)) for n in names]
    m = evaluate(preds, gts, opts["n_classes"])
    print(f"precision {format_metric(m['precision'])} recall {format_metric(m['recall'])} "
          f"miou {format_metric(m['miou'])}")


def cmd_report(opts):
    rows = read_rows(os.path.join(opts["out"], "metrics.csv"))
    print(f"{'stage':>5} {'split':>5} {'precision':>9} {'recall':>9} {'miou':>9}")
    for r in rows:
        print(f"{r['stage']:>5} {r['split']:>5} {r['precision']:>9} {r['recall']:>9} {r['miou']:>9}")


COMMANDS = {"gen-data": cmd_gen_data, "train-cls": cmd_train_cls,
            "run-pipeline": cmd_run_pipeline, "refine-cam": cmd_refine_cam,
            "eval": cmd_eval, "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        opts = resolve(args)
        COMMANDS[args.command](opts)
    except UsageError as exc:
        print(f"dualaffinity: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"dualaffinity: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
