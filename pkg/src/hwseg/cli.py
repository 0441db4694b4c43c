"""``hwseg`` command line: synth, train, eval, infer, remove, gradcheck.

Exit codes: 0 ok, 2 bad configuration or input, 3 I/O failure, 4 numeric
failure (divergence, failed gradient check).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from hwseg.errors import HwsegError, NumericError
from hwseg.runconfig import RunConfig, build_config, unet_mismatch

log = logging.getLogger("hwseg")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

CHECKPOINT = "checkpoint.sseg"
STATE = "adam_state.npz"
METRICS = "metrics.log"
CONFIG_COPY = "config.json"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# -- helpers -------------------------------------------------------------------

def _inputs(paths: List[str]) -> List[Path]:
    found: List[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            found.extend(sorted(f for f in p.iterdir() if f.suffix.lower() in (".png", ".jpg", ".jpeg", ".tif", ".tiff")))
        elif p.exists():
            found.append(p)
        else:
            raise FileNotFoundError(f"no such input {p}")
    if not found:
        raise FileNotFoundError("no input images found")
    return found


def _prepare_out(out: Path, force: bool) -> None:
    if out.exists() and any(out.iterdir()) and not force:
        raise FileExistsError(f"{out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)


def _load_model(cfg: RunConfig, checkpoint: Path):
    from hwseg.network import load_checkpoint

    stored, params = load_checkpoint(checkpoint)
    problem = unet_mismatch(cfg, stored)
    if problem:
        raise CliError(f"checkpoint does not match config: {problem}", EXIT_CONFIG)
    # unspecified network fields come from the checkpoint, so the config hash describes the model used
    cfg.unet = stored
    return stored, params


def _checkpoint_arg(args, cfg: RunConfig) -> Path:
    if args.checkpoint:
        return Path(args.checkpoint)
    run_dir = cfg.path("run_dir")
    return run_dir / CHECKPOINT


def pad_to_multiple(img: np.ndarray, multiple: int) -> np.ndarray:
    """Reflect-pad bottom/right so both dims are multiples of ``multiple``."""
    h, w = img.shape
    ph = -h % multiple
    pw = -w % multiple
    if not (ph or pw):
        return img
    return np.pad(img, ((0, ph), (0, pw)), mode="reflect" if min(h, w) > 1 else "edge")


def predict_page(config, params, img: np.ndarray) -> np.ndarray:
    from hwseg.evalkit import predict_masks

    h, w = img.shape
    padded = pad_to_multiple(img, 2 ** config.levels)
    return predict_masks(config, params, padded[None])[0, :h, :w]


# -- subcommands -----------------------------------------------------------------

def cmd_synth(args, cfg: RunConfig) -> int:
    from hwseg.synth import synthesize_dataset

    sources = cfg.path("sources")
    out = cfg.path("dataset")
    if args.train is None or args.val is None:
        raise CliError("synth needs --train and --val counts", EXIT_CONFIG)
    if args.train < 0 or args.val < 0:
        raise CliError("patch counts must be >= 0", EXIT_CONFIG)
    if not sources.is_file():
        raise FileNotFoundError(f"sources manifest {sources} not found")
    manifest = synthesize_dataset(sources, out, args.train, args.val, cfg.seed, cfg.synth,
                                  force=args.force, threads=args.threads)
    print(f"wrote {manifest['counts']['train']} train and {manifest['counts']['val']} val patches to {out}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    from hwseg.network import load_checkpoint, save_checkpoint
    from hwseg.optim import load_state, save_state, train
    from hwseg.synth import load_split

    dataset = cfg.path("dataset")
    run_dir = cfg.path("run_dir")
    ckpt, state_path, metrics = run_dir / CHECKPOINT, run_dir / STATE, run_dir / METRICS

    params = state = None
    start = 0
    if args.resume:
        if not (ckpt.is_file() and state_path.is_file()):
            raise FileNotFoundError(f"nothing to resume in {run_dir}")
        stored, params = load_checkpoint(ckpt)
        if stored != cfg.unet:
            raise CliError(f"checkpoint network {stored} differs from run config {cfg.unet}", EXIT_CONFIG)
        state, start = load_state(state_path)
        # drop log lines written after the last saved checkpoint
        lines = metrics.read_text().splitlines() if metrics.exists() else []
        metrics.write_text("".join(line + "\n" for line in lines[:start]))
    train_set = load_split(dataset, "train")
    if len(train_set[0]) == 0:
        raise CliError(f"{dataset} has no training patches", EXIT_CONFIG)
    val_set = load_split(dataset, "val") if (Path(dataset) / "val").is_dir() else None
    if val_set is not None and len(val_set[0]) == 0:
        val_set = None
    if not args.resume:
        _prepare_out(run_dir, args.force)
        for f in (ckpt, state_path, metrics):
            f.unlink(missing_ok=True)
        metrics.touch()
    saved = cfg.to_dict()
    saved["paths"] = {k: (str(Path(v).resolve()) if v else v) for k, v in saved["paths"].items()}
    (run_dir / CONFIG_COPY).write_text(json.dumps(saved, indent=1, sort_keys=True) + "\n")

    def on_epoch(rec, p, s):
        save_checkpoint(ckpt, cfg.unet, p)
        save_state(state_path, s, rec.epoch + 1)
        print(rec.line(), flush=True)

    try:
        result = train(cfg.adam, cfg.unet, cfg.loss, train_set, cfg.epochs, cfg.seed, val=val_set,
                       params=params, state=state, start_epoch=start, log_path=metrics, on_epoch=on_epoch)
    except NumericError as exc:
        raise CliError(str(exc), EXIT_NUMERIC) from exc
    if not ckpt.exists():
        # zero epochs requested: still leave a loadable initial checkpoint
        save_checkpoint(ckpt, cfg.unet, result.params)
        save_state(state_path, result.state, start)
    print(f"checkpoint {ckpt}")
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    from hwseg.evalkit import evaluate_dataset, write_report
    from hwseg.network import checkpoint_hash

    ckpt = _checkpoint_arg(args, cfg)
    config, params = _load_model(cfg, ckpt)
    dataset = cfg.path("dataset")
    report = evaluate_dataset(params, config, dataset, args.split)
    out = Path(args.out) if args.out else ckpt.parent / "report.json"
    if out.exists() and not args.force:
        raise FileExistsError(f"{out} exists; pass --force to overwrite")
    write_report(out, report, cfg.hash(), checkpoint_hash(ckpt))
    iou_nonh, iou_h = report.iou[0], report.iou[1]
    print(f"split={args.split} iou_handwritten={iou_h:.6f} iou_non_handwritten={iou_nonh:.6f}")
    print(f"report {out}")
    return EXIT_OK


def _page_outputs(args, cfg: RunConfig):
    ckpt = _checkpoint_arg(args, cfg)
    config, params = _load_model(cfg, ckpt)
    files = _inputs(args.inputs)
    out = Path(args.out)
    _prepare_out(out, args.force)
    return config, params, files, out


def cmd_infer(args, cfg: RunConfig) -> int:
    from hwseg.evalkit import overlay
    from hwseg.imageio import read_gray, write_mask, write_rgb

    config, params, files, out = _page_outputs(args, cfg)
    for f in files:
        img = read_gray(f)
        pred = predict_page(config, params, img)
        write_mask(out / f"{f.stem}_mask.png", pred)
        if args.overlay:
            write_rgb(out / f"{f.stem}_overlay.png", overlay(img, pred))
    print(f"wrote {len(files)} mask(s) to {out}")
    return EXIT_OK


def cmd_remove(args, cfg: RunConfig) -> int:
    from hwseg.evalkit import remove_handwritten
    from hwseg.imageio import read_gray, write_gray

    config, params, files, out = _page_outputs(args, cfg)
    for f in files:
        img = read_gray(f)
        pred = predict_page(config, params, img)
        write_gray(out / f"{f.stem}_clean.png", remove_handwritten(img, pred, args.fill))
    print(f"wrote {len(files)} cleaned page(s) to {out}")
    return EXIT_OK


def cmd_gradcheck(args, cfg: RunConfig) -> int:
    from hwseg.gradcheck import run_gradcheck

    results = run_gradcheck(cfg.seed, args.only or None)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  worst_rel_error={r.rel_error:.3e}  {'ok' if r.passed else 'FAIL'}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"all {len(results)} checks passed")
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, default=1,
                        help="worker cap; 1 is the bit-reproducible mode (default)")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    net = argparse.ArgumentParser(add_help=False)
    net.add_argument("--levels", type=int)
    net.add_argument("--base-channels", type=int)
    net.add_argument("--downsample", choices=["maxpool", "sconv"])

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--checkpoint", help=f"checkpoint file (default: <run_dir>/{CHECKPOINT})")
    model.add_argument("--run-dir")

    ap = argparse.ArgumentParser(prog="hwseg", description="handwritten text segmentation toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="synthesize a labeled patch dataset")
    p.add_argument("--sources", help="sources manifest JSON")
    p.add_argument("--out", help="dataset directory")
    p.add_argument("--train", type=int)
    p.add_argument("--val", type=int)
    p.add_argument("--patch-size", type=int)

    p = sub.add_parser("train", parents=[common, net], help="train a segmentation network")
    p.add_argument("--dataset")
    p.add_argument("--out", help="run directory for checkpoint, optimizer state and metrics")
    p.add_argument("--loss", choices=["ce", "dbce", "dbcef", "fce"])
    p.add_argument("--gamma", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--resume", action="store_true", help="continue from the run directory")

    p = sub.add_parser("eval", parents=[common, net, model], help="pooled per-class IoU on a split")
    p.add_argument("--dataset")
    p.add_argument("--split", default="val", choices=["train", "val"])
    p.add_argument("--out", help="report path (default: report.json next to the checkpoint)")

    p = sub.add_parser("infer", parents=[common, net, model], help="write predicted masks")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--overlay", action="store_true", help="also write red overlay images")

    p = sub.add_parser("remove", parents=[common, net, model], help="erase predicted handwriting")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--fill", default="background-median", choices=["white", "background-median"])

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every backward pass")
    p.add_argument("--only", nargs="*", help="restrict to these check names")
    return ap


def _overrides(args) -> dict:
    get = lambda name: getattr(args, name, None)
    o = {
        "seed": get("seed"),
        "unet.levels": get("levels"),
        "unet.base_channels": get("base_channels"),
        "unet.downsample_mode": get("downsample"),
        "loss.variant": get("loss"),
        "loss.gamma": get("gamma"),
        "adam.batch_size": get("batch_size"),
        "adam.lr0": get("lr"),
        "train.epochs": get("epochs"),
        "synth.patch_size": get("patch_size"),
        "paths.sources": get("sources"),
        "paths.dataset": get("dataset"),
        "paths.run_dir": get("run_dir"),
    }
    if args.command == "synth":
        o["paths.dataset"] = get("out") or o["paths.dataset"]
    if args.command == "train":
        o["paths.run_dir"] = get("out") or o["paths.run_dir"]
    return o


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "remove": cmd_remove,
    "gradcheck": cmd_gradcheck,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        overrides = _overrides(args)
        config_file = args.config
        if args.command == "train" and args.resume and config_file is None and overrides["paths.run_dir"]:
            # a resumed run picks up its recorded settings; flags still win
            saved = Path(overrides["paths.run_dir"]) / CONFIG_COPY
            if saved.is_file():
                config_file = str(saved)
        cfg = build_config(config_file, overrides)
        return COMMANDS[args.command](args, cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, FileExistsError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except HwsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
