"""Command line interface: ``hdrenhance <subcommand> [options]``.

Exit codes: 0 success, 2 usage or input error, 3 corrupt or mismatched
checkpoint / model data. Progress goes to stderr, results to files.
"""

import argparse
import json
import logging
import os
import sys
import time

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .datasets import load_hdr_dir, write_hdr_corpus
from .errors import CheckpointError, HdrEnhanceError
from .fusion import exposure_fuse
from .imageio import load_png, save_png
from .metrics.evaluate import TEST_SIZE, evaluate, parse_methods
from .nn.checkpoint import load_checkpoint
from .nn.network import enhance_image
from .synthpipe import PATCH_SIZE, pair_seed, provenance_json, synthesize
from .training import TrainConfig, train
from .utils.validation import float_to_ldr, ldr_to_float

logger = logging.getLogger("hdrenhance")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
DEFAULT_SEED = 0


class CliError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


class JsonFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps({"time": round(record.created, 3), "level": record.levelname,
                           "logger": record.name, "message": record.getMessage()})


def _setup_logging(args):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonFormatter() if args.json_log else logging.Formatter("%(levelname)s %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    logging.captureWarnings(True)


def _require_dir(path, what):
    if not path or not os.path.isdir(path):
        raise CliError(f"{what} {path!r} is not a directory")


def _load_corpus(hdr_dir):
    _require_dir(hdr_dir, "--hdr-dir")
    images, paths = load_hdr_dir(hdr_dir)
    if not images:
        raise CliError(f"no readable .hdr files in {hdr_dir}")
    return images, paths


def _load_net(path):
    if not path or not os.path.isfile(path):
        raise CliError(f"checkpoint {path!r} does not exist")
    try:
        return load_checkpoint(path)
    except (CheckpointError, OSError) as exc:
        raise CliError(f"cannot load checkpoint {path}: {exc}", EXIT_DATA) from exc


def cmd_scenes(args):
    paths = write_hdr_corpus(args.out, args.count, args.seed, args.height, args.width)
    print(f"wrote {len(paths)} HDR scenes to {args.out}")


def cmd_synth(args):
    images, paths = _load_corpus(args.hdr_dir)
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.count):
        k = i % len(images)
        x, y, prov, _ = synthesize(images[k], pair_seed(args.seed, [i]), size=args.size,
                                   source=os.path.basename(paths[k]))
        stem = os.path.join(args.out, f"{i:05d}")
        save_png(stem + "_x.png", x)
        save_png(stem + "_y.png", y)
        with open(stem + ".json", "w") as fh:
            fh.write(provenance_json(prov) + "\n")
        logger.info("pair %d/%d from %s", i + 1, args.count, paths[k])
    print(f"wrote {args.count} pairs ({3 * args.count} files) from {len(images)} HDR images to {args.out}")


def cmd_train(args):
    images, paths = _load_corpus(args.hdr_dir)
    cfg = TrainConfig(
        epochs=args.epochs, iterations_per_epoch=args.iters, batch_size=args.batch,
        seed=args.seed, width_scale=args.width_scale, use_global_encoder=not args.no_global_encoder,
        ckpt_every=args.ckpt_every, patch_size=args.patch_size, learning_rate=args.lr,
        precompute=args.precompute,
    )
    try:
        cfg.validate()
    except HdrEnhanceError as exc:
        raise CliError(str(exc)) from exc
    start = time.time()
    _, rows = train(images, cfg, out_dir=args.out, sources=[os.path.basename(p) for p in paths])
    final = rows[-1][2] if rows else float("nan")
    print(f"trained {len(rows)} steps in {time.time() - start:.1f}s, final loss {final:.6f}; "
          f"outputs in {args.out}")


def _collect_inputs(path):
    if os.path.isdir(path):
        names = sorted(n for n in os.listdir(path) if n.lower().endswith(".png"))
        if not names:
            raise CliError(f"no .png files in {path}")
        return [os.path.join(path, n) for n in names]
    if not os.path.isfile(path):
        raise CliError(f"input {path!r} does not exist")
    return [path]


def cmd_enhance(args):
    net = _load_net(args.checkpoint)
    inputs = _collect_inputs(args.input)
    batch = os.path.isdir(args.input)
    results = []
    # everything is computed before the first file is written
    for path in inputs:
        out = enhance_image(net, load_png(path))
        target = os.path.join(args.out, os.path.basename(path)) if batch else args.out
        results.append((target, out))
        logger.info("enhanced %s", path)
    if batch:
        os.makedirs(args.out, exist_ok=True)
    for target, out in results:
        save_png(target, out)
    print(f"enhanced {len(results)} image(s)")


def cmd_eval(args):
    methods = parse_methods(args.methods)
    images, paths = _load_corpus(args.hdr_dir)
    net = _load_net(args.checkpoint) if "proposed" in methods else None
    ids = [os.path.splitext(os.path.basename(p))[0] for p in paths]
    outputs = {} if args.save_outputs else None
    report = evaluate(images, methods, net=net, seed=args.seed, ids=ids, size=args.size, outputs=outputs)
    os.makedirs(os.path.dirname(os.path.abspath(args.report)), exist_ok=True)
    with open(args.report, "w", newline="") as fh:
        fh.write(report.to_csv())
    summary = args.summary or os.path.splitext(args.report)[0] + ".json"
    with open(summary, "w") as fh:
        fh.write(report.to_json() + "\n")
    if outputs is not None:
        os.makedirs(args.save_outputs, exist_ok=True)
        for (image_id, method), img in outputs.items():
            save_png(os.path.join(args.save_outputs, f"{image_id}_{method}.png"), img)
    for method, means in report.means().items():
        print(f"{method}: tmqi={means['tmqi']:.4f} entropy={means['entropy']:.4f} (n={means['count']})")


def cmd_fuse(args):
    imgs = []
    for path in args.inputs:
        if not os.path.isfile(path):
            raise CliError(f"input {path!r} does not exist")
        imgs.append(load_png(path))
    if len({img.shape for img in imgs}) != 1:
        raise CliError("fuse inputs must all have the same dimensions: "
                       + ", ".join(f"{p} {i.shape[1]}x{i.shape[0]}" for p, i in zip(args.inputs, imgs)))
    fused = exposure_fuse([ldr_to_float(img).astype(np.float64) for img in imgs])
    save_png(args.out, float_to_ldr(fused))
    print(f"fused {len(imgs)} images into {args.out}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults; command line flags win")
    common.add_argument("--json-log", action="store_true", help="log to stderr as JSON lines")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hdrenhance", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenes", parents=[common], help="write procedural HDR scenes")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--height", type=int, default=384)
    p.add_argument("--width", type=int, default=512)
    p.set_defaults(func=cmd_scenes)

    p = sub.add_parser("synth", parents=[common], help="synthesize training pairs from HDR images")
    p.add_argument("--hdr-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--size", type=int, default=PATCH_SIZE)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train the enhancement network")
    p.add_argument("--hdr-dir", required=True)
    p.add_argument("--out", required=True, help="directory for checkpoints and the loss log")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--iters", type=int, default=51, help="iterations per epoch")
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--width-scale", type=float, default=1.0)
    p.add_argument("--no-global-encoder", action="store_true")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--ckpt-every", type=int, default=50)
    p.add_argument("--patch-size", type=int, default=PATCH_SIZE)
    p.add_argument("--lr", type=float, default=0.002)
    p.add_argument("--precompute", action="store_true", help="draw one fixed pair per image and reuse it")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", parents=[common], help="enhance PNG images with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="PNG file or directory of PNGs")
    p.add_argument("--out", required=True, help="output PNG, or directory in batch mode")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("eval", parents=[common], help="score methods on synthesized test inputs")
    p.add_argument("--hdr-dir", required=True)
    p.add_argument("--methods", default="input,he")
    p.add_argument("--checkpoint")
    p.add_argument("--report", default="report.csv")
    p.add_argument("--summary", help="aggregate JSON path (default: next to the report)")
    p.add_argument("--save-outputs", help="directory for every method's output PNG")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--size", type=int, default=TEST_SIZE)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fuse", parents=[common], help="exposure-fuse PNGs of one scene")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)
    return parser


def _apply_config(parser, argv):
    """Parse ``argv`` with defaults taken from ``--config`` so explicit flags win."""
    argv = sys.argv[1:] if argv is None else list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    choices = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in choices), None)
    if not known.config or command is None:
        return parser.parse_args(argv)
    try:
        with open(known.config) as fh:
            config = json.load(fh)
    except (OSError, ValueError) as exc:
        parser.error(f"cannot read config {known.config}: {exc}")
    if not isinstance(config, dict):
        parser.error("config file must hold a JSON object")
    sub = choices[command]
    config = {k.replace("-", "_"): v for k, v in config.items()}
    unknown = sorted(set(config) - {a.dest for a in sub._actions} - {"help", "config"})
    if unknown:
        parser.error(f"unknown config keys for {command}: {', '.join(unknown)}")
    for action in sub._actions:
        if action.dest in config:
            action.required = False
    sub.set_defaults(**config)
    return parser.parse_args(argv)


def main(argv=None):
    parser = build_parser()
    args = _apply_config(parser, argv)
    _setup_logging(args)
    threads = os.environ.get("HDRE_THREADS")
    try:
        limit = int(threads) if threads else None
        if limit is not None and limit < 1:
            raise ValueError
    except ValueError:
        print(f"hdrenhance: error: HDRE_THREADS must be a positive integer, got {threads!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        with threadpool_limits(limits=limit):
            args.func(args)
    except CliError as exc:
        print(f"hdrenhance {args.command}: error: {exc}", file=sys.stderr)
        return exc.code
    except CheckpointError as exc:
        print(f"hdrenhance {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (HdrEnhanceError, OSError) as exc:
        print(f"hdrenhance {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
