"""Command-line entry point: synth | train | infer | eval | serve.

Every run validates its config (unknown keys are fatal and all listed),
writes a resolved-config snapshot beside its outputs, and exits nonzero
with a single machine-parsable JSON error line on failure.
"""

import argparse
import json
import sys
from pathlib import Path

from .config import (
    ConfigError,
    load_config,
    loss_weights_from,
    model_config_from,
    motion_spec_from,
    optim_config_from,
    smooth_spec_from,
    snapshot_config,
    stroke_spec_from,
)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vinpaint",
        description="Semi-supervised video inpainting: synthesize data, train, "
        "propagate one annotation through a clip, evaluate, or serve the annotation UI.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="JSON config file")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="dot-key config override, e.g. train.total_steps=100",
        )

    p = sub.add_parser("synth", help="generate a corrupted-video training corpus")
    common(p)
    p.add_argument("--out", type=Path, required=True, help="dataset output directory")

    p = sub.add_parser("train", help="train the completion + mask prediction networks")
    common(p)
    p.add_argument("--data", type=Path, required=True, help="dataset directory (from synth)")
    p.add_argument("--out", type=Path, required=True, help="run directory for checkpoints/logs")
    p.add_argument("--resume", type=Path, default=None, help="checkpoint to resume from")

    p = sub.add_parser("infer", help="complete a clip from sparse mask annotations")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--clip", type=Path, required=True, help="clip directory of PNG frames")
    p.add_argument(
        "--annotation",
        action="append",
        required=True,
        metavar="INDEX=MASK.png",
        help="frame index and mask file; repeatable",
    )
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("eval", help="PSNR/SSIM/IOU/BCE of results against ground truth")
    common(p)
    p.add_argument("--results", type=Path, required=True, help="directory of result clips")
    p.add_argument("--gt", type=Path, required=True, help="dataset split directory with gt/")
    p.add_argument("--out", type=Path, required=True, help="report file (.jsonl)")

    p = sub.add_parser("serve", help="run the local annotation/inpainting service")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--workdir", type=Path, default=None)
    p.add_argument("--ui-dir", type=Path, default=None, help="built frontend to serve at /")
    return parser


def cmd_synth(args, cfg):
    from .synth import synthesize_corpus

    data = cfg["data"]
    records = synthesize_corpus(
        args.out,
        height=data["height"],
        width=data["width"],
        frames_per_clip=data["frames_per_clip"],
        clips={k: v for k, v in data["clips"].items() if v > 0},
        stroke=stroke_spec_from(cfg),
        smooth=smooth_spec_from(cfg),
        motion=motion_spec_from(cfg),
        seed=cfg["seed"],
        pan_speed=data["pan_speed"],
        source_dir=data["source_dir"],
        noise_dir=data["noise_dir"],
    )
    snapshot_config(cfg, args.out)
    print(f"wrote {len(records)} clips to {args.out}")
    return 0


def cmd_train(args, cfg):
    from .train import train_loop

    snapshot_config(cfg, args.out)
    final = train_loop(
        args.data,
        model_config=model_config_from(cfg),
        optim_config=optim_config_from(cfg),
        weights=loss_weights_from(cfg),
        out_dir=args.out,
        resume_from=args.resume,
    )
    print(f"final checkpoint: {final}")
    return 0


def cmd_infer(args, cfg):
    from .inference import TorchAdapter, inpaint_directory
    from .models import load_checkpoint

    bundle = load_checkpoint(args.checkpoint)
    model = bundle.build_model()
    window = cfg["infer"]["window"] or bundle.config.window
    threshold = cfg["infer"]["threshold"] or bundle.config.mask_threshold
    annotations = {}
    for item in args.annotation:
        if "=" not in item:
            raise ConfigError(f"--annotation must be INDEX=PATH, got {item!r}")
        idx, path = item.split("=", 1)
        annotations[int(idx)] = Path(path)
    out = inpaint_directory(
        args.clip, annotations, TorchAdapter(model), args.out,
        window=window, threshold=threshold,
    )
    snapshot_config(cfg, args.out)
    print(f"completed clip written to {out}")
    return 0


def cmd_eval(args, cfg):
    from .metrics import evaluate_corpus

    report = evaluate_corpus(args.results, args.gt)
    path = report.write(args.out)
    snapshot_config(cfg, Path(args.out).parent)
    print(report.table())
    print(f"report: {path}")
    return 0


def cmd_serve(args, cfg):
    import uvicorn

    from .models import load_checkpoint
    from .service import create_app

    serve_cfg = cfg["serve"]
    port = args.port if args.port is not None else serve_cfg["port"]
    workdir = args.workdir if args.workdir is not None else Path(serve_cfg["workdir"])
    ui_dir = args.ui_dir if args.ui_dir is not None else serve_cfg["ui_dir"]
    bundle = load_checkpoint(args.checkpoint)
    model = bundle.build_model()
    snapshot_config(cfg, workdir)
    app = create_app(model, workdir, ui_dir=ui_dir)
    uvicorn.run(app, host=serve_cfg["host"], port=port, log_level="warning")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "serve": cmd_serve,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as e:
        print(json.dumps({"error": str(e), "command": args.command}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
