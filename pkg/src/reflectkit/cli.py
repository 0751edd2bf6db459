"""Command line entry points.

Every subcommand exits 0 on success; failures print one JSON object to
stderr with a stable error code, the message, and the stage that failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import PipelineConfig
from .errors import InvalidArgumentError, ReflectError
from . import pipeline

log = logging.getLogger("reflect")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE",
                        help="pipeline config JSON (defaults everywhere else)")
    common.add_argument("--threads", type=int, default=1, metavar="N",
                        help="worker cap for parallel sections")
    common.add_argument("--verbose", action="store_true",
                        help="progress logging on stderr")

    parser = argparse.ArgumentParser(
        prog="reflect",
        description="Separate a video into background and reflection layers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", parents=[common],
                       help="track feature points through a frame directory")
    p.add_argument("frames", help="directory of PNG frames")
    p.add_argument("--out", required=True, help="output tracks JSON")

    p = sub.add_parser("label", parents=[common],
                       help="assign each track to a layer")
    p.add_argument("tracks", help="tracks JSON from `reflect track`")
    p.add_argument("--out", required=True, help="output labeled tracks JSON")
    p.add_argument("--scribbles", action="append", default=[], metavar="FILE",
                   help="scribble JSON (repeatable; file may hold a list)")
    p.add_argument("--mask", help="label mask PNG (0 none, 1 background, "
                                  "2 reflection)")
    p.add_argument("--mask-frame", type=int, default=0,
                   help="frame index the mask applies to")
    p.add_argument("--frames", help="input frame directory (needed to "
                                    "propagate scribbles)")
    p.add_argument("--kmeans", action="store_true",
                   help="label by velocity clustering instead of scribbles")

    p = sub.add_parser("separate", parents=[common],
                       help="decompose frames into layers using labeled tracks")
    p.add_argument("frames", help="directory of PNG frames")
    p.add_argument("tracks", help="labeled tracks JSON")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic bundle with ground truth")
    p.add_argument("--out", required=True, help="output bundle directory")
    p.add_argument("--seed", type=int, default=0,
                   help="base-image random seed")

    p = sub.add_parser("eval", parents=[common],
                       help="score a separation against ground truth")
    p.add_argument("result", help="directory written by `reflect separate`")
    p.add_argument("gt", help="bundle directory written by `reflect synth`")
    p.add_argument("--out", required=True, help="output ssim.csv path")

    p = sub.add_parser("serve", parents=[common],
                       help="run the annotation HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    return parser


def _dispatch(args: argparse.Namespace, config: PipelineConfig) -> None:
    if args.command == "track":
        ts = pipeline.stage_track(args.frames, args.out, config)
        log.info("tracked %d points -> %s", len(ts), args.out)
    elif args.command == "label":
        labeled = pipeline.stage_label(
            args.tracks, args.out, config,
            scribble_paths=args.scribbles or None,
            mask_path=args.mask, mask_frame=args.mask_frame,
            frames_dir=args.frames, use_kmeans=args.kmeans)
        log.info("labeled %d tracks -> %s", len(labeled), args.out)
    elif args.command == "separate":
        pipeline.stage_separate(args.frames, args.tracks, args.out, config)
        log.info("separation written to %s", args.out)
    elif args.command == "synth":
        pipeline.stage_synth(args.out, config, seed=args.seed)
        log.info("bundle written to %s", args.out)
    elif args.command == "eval":
        result = pipeline.stage_eval(args.result, args.gt, args.out, config)
        log.info("mean background SSIM %.4f (baseline %.4f) -> %s",
                 result.mean_background, result.mean_baseline, args.out)
    elif args.command == "serve":
        from .service import create_app
        import uvicorn
        uvicorn.run(create_app(config), host=args.host, port=args.port,
                    log_level="info" if args.verbose else "warning")


def main(argv: list | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, format="%(message)s",
                        level=logging.INFO if args.verbose else logging.WARNING)
    try:
        if args.threads < 1:
            raise InvalidArgumentError("--threads must be >= 1")
        config = (PipelineConfig.load(args.config) if args.config
                  else PipelineConfig())
        _dispatch(args, config)
    except ReflectError as exc:
        payload = exc.to_json()
        payload["stage"] = args.command
        print(json.dumps(payload), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
