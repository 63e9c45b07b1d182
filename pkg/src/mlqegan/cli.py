"""Command-line entry point: ``mlqegan <subcommand> [options]``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import ast
import logging
import sys
from pathlib import Path

from .core import ConfigError, dump_config, load_config, save_config

log = logging.getLogger("mlqegan")


def _parse_value(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def _overrides(pairs: list[str]) -> dict:
    """``a.b=1`` style assignments -> nested dict."""
    out: dict = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, value = item.split("=", 1)
        node = out
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = _parse_value(value.strip())
    return out


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. --set dataset.base_h=16")
    common.add_argument("--seed", type=int)
    common.add_argument("--epochs", type=int)
    common.add_argument("--print-config", action="store_true", help="print the fully-defaulted config and exit")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mlqegan", parents=[common],
                                     description="Mixed-supervision multilevel GAN image enhancement")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth-data", parents=[common], help="synthesize a procedural paired dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--task", default=None, help="sr4 | sr8 | sr4+smoke | sr8+smoke")

    p = sub.add_parser("prepare-pairs", parents=[common], help="cut paired patches from full-resolution images")
    p.add_argument("--images", type=Path, required=True, help="folder of full-resolution PNG images")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", parents=[common], help="staged + joint training on a dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--data", type=Path, help="dataset folder (synthesized into <out>/data when omitted)")
    p.add_argument("--resume", type=Path)
    p.add_argument("--force", action="store_true", help="accept a checkpoint with a different config hash")
    p.add_argument("--saturating", action="store_true", help="use the saturating log(1 - D) generator adversarial term")
    p.add_argument("--baseline", action="store_true", help="train the single-level baseline on top-level pairs")

    p = sub.add_parser("evaluate", parents=[common], help="RRMSE / msSSIM / QILV of a checkpoint on a manifest")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--role", default="test")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("sweep", parents=[common], help="scarcity sweep: QEGAN vs MLQEGAN")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--high-counts", type=_int_list, default=[8, 32, 128])
    p.add_argument("--mid-count", type=int, default=512)
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2])
    p.add_argument("--task", default="sr4")

    p = sub.add_parser("report", parents=[common], help="summary CSV and plots from sweep results")
    p.add_argument("--results", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    return parser


def _config(args, task: str | None = None):
    from .harness import apply_task

    overrides = _overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if getattr(args, "saturating", False):
        overrides["adversarial_mode"] = "saturating"
    cfg = load_config(args.config, overrides)
    return apply_task(cfg, task) if task else cfg


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = _config(args, getattr(args, "task", None) if args.command in ("synth-data", "sweep") else None)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if args.print_config or args.command is None:
        print(dump_config(cfg), end="")
        return 0
    try:
        return _dispatch(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 2
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args, cfg) -> int:
    from . import data, harness, trainer

    cmd = args.command
    if cmd in ("synth-data", "prepare-pairs", "train", "sweep", "report"):
        args.out.mkdir(parents=True, exist_ok=True)
        save_config(cfg, args.out / "config.toml")

    if cmd == "synth-data":
        recs = data.synth_data(cfg, args.out)
        print(f"wrote {len(recs)} pairs to {args.out}")
    elif cmd == "prepare-pairs":
        sources = data.load_source_images(args.images, cfg.image_channels)
        recs = data.prepare_pairs(sources, cfg, args.out)
        print(f"wrote {len(recs)} pairs to {args.out}")
    elif cmd == "train":
        data_dir = args.data
        if data_dir is None:
            data_dir = args.out / "data"
            if not (data_dir / data.MANIFEST_NAME).exists():
                data.synth_data(cfg, data_dir)
        pairs = data.load_pairs(data_dir, role="train")
        eval_ids = [r["id"] for r in data.read_manifest(data_dir) if r["role"] != "train"]
        data.check_disjoint([p.id for p in pairs], eval_ids)
        if args.baseline:
            state = trainer.train_qegan_baseline(pairs, cfg, out_dir=args.out)
        else:
            streams = trainer.LevelStreams.from_pairs(pairs, cfg)
            state = trainer.train(cfg, streams, out_dir=args.out, resume=args.resume)
        print(f"trained {state.step} steps; log at {args.out / 'log.csv'}")
    elif cmd == "evaluate":
        state = trainer.load_checkpoint(args.model, None, force=args.force)
        _, agg = harness.evaluate_manifest(state.model, args.manifest, args.out, role=args.role)
        print(" ".join(f"{m}={agg[m + '_mean']:.4f}" for m in harness.METRICS))
    elif cmd == "sweep":
        spec = harness.SweepSpec(args.high_counts, args.mid_count, args.seeds, args.task)
        results = harness.run_sweep(spec, cfg, args.data, args.out)
        print(f"{len(results)} sweep cells; results in {args.out / 'sweep_results.csv'}")
    elif cmd == "report":
        files = harness.cmd_report(harness.read_results(args.results), args.out)
        print("\n".join(str(f) for f in files))
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
