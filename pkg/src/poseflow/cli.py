"""Command-line entry point.

Exit codes are a stable contract: 0 on success, 1 on a runtime failure
(pipeline abort, failing selftest checks), 2 on usage or configuration
errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from . import bench as bench_mod
from .config import PipelineConfig, dump_config, load_config
from .errors import ConfigError, FormatError, PipelineError, PoseflowError
from .pipeline import run_pose_pipeline
from .selftest import run_selftest
from .topology import load_topology

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _on_off(value: str) -> bool:
    if value == "on":
        return True
    if value == "off":
        return False
    raise argparse.ArgumentTypeError(f"expected 'on' or 'off', got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poseflow",
        description="Streaming multi-person pose estimation engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the five-operator pose pipeline")
    run_p.add_argument("--config", help="TOML config file")
    run_p.add_argument("--backend", help="synth | synth:<corpus.toml> | file:<dir>")
    run_p.add_argument("--topology", help="builtin name or topology TOML path")
    run_p.add_argument("--frames", type=int, help="number of frames to process")
    run_p.add_argument("--batch-max", type=int, help="inference batch cap")
    run_p.add_argument("--channel-cap", type=int, help="per-edge FIFO capacity")
    run_p.add_argument("--scheduler", type=_on_off, help="adaptive batching on|off")
    run_p.add_argument("--linger-us", type=int, help="batching linger window")
    run_p.add_argument("--source-latency-us", type=int, help="artificial source delay")
    run_p.add_argument("--seed", type=int, help="procedural scene seed")
    run_p.add_argument("--source-dir", help="directory of PPM frames (default: synthetic)")
    run_p.add_argument("--out", default="out", help="output directory")
    run_p.add_argument("--out-overlay", type=_on_off, default=False,
                       help="write overlay PPMs on|off")
    run_p.add_argument("--progress", action="store_true",
                       help="print a once-a-second progress line to stderr")
    run_p.add_argument("--print-config", action="store_true",
                       help="print the resolved config TOML and exit")

    bench_p = sub.add_parser("bench", help="measure throughput of swept configurations")
    bench_p.add_argument("--profile", help="bench profile TOML (default: builtin)")
    bench_p.add_argument("--report", help="directory for report.json/.csv and figures")
    bench_p.add_argument("--repetitions", type=int, help="override profile repetitions")
    bench_p.add_argument("--frames", type=int, help="override profile frame count")

    self_p = sub.add_parser("selftest", help="run the embedded oracle suite")
    self_p.add_argument("--config", help="TOML config file")
    self_p.add_argument("--topology", help="builtin name or topology TOML path")
    self_p.add_argument("--print-config", action="store_true",
                        help="print the resolved config TOML and exit")
    return parser


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(getattr(args, "config", None))
    overrides = {
        "backend": "backend",
        "topology": "topology",
        "frames": "frames",
        "batch_max": "batch_max",
        "channel_cap": "channel_capacity",
        "scheduler": "scheduler_enabled",
        "linger_us": "batch_linger_us",
        "source_latency_us": "source_latency_us",
        "seed": "seed",
    }
    for arg_name, attr in overrides.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            setattr(cfg, attr, value)
    cfg.validate()
    return cfg


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if args.print_config:
        print(dump_config(cfg), end="")
        return EXIT_OK
    # fail fast on unusable inputs before any output is created
    load_topology(cfg.topology)
    if args.source_dir is not None and not Path(args.source_dir).is_dir():
        raise ConfigError(f"source directory not found: {args.source_dir}")
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-probe"
        probe.touch()
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {out_dir}: {exc}") from exc
    stats = run_pose_pipeline(
        cfg, out_dir,
        overlay=args.out_overlay,
        source_dir=args.source_dir,
        watchdog_s=None,
        progress=args.progress,
    )
    print(f"{stats.frames_out} frames in {stats.wall_ns / 1e9:.2f}s "
          f"({stats.fps:.2f} fps) -> {out_dir}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    if args.profile is not None:
        profile = bench_mod.load_profile(args.profile)
    else:
        profile = bench_mod.default_profile()
    if args.repetitions is not None:
        profile.repetitions = args.repetitions
    if args.frames is not None:
        profile.frames = args.frames
    profile.validate()
    report = bench_mod.run_bench(profile, report_dir=args.report)
    if any(r.failed for r in report.results):
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if args.print_config:
        print(dump_config(cfg), end="")
        return EXIT_OK
    results = run_selftest(cfg)
    all_ok = True
    for res in results:
        marker = "ok" if res.ok else "FAIL"
        print(f"[{marker:>4}] {res.name}: {res.detail}")
        all_ok &= res.ok
    print("selftest: all checks passed" if all_ok else "selftest: FAILURES present")
    return EXIT_OK if all_ok else EXIT_RUNTIME


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "bench":
            return cmd_bench(args)
        return cmd_selftest(args)
    except (ConfigError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineError as exc:
        where = f" (operator {exc.op_name!r})" if exc.op_name else ""
        print(f"pipeline failed{where}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except PoseflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
