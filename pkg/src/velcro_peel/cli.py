"""Command-line entry points: bench, run, and sample."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace

from velcro_peel.controller import CONTROLLERS, HEURISTIC, run_episode
from velcro_peel.geometry import ShapeKind, point_at, sample_curve
from velcro_peel.harness import (
    BenchmarkConfig,
    episode_seed,
    format_summary,
    load_benchmark_config,
    run_benchmark,
    summarize,
    write_rows_csv,
)
from velcro_peel.trajectory import dump_trajectory

CONFIG_ENV_VAR = "VELCRO_PEEL_CONFIG"


def _base_config(args) -> BenchmarkConfig:
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV_VAR)
    return load_benchmark_config(path) if path else BenchmarkConfig()


def _apply_overrides(cfg: BenchmarkConfig, args) -> BenchmarkConfig:
    if getattr(args, "shapes", None):
        cfg = replace(cfg, shapes=tuple(ShapeKind(s) for s in args.shapes.split(",")))
    if getattr(args, "controllers", None):
        cfg = replace(cfg, controllers=tuple(args.controllers.split(",")))
    if getattr(args, "episodes", None) is not None:
        cfg = replace(cfg, episodes_per_shape=args.episodes)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, base_seed=args.seed)
    if getattr(args, "noise_deg", None) is not None:
        cfg = replace(cfg, noise_std_beta=math.radians(args.noise_deg))
    if getattr(args, "workers", None) is not None:
        cfg = replace(cfg, workers=args.workers)
    return cfg


def _cmd_bench(args) -> int:
    cfg = _apply_overrides(_base_config(args), args)
    total = len(cfg.shapes) * len(cfg.controllers) * cfg.episodes_per_shape
    done = [0]

    def progress(_row):
        done[0] += 1
        if not args.quiet and done[0] % 50 == 0:
            print(f"  {done[0]}/{total} episodes", file=sys.stderr)

    rows = run_benchmark(cfg, progress=progress)
    try:
        write_rows_csv(rows, args.csv)
    except OSError as exc:
        print(f"error: cannot write {args.csv}: {exc}", file=sys.stderr)
        return 1
    print(format_summary(summarize(rows)))
    print(f"wrote {len(rows)} episode rows to {args.csv}")
    return 0


def _cmd_run(args) -> int:
    cfg = _apply_overrides(_base_config(args), args)
    shape = ShapeKind(args.shape)
    seed = episode_seed(cfg.base_seed, shape, args.index)
    curve = sample_curve(shape, seed, cfg.attached_length, cfg.turn_sign)
    run = run_episode(
        curve,
        args.controller,
        seed,
        filter_cfg=cfg.filter_cfg,
        controller_cfg=cfg.controller_cfg,
        cost_cfg=cfg.cost_cfg,
        noise_std_beta=cfg.noise_std_beta,
        forbid_after_rotate=cfg.forbid_after_rotate,
        collect_trajectory=True,
        snapshot_size=args.particles,
    )
    m = run.metrics
    print(
        f"{shape.value}/{args.controller} episode {args.index} (seed {seed}): "
        f"event={m.terminal_event} success={m.success} cost={m.total_cost:.3f} steps={m.steps}"
    )
    if args.trajectory:
        try:
            dump_trajectory(run.records, args.trajectory)
        except OSError as exc:
            print(f"error: cannot write {args.trajectory}: {exc}", file=sys.stderr)
            return 1
        print(f"wrote {len(run.records)} trajectory records to {args.trajectory}")
    return 0


def _cmd_sample(args) -> int:
    cfg = _apply_overrides(_base_config(args), args)
    shape = ShapeKind(args.shape)
    curves = []
    for index in range(args.count):
        seed = episode_seed(cfg.base_seed, shape, index)
        curve = sample_curve(shape, seed, cfg.attached_length, cfg.turn_sign)
        n = max(2, int(curve.attached_length / args.spacing))
        ells = [curve.attached_length * i / (n - 1) for i in range(n)]
        curves.append(
            {
                "shape": shape.value,
                "index": index,
                "seed": seed,
                "tilt": curve.tilt,
                "radius": curve.radius,
                "corner_radius": curve.corner_radius,
                "flat_after_ratio": curve.flat_after_ratio,
                "turn_sign": curve.turn_sign,
                "attached_length": curve.attached_length,
                "points": [list(point_at(curve, ell)) for ell in ells],
            }
        )
    try:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(curves, fh, indent=2)
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(curves)} {shape.value} curves to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="velcro-peel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="run the benchmark grid and write per-episode CSV")
    bench.add_argument("--config", help=f"config file (or ${CONFIG_ENV_VAR})")
    bench.add_argument("--shapes", help="comma-separated subset of flat,arc,corner")
    bench.add_argument("--controllers", help="comma-separated subset of full_obs,heuristic")
    bench.add_argument("--episodes", type=int, help="episodes per shape (default 200)")
    bench.add_argument("--seed", type=int, help="base seed")
    bench.add_argument("--noise-deg", type=float, help="beta noise std in degrees")
    bench.add_argument("--workers", type=int, help="parallel episode workers")
    bench.add_argument("--csv", default="benchmark.csv", help="output CSV path")
    bench.add_argument("--quiet", action="store_true", help="suppress progress output")
    bench.set_defaults(func=_cmd_bench)

    run = sub.add_parser("run", help="run a single episode, optionally dumping its trajectory")
    run.add_argument("--config", help=f"config file (or ${CONFIG_ENV_VAR})")
    run.add_argument("--shape", required=True, choices=[s.value for s in ShapeKind])
    run.add_argument("--index", type=int, default=0, help="episode index within the shape")
    run.add_argument("--seed", type=int, help="base seed")
    run.add_argument("--controller", default=HEURISTIC, choices=list(CONTROLLERS))
    run.add_argument("--noise-deg", type=float, help="beta noise std in degrees")
    run.add_argument("--trajectory", help="write per-action JSONL records here")
    run.add_argument("--particles", type=int, default=0, help="particles per snapshot (0 disables)")
    run.set_defaults(func=_cmd_run)

    sample = sub.add_parser("sample", help="emit generated curves as JSON for inspection")
    sample.add_argument("--config", help=f"config file (or ${CONFIG_ENV_VAR})")
    sample.add_argument("--shape", required=True, choices=[s.value for s in ShapeKind])
    sample.add_argument("--count", type=int, default=5)
    sample.add_argument("--seed", type=int, help="base seed")
    sample.add_argument("--spacing", type=float, default=0.5, help="polyline spacing in cm")
    sample.add_argument("--out", default="curves.json")
    sample.set_defaults(func=_cmd_sample)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
