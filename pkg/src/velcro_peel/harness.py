"""Benchmark driver: seeded episode grids, CSV metrics, and summary tables."""

from __future__ import annotations

import configparser
import csv
import hashlib
import math
import time
from dataclasses import dataclass, field, replace
from multiprocessing import Pool

from velcro_peel.controller import CONTROLLERS, ControllerConfig, run_episode
from velcro_peel.cost import CostConfig
from velcro_peel.filter import FilterConfig
from velcro_peel.geometry import DEFAULT_ATTACHED_LENGTH, ShapeKind, sample_curve

CSV_COLUMNS = (
    "shape",
    "episode_index",
    "seed",
    "controller",
    "success",
    "terminal_event",
    "total_cost",
    "steps",
    "wall_ms",
)

_SEED_MASK = (1 << 63) - 1


@dataclass(frozen=True)
class BenchmarkConfig:
    shapes: tuple = (ShapeKind.FLAT, ShapeKind.ARC, ShapeKind.CORNER)
    controllers: tuple = CONTROLLERS
    episodes_per_shape: int = 200
    base_seed: int = 0
    noise_std_beta: float = math.radians(1.0)
    filter_cfg: FilterConfig = field(default_factory=FilterConfig)
    controller_cfg: ControllerConfig = field(default_factory=ControllerConfig)
    cost_cfg: CostConfig = field(default_factory=CostConfig)
    attached_length: float = DEFAULT_ATTACHED_LENGTH
    turn_sign: int = -1
    forbid_after_rotate: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.episodes_per_shape < 1:
            raise ValueError("episodes_per_shape must be positive")
        for controller in self.controllers:
            if controller not in CONTROLLERS:
                raise ValueError(f"unknown controller {controller!r}")


@dataclass(frozen=True)
class BenchmarkRow:
    shape: str
    episode_index: int
    seed: int
    controller: str
    success: bool
    terminal_event: str
    total_cost: float
    steps: int
    wall_ms: float
    max_taut_err: float = 0.0  # diagnostic only, not a CSV column


@dataclass(frozen=True)
class SummaryRow:
    shape: str
    controller: str
    episodes: int
    success_rate: float
    mean_cost_success: float
    mean_cost_all: float


def episode_seed(base_seed: int, shape, index: int) -> int:
    """Stable per-episode seed: base_seed XOR a digest of (shape, index)."""
    shape = ShapeKind(shape).value
    digest = hashlib.sha256(f"{shape}:{index}".encode()).digest()
    return (base_seed ^ int.from_bytes(digest[:8], "little")) & _SEED_MASK


def run_one_episode(cfg: BenchmarkConfig, shape, controller: str, index: int) -> BenchmarkRow:
    """Run a single benchmark cell; reproducible in isolation from its seed."""
    shape = ShapeKind(shape)
    seed = episode_seed(cfg.base_seed, shape, index)
    curve = sample_curve(shape, seed, cfg.attached_length, cfg.turn_sign)
    start = time.perf_counter()
    run = run_episode(
        curve,
        controller,
        seed,
        filter_cfg=cfg.filter_cfg,
        controller_cfg=cfg.controller_cfg,
        cost_cfg=cfg.cost_cfg,
        noise_std_beta=cfg.noise_std_beta,
        forbid_after_rotate=cfg.forbid_after_rotate,
    )
    wall_ms = 1000.0 * (time.perf_counter() - start)
    m = run.metrics
    return BenchmarkRow(
        shape=shape.value,
        episode_index=index,
        seed=seed,
        controller=controller,
        success=m.success,
        terminal_event=m.terminal_event,
        total_cost=m.total_cost,
        steps=m.steps,
        wall_ms=wall_ms,
        max_taut_err=run.max_taut_err,
    )


def _job(args) -> BenchmarkRow:
    return run_one_episode(*args)


def run_benchmark(cfg: BenchmarkConfig, progress=None) -> list[BenchmarkRow]:
    """Run the full episode grid; rows come back sorted regardless of scheduling."""
    jobs = [
        (cfg, shape, controller, index)
        for shape in cfg.shapes
        for controller in cfg.controllers
        for index in range(cfg.episodes_per_shape)
    ]
    if cfg.workers > 1:
        with Pool(processes=cfg.workers) as pool:
            rows = []
            for row in pool.imap_unordered(_job, jobs, chunksize=4):
                rows.append(row)
                if progress is not None:
                    progress(row)
    else:
        rows = []
        for job in jobs:
            row = _job(job)
            rows.append(row)
            if progress is not None:
                progress(row)

    order = {
        (ShapeKind(s).value, c): i
        for i, (s, c) in enumerate((s, c) for s in cfg.shapes for c in cfg.controllers)
    }
    rows.sort(key=lambda r: (order[(r.shape, r.controller)], r.episode_index))
    return rows


def summarize(rows) -> list[SummaryRow]:
    """Per-(shape, controller) success rate and mean costs, in row order."""
    groups: dict[tuple[str, str], list[BenchmarkRow]] = {}
    for row in rows:
        groups.setdefault((row.shape, row.controller), []).append(row)
    summary = []
    for (shape, controller), members in groups.items():
        wins = [r.total_cost for r in members if r.success]
        summary.append(
            SummaryRow(
                shape=shape,
                controller=controller,
                episodes=len(members),
                success_rate=100.0 * len(wins) / len(members),
                mean_cost_success=sum(wins) / len(wins) if wins else float("nan"),
                mean_cost_all=sum(r.total_cost for r in members) / len(members),
            )
        )
    return summary


def format_summary(summary) -> str:
    """Fixed-width text table of costs and success rates."""
    header = f"{'shape':<8} {'controller':<10} {'episodes':>8} {'success%':>9} {'mean_E_success':>15} {'mean_E_all':>11}"
    lines = [header, "-" * len(header)]
    for s in summary:
        lines.append(
            f"{s.shape:<8} {s.controller:<10} {s.episodes:>8d} {s.success_rate:>9.1f} "
            f"{s.mean_cost_success:>15.3f} {s.mean_cost_all:>11.3f}"
        )
    return "\n".join(lines)


def write_rows_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.shape,
                    r.episode_index,
                    r.seed,
                    r.controller,
                    int(r.success),
                    r.terminal_event,
                    repr(r.total_cost),
                    r.steps,
                    f"{r.wall_ms:.3f}",
                ]
            )


def read_rows_csv(path) -> list[BenchmarkRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV columns in {path}: {reader.fieldnames}")
        for rec in reader:
            rows.append(
                BenchmarkRow(
                    shape=rec["shape"],
                    episode_index=int(rec["episode_index"]),
                    seed=int(rec["seed"]),
                    controller=rec["controller"],
                    success=bool(int(rec["success"])),
                    terminal_event=rec["terminal_event"],
                    total_cost=float(rec["total_cost"]),
                    steps=int(rec["steps"]),
                    wall_ms=float(rec["wall_ms"]),
                )
            )
    return rows


def load_benchmark_config(path) -> BenchmarkConfig:
    """Read the sectioned key=value config file; angles are given in degrees."""
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)

    cfg = BenchmarkConfig()

    def deg(section, key, fallback):
        raw = parser.get(section, key, fallback=None)
        return math.radians(float(raw)) if raw is not None else fallback

    if parser.has_section("filter"):
        f = parser["filter"]
        cfg = replace(
            cfg,
            filter_cfg=FilterConfig(
                n_particles=f.getint("n_particles", cfg.filter_cfg.n_particles),
                sigma1=deg("filter", "sigma1_deg", cfg.filter_cfg.sigma1),
                sigma2=f.getfloat("sigma2_cm", cfg.filter_cfg.sigma2),
                sigma3=deg("filter", "sigma3_deg", cfg.filter_cfg.sigma3),
                roughening_theta=deg("filter", "roughening_theta_deg", cfg.filter_cfg.roughening_theta),
                decay_lambda=f.getfloat("decay_lambda", cfg.filter_cfg.decay_lambda),
                history_window=f.getint("history_window", cfg.filter_cfg.history_window),
                r_prior_mean=f.getfloat("r_prior_mean", cfg.filter_cfg.r_prior_mean),
                r_prior_std=f.getfloat("r_prior_std", cfg.filter_cfg.r_prior_std),
                theta_prior_low=deg("filter", "theta_prior_low_deg", cfg.filter_cfg.theta_prior_low),
                theta_prior_high=deg("filter", "theta_prior_high_deg", cfg.filter_cfg.theta_prior_high),
            ),
        )
    if parser.has_section("controller"):
        c = parser["controller"]
        cfg = replace(
            cfg,
            controller_cfg=ControllerConfig(
                peel_step=c.getfloat("peel_step_cm", cfg.controller_cfg.peel_step),
                angle_deadband=deg("controller", "angle_deadband_deg", cfg.controller_cfg.angle_deadband),
                explore_rotation=deg("controller", "explore_rotation_deg", cfg.controller_cfg.explore_rotation),
                max_steps=c.getint("max_steps", cfg.controller_cfg.max_steps),
                clamp_explore=c.getboolean("clamp_explore", cfg.controller_cfg.clamp_explore),
            ),
        )
    if parser.has_section("cost"):
        c = parser["cost"]
        cfg = replace(cfg, cost_cfg=CostConfig(c1=c.getfloat("c1", 1.0), c2=c.getfloat("c2", 1.0)))
    if parser.has_section("geometry"):
        g = parser["geometry"]
        cfg = replace(
            cfg,
            attached_length=g.getfloat("attached_length", cfg.attached_length),
            turn_sign=g.getint("turn_sign", cfg.turn_sign),
        )
    if parser.has_section("simulator"):
        cfg = replace(
            cfg,
            forbid_after_rotate=parser["simulator"].getboolean(
                "forbid_after_rotate", cfg.forbid_after_rotate
            ),
        )
    if parser.has_section("harness"):
        h = parser["harness"]
        shapes = h.get("shapes", fallback=None)
        controllers = h.get("controllers", fallback=None)
        cfg = replace(
            cfg,
            shapes=tuple(ShapeKind(s.strip()) for s in shapes.split(",")) if shapes else cfg.shapes,
            controllers=tuple(c.strip() for c in controllers.split(",")) if controllers else cfg.controllers,
            episodes_per_shape=h.getint("episodes_per_shape", cfg.episodes_per_shape),
            base_seed=h.getint("base_seed", cfg.base_seed),
            noise_std_beta=deg("harness", "noise_std_beta_deg", cfg.noise_std_beta),
            workers=h.getint("workers", cfg.workers),
        )
    return cfg
