"""Per-action trajectory records and their JSONL serialization."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

from velcro_peel.simulator import Action, Observation, VelcroState


@dataclass(frozen=True)
class TrajectoryRecord:
    """One executed action: what was commanded, what truly happened, what was believed."""

    step: int
    action: dict
    truth: dict
    observation: dict | None
    estimate: dict | None
    health: float | None
    cost: float
    event: str
    particles: list | None = None


def make_record(
    step: int,
    action: Action,
    truth: VelcroState,
    observation: Observation | None,
    estimate: VelcroState | None,
    health: float | None,
    cost: float,
    event: str,
    particles=None,
) -> TrajectoryRecord:
    return TrajectoryRecord(
        step=step,
        action={"alpha": action.alpha, "d": action.d, "s": action.s, "delta_phi": action.delta_phi},
        truth=asdict(truth),
        observation=None if observation is None else asdict(observation),
        estimate=None if estimate is None else asdict(estimate),
        health=health,
        cost=cost,
        event=event,
        particles=None if particles is None else [list(map(float, row)) for row in particles],
    )


def dump_trajectory(records, path) -> None:
    """Write one JSON object per line; an empty episode produces an empty file."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(asdict(record)))
            fh.write("\n")


def load_trajectory(path) -> list[TrajectoryRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(TrajectoryRecord(**json.loads(line)))
    return records
