"""Velcro peeling: quasi-static simulation, particle-filter estimation, control, benchmarks."""

from velcro_peel.geometry import ShapeKind, SurfaceCurve, point_at, sample_curve, tangent_at
from velcro_peel.simulator import (
    Action,
    Event,
    Observation,
    SlackError,
    StepOutcome,
    VelcroState,
    WorldState,
    apply_peel,
    apply_rotate,
    observe,
    solve_quasi_static_step,
)

__all__ = [
    "Action",
    "Event",
    "Observation",
    "ShapeKind",
    "SlackError",
    "StepOutcome",
    "SurfaceCurve",
    "VelcroState",
    "WorldState",
    "apply_peel",
    "apply_rotate",
    "observe",
    "point_at",
    "sample_curve",
    "solve_quasi_static_step",
    "tangent_at",
]
