"""Parametric attached-surface curves (flat, arc, corner) queried by arc length.

The world frame sits at the start of the attached strap: ``point_at(curve, 0)``
is the origin and the curve is parametrized by arc length, so the tangent field
has unit speed everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

DEFAULT_ATTACHED_LENGTH = 50.0

FLAT_TILT_RANGE = (-math.radians(60.0), math.radians(60.0))
# Curved shapes start peeling with less clearance headroom: a convex arc at a
# +-60 degree tilt can begin with the strap nearly folded back over the
# surface, where one taut pull rips past the forbidden zone before any
# feedback exists. Their tilt draw is therefore narrower.
CURVED_TILT_RANGE = (-math.radians(30.0), math.radians(30.0))
ARC_RADIUS_RANGE = (20.0, 40.0)
CORNER_RADIUS_RANGE = (4.0, 15.0)
CORNER_FLAT_RATIO_RANGE = (0.3, 0.7)

_ELL_TOL = 1e-9


class ShapeKind(str, Enum):
    FLAT = "flat"
    ARC = "arc"
    CORNER = "corner"


@dataclass(frozen=True)
class SurfaceCurve:
    """One attached-surface shape; only the fields of its kind are meaningful."""

    kind: ShapeKind
    attached_length: float
    tilt: float = 0.0
    radius: float = 0.0
    corner_radius: float = 0.0
    flat_after_ratio: float = 0.0
    turn_sign: int = -1

    def __post_init__(self):
        if self.attached_length <= 0:
            raise ValueError("attached_length must be positive")
        if self.turn_sign not in (-1, 1):
            raise ValueError("turn_sign must be +1 or -1")
        if self.kind == ShapeKind.ARC and self.radius <= 0:
            raise ValueError("arc radius must be positive")
        if self.kind == ShapeKind.CORNER:
            if self.corner_radius <= 0:
                raise ValueError("corner radius must be positive")
            if not 0.0 <= self.flat_after_ratio <= 1.0:
                raise ValueError("flat_after_ratio must lie in [0, 1]")
            if self.corner_arc_length >= self.attached_length:
                raise ValueError("quarter arc does not fit in the attached length")

    @property
    def corner_arc_length(self) -> float:
        return 0.5 * math.pi * self.corner_radius

    @property
    def corner_segments(self) -> tuple[float, float, float]:
        """(leading flat, quarter arc, trailing flat) lengths of a corner curve."""
        arc = self.corner_arc_length
        flat_total = self.attached_length - arc
        after = self.flat_after_ratio * flat_total
        return flat_total - after, arc, after


def flat_curve(tilt: float, attached_length: float = DEFAULT_ATTACHED_LENGTH) -> SurfaceCurve:
    return SurfaceCurve(ShapeKind.FLAT, attached_length, tilt=tilt)


def arc_curve(
    radius: float,
    tilt: float,
    turn_sign: int = -1,
    attached_length: float = DEFAULT_ATTACHED_LENGTH,
) -> SurfaceCurve:
    return SurfaceCurve(ShapeKind.ARC, attached_length, tilt=tilt, radius=radius, turn_sign=turn_sign)


def corner_curve(
    corner_radius: float,
    flat_after_ratio: float,
    tilt: float,
    turn_sign: int = -1,
    attached_length: float = DEFAULT_ATTACHED_LENGTH,
) -> SurfaceCurve:
    return SurfaceCurve(
        ShapeKind.CORNER,
        attached_length,
        tilt=tilt,
        corner_radius=corner_radius,
        flat_after_ratio=flat_after_ratio,
        turn_sign=turn_sign,
    )


def _check_ell(curve: SurfaceCurve, ell: float) -> float:
    if ell < -_ELL_TOL or ell > curve.attached_length + _ELL_TOL:
        raise ValueError(f"arc length {ell!r} outside [0, {curve.attached_length!r}]")
    return min(max(ell, 0.0), curve.attached_length)


def _arc_chord(radius: float, start_angle: float, turn_sign: int, arclen: float) -> tuple[float, float]:
    # Displacement along a circular arc of unit-speed length `arclen` starting
    # with tangent angle `start_angle`.
    end = start_angle + turn_sign * arclen / radius
    k = radius / turn_sign
    return k * (math.sin(end) - math.sin(start_angle)), -k * (math.cos(end) - math.cos(start_angle))


def point_at(curve: SurfaceCurve, ell: float) -> tuple[float, float]:
    """World-frame position of the surface point at arc length ``ell``."""
    ell = _check_ell(curve, ell)
    tilt = curve.tilt
    if curve.kind == ShapeKind.FLAT:
        return ell * math.cos(tilt), ell * math.sin(tilt)
    if curve.kind == ShapeKind.ARC:
        return _arc_chord(curve.radius, tilt, curve.turn_sign, ell)
    lead, arc, _ = curve.corner_segments
    if ell <= lead:
        return ell * math.cos(tilt), ell * math.sin(tilt)
    x, y = lead * math.cos(tilt), lead * math.sin(tilt)
    if ell <= lead + arc:
        dx, dy = _arc_chord(curve.corner_radius, tilt, curve.turn_sign, ell - lead)
        return x + dx, y + dy
    dx, dy = _arc_chord(curve.corner_radius, tilt, curve.turn_sign, arc)
    after = curve.tilt + curve.turn_sign * 0.5 * math.pi
    rest = ell - lead - arc
    return x + dx + rest * math.cos(after), y + dy + rest * math.sin(after)


def tangent_at(curve: SurfaceCurve, ell: float) -> float:
    """Tangent angle at arc length ``ell``, pointing toward the attached side."""
    ell = _check_ell(curve, ell)
    if curve.kind == ShapeKind.FLAT:
        return curve.tilt
    if curve.kind == ShapeKind.ARC:
        return curve.tilt + curve.turn_sign * ell / curve.radius
    lead, arc, _ = curve.corner_segments
    if ell <= lead:
        return curve.tilt
    if ell <= lead + arc:
        return curve.tilt + curve.turn_sign * (ell - lead) / curve.corner_radius
    return curve.tilt + curve.turn_sign * 0.5 * math.pi


def sample_curve(
    shape: ShapeKind,
    rng_seed: int,
    attached_length: float = DEFAULT_ATTACHED_LENGTH,
    turn_sign: int = -1,
) -> SurfaceCurve:
    """Draw one random curve of the given shape; identical seeds give identical curves."""
    shape = ShapeKind(shape)  # raises ValueError on unknown kinds
    rng = np.random.default_rng(rng_seed)
    if shape == ShapeKind.FLAT:
        return flat_curve(rng.uniform(*FLAT_TILT_RANGE), attached_length)
    tilt = rng.uniform(*CURVED_TILT_RANGE)
    if shape == ShapeKind.ARC:
        return arc_curve(rng.uniform(*ARC_RADIUS_RANGE), tilt, turn_sign, attached_length)
    radius = rng.uniform(*CORNER_RADIUS_RANGE)
    ratio = rng.uniform(*CORNER_FLAT_RATIO_RANGE)
    return corner_curve(radius, ratio, tilt, turn_sign, attached_length)
