"""Ground-truth quasi-static peeling world.

The peeled strap segment is always taut: the tip sits at hinge + r*(cos(phi),
sin(phi)) and peeling advances the hinge along the surface so that tautness is
preserved after every tip displacement. Pure scalar math; every operation
returns new values instead of mutating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from velcro_peel.angles import wrap_scalar
from velcro_peel.geometry import SurfaceCurve, point_at, tangent_at

FORBIDDEN_LOW = math.radians(5.0)
FORBIDDEN_HIGH = math.radians(175.0)

SUBSTEPS_PER_UNIT = 32
BISECT_ITERS = 80

_SLACK_TOL = 1e-9


class Event(str, Enum):
    OK = "ok"
    SLACK = "slack"
    FORBIDDEN_ZONE = "forbidden_zone"
    FULLY_PEELED = "fully_peeled"


class SlackError(ValueError):
    """The commanded tip motion would let the peeled segment go slack."""


class DegenerateStepError(ArithmeticError):
    """The closed-form transition hit a vanishing denominator."""


@dataclass(frozen=True)
class VelcroState:
    """Peeling configuration: hinge position, surface angle, strap angle, peeled length."""

    h_x: float
    h_y: float
    theta: float
    phi: float
    r: float

    def tip(self) -> tuple[float, float]:
        return self.h_x + self.r * math.cos(self.phi), self.h_y + self.r * math.sin(self.phi)


@dataclass(frozen=True)
class Action:
    """Tip command: peeling displacement (s=0) or in-place strap rotation (s=1)."""

    alpha: float
    d: float
    s: int
    delta_phi: float

    def __post_init__(self):
        if self.s == 0:
            if self.d <= 0 or self.delta_phi != 0.0:
                raise ValueError("peeling action requires d > 0 and delta_phi = 0")
        elif self.s == 1:
            if self.d != 0.0:
                raise ValueError("non-peeling action requires d = 0")
        else:
            raise ValueError("s must be 0 (peeling) or 1 (non-peeling)")

    @classmethod
    def peel(cls, alpha: float, d: float) -> "Action":
        return cls(alpha=alpha, d=d, s=0, delta_phi=0.0)

    @classmethod
    def rotate(cls, delta_phi: float) -> "Action":
        return cls(alpha=0.0, d=0.0, s=1, delta_phi=delta_phi)


@dataclass(frozen=True)
class Observation:
    """Exact tip position plus the (possibly noisy) tension direction."""

    t_x: float
    t_y: float
    beta: float


@dataclass(frozen=True)
class WorldState:
    """True configuration: peeled arc length along the curve plus the strap angle."""

    curve: SurfaceCurve
    ell: float
    phi: float
    initial_peeled: float = 10.0
    strap_length: float = 60.0

    @property
    def r(self) -> float:
        return self.initial_peeled + self.ell

    def hinge(self) -> tuple[float, float]:
        return point_at(self.curve, self.ell)

    def theta(self) -> float:
        return tangent_at(self.curve, self.ell)

    def tip(self) -> tuple[float, float]:
        hx, hy = self.hinge()
        return hx + self.r * math.cos(self.phi), hy + self.r * math.sin(self.phi)

    def velcro_state(self) -> VelcroState:
        hx, hy = self.hinge()
        return VelcroState(hx, hy, self.theta(), self.phi, self.r)


@dataclass
class StepOutcome:
    """Result of one action: new world, terminal event, and the traversed path.

    ``path_samples`` is an (k, 3) array of (r, phi, theta) micro-states, first
    row equal to the pre-action configuration; the cost module integrates the
    potential along it. ``taut_residual`` is the worst distance between the
    commanded tip and the taut-strap circle across the recorded micro-states.
    """

    state: WorldState
    event: Event
    path_samples: np.ndarray
    taut_residual: float = 0.0


def _in_forbidden_zone(phi: float, theta: float) -> bool:
    gap = wrap_scalar(phi - theta)
    return gap < FORBIDDEN_LOW or gap > FORBIDDEN_HIGH


def default_substeps(magnitude: float) -> int:
    """Substep count for an action of the given displacement/rotation size."""
    return max(1, math.ceil(SUBSTEPS_PER_UNIT * abs(magnitude)))


def solve_quasi_static_step(state: VelcroState, alpha: float, d: float) -> tuple[float, VelcroState]:
    """Advance one peeling step on a locally straight surface, in closed form.

    With v the new tip position relative to the hinge and u the surface
    direction, tautness pins the peel increment at
    dr = (|v|^2 - r^2) / (2 (r + v.u)).
    """
    if d == 0.0:
        return 0.0, state
    ex = state.h_x + state.r * math.cos(state.phi) + d * math.cos(alpha)
    ey = state.h_y + state.r * math.sin(state.phi) + d * math.sin(alpha)
    vx, vy = ex - state.h_x, ey - state.h_y
    ux, uy = math.cos(state.theta), math.sin(state.theta)
    denom = state.r + vx * ux + vy * uy
    if abs(denom) < 1e-12:
        raise DegenerateStepError("tip ended diametrically behind the surface direction")
    dr = (vx * vx + vy * vy - state.r * state.r) / (2.0 * denom)
    if dr < 0.0 or denom < 0.0:
        raise SlackError(f"step would slacken the strap (dr = {dr:.3g})")
    hx, hy = state.h_x + dr * ux, state.h_y + dr * uy
    phi = math.atan2(ey - hy, ex - hx)
    return dr, VelcroState(hx, hy, state.theta, phi, state.r + dr)


def _taut_gap(curve: SurfaceCurve, ex: float, ey: float, ell: float, r0: float) -> float:
    # Signed slack: distance from tip to the hinge candidate minus the strap
    # length available there. Monotone non-increasing in ell.
    px, py = point_at(curve, ell)
    return math.hypot(ex - px, ey - py) - (r0 + ell)


def apply_peel(
    world: WorldState,
    alpha: float,
    d: float,
    substeps: int | None = None,
    check_forbidden: bool = True,
) -> StepOutcome:
    """Peel on the true curved surface by moving the tip distance d along alpha.

    The displacement is split into substeps; each substep re-solves the exact
    taut constraint for the new peeled arc length by bracketed bisection.
    """
    if d <= 0:
        raise ValueError("peel displacement must be positive")
    if substeps is None:
        substeps = default_substeps(d)
    if substeps < 1:
        raise ValueError("substeps must be >= 1")

    curve = world.curve
    length = curve.attached_length
    r0 = world.initial_peeled
    ell, phi = world.ell, world.phi
    ex, ey = world.tip()
    step = d / substeps
    ca, sa = math.cos(alpha), math.sin(alpha)

    samples = [(r0 + ell, phi, tangent_at(curve, ell))]
    worst = 0.0

    for _ in range(substeps):
        px, py = ex + step * ca, ey + step * sa
        gap_here = _taut_gap(curve, px, py, ell, r0)
        if gap_here < -_SLACK_TOL:
            return StepOutcome(replace(world, ell=ell, phi=phi), Event.SLACK, np.array(samples), worst)
        if _taut_gap(curve, px, py, length, r0) > 0.0:
            # The strap end detaches partway through this substep; find the
            # tip fraction where the full strap length is exactly taut.
            qx, qy = point_at(curve, length)
            lo, hi = 0.0, 1.0
            for _ in range(BISECT_ITERS):
                mid = 0.5 * (lo + hi)
                mx, my = ex + mid * step * ca, ey + mid * step * sa
                if math.hypot(mx - qx, my - qy) - (r0 + length) > 0.0:
                    hi = mid
                else:
                    lo = mid
            t = 0.5 * (lo + hi)
            mx, my = ex + t * step * ca, ey + t * step * sa
            phi_end = math.atan2(my - qy, mx - qx)
            samples.append((r0 + length, phi_end, tangent_at(curve, length)))
            worst = max(worst, abs(math.hypot(mx - qx, my - qy) - (r0 + length)))
            return StepOutcome(
                replace(world, ell=length, phi=phi_end), Event.FULLY_PEELED, np.array(samples), worst
            )
        if gap_here > 0.0:
            lo, hi = ell, length
            for _ in range(BISECT_ITERS):
                mid = 0.5 * (lo + hi)
                if _taut_gap(curve, px, py, mid, r0) >= 0.0:
                    lo = mid
                else:
                    hi = mid
            ell = 0.5 * (lo + hi)
        worst = max(worst, abs(_taut_gap(curve, px, py, ell, r0)))
        hx, hy = point_at(curve, ell)
        phi = math.atan2(py - hy, px - hx)
        theta = tangent_at(curve, ell)
        ex, ey = px, py
        samples.append((r0 + ell, phi, theta))

    # The forbidden zone is judged on the configuration the action ends in; a
    # transient excursion inside one action (a strap ripping around a corner
    # in a single pull) does not fail the episode.
    if check_forbidden and _in_forbidden_zone(phi, theta):
        return StepOutcome(
            replace(world, ell=ell, phi=phi), Event.FORBIDDEN_ZONE, np.array(samples), worst
        )
    return StepOutcome(replace(world, ell=ell, phi=phi), Event.OK, np.array(samples), worst)


def apply_rotate(
    world: WorldState,
    delta_phi: float,
    substeps: int | None = None,
    check_forbidden: bool = True,
) -> StepOutcome:
    """Rotate the taut strap about the fixed hinge; hinge and peeled length hold."""
    if abs(delta_phi) >= math.pi:
        raise ValueError("|delta_phi| must be below pi")
    if substeps is None:
        substeps = default_substeps(delta_phi)
    theta = world.theta()
    r = world.r
    phis = world.phi + delta_phi * np.linspace(0.0, 1.0, substeps + 1)
    samples = np.column_stack([np.full(substeps + 1, r), phis, np.full(substeps + 1, theta)])
    new_phi = world.phi + delta_phi
    event = Event.OK
    if check_forbidden and _in_forbidden_zone(new_phi, theta):
        event = Event.FORBIDDEN_ZONE
    return StepOutcome(replace(world, phi=new_phi), event, samples)


def observe(
    world: WorldState,
    noise_std_beta: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Observation:
    """Exact tip position plus tension direction with Gaussian direction noise."""
    tx, ty = world.tip()
    beta = world.phi + math.pi
    if noise_std_beta > 0.0:
        if rng is None:
            raise ValueError("an rng is required when noise_std_beta > 0")
        beta += noise_std_beta * rng.standard_normal()
    return Observation(tx, ty, wrap_scalar(beta))
