"""Peeling controllers: the estimate-driven heuristic loop and the oracle baseline.

One heuristic iteration follows the same recipe throughout: align the strap to
a right angle against the estimated surface, peel one step along the estimated
bisector, then (with probability equal to the impoverishment health index)
rotate back for an extra look and refresh the surface-angle belief.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from velcro_peel.angles import wrap_scalar
from velcro_peel.cost import CostConfig, EpisodeMetrics, action_cost
from velcro_peel.filter import FilterConfig, FilterDivergenceError, ParticleFilter
from velcro_peel.geometry import SurfaceCurve
from velcro_peel.simulator import (
    FORBIDDEN_HIGH,
    FORBIDDEN_LOW,
    Action,
    Event,
    Observation,
    StepOutcome,
    VelcroState,
    WorldState,
    apply_peel,
    apply_rotate,
    observe,
)
from velcro_peel.trajectory import TrajectoryRecord, make_record

FULL_OBS = "full_obs"
HEURISTIC = "heuristic"
CONTROLLERS = (FULL_OBS, HEURISTIC)

_MAX_ROTATION = math.pi - 1e-9


@dataclass(frozen=True)
class ControllerConfig:
    peel_step: float = 1.0
    angle_deadband: float = math.radians(0.5)
    explore_rotation: float = -0.25 * math.pi
    max_steps: int = 500
    # Pick the exploration direction away from the nearer forbidden bound and
    # clip it to the estimated safe range; turning this off restores the fixed
    # explore_rotation regardless of the believed clearance.
    safe_explore: bool = True
    min_explore: float = math.radians(5.0)
    # Opportunistic theta refresh after alignment updates: requires this many
    # unapplied hinge entries, an innovation above the factor times the theta
    # measurement noise, and a fit at least this confident. A factor of inf
    # disables the refresh.
    refresh_min_entries: int = 3
    refresh_innovation_factor: float = 0.5
    refresh_max_sigma: float = math.radians(2.0)
    # Cap on a single alignment rotation: a large correction acts on a noisy
    # surface estimate, so it is taken in steps with measurements in between.
    max_align_rotation: float = math.radians(30.0)
    # Low-pass gain on the surface-angle view the controller acts on; the raw
    # weighted estimate carries observation noise amplified by roughly r/d.
    theta_view_gain: float = 0.35
    # Force an exploration after this many actions without one; a biased
    # surface belief otherwise settles into a self-consistent equilibrium that
    # neither the health index (attenuated by d/r) nor the alignment branch
    # (agreeing with its own bias) escapes.
    max_stale_actions: int = 12

    def __post_init__(self):
        if self.peel_step <= 0:
            raise ValueError("peel_step must be positive")
        if self.max_steps < 0:
            raise ValueError("max_steps cannot be negative")


@dataclass
class ActionResult:
    """One executed action plus the belief snapshot right after its updates."""

    action: Action
    outcome: StepOutcome
    observation: Observation | None = None
    estimate: VelcroState | None = None
    health: float | None = None
    particles: np.ndarray | None = None


@dataclass
class EpisodeRun:
    metrics: EpisodeMetrics
    records: list[TrajectoryRecord] = field(default_factory=list)
    max_taut_err: float = 0.0


@dataclass
class HeuristicMemory:
    """Controller state carried across iterations of one episode."""

    theta_view: float | None = None
    stale_actions: int = 0  # actions executed since the last hinge-stationary update
    prev_tip: tuple[float, float] | None = None
    prev_phi: float = 0.0
    prev_r: float = 0.0

    def update(self, theta_estimate: float, gain: float) -> float:
        if self.theta_view is None:
            self.theta_view = theta_estimate
        else:
            self.theta_view += gain * wrap_scalar(theta_estimate - self.theta_view)
        return self.theta_view

    def remember(self, obs: Observation, estimate: VelcroState) -> None:
        self.prev_tip = (obs.t_x, obs.t_y)
        self.prev_phi = estimate.phi
        self.prev_r = estimate.r


_ANCHOR_NOISE = 0.3  # cm; believed-state error entering the hinge anchor


def transition_implied_theta(
    memory: HeuristicMemory,
    obs: Observation,
    phi_now: float,
    sigma_phi: float,
    action: Action,
) -> list[tuple[float, float]]:
    """Surface angles implied by the taut transition across consecutive tips.

    Anchoring the previous hinge at the previous tip minus the believed strap
    vector, the peel displacement satisfies v = dr (u + e_phi): the direction
    of v bisects the surface and strap directions (theta = 2 angle(v) - phi),
    and its magnitude fixes the strap-surface angle g through
    |v| = d cos(phi - alpha) / cos(g / 2), independently of direction noise.
    Returns a (direction, magnitude) pair of optional (theta, std)
    measurements; both None when the peel advance carries no usable signal.
    """
    if memory.prev_tip is None:
        return None, None
    ex_b, ey_b = memory.prev_tip
    vx = obs.t_x - ex_b + memory.prev_r * (math.cos(memory.prev_phi) - math.cos(phi_now))
    vy = obs.t_y - ey_b + memory.prev_r * (math.sin(memory.prev_phi) - math.sin(phi_now))
    norm = math.hypot(vx, vy)
    if norm < 0.25:
        return None, None
    theta_dir = wrap_scalar(2.0 * math.atan2(vy, vx) - phi_now)
    # Direction error: differential strap-angle noise scaled by strap length.
    sigma_dir = 2.0 * (1.2 * memory.prev_r * sigma_phi + 0.1) / norm
    direction = (theta_dir, sigma_dir)

    magnitude = None
    pull = action.d * math.cos(phi_now - action.alpha)
    if pull > 1e-6 and norm > pull:
        half_gap = math.acos(max(min(pull / norm, 1.0), -1.0))
        sigma_mag = (
            2.0 * math.cos(half_gap) * _ANCHOR_NOISE / (norm * max(math.sin(half_gap), 0.2))
        )
        magnitude = (wrap_scalar(phi_now - 2.0 * half_gap), sigma_mag)
    return direction, magnitude


def _alignment_rotation(gap: float) -> float:
    delta = wrap_scalar(0.5 * math.pi - gap)
    return max(min(delta, _MAX_ROTATION), -_MAX_ROTATION)


def _safe_explore_rotation(cfg: ControllerConfig, gap: float, gap_spread: float) -> float | None:
    """Exploration rotation held inside the believed safe clearance.

    Rotates away from the nearer forbidden bound, clipped so the estimated
    post-rotation angle keeps a margin from both bounds; the margin widens
    with the ensemble's own surface-angle spread, since the believed gap is
    only as trustworthy as that. Returns None when no direction leaves room
    for an informative rotation.
    """
    magnitude = abs(cfg.explore_rotation)
    margin = FORBIDDEN_LOW + 2.0 * cfg.angle_deadband + gap_spread
    down_room = gap - margin
    up_room = (FORBIDDEN_HIGH - margin) - gap
    # Away from the nearer bound is also the direction with more room.
    sign, room = (-1.0, down_room) if down_room >= up_room else (1.0, up_room)
    delta = sign * min(magnitude, max(room, 0.0))
    if abs(delta) < cfg.min_explore:
        return None
    return delta


def heuristic_step(
    world: WorldState,
    pf: ParticleFilter,
    cfg: ControllerConfig,
    noise_std_beta: float,
    rng: np.random.Generator,
    budget: int,
    forbid_after_rotate: bool = True,
    snapshot_size: int = 0,
    memory: HeuristicMemory | None = None,
) -> tuple[list[ActionResult], str | None]:
    """Run one iteration of the heuristic loop.

    Returns the executed actions (at most one alignment rotation, one peel,
    and one exploration rotation) plus a failure tag when the filter diverged
    mid-iteration. Stops early when the action budget runs out or an action
    ends the episode.
    """
    executed: list[ActionResult] = []
    diverged = False

    def finish(result: ActionResult, updates) -> bool:
        # Append the action and run its measurement updates; True means the
        # iteration must stop (terminal event or filter divergence).
        nonlocal diverged
        executed.append(result)
        memory.stale_actions += 1
        if result.outcome.event != Event.OK:
            _annotate(result, pf, snapshot_size)
            return True
        try:
            updates(result)
        except FilterDivergenceError:
            diverged = True
            return True
        _annotate(result, pf, snapshot_size)
        return False

    def failure() -> str | None:
        return "filter_divergence" if diverged else None

    if memory is None:
        memory = HeuristicMemory()

    def view_gain() -> float:
        # Snap to the raw estimate when the health index says the belief is
        # stressed (e.g. an unmodeled surface turn); smooth when healthy.
        z = pf.health_index()
        return cfg.theta_view_gain + (1.0 - cfg.theta_view_gain) * z

    # Alignment: bring the estimated strap/surface angle back to a right angle.
    est = pf.estimate()
    theta_view = memory.update(est.theta, view_gain())
    gap = wrap_scalar(est.phi - theta_view)
    if abs(gap - 0.5 * math.pi) > cfg.angle_deadband:
        if budget - len(executed) <= 0:
            return executed, None
        cap = cfg.max_align_rotation
        delta = max(min(_alignment_rotation(gap), cap), -cap)
        action = Action.rotate(delta)
        outcome = apply_rotate(world, action.delta_phi, check_forbidden=forbid_after_rotate)
        pf.predict(action)

        def align_updates(res: ActionResult):
            obs = observe(outcome.state, noise_std_beta, rng)
            res.observation = obs
            pf.update_f1(obs)
            pf.update_f2(obs)
            memory.remember(obs, pf.estimate())
            # The health index cannot see a surface turn (its phi signal is
            # attenuated by d/r), so refresh theta here as well once the fit
            # rests on enough unapplied hinge evidence and actually disagrees
            # with the believed surface angle.
            if (
                math.isfinite(cfg.refresh_innovation_factor)
                and pf.entries_since_theta_update >= cfg.refresh_min_entries
            ):
                fit = pf.aux_theta()
                if fit is not None and fit.sigma <= cfg.refresh_max_sigma:
                    innovation = abs(wrap_scalar(fit.theta_hat - memory.theta_view))
                    if innovation > cfg.refresh_innovation_factor * pf.cfg.sigma3:
                        pf.update_f3(fit.theta_hat, fit.sigma)
                        memory.theta_view = None  # snap to the corrected belief

        if finish(ActionResult(action, outcome), align_updates):
            return executed, failure()
        world = outcome.state

    # Peel one step along the believed bisector, which keeps the strap angle
    # in place even when a capped alignment left the gap away from square.
    if budget - len(executed) <= 0:
        return executed, None
    est = pf.estimate()
    theta_view = memory.update(est.theta, view_gain())
    believed_gap = wrap_scalar(est.phi - theta_view)
    action = Action.peel(theta_view + 0.5 * believed_gap, cfg.peel_step)
    outcome = apply_peel(world, action.alpha, action.d)
    pf.predict(action)

    def peel_updates(res: ActionResult):
        obs = observe(outcome.state, noise_std_beta, rng)
        res.observation = obs
        pf.update_f1(obs)
        # The taut transition across this peel pins the local surface angle
        # directly; this is the only surface evidence whose strength does not
        # fade with the peeled length, so it is what tracks sharp turns.
        est = pf.estimate()
        direction, _ = transition_implied_theta(
            memory, obs, est.phi, 0.5 * pf.cfg.sigma1, action
        )
        if direction is not None and direction[1] < 0.7:
            pf.update_f3(direction[0], direction[1])
        memory.remember(obs, pf.estimate())

    if finish(ActionResult(action, outcome), peel_updates):
        return executed, failure()
    world = outcome.state

    # Explore: spend one rotation on information when impoverishment looms or
    # when the belief has gone unvalidated for too long; the elective kind is
    # taken at half size since it may act on a confidently wrong belief.
    z = pf.health_index()
    forced = memory.stale_actions >= cfg.max_stale_actions
    if rng.random() < z or forced:
        if budget - len(executed) <= 0:
            return executed, None
        if cfg.safe_explore:
            est = pf.estimate()
            view = memory.update(est.theta, view_gain())
            spread = float(np.std(pf.theta))
            delta = _safe_explore_rotation(cfg, wrap_scalar(est.phi - view), spread)
            if delta is None:
                return executed, None
            if forced:
                delta = 0.5 * delta
        else:
            delta = cfg.explore_rotation
        action = Action.rotate(delta)
        outcome = apply_rotate(world, action.delta_phi, check_forbidden=forbid_after_rotate)
        pf.predict(action)

        def explore_updates(res: ActionResult):
            obs = observe(outcome.state, noise_std_beta, rng)
            res.observation = obs
            pf.update_f1(obs)
            pf.update_f2(obs)
            memory.stale_actions = 0
            fit = pf.aux_theta()
            if fit is not None:
                pf.update_f3(fit.theta_hat, fit.sigma)
                memory.theta_view = None  # snap to the corrected belief
            memory.remember(obs, pf.estimate())

        if finish(ActionResult(action, outcome), explore_updates):
            return executed, failure()

    return executed, None


def _annotate(result: ActionResult, pf: ParticleFilter, snapshot_size: int) -> None:
    try:
        result.estimate = pf.estimate()
    except FilterDivergenceError:
        result.estimate = None
    result.health = pf.health_index()
    if snapshot_size > 0:
        n = len(pf.weights)
        idx = np.unique(np.linspace(0, n - 1, min(snapshot_size, n)).astype(int))
        result.particles = pf.particles()[idx]


def full_obs_step(
    world: WorldState,
    cfg: ControllerConfig,
    budget: int,
    forbid_after_rotate: bool = True,
) -> list[ActionResult]:
    """One oracle iteration: align against the true state, then peel the bisector."""
    executed: list[ActionResult] = []
    gap = wrap_scalar(world.phi - world.theta())
    if abs(gap - 0.5 * math.pi) > cfg.angle_deadband:
        if budget <= 0:
            return executed
        action = Action.rotate(_alignment_rotation(gap))
        outcome = apply_rotate(world, action.delta_phi, check_forbidden=forbid_after_rotate)
        executed.append(ActionResult(action, outcome))
        if outcome.event != Event.OK:
            return executed
        world = outcome.state
    if budget - len(executed) <= 0:
        return executed
    action = Action.peel(world.theta() + 0.25 * math.pi, cfg.peel_step)
    outcome = apply_peel(world, action.alpha, action.d)
    executed.append(ActionResult(action, outcome))
    return executed


def run_episode(
    curve: SurfaceCurve,
    controller: str,
    seed: int,
    filter_cfg: FilterConfig | None = None,
    controller_cfg: ControllerConfig | None = None,
    cost_cfg: CostConfig | None = None,
    noise_std_beta: float = math.radians(1.0),
    forbid_after_rotate: bool = True,
    collect_trajectory: bool = False,
    snapshot_size: int = 0,
    check_decomposition: bool = False,
    initial_phi: float = 0.5 * math.pi,
) -> EpisodeRun:
    """Run one seeded episode to termination and account every action's cost."""
    if controller not in CONTROLLERS:
        raise ValueError(f"unknown controller {controller!r}")
    controller_cfg = controller_cfg or ControllerConfig()
    cost_cfg = cost_cfg or CostConfig()
    rng = np.random.default_rng(seed)
    world = WorldState(curve=curve, ell=0.0, phi=initial_phi)

    pf = None
    if controller == HEURISTIC:
        pf = ParticleFilter(filter_cfg or FilterConfig(), rng, check_decomposition=check_decomposition)
        pf.init(observe(world, noise_std_beta, rng))

    steps = 0
    total_cost = 0.0
    records: list[TrajectoryRecord] = []
    max_taut_err = 0.0
    terminal: str | None = None
    memory = HeuristicMemory()

    while steps < controller_cfg.max_steps and terminal is None:
        budget = controller_cfg.max_steps - steps
        if controller == HEURISTIC:
            executed, failure = heuristic_step(
                world,
                pf,
                controller_cfg,
                noise_std_beta,
                rng,
                budget,
                forbid_after_rotate=forbid_after_rotate,
                snapshot_size=snapshot_size,
                memory=memory,
            )
        else:
            executed = full_obs_step(world, controller_cfg, budget, forbid_after_rotate)
            failure = None
        if not executed:
            break
        for result in executed:
            cost = action_cost(result.outcome, result.action, cost_cfg)
            total_cost += cost
            steps += 1
            world = result.outcome.state
            max_taut_err = max(max_taut_err, result.outcome.taut_residual)
            if collect_trajectory:
                records.append(
                    make_record(
                        step=steps,
                        action=result.action,
                        truth=world.velcro_state(),
                        observation=result.observation,
                        estimate=result.estimate,
                        health=result.health,
                        cost=cost,
                        event=result.outcome.event.value,
                        particles=result.particles,
                    )
                )
            if result.outcome.event != Event.OK:
                terminal = result.outcome.event.value
                break
        if terminal is None and failure is not None:
            terminal = failure

    if terminal is None:
        terminal = "max_steps"
    metrics = EpisodeMetrics(
        total_cost=total_cost,
        success=terminal == Event.FULLY_PEELED.value,
        steps=steps,
        terminal_event=terminal,
    )
    return EpisodeRun(metrics=metrics, records=records, max_taut_err=max_taut_err)
