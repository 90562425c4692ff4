"""Particle filter over the peeling state with state-space decomposition.

Each measurement model touches a disjoint subset of the particle coordinates:
the tension direction updates phi, the tip position updates (h_x, h_y, r), and
the auxiliary surface-angle estimate updates theta. An update resamples only
its own subset, leaving the marginals of the other coordinates untouched.
Weights are likelihoods of the most recent update, normalized by their maximum
so the impoverishment health index has a fixed [0, 1] scale.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from velcro_peel.angles import circular_mean, wrap_angle, wrap_scalar
from velcro_peel.simulator import Action, Observation, VelcroState

_MAX_ARC_RADIUS = 1e4  # larger fitted circles are treated as lines
_MIN_ARC_RADIUS = 2.0  # sharper fitted circles than any plausible surface
_MIN_ARC_POINTS = 7  # short histories let a circle interpolate noise
_ARC_MARGIN = 0.6  # arc must beat the line by this residual factor
_ARC_SIGMA_FACTOR = 2.3  # endpoint-tangent extrapolation inflates arc uncertainty
_MAX_ARC_EXTRAPOLATION = 2.0  # cm of tangent advance past the newest fitted entry


class FilterDivergenceError(RuntimeError):
    """Every particle has zero likelihood; the estimate is meaningless."""


@dataclass(frozen=True)
class FilterConfig:
    n_particles: int = 500
    sigma1: float = math.radians(2.0)  # tension-direction noise, rad
    sigma2: float = 0.5  # tip-position noise, cm
    sigma3: float = math.radians(10.0)  # surface-angle noise, rad
    roughening_theta: float = math.radians(2.0)
    # Per-action process noise; without it the phi and r marginals collapse to
    # drifting point masses and the measurement updates go blind.
    process_phi: float = math.radians(0.4)
    process_r: float = 0.03  # cm
    decay_lambda: float = 0.9
    history_window: int = 15
    fit_max_sigma: float = math.radians(2.5)  # max direction std for a usable theta fit
    history_sharpen: float = 9.0  # likelihood power for the recorded hinge mean
    r_prior_mean: float = 10.0
    r_prior_std: float = 0.5
    theta_prior_low: float = -math.radians(75.0)
    theta_prior_high: float = math.radians(75.0)

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("need at least one particle")
        if min(self.sigma1, self.sigma2, self.sigma3) <= 0:
            raise ValueError("measurement noise scales must be positive")
        if min(self.roughening_theta, self.process_phi, self.process_r, self.r_prior_std) < 0:
            raise ValueError("noise scales cannot be negative")
        if not 0.0 < self.decay_lambda < 1.0:
            raise ValueError("decay_lambda must lie in (0, 1)")
        if self.history_window < 2:
            raise ValueError("history_window must be at least 2")


@dataclass(frozen=True)
class ThetaFit:
    theta_hat: float
    residual: float
    model: str  # "line" or "arc"
    sigma: float = 0.0  # estimated std of the fitted direction, rad


def health_index(weights) -> float:
    """Impoverishment risk: fraction of low-weight minus high-weight particles."""
    w = np.asarray(weights, dtype=float)
    return max(0.0, float(np.mean(w < 0.1) - np.mean(w > 0.9)))


def _gaussian_weights(squared_residual: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian likelihoods with a tempered scale when every hypothesis is far out.

    If even the best particle sits beyond 3 sigma, the scale is widened so the
    best lands exactly at 3 sigma: relative ranking is preserved, the ensemble
    degrades gracefully instead of underflowing to all-zero weights, and the
    all-low-weight signal the health index watches for still fires.
    """
    best = float(np.min(squared_residual))
    scale = max(sigma, math.sqrt(best) / 3.0)
    return np.exp(-0.5 * squared_residual / (scale * scale))


def systematic_resample(weights, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling; returns source indices, one per particle."""
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0:
        raise FilterDivergenceError("all particle weights are zero")
    n = len(w)
    positions = (rng.random() + np.arange(n)) / n
    cum = np.cumsum(w / total)
    cum[-1] = 1.0
    return np.searchsorted(cum, positions, side="right")


def fit_theta_aux(
    points: np.ndarray,
    steps: np.ndarray,
    decay_lambda: float,
    max_sigma: float = math.inf,
    at_point: np.ndarray | None = None,
    noise_floor: float = 0.0,
) -> ThetaFit | None:
    """Estimate the surface angle from past hinge positions.

    Fits a decayed-weight PCA line and a decayed-weight algebraic circle to the
    time-ordered hinge points and keeps whichever has the smaller weighted mean
    squared residual (adjusted for model degrees of freedom); the returned
    angle points along the recent hinge motion. When ``at_point`` is given the
    circle's tangent is taken at that location (projected onto the circle), so
    the estimate refers to the newest hinge rather than the last recorded one.
    Returns None when the input is degenerate (too few or coincident points)
    or when the estimated direction std exceeds ``max_sigma``, meaning the
    direction is not resolved yet.
    """
    pts = np.asarray(points, dtype=float)
    m = len(pts)
    if m < 3:
        return None
    steps = np.asarray(steps, dtype=float)
    motion = pts[-1] - pts[0]
    if math.hypot(*motion) < 1e-9:
        return None
    w = decay_lambda ** (steps[-1] - steps)
    wsum = w.sum()
    n_eff = wsum * wsum / float(w @ w)

    center = (w[:, None] * pts).sum(axis=0) / wsum
    x = pts - center
    cov = (x * w[:, None]).T @ x / wsum
    evals, evecs = np.linalg.eigh(cov)
    spread = max(float(evals[1]), 1e-30)
    direction = evecs[:, 1]
    if float(direction @ motion) < 0:
        direction = -direction
    line_residual = max(float(evals[0]), 0.0) * m / (m - 2)
    best = ThetaFit(math.atan2(direction[1], direction[0]), line_residual, "line")

    if m >= _MIN_ARC_POINTS:
        arc = _fit_circle(pts, w, motion, at_point)
        # The circle spends an extra parameter on curvature, so it must beat
        # the line by a clear margin before its endpoint tangent is trusted.
        if arc is not None and arc.residual * m / (m - 3) < _ARC_MARGIN * best.residual:
            best = ThetaFit(arc.theta_hat, arc.residual * m / (m - 3), "arc")
    # First-order direction uncertainty of a scatter fit: residual variance
    # over (spread along the fit times the effective sample count). The floor
    # keeps serially correlated entries from faking a tiny residual, and the
    # arc tangent additionally extrapolates an uncertain curvature to the end.
    sigma = math.sqrt(max(best.residual, noise_floor * noise_floor) / (spread * n_eff))
    if best.model == "arc":
        sigma *= _ARC_SIGMA_FACTOR
    if sigma > max_sigma:
        return None
    return ThetaFit(best.theta_hat, best.residual, best.model, sigma)


@dataclass(frozen=True)
class _CircleFit:
    theta_hat: float
    residual: float
    radius: float


def _fit_circle(
    pts: np.ndarray,
    w: np.ndarray,
    motion: np.ndarray,
    at_point: np.ndarray | None = None,
) -> _CircleFit | None:
    # Algebraic (Kasa) fit of x^2 + y^2 = D x + E y + F, weighted by w.
    sqrt_w = np.sqrt(w)
    design = np.column_stack([pts, np.ones(len(pts))]) * sqrt_w[:, None]
    target = (pts[:, 0] ** 2 + pts[:, 1] ** 2) * sqrt_w
    try:
        sol, *_ = np.linalg.lstsq(design, target, rcond=None)
    except np.linalg.LinAlgError:
        return None
    cx, cy = 0.5 * sol[0], 0.5 * sol[1]
    r_sq = sol[2] + cx * cx + cy * cy
    if not np.isfinite(r_sq) or r_sq <= 0:
        return None
    radius = math.sqrt(r_sq)
    if not _MIN_ARC_RADIUS <= radius <= _MAX_ARC_RADIUS:
        return None
    dist = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
    residual = float((w * (dist - radius) ** 2).sum() / w.sum())
    center = np.array([cx, cy])
    anchor = pts[-1] - center
    if math.hypot(*anchor) < 1e-12:
        return None
    angle = math.atan2(anchor[1], anchor[0])
    if at_point is not None:
        # Advance the tangent toward the queried point, but only a bounded
        # arc length past the newest fitted entry: the circle is a local
        # model and extrapolating it across a regime exit overshoots.
        ahead = np.asarray(at_point, dtype=float) - center
        if math.hypot(*ahead) > 1e-12:
            swing = wrap_scalar(math.atan2(ahead[1], ahead[0]) - angle)
            limit = _MAX_ARC_EXTRAPOLATION / radius
            angle += max(min(swing, limit), -limit)
    tangent = np.array([-math.sin(angle), math.cos(angle)])
    if float(tangent @ motion) < 0:
        tangent = -tangent
    return _CircleFit(math.atan2(tangent[1], tangent[0]), residual, radius)


class ParticleFilter:
    """Weighted particle ensemble plus the hinge history for the theta fits."""

    def __init__(
        self,
        cfg: FilterConfig,
        rng: np.random.Generator,
        check_decomposition: bool = False,
    ):
        self.cfg = cfg
        self.rng = rng
        self.check_decomposition = check_decomposition
        n = cfg.n_particles
        self.hx = np.zeros(n)
        self.hy = np.zeros(n)
        self.theta = np.zeros(n)
        self.phi = np.zeros(n)
        self.r = np.full(n, cfg.r_prior_mean)
        self.weights = np.ones(n)
        self.hinge_history: deque[tuple[float, float, int]] = deque(maxlen=cfg.history_window)
        self.step_count = 0
        self.entries_since_theta_update = 0
        self._infeasible = np.zeros(n, dtype=bool)
        self._last_infeasible = np.zeros(n, dtype=bool)

    # -- lifecycle ---------------------------------------------------------

    def init(self, obs: Observation) -> None:
        """Draw the initial ensemble around the first observation."""
        cfg, n = self.cfg, self.cfg.n_particles
        self.r = np.maximum(cfg.r_prior_mean + cfg.r_prior_std * self.rng.standard_normal(n), 1e-6)
        phi0 = wrap_angle(obs.beta - math.pi)
        self.phi = phi0 + cfg.sigma1 * self.rng.standard_normal(n)
        self.hx = obs.t_x - self.r * np.cos(self.phi)
        self.hy = obs.t_y - self.r * np.sin(self.phi)
        self.theta = self.rng.uniform(cfg.theta_prior_low, cfg.theta_prior_high, n)
        self.weights = np.ones(n)
        self.hinge_history.clear()
        self.step_count = 0
        self._infeasible[:] = False

    def predict(self, action: Action) -> None:
        """Propagate every particle through the commanded action.

        Peeling uses the locally-flat closed form with each particle's own
        theta hypothesis, then roughens theta; hypotheses that cannot stay
        taut keep their state but drop to zero weight.
        """
        self.step_count += 1
        n = self.cfg.n_particles
        if action.s == 1:
            self.phi = self.phi + action.delta_phi
            if self.cfg.process_phi > 0:
                self.phi = self.phi + self.cfg.process_phi * self.rng.standard_normal(n)
            return
        scale = self.cfg.roughening_theta * (1.0 + health_index(self.weights))
        ca, sa = math.cos(action.alpha), math.sin(action.alpha)
        ex = self.hx + self.r * np.cos(self.phi) + action.d * ca
        ey = self.hy + self.r * np.sin(self.phi) + action.d * sa
        vx, vy = ex - self.hx, ey - self.hy
        ux, uy = np.cos(self.theta), np.sin(self.theta)
        denom = self.r + vx * ux + vy * uy
        with np.errstate(divide="ignore", invalid="ignore"):
            dr = (vx * vx + vy * vy - self.r * self.r) / (2.0 * denom)
        bad = (denom < 1e-12) | (dr < 0.0) | ~np.isfinite(dr)
        good = ~bad
        dr = np.where(good, dr, 0.0)
        self.hx = self.hx + dr * ux
        self.hy = self.hy + dr * uy
        self.r = self.r + dr
        self.phi = np.where(good, np.arctan2(ey - self.hy, ex - self.hx), self.phi)
        if self.cfg.roughening_theta > 0:
            noise = scale * self.rng.standard_normal(n)
            self.theta = np.where(good, self.theta + noise, self.theta)
        if self.cfg.process_phi > 0:
            jitter = self.cfg.process_phi * self.rng.standard_normal(n)
            self.phi = np.where(good, self.phi + jitter, self.phi)
        if self.cfg.process_r > 0:
            jitter = self.cfg.process_r * self.rng.standard_normal(n)
            self.r = np.where(good, np.maximum(self.r + jitter, 1e-6), self.r)
        if np.any(bad):
            self.weights = np.where(bad, 0.0, self.weights)
            self._infeasible |= bad

    # -- measurement updates -------------------------------------------------

    def update_f1(self, obs: Observation) -> None:
        """Weight by the tension direction and resample the phi coordinate."""
        err = wrap_angle(obs.beta - self.phi - math.pi)
        w = _gaussian_weights(err * err, self.cfg.sigma1)
        idx = self._reweight_and_draw(w)
        before = self._snapshot("hx", "hy", "r", "theta")
        # Rank-coupled assignment: each particle keeps its position in the phi
        # ordering, so the untouched (h, r) stay consistent with a nearby phi
        # instead of being paired with an arbitrary one.
        dst = np.argsort(self.phi, kind="stable")
        src = idx[np.argsort(self.phi[idx], kind="stable")]
        phi = np.empty_like(self.phi)
        phi[dst] = self.phi[src]
        self.phi = phi
        self._assert_untouched(before)

    def update_f2(self, obs: Observation) -> None:
        """Weight by the tip residual and resample (h_x, h_y, r) jointly.

        Only meaningful while the hinge is stationary, i.e. after non-peeling
        actions. Appends the post-update mean hinge to the fit history.
        """
        dx = obs.t_x - self.hx - self.r * np.cos(self.phi)
        dy = obs.t_y - self.hy - self.r * np.sin(self.phi)
        sq = dx * dx + dy * dy
        w = _gaussian_weights(sq, self.cfg.sigma2)
        idx = self._reweight_and_draw(w)
        # Posterior mean hinge with weights still paired to the coordinates
        # they were computed from, recorded before resampling reshuffles them.
        # A sharpened (low-temperature) weighting reduces the smearing the
        # tempered filter likelihood would otherwise leave in the fit input.
        if self.cfg.history_sharpen != 1.0:
            ws = np.exp(-0.5 * self.cfg.history_sharpen * sq / self.cfg.sigma2**2)
            ws = np.where(self._last_infeasible, 0.0, ws)
            if ws.max() <= 0:
                ws = self.weights
        else:
            ws = self.weights
        total = ws.sum()
        entry = (
            float(ws @ self.hx / total),
            float(ws @ self.hy / total),
            self.step_count,
        )
        before = self._snapshot("phi", "theta")
        # Couple the (h, r) transfer by phi rank so donors land on recipients
        # with a similar phi, keeping tip consistency across the resample.
        dst = np.argsort(self.phi, kind="stable")
        src = idx[np.argsort(self.phi[idx], kind="stable")]
        hx, hy, r = np.empty_like(self.hx), np.empty_like(self.hy), np.empty_like(self.r)
        hx[dst] = self.hx[src]
        hy[dst] = self.hy[src]
        r[dst] = self.r[src]
        self.hx, self.hy, self.r = hx, hy, r
        self._assert_untouched(before)
        self.hinge_history.append(entry)
        self.entries_since_theta_update += 1

    def update_f3(self, theta_hat: float, extra_sigma: float = 0.0) -> None:
        """Weight by the auxiliary surface-angle estimate and resample theta.

        ``extra_sigma`` widens the measurement noise by the fit's own direction
        uncertainty, so shaky fits nudge instead of collapse the ensemble.
        """
        sigma = math.hypot(self.cfg.sigma3, extra_sigma)
        err = wrap_angle(self.theta - theta_hat)
        w = _gaussian_weights(err * err, sigma)
        idx = self._reweight_and_draw(w)
        self.entries_since_theta_update = 0
        before = self._snapshot("hx", "hy", "r", "phi")
        dst = np.argsort(self.theta, kind="stable")
        src = idx[np.argsort(self.theta[idx], kind="stable")]
        theta = np.empty_like(self.theta)
        theta[dst] = self.theta[src]
        self.theta = theta
        self._assert_untouched(before)

    def _reweight_and_draw(self, likelihood: np.ndarray) -> np.ndarray:
        self._last_infeasible = self._infeasible.copy()
        likelihood = np.where(self._infeasible, 0.0, likelihood)
        self._infeasible[:] = False
        peak = likelihood.max()
        if peak <= 0:
            raise FilterDivergenceError("all particle weights are zero")
        self.weights = likelihood / peak
        return systematic_resample(self.weights, self.rng)

    # -- queries -------------------------------------------------------------

    def aux_theta(self) -> ThetaFit | None:
        """Run the line/arc fit over the recorded hinge history.

        Ages for the decayed weights count path length covered since each
        entry, so the fit stays local to the surface geometry around the
        current hinge rather than blending in far-away stretches.
        """
        if len(self.hinge_history) < 3:
            return None
        pts = np.array([(x, y) for x, y, _ in self.hinge_history])
        hops = np.hypot(*np.diff(pts, axis=0).T)
        path = np.concatenate([[0.0], np.cumsum(hops)])
        total = self.weights.sum()
        here = None
        if total > 0:
            here = np.array([self.weights @ self.hx, self.weights @ self.hy]) / total
        return fit_theta_aux(
            pts,
            path,
            self.cfg.decay_lambda,
            self.cfg.fit_max_sigma,
            here,
            noise_floor=0.4 * self.cfg.sigma2,
        )

    def health_index(self) -> float:
        return health_index(self.weights)

    def theta_mean(self) -> float:
        """Unweighted circular mean of the surface-angle marginal.

        The importance weights of the latest update carry observation noise
        amplified by roughly r/d into the weighted theta mean; the marginal
        itself only moves through resampling and roughening, so its plain
        mean is the stable view a controller should act on.
        """
        return circular_mean(self.theta)

    def estimate(self) -> VelcroState:
        """Weighted mean state; angular coordinates use the circular mean."""
        total = self.weights.sum()
        if total <= 0:
            raise FilterDivergenceError("all particle weights are zero")
        w = self.weights / total
        return VelcroState(
            h_x=float(w @ self.hx),
            h_y=float(w @ self.hy),
            theta=circular_mean(self.theta, w),
            phi=circular_mean(self.phi, w),
            r=float(w @ self.r),
        )

    def particles(self) -> np.ndarray:
        """(N, 5) snapshot in (h_x, h_y, theta, phi, r) order."""
        return np.column_stack([self.hx, self.hy, self.theta, self.phi, self.r])

    # -- decomposition guard ---------------------------------------------------

    def _snapshot(self, *names: str):
        if not self.check_decomposition:
            return None
        return {name: getattr(self, name).copy() for name in names}

    def _assert_untouched(self, before) -> None:
        if before is None:
            return
        for name, old in before.items():
            if not np.array_equal(getattr(self, name), old):
                raise AssertionError(f"update touched the {name} coordinate")
