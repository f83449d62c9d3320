"""Stopping rules on the mixed statistics and threshold calibration.

A detector stops at the first ``n >= 1`` with ``statistic(n) >= A``.  The
thresholds come from three calibration routes: the posterior-odds bound
``A = (1 - alpha) / alpha`` for the Shiryaev rule, the submartingale bound
``A = (omega * b + mean(nu)) / alpha`` for the Shiryaev-Roberts rule, and the
cost-balance equation ``r * D * A * (log A)^(r-1) = 1/c`` for the average-risk
formulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .likelihood import SubsetWeights
from .model import ObservationBatch, PriorSpec
from .statistics import LOG_CLAMP, DetectorState, GridSpec

SHIRYAEV_MIXTURE = "shiryaev-mixture"
SR_MIXTURE = "sr-mixture"
SHIRYAEV_PUTATIVE = "shiryaev-putative"
SR_PUTATIVE = "sr-putative"

_KINDS = (SHIRYAEV_MIXTURE, SR_MIXTURE, SHIRYAEV_PUTATIVE, SR_PUTATIVE)


@dataclass(frozen=True)
class DetectorConfig:
    """Which rule to run and at what threshold.

    Putative kinds concentrate the parameter mixture on ``putative_theta``;
    they are byte-for-byte the mixture rules with a one-point grid.
    """

    kind: str
    threshold_A: float
    window_m1: int | None = None
    window_m0: int = 0
    head_start_omega: float = 0.0
    putative_theta: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if not self.threshold_A > 0.0:
            raise ValueError(f"threshold must be positive, got {self.threshold_A}")
        if self.window_m1 is not None and self.window_m1 < 1:
            raise ValueError(f"window length must be >= 1, got {self.window_m1}")
        if self.window_m0 < 0:
            raise ValueError(f"window offset must be >= 0, got {self.window_m0}")
        if self.head_start_omega < 0.0:
            raise ValueError(f"head start must be >= 0, got {self.head_start_omega}")
        if self.kind in (SHIRYAEV_PUTATIVE, SR_PUTATIVE):
            if self.putative_theta is None:
                raise ValueError("putative rules need putative_theta")
            object.__setattr__(
                self, "putative_theta", tuple(float(t) for t in self.putative_theta)
            )
        elif self.putative_theta is not None:
            raise ValueError("putative_theta is only valid for putative rules")

    @property
    def uses_shiryaev(self) -> bool:
        return self.kind in (SHIRYAEV_MIXTURE, SHIRYAEV_PUTATIVE)


@dataclass
class RunResult:
    """Outcome of one detector run.

    ``stopped_at`` is the 1-based stopping time, or ``None`` when the statistic
    never reached the threshold within the horizon (a censored run).  The
    trajectory holds the statistic at times ``1 .. min(stopped_at, horizon)``.
    """

    stopped_at: int | None
    trajectory: np.ndarray

    @property
    def censored(self) -> bool:
        return self.stopped_at is None


class Detector:
    """A stopping rule bound to its observation model, prior, and mixtures."""

    def __init__(
        self,
        config: DetectorConfig,
        scenario,
        prior: PriorSpec,
        grid: GridSpec | None,
        weights: SubsetWeights,
    ):
        if config.kind in (SHIRYAEV_PUTATIVE, SR_PUTATIVE):
            grid = GridSpec.degenerate(config.putative_theta)
        if grid is None:
            raise ValueError("mixture rules need a parameter grid")
        if grid.n_streams != scenario.n_streams:
            raise ValueError(
                f"grid covers {grid.n_streams} streams, scenario has {scenario.n_streams}"
            )
        if weights.n_streams != scenario.n_streams:
            raise ValueError(
                f"subset weights cover {weights.n_streams} streams, "
                f"scenario has {scenario.n_streams}"
            )
        if config.uses_shiryaev and config.threshold_A <= prior.head_odds():
            raise ValueError(
                f"Shiryaev threshold must exceed q/(1-q) = {prior.head_odds():.6g}"
            )
        self.config = config
        self.scenario = scenario
        self.prior = prior
        self.grid = grid
        self.weights = weights
        self.log_threshold = math.log(config.threshold_A)

    def pfa_bound(self) -> float:
        """The calibration bound on the weighted false-alarm probability."""
        a = self.config.threshold_A
        if self.config.uses_shiryaev:
            return 1.0 / (1.0 + a)
        b = self.prior.tail(1)
        nu_bar = self.prior.mean()
        if not math.isfinite(nu_bar):
            raise ValueError("the SR bound needs a prior with finite mean")
        return (self.config.head_start_omega * b + nu_bar) / a

    def _new_state(self, n_reps: int) -> DetectorState:
        return DetectorState(
            self.prior,
            self.grid,
            self.weights,
            n_reps=n_reps,
            omega=self.config.head_start_omega,
            window_m1=self.config.window_m1,
            window_m0=self.config.window_m0,
            track="shiryaev" if self.config.uses_shiryaev else "sr",
            k_independent=self.scenario.k_independent_increments,
        )

    def log_trajectories(self, data: np.ndarray) -> np.ndarray:
        """Log statistic at every time for a batch of runs: [R, T] from [R, T, N]."""
        data = np.asarray(data, dtype=float)
        if data.ndim != 3:
            raise ValueError("expected a [replications, horizon, streams] array")
        n_reps, horizon, _ = data.shape
        increments = self.scenario.log_lr_increments(data, self.grid.points)
        state = self._new_state(n_reps)
        out = np.empty((n_reps, horizon))
        read = state.log_shiryaev if self.config.uses_shiryaev else state.log_sr
        for t in range(horizon):
            state.advance(increments[:, t])
            out[:, t] = read()
        return out

    def stopping_times(self, data: np.ndarray) -> np.ndarray:
        """First crossing time per run (-1 when censored): [R] from [R, T, N]."""
        log_traj = self.log_trajectories(data)
        crossed = log_traj >= self.log_threshold
        first = np.argmax(crossed, axis=1)
        hit = crossed.any(axis=1)
        return np.where(hit, first + 1, -1).astype(np.int64)

    def run(self, batch: ObservationBatch | np.ndarray, max_horizon: int | None = None) -> RunResult:
        """Run the rule over one observation batch."""
        data = batch.data if isinstance(batch, ObservationBatch) else np.asarray(batch, dtype=float)
        if max_horizon is not None:
            if max_horizon < 1:
                raise ValueError(f"max_horizon must be >= 1, got {max_horizon}")
            data = data[:max_horizon]
        log_traj = self.log_trajectories(data[None])[0]
        crossed = np.flatnonzero(log_traj >= self.log_threshold)
        if crossed.size:
            stop = int(crossed[0]) + 1
            return RunResult(stop, np.exp(np.minimum(log_traj[:stop], LOG_CLAMP)))
        return RunResult(None, np.exp(np.minimum(log_traj, LOG_CLAMP)))


def threshold_shiryaev(alpha: float, q: float = 0.0) -> float:
    """Threshold (1 - alpha) / alpha, guaranteeing weighted PFA <= alpha."""
    if not 0.0 < alpha < 1.0 - q:
        raise ValueError(f"alpha must be in (0, {1.0 - q}), got {alpha}")
    return (1.0 - alpha) / alpha


def threshold_sr(alpha: float, omega: float, prior: PriorSpec) -> float:
    """Threshold (omega * b + mean(nu)) / alpha for the Shiryaev-Roberts rule.

    ``b = P(nu >= 1)``.  Requires a prior with finite mean; degenerate priors
    whose bound is zero are rejected (no positive threshold exists).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if omega < 0.0:
        raise ValueError(f"head start must be >= 0, got {omega}")
    nu_bar = prior.mean()
    if not math.isfinite(nu_bar):
        raise ValueError("SR calibration needs a prior with finite mean")
    a = (omega * prior.tail(1) + nu_bar) / alpha
    if a <= 0.0:
        raise ValueError(
            "SR bound is degenerate (omega * b + mean(nu) = 0); no positive threshold"
        )
    return a


def threshold_cost(c: float, r: float, D: float, scale: float = 1.0) -> float:
    """Solve r * D * A * (log A)^(r-1) = scale / c for the unique root A > 1.

    Solved in u = log A, where the equation is strictly increasing; bisection
    brackets the root and Newton polishing drives the relative residual of the
    original equation below 1e-10.
    """
    if c <= 0.0 or D <= 0.0 or scale <= 0.0:
        raise ValueError("c, D and scale must be positive")
    if r < 1.0:
        raise ValueError(f"moment order must be >= 1, got {r}")
    target = scale / (c * r * D)  # A (log A)^(r-1) = target
    if r == 1.0:
        if target <= 1.0:
            raise ValueError(
                f"no threshold A > 1: need scale/c > D, got scale/c = {scale / c!r} <= D = {D!r}"
            )
        return target

    def h(u: float) -> float:
        return u + (r - 1.0) * math.log(u) - math.log(target)

    lo, hi = 1e-12, 1.0
    while h(lo) > 0.0 and lo > 1e-250:  # h -> -inf as u -> 0 for r > 1
        lo *= 1e-6
    while h(hi) < 0.0:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError("failed to bracket the threshold equation")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if h(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    u = 0.5 * (lo + hi)
    for _ in range(6):  # Newton: h'(u) = 1 + (r-1)/u
        u -= h(u) / (1.0 + (r - 1.0) / u)
    a = math.exp(u)
    residual = abs(r * D * a * math.log(a) ** (r - 1.0) - scale / c) / (scale / c)
    if residual > 1e-10:
        raise ArithmeticError(f"threshold solve did not converge (residual {residual:g})")
    return a
