"""Running Shiryaev and Shiryaev-Roberts statistics mixed over subsets and parameters.

Both statistics are prior- or uniformly-weighted sums of likelihood ratios over
candidate change points.  When the per-observation increments do not depend on
the hypothesized change point, each (subset, parameter) component satisfies a
one-step recursion:

    S_{B,t}(n) = L_{B,t}(n) * (S_{B,t}(n-1) * P(nu >= n-1) + pi_{n-1}) / P(nu >= n)
    R_{B,t}(n) = L_{B,t}(n) * (R_{B,t}(n-1) + 1)

with ``S(0) = q / (1-q)`` and ``R(0) = omega``.  The emitted statistic is the
subset/parameter mixture of the components.  A window-limited mode sums the
mixture likelihood ratio directly over the last ``m1 + 1`` candidate change
points instead, which bounds memory and also serves as the oracle for the
recursion.  All state is kept in the log domain, clamped at +/-700 with a
saturation flag (a saturated statistic is already far beyond any usable
threshold).

The no-change posterior satisfies ``P(nu >= n | data) = 1 / (S(n) + 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .likelihood import (
    SubsetWeights,
    log_elementary_symmetric,
    log_subset_weights,
    subset_masks,
)
from .model import PriorSpec

LOG_CLAMP = 700.0


@dataclass(frozen=True)
class GridSpec:
    """Discretized mixing measure over post-change parameters.

    Each row of ``theta_points`` is a per-stream parameter vector; ``weights``
    are the matching probabilities (positive, summing to one).
    """

    theta_points: tuple[tuple[float, ...], ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        points = tuple(tuple(float(v) for v in row) for row in self.theta_points)
        weights = tuple(float(w) for w in self.weights)
        if not points:
            raise ValueError("grid needs at least one parameter point")
        width = len(points[0])
        if any(len(row) != width for row in points):
            raise ValueError("all parameter points must have the same dimension")
        if len(points) != len(set(points)):
            raise ValueError("parameter points must be distinct")
        if len(weights) != len(points):
            raise ValueError(f"{len(weights)} weights for {len(points)} points")
        if any(w <= 0.0 for w in weights):
            raise ValueError("grid weights must be positive")
        if abs(sum(weights) - 1.0) > 1e-12:
            raise ValueError(f"grid weights must sum to 1, got {sum(weights)!r}")
        object.__setattr__(self, "theta_points", points)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def common_amplitude(cls, amplitudes, n_streams: int, weights=None) -> "GridSpec":
        """Each grid point assigns one amplitude to every stream."""
        amplitudes = tuple(float(a) for a in amplitudes)
        if weights is None:
            weights = (1.0 / len(amplitudes),) * len(amplitudes)
        return cls(
            theta_points=tuple((a,) * n_streams for a in amplitudes),
            weights=tuple(weights),
        )

    @classmethod
    def degenerate(cls, theta) -> "GridSpec":
        """All mass on a single parameter vector (putative-parameter rules)."""
        return cls(theta_points=(tuple(float(t) for t in np.atleast_1d(theta)),), weights=(1.0,))

    @property
    def n_points(self) -> int:
        return len(self.theta_points)

    @property
    def n_streams(self) -> int:
        return len(self.theta_points[0])

    @property
    def points(self) -> np.ndarray:
        return np.asarray(self.theta_points)

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(np.asarray(self.weights))


class MixtureBasis:
    """Precomputed subset masks and log mixing weights for one (grid, weights) pair."""

    def __init__(self, grid: GridSpec, weights: SubsetWeights):
        if weights.n_streams != grid.n_streams:
            raise ValueError(
                f"subset weights cover {weights.n_streams} streams, grid {grid.n_streams}"
            )
        self.grid = grid
        self.weights = weights
        self.masks = subset_masks(weights.n_streams, weights.K)
        self.members = [np.flatnonzero(row) for row in self.masks]
        self.log_p_subset = log_subset_weights(weights, self.masks)
        self.log_w = grid.log_weights
        # joint log weight of each (subset, point) component
        self.log_joint = self.log_p_subset[:, None] + self.log_w[None, :]

    @property
    def n_subsets(self) -> int:
        return len(self.members)


class DetectorState:
    """Batched running state for the mixed statistics.

    ``increments`` passed to the update operations have shape ``[R, P, N]``
    (replications x grid points x streams).  In recursive mode the state holds
    per-(subset, point) log components of shape ``[R, S, P]``; in window mode
    it holds the raw increment history and re-evaluates the direct sums.
    """

    def __init__(
        self,
        prior: PriorSpec,
        grid: GridSpec,
        weights: SubsetWeights,
        *,
        n_reps: int = 1,
        omega: float = 0.0,
        window_m1: int | None = None,
        window_m0: int = 0,
        track: str = "both",
        k_independent: bool = True,
    ):
        if track not in ("both", "shiryaev", "sr"):
            raise ValueError(f"track must be 'both', 'shiryaev' or 'sr', got {track!r}")
        if omega < 0.0:
            raise ValueError(f"head start must be >= 0, got {omega}")
        if window_m1 is not None and window_m1 < 0:
            raise ValueError(f"window length must be >= 0, got {window_m1}")
        if window_m0 < 0 or (window_m1 is not None and window_m0 > window_m1):
            raise ValueError("need 0 <= m0 <= m1")
        self.prior = prior
        self.basis = MixtureBasis(grid, weights)
        self.n_reps = int(n_reps)
        self.omega = float(omega)
        self.window_m1 = window_m1
        self.window_m0 = int(window_m0)
        self.track = track
        self.k_independent = bool(k_independent)
        self.n = 0
        self.saturated = np.zeros(self.n_reps, dtype=bool)
        shape = (self.n_reps, self.basis.n_subsets, self.basis.grid.n_points)
        if window_m1 is None:
            if track in ("both", "shiryaev"):
                self.log_s = np.full(shape, _safe_log(prior.head_odds()))
            if track in ("both", "sr"):
                self.log_r = np.full(shape, _safe_log(omega))
        else:
            self._hist: list[np.ndarray] = []
            self._log_s_value: np.ndarray | None = None
            self._log_r_value: np.ndarray | None = None

    # -- internals -----------------------------------------------------------

    def _check_increments(self, increments: np.ndarray) -> np.ndarray:
        inc = np.asarray(increments, dtype=float)
        if inc.ndim == 2:
            inc = inc[None]
        expected = (self.n_reps, self.basis.grid.n_points, self.basis.weights.n_streams)
        if inc.shape != expected:
            raise ValueError(f"increments must have shape {expected}, got {inc.shape}")
        return inc

    def _subset_llrs(self, inc: np.ndarray) -> np.ndarray:
        """Sum the per-stream increments over each subset: [R, S, P].

        Accumulated member by member so every row's arithmetic is independent
        of how replications are batched.
        """
        out = np.empty((inc.shape[0], self.basis.n_subsets, inc.shape[1]))
        for s, members in enumerate(self.basis.members):
            acc = inc[:, :, members[0]].copy()
            for i in members[1:]:
                acc += inc[:, :, i]
            out[:, s, :] = acc
        return out

    def _advance_recursive(self, inc: np.ndarray, prior: PriorSpec | None, update_s: bool, update_r: bool) -> None:
        if not self.k_independent:
            raise ValueError(
                "increments depend on the hypothesized change point; "
                "the exact recursion does not apply, use a window-limited state"
            )
        llr = self._subset_llrs(inc)
        n = self.n + 1
        if update_s:
            prior = prior if prior is not None else self.prior
            log_tail_prev = prior.log_tail(n - 1)
            log_tail = prior.log_tail(n)
            if log_tail == -math.inf:
                raise ValueError(
                    f"prior tail vanishes at n={n}; the Shiryaev statistic is undefined"
                )
            log_pi = prior.log_mass(n - 1)
            self.log_s = llr + np.logaddexp(self.log_s + log_tail_prev, log_pi) - log_tail
            self._clamp(self.log_s)
        if update_r:
            self.log_r = llr + np.logaddexp(0.0, self.log_r)
            self._clamp(self.log_r)
        self.n = n

    def _clamp(self, arr: np.ndarray) -> None:
        over = arr > LOG_CLAMP
        if over.any():
            self.saturated |= over.any(axis=(1, 2))
        np.clip(arr, -LOG_CLAMP, LOG_CLAMP, out=arr)

    def _advance_window(self, inc: np.ndarray, prior: PriorSpec | None, update_s: bool, update_r: bool) -> None:
        self._hist.append(inc)
        keep = self.window_m1 + 1
        if len(self._hist) > keep:
            del self._hist[: len(self._hist) - keep]
        self.n += 1
        hist = np.stack(self._hist, axis=1)  # [R, m, P, N], oldest first
        if update_s:
            prior = prior if prior is not None else self.prior
            self._log_s_value = shiryaev_direct(
                hist,
                prior,
                self.basis.grid,
                self.basis.weights,
                n=self.n,
                m1=self.window_m1,
                m0=self.window_m0,
                window_offset=self.n - hist.shape[1],
            )
        if update_r:
            self._log_r_value = sr_direct(
                hist,
                self.basis.grid,
                self.basis.weights,
                omega=self.omega,
                n=self.n,
                m1=self.window_m1,
                m0=self.window_m0,
                window_offset=self.n - hist.shape[1],
            )

    def _advance(self, increments, prior: PriorSpec | None, update_s: bool, update_r: bool) -> None:
        if update_s and self.track == "sr":
            raise ValueError("state does not track the Shiryaev statistic")
        if update_r and self.track == "shiryaev":
            raise ValueError("state does not track the Shiryaev-Roberts statistic")
        if self.track == "both" and not (update_s and update_r):
            raise ValueError(
                "state tracks both statistics; advance them together with advance()"
            )
        inc = self._check_increments(increments)
        if self.window_m1 is None:
            self._advance_recursive(inc, prior, update_s, update_r)
        else:
            self._advance_window(inc, prior, update_s, update_r)

    # -- public stepping -------------------------------------------------------

    def advance(self, increments, prior: PriorSpec | None = None) -> "DetectorState":
        """Absorb one observation vector, updating every tracked statistic."""
        self._advance(
            increments,
            prior,
            update_s=self.track in ("both", "shiryaev"),
            update_r=self.track in ("both", "sr"),
        )
        return self

    def advance_joint(self, subset_log_lrs, prior: PriorSpec | None = None) -> "DetectorState":
        """Absorb user-supplied joint per-(subset, point) log LR increments.

        This is the hook for cross-stream-dependent post-change models, where
        the increment of a subset is not the sum of per-stream terms.  Shape
        ``[R, S, P]`` with subsets in ``subset_masks`` order; recursive mode
        only.
        """
        if self.window_m1 is not None:
            raise ValueError("joint increments are only supported by the recursions")
        llr = np.asarray(subset_log_lrs, dtype=float)
        if llr.ndim == 2:
            llr = llr[None]
        expected = (self.n_reps, self.basis.n_subsets, self.basis.grid.n_points)
        if llr.shape != expected:
            raise ValueError(f"joint increments must have shape {expected}, got {llr.shape}")
        if not self.k_independent:
            raise ValueError(
                "increments depend on the hypothesized change point; "
                "the exact recursion does not apply"
            )
        n = self.n + 1
        if self.track in ("both", "shiryaev"):
            prior_eff = prior if prior is not None else self.prior
            log_tail_prev = prior_eff.log_tail(n - 1)
            log_tail = prior_eff.log_tail(n)
            if log_tail == -math.inf:
                raise ValueError(
                    f"prior tail vanishes at n={n}; the Shiryaev statistic is undefined"
                )
            log_pi = prior_eff.log_mass(n - 1)
            self.log_s = llr + np.logaddexp(self.log_s + log_tail_prev, log_pi) - log_tail
            self._clamp(self.log_s)
        if self.track in ("both", "sr"):
            self.log_r = llr + np.logaddexp(0.0, self.log_r)
            self._clamp(self.log_r)
        self.n = n
        return self

    # -- values ----------------------------------------------------------------

    def log_shiryaev(self) -> np.ndarray:
        if self.track == "sr":
            raise ValueError("state does not track the Shiryaev statistic")
        if self.window_m1 is None:
            return logsumexp(self.log_s + self.basis.log_joint[None], axis=(1, 2))
        if self.n == 0:
            return np.full(self.n_reps, _safe_log(self.prior.head_odds()))
        return self._log_s_value

    def log_sr(self) -> np.ndarray:
        if self.track == "shiryaev":
            raise ValueError("state does not track the Shiryaev-Roberts statistic")
        if self.window_m1 is None:
            return logsumexp(self.log_r + self.basis.log_joint[None], axis=(1, 2))
        if self.n == 0:
            return np.full(self.n_reps, _safe_log(self.omega))
        return self._log_r_value

    def shiryaev_value(self) -> np.ndarray:
        return np.exp(np.minimum(self.log_shiryaev(), LOG_CLAMP))

    def sr_value(self) -> np.ndarray:
        return np.exp(np.minimum(self.log_sr(), LOG_CLAMP))

    def posterior_no_change(self) -> np.ndarray:
        """P(nu >= n | data so far) = 1 / (S(n) + 1)."""
        return np.exp(-np.logaddexp(0.0, self.log_shiryaev()))


def shiryaev_update(state: DetectorState, increments, prior: PriorSpec) -> DetectorState:
    """Advance a Shiryaev-only state by one observation vector."""
    state._advance(increments, prior, update_s=True, update_r=False)
    return state


def sr_update(state: DetectorState, increments) -> DetectorState:
    """Advance a Shiryaev-Roberts-only state by one observation vector."""
    state._advance(increments, None, update_s=False, update_r=True)
    return state


def _safe_log(x: float) -> float:
    return math.log(x) if x > 0.0 else -math.inf


def _window_log_mixture_lrs(
    increments: np.ndarray,
    grid: GridSpec,
    weights: SubsetWeights,
    n: int,
    m1: int | None,
    window_offset: int,
):
    """log Lambda_{p,W}(n - j, n) for j = 1..m from an increment history.

    ``increments`` is ``[..., T, P, N]`` holding the increments of times
    ``window_offset + 1 .. window_offset + T``; the history must cover times
    ``max(1, n - m1) .. n``.  Returns ``(log_lambda, m)`` with ``log_lambda``
    of shape ``[..., m]`` indexed by ``j - 1``.
    """
    inc = np.asarray(increments, dtype=float)
    if inc.ndim < 3:
        raise ValueError("increment history must be [..., T, P, N]")
    t_have = inc.shape[-3]
    if n is None:
        n = window_offset + t_have
    if n < 1:
        raise ValueError("the statistics are defined from n = 1 on")
    if window_offset + t_have < n:
        raise ValueError(f"history ends at time {window_offset + t_have}, need {n}")
    m = n if m1 is None else min(n, m1 + 1)
    first_needed = n - m + 1
    if first_needed <= window_offset:
        raise ValueError(
            f"window of length {m} needs increments from time {first_needed}, "
            f"history starts at {window_offset + 1}"
        )
    lo = first_needed - window_offset - 1
    hi = n - window_offset
    window = inc[..., lo:hi, :, :]
    # suffix sums: entry j-1 along the window axis is the log LR over (n-j, n]
    suffix = np.cumsum(window[..., ::-1, :, :], axis=-3)
    loge = log_elementary_symmetric(weights.log_p + suffix, weights.K)
    log_lam_theta = logsumexp(loge[..., 1:], axis=-1) + weights.log_normalizer
    log_lam = logsumexp(log_lam_theta + grid.log_weights, axis=-1)
    return log_lam, m


def shiryaev_direct(
    increments,
    prior: PriorSpec,
    grid: GridSpec,
    weights: SubsetWeights,
    *,
    n: int | None = None,
    m1: int | None = None,
    m0: int = 0,
    window_offset: int = 0,
):
    """Window-limited Shiryaev statistic by direct summation over change points.

    Sums ``pi_k * Lambda_{p,W}(k, n)`` for ``k = n - min(n, m1+1) .. n-1-m0``
    and normalizes by the prior tail.  When the window reaches back to the
    origin the head mass ``q`` contributes ``q * Lambda(0, n)`` as the
    "changed before the start" summand, so a window with ``m1 >= n`` follows
    the exact same arithmetic path as the unwindowed statistic (``m1=None``).
    """
    log_lam, m = _window_log_mixture_lrs(increments, grid, weights, n, m1, window_offset)
    n_eff = n if n is not None else window_offset + np.asarray(increments).shape[-3]
    log_tail = prior.log_tail(n_eff)
    if log_tail == -math.inf:
        raise ValueError(f"prior tail vanishes at n={n_eff}; statistic undefined")
    if m0 >= m:
        raise ValueError(f"m0={m0} leaves no candidate change points in a window of {m}")
    log_pi = np.array([prior.log_mass(n_eff - j) for j in range(m0 + 1, m + 1)])
    terms = log_pi + log_lam[..., m0:m]
    value = logsumexp(terms, axis=-1)
    if m == n_eff and prior.q > 0.0:
        value = np.logaddexp(value, math.log(prior.q) + log_lam[..., m - 1])
    value = value - log_tail
    return float(value) if np.ndim(value) == 0 else value


def sr_direct(
    increments,
    grid: GridSpec,
    weights: SubsetWeights,
    *,
    omega: float = 0.0,
    n: int | None = None,
    m1: int | None = None,
    m0: int = 0,
    window_offset: int = 0,
):
    """Window-limited Shiryaev-Roberts statistic by direct summation.

    The head start contributes ``omega * Lambda(0, n)`` when the window covers
    the origin, mirroring the head-mass convention of ``shiryaev_direct``.
    """
    log_lam, m = _window_log_mixture_lrs(increments, grid, weights, n, m1, window_offset)
    n_eff = n if n is not None else window_offset + np.asarray(increments).shape[-3]
    if m0 >= m:
        raise ValueError(f"m0={m0} leaves no candidate change points in a window of {m}")
    value = logsumexp(log_lam[..., m0:m], axis=-1)
    if m == n_eff and omega > 0.0:
        value = np.logaddexp(value, math.log(omega) + log_lam[..., m - 1])
    return float(value) if np.ndim(value) == 0 else value


def posterior_no_change(log_shiryaev) -> np.ndarray:
    """P(nu >= n | data) from the log Shiryaev statistic: 1 / (S + 1)."""
    return np.exp(-np.logaddexp(0.0, np.asarray(log_shiryaev, dtype=float)))
