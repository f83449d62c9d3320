"""Built-in observation models: AR-noise signal channels and mixture channels.

Both models yield per-observation log likelihood-ratio increments that do not
depend on the hypothesized change point, so the exact detector recursions
apply.  Cross-stream independence is assumed throughout; dependent models can
still drive the statistics layer through user-supplied joint increments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .model import NO_CHANGE, ChangeSpec


def _softplus(z):
    # log(1 + e^z), stable for any z
    return np.logaddexp(0.0, z)


@dataclass(frozen=True)
class ARChannelSpec:
    """Deterministic signal of unknown amplitude in stable Gaussian AR(p) noise.

    Observations are ``x_n = theta * s_n * [n > nu] + xi_n`` where ``xi`` obeys
    ``xi_n = sum_j coeffs[j] * xi_{n-j} + w_n`` with i.i.d. N(0, sigma^2) noise
    and zero initial conditions.  ``signal`` is a periodic template; ``theta``
    is the channel's nominal amplitude, used when a change does not override it.
    """

    coeffs: tuple[float, ...] = ()
    sigma: float = 1.0
    signal: tuple[float, ...] = (1.0,)
    theta: float = 1.0

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        signal = tuple(float(s) for s in self.signal)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "signal", signal)
        if self.sigma <= 0.0:
            raise ValueError(f"noise level must be positive, got {self.sigma}")
        if not signal:
            raise ValueError("signal template must be nonempty")
        if self.theta < 0.0:
            raise ValueError(f"amplitude must be >= 0, got {self.theta}")
        if coeffs:
            radius = max(abs(np.roots(np.concatenate(([1.0], -np.asarray(coeffs))))))
            if radius >= 1.0:
                raise ValueError(
                    f"AR coefficients are unstable (companion spectral radius {radius:.6g})"
                )

    @property
    def order(self) -> int:
        return len(self.coeffs)

    def signal_sequence(self, horizon: int) -> np.ndarray:
        """The template tiled out to ``horizon`` samples (time 1..horizon)."""
        reps = -(-horizon // len(self.signal))
        return np.tile(np.asarray(self.signal), reps)[:horizon]

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Whitened series ``x_n - sum_j coeffs[j] * x_{n-j}`` along the last axis.

        Lags before the first sample are treated as zero, which matches the
        zero initial conditions of the noise recursion.
        """
        x = np.asarray(x, dtype=float)
        out = x.copy()
        for j, b in enumerate(self.coeffs, start=1):
            out[..., j:] -= b * x[..., :-j]
        return out

    def residual_signal(self, horizon: int) -> np.ndarray:
        return self.residuals(self.signal_sequence(horizon))

    def q_constant(self) -> float:
        return q_constant(self.signal, self.coeffs)

    def kl_rate(self, theta: float) -> float:
        return float(theta) ** 2 * self.q_constant() / (2.0 * self.sigma**2)

    # -- simulation and likelihood ------------------------------------------

    def generate(self, horizon: int, post_from: int, theta: float, rng) -> np.ndarray:
        """One stream of length ``horizon``; rows >= post_from carry the signal."""
        w = rng.normal(0.0, self.sigma, size=horizon)
        if self.coeffs:
            # xi_t = sum_j coeffs[j] xi_{t-j} + w_t with zero initial state
            x = lfilter([1.0], np.concatenate(([1.0], -np.asarray(self.coeffs))), w)
        else:
            x = w
        if post_from < horizon:
            x = x.copy()
            x[post_from:] += theta * self.signal_sequence(horizon)[post_from:]
        return x

    def log_lr_increments(self, x: np.ndarray, thetas: np.ndarray) -> np.ndarray:
        """Per-observation log LR at each amplitude in ``thetas``.

        ``x`` is ``[..., T]``; the result is ``[..., T, len(thetas)]``.
        """
        thetas = np.asarray(thetas, dtype=float)
        xt = self.residuals(x)
        st = self.residual_signal(x.shape[-1])
        s2 = self.sigma**2
        cross = (st * xt)[..., :, None] / s2
        drift = (st**2)[:, None] / (2.0 * s2)
        return thetas * cross - thetas**2 * drift

    def increment_source(self) -> "ARLLRSource":
        return ARLLRSource(self)

    def log_predictive_pre(self, x: np.ndarray) -> np.ndarray:
        """log density of each observation given its past, pre-change law."""
        xt = self.residuals(x)
        return -0.5 * (xt / self.sigma) ** 2 - math.log(self.sigma) - 0.5 * math.log(2.0 * math.pi)

    def log_predictive_post(self, x: np.ndarray, theta: float) -> np.ndarray:
        """log density under the change-at-origin post-change law."""
        xt = self.residuals(x)
        st = self.residual_signal(x.shape[-1])
        z = (xt - theta * st) / self.sigma
        return -0.5 * z**2 - math.log(self.sigma) - 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MixtureChannelSpec:
    """Pre-change two-component Gaussian mixture, post-change Gaussian mean shift.

    Pre-change, the whole stream is i.i.d. N(mu1, sigma^2) with probability
    ``beta_mix`` and i.i.d. N(mu2, sigma^2) otherwise (one latent draw per
    stream, so consecutive observations are dependent).  Post-change the
    stream is i.i.d. N(theta, sigma^2).  The post-change mean must be closer
    to mu2 than to mu1, otherwise the pre-change mixture never resolves and
    the likelihood-ratio slope degenerates.
    """

    beta_mix: float
    mu1: float
    mu2: float = 0.0
    sigma: float = 1.0
    theta: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.beta_mix < 1.0:
            raise ValueError(f"mixing probability must be in (0, 1), got {self.beta_mix}")
        if self.sigma <= 0.0:
            raise ValueError(f"noise level must be positive, got {self.sigma}")
        if abs(self.theta - self.mu1) <= abs(self.theta - self.mu2):
            raise ValueError(
                "post-change mean must be strictly closer to mu2 than to mu1 "
                f"(theta={self.theta}, mu1={self.mu1}, mu2={self.mu2})"
            )

    @property
    def log_odds(self) -> float:
        """log(beta / (1 - beta)), the mixture's prior log odds."""
        return math.log(self.beta_mix) - math.log1p(-self.beta_mix)

    def kl_rate(self, theta: float) -> float:
        return (float(theta) - self.mu2) ** 2 / (2.0 * self.sigma**2)

    # -- simulation and likelihood ------------------------------------------

    def generate(self, horizon: int, post_from: int, theta: float, rng) -> np.ndarray:
        """One stream; the pre-change segment uses a single latent component."""
        component_mean = self.mu1 if rng.random() < self.beta_mix else self.mu2
        z = rng.normal(0.0, 1.0, size=horizon)
        mean = np.full(horizon, component_mean)
        if post_from < horizon:
            mean[post_from:] = theta
        return mean + self.sigma * z

    def _log_component_ratio(self, x: np.ndarray) -> np.ndarray:
        # log p1(x) - log p2(x) per observation
        s2 = self.sigma**2
        return (self.mu1 - self.mu2) * x / s2 - (self.mu1**2 - self.mu2**2) / (2.0 * s2)

    def gap_penalties(self, x: np.ndarray) -> np.ndarray:
        """Theta-independent part of the increments along the last axis.

        Equals ``log(1 + v G_{n-1}) - log(1 + v G_n)`` where ``G_n`` is the
        running density ratio of the two mixture components; the increments
        telescope, so partial sums reproduce the closed-form likelihood ratio.
        """
        log_g = np.cumsum(self._log_component_ratio(x), axis=-1)
        prev = np.concatenate(
            [np.zeros(log_g.shape[:-1] + (1,)), log_g[..., :-1]], axis=-1
        )
        v = self.log_odds
        return _softplus(v + prev) - _softplus(v + log_g)

    def log_lr_increments(self, x: np.ndarray, thetas: np.ndarray) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        s2 = self.sigma**2
        shift = thetas - self.mu2
        base = x[..., :, None] / s2
        l2 = shift * base - (thetas**2 - self.mu2**2) / (2.0 * s2)
        return l2 + self.gap_penalties(x)[..., :, None]

    def increment_source(self) -> "MixtureLLRSource":
        return MixtureLLRSource(self)

    def log_predictive_pre(self, x: np.ndarray) -> np.ndarray:
        """log g(x_n | history): ratio of consecutive mixture joint densities."""
        log_p2 = (
            -0.5 * ((x - self.mu2) / self.sigma) ** 2
            - math.log(self.sigma)
            - 0.5 * math.log(2.0 * math.pi)
        )
        log_g = np.cumsum(self._log_component_ratio(x), axis=-1)
        prev = np.concatenate(
            [np.zeros(log_g.shape[:-1] + (1,)), log_g[..., :-1]], axis=-1
        )
        v = self.log_odds
        # joint_n = sum log p2 + softplus(v + G_n) - softplus(v); take differences
        return log_p2 + _softplus(v + log_g) - _softplus(v + prev)

    def log_predictive_post(self, x: np.ndarray, theta: float) -> np.ndarray:
        z = (x - theta) / self.sigma
        return -0.5 * z**2 - math.log(self.sigma) - 0.5 * math.log(2.0 * math.pi)


def ar_residual(history, coeffs) -> float:
    """Whitened value of the last sample in ``history`` (lags clipped at start)."""
    history = np.asarray(history, dtype=float)
    if history.ndim != 1 or history.size == 0:
        raise ValueError("history must be a nonempty 1-d sequence")
    n = history.size
    value = history[-1]
    for j, b in enumerate(coeffs, start=1):
        if n - 1 - j >= 0:
            value -= b * history[n - 1 - j]
    return float(value)


def ar_llr_increment(theta: float, x_resid: float, s_resid: float, sigma: float) -> float:
    """Per-observation log LR of the AR channel given whitened values."""
    s2 = sigma**2
    return theta * s_resid * x_resid / s2 - theta**2 * s_resid**2 / (2.0 * s2)


def q_constant(signal, coeffs) -> float:
    """Long-run average of the squared whitened signal for a periodic template."""
    signal = tuple(float(s) for s in signal)
    coeffs = tuple(float(c) for c in coeffs)
    if not signal:
        raise ValueError("signal template must be nonempty")
    period = len(signal)
    p = len(coeffs)
    # extend past the warm-up so every residual uses the full lag window
    total = p + 2 * period
    reps = -(-total // period)
    s = np.tile(np.asarray(signal), reps)[:total]
    st = s.copy()
    for j, b in enumerate(coeffs, start=1):
        st[j:] -= b * s[:-j]
    steady = st[p : p + period]
    return float(np.mean(steady**2))


class ARLLRSource:
    """Stepwise log-LR increments for one AR channel (holds its history)."""

    def __init__(self, channel: ARChannelSpec):
        self.channel = channel
        self.reset()

    def reset(self) -> None:
        self._history: list[float] = []
        self._n = 0

    def step(self, theta: float, x: float) -> float:
        if not math.isfinite(x):
            raise ValueError("observation must be finite")
        self._history.append(float(x))
        self._n += 1
        x_res = ar_residual(self._history, self.channel.coeffs)
        s_res = float(self.channel.residual_signal(self._n)[-1])
        return ar_llr_increment(theta, x_res, s_res, self.channel.sigma)


class MixtureLLRSource:
    """Stepwise log-LR increments for one mixture channel.

    Tracks the running component density ratio in the log domain so the
    increments stay well behaved as the ratio collapses to zero.
    """

    def __init__(self, channel: MixtureChannelSpec):
        self.channel = channel
        self.reset()

    def reset(self) -> None:
        self._log_g = 0.0

    def step(self, theta: float, x: float) -> float:
        if not math.isfinite(x):
            raise ValueError("observation must be finite")
        ch = self.channel
        s2 = ch.sigma**2
        prev = self._log_g
        self._log_g = prev + float(ch._log_component_ratio(np.asarray(x)))
        shift = theta - ch.mu2
        l2 = shift * x / s2 - (theta**2 - ch.mu2**2) / (2.0 * s2)
        v = ch.log_odds
        return l2 + float(_softplus(v + prev) - _softplus(v + self._log_g))


def mixture_llr_increment(source: MixtureLLRSource, theta: float, x: float) -> float:
    """Advance a mixture increment source by one observation."""
    return source.step(theta, x)


@dataclass(frozen=True)
class Scenario:
    """An independent-streams observation model: one channel spec per stream."""

    channels: tuple

    #: increments are change-point independent for both built-in channel kinds,
    #: which is what licenses the exact detector recursions
    k_independent_increments: bool = field(default=True, init=False)

    def __post_init__(self):
        channels = tuple(self.channels)
        if not channels:
            raise ValueError("scenario needs at least one channel")
        object.__setattr__(self, "channels", channels)

    @property
    def n_streams(self) -> int:
        return len(self.channels)

    def nominal_theta(self, subset) -> tuple[float, ...]:
        return tuple(self.channels[i].theta for i in sorted(subset))

    def generate(self, change: ChangeSpec, horizon: int, rng) -> np.ndarray:
        """Simulate ``horizon`` rows; affected streams switch at ``nu + 1``."""
        if change.nu == NO_CHANGE:
            post_from = horizon
            theta_by_stream = {}
        else:
            post_from = max(change.nu, 0)
            theta = change.theta if change.theta is not None else self.nominal_theta(change.subset)
            theta_by_stream = dict(zip(change.subset, theta))
        cols = []
        for i, channel in enumerate(self.channels):
            start = post_from if i in theta_by_stream else horizon
            cols.append(
                channel.generate(horizon, start, theta_by_stream.get(i, 0.0), rng)
            )
        return np.stack(cols, axis=-1)

    def log_lr_increments(self, data: np.ndarray, theta_points: np.ndarray) -> np.ndarray:
        """Increments for every grid point: ``[..., T, P, N]``.

        ``data`` is ``[..., T, N]``; ``theta_points`` is ``[P, N]`` with each
        row a per-stream parameter vector.
        """
        theta_points = np.asarray(theta_points, dtype=float)
        per_stream = [
            ch.log_lr_increments(data[..., i], theta_points[:, i])
            for i, ch in enumerate(self.channels)
        ]
        return np.stack(per_stream, axis=-1)

    def kl_per_stream(self, theta_points: np.ndarray) -> np.ndarray:
        """Information rate of each stream at each grid point: ``[P, N]``."""
        theta_points = np.asarray(theta_points, dtype=float)
        cols = [
            [ch.kl_rate(t) for t in theta_points[:, i]]
            for i, ch in enumerate(self.channels)
        ]
        return np.asarray(cols).T


def gaussian_stream(theta: float = 1.0, sigma: float = 1.0) -> ARChannelSpec:
    """I.i.d. Gaussian mean-shift channel (AR of order zero, constant signal)."""
    return ARChannelSpec(coeffs=(), sigma=sigma, signal=(1.0,), theta=theta)
