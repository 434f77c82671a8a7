"""Block-fading channel, rate and interference-safe power control.

Every slot each secondary user sees a direct gain ``gamma`` towards the base
station and an interference gain ``g`` towards the primary receiver. Both are
exponential (Rayleigh power) with per-user means; the direct gain is clamped
below at ``direct_gain_floor`` so that the reciprocal service-time moments
stay finite.

Under imperfect CSI the user only knows estimates. The true gain relates to
the estimate as ``true = estimate * (1 + e)`` with ``e ~ U[-eps, +eps]``;
dividing the interference-limited power by ``csi_backoff >= 1 + eps`` then
keeps the realised interference at or below the cap on every draw.

All functions take an explicit ``numpy.random.Generator`` and hold no state.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
import numpy.typing as npt

from .exceptions import ParameterError

__all__ = [
    "DEFAULT_BANDWIDTH_SLOTS",
    "DEFAULT_DIRECT_GAIN_FLOOR",
    "INTERFERENCE_REL_SLACK",
    "ChannelBatch",
    "ChannelDraw",
    "ChannelSampler",
    "FadingKind",
    "FadingProfile",
    "InterferenceAudit",
    "RadioParams",
    "allocate_power",
    "estimate_service_rate",
    "interference_audit",
    "interference_within_cap",
    "model_csi_error",
    "model_csi_errors",
    "sample_channel",
    "sample_channels",
    "service_time_moments",
    "transmission_rate",
]

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]

DEFAULT_DIRECT_GAIN_FLOOR = 1e-3
DEFAULT_BANDWIDTH_SLOTS = 10.0
MIN_SERVICE_RATE_SAMPLES = 10_000
SERVICE_RATE_CHUNK = 1 << 18

# P = I / g multiplied back by g can land one ulp above I.
INTERFERENCE_REL_SLACK = 1e-9


class FadingKind(str, Enum):
    EXPONENTIAL = "exponential"
    # Degenerate "fading": every draw equals the mean. Used for oracles.
    CONSTANT = "constant"


@dataclass(frozen=True)
class FadingProfile:
    """Per-user fading statistics.

    :param mean_direct_gain: mean of the direct gain to the base station.
    :param mean_interference_gain: mean of the gain towards the primary receiver.
    :param direct_gain_floor: lower clamp applied to every direct-gain draw.
        Zero is accepted here for sampling studies, but the service-rate
        estimator and the scenario validation both refuse it.
    :param kind: exponential fading, or constant gains equal to the means.
    """

    mean_direct_gain: float
    mean_interference_gain: float
    direct_gain_floor: float = DEFAULT_DIRECT_GAIN_FLOOR
    kind: FadingKind = FadingKind.EXPONENTIAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", FadingKind(self.kind))
        if not self.mean_direct_gain > 0:
            raise ParameterError("mean_direct_gain must be positive")
        if not self.mean_interference_gain > 0:
            raise ParameterError("mean_interference_gain must be positive")
        if not self.direct_gain_floor >= 0:
            raise ParameterError("direct_gain_floor must be non-negative")
        if not self.direct_gain_floor < self.mean_direct_gain:
            raise ParameterError("direct_gain_floor must be below mean_direct_gain")


@dataclass(frozen=True)
class RadioParams:
    """Link-level constants shared by all users.

    :param bandwidth_slots: ``B_w * T_s``, packets per slot at unit spectral
        efficiency.
    :param max_power: transmit power cap ``P_max``.
    :param interference_cap: instantaneous interference cap at the primary
        receiver.
    :param csi_backoff: divisor applied to ``I / g_hat`` under imperfect CSI.
    :param csi_error_bound: relative estimation error bound ``eps`` in [0, 1).
    """

    bandwidth_slots: float = DEFAULT_BANDWIDTH_SLOTS
    max_power: float = 10.0
    interference_cap: float = 5.0
    csi_backoff: float = 1.0
    csi_error_bound: float = 0.0

    def __post_init__(self) -> None:
        if not self.bandwidth_slots > 0:
            raise ParameterError("bandwidth_slots must be positive")
        if not self.max_power > 0:
            raise ParameterError("max_power must be positive")
        if not self.interference_cap > 0:
            raise ParameterError("interference_cap must be positive")
        if not self.csi_backoff >= 1:
            raise ParameterError("csi_backoff must be at least 1")
        if not 0 <= self.csi_error_bound < 1:
            raise ParameterError("csi_error_bound must lie in [0, 1)")
        if self.csi_error_bound > 0 and self.csi_backoff < 1 + self.csi_error_bound:
            raise ParameterError(
                "csi_backoff must be at least 1 + csi_error_bound to protect the primary user"
            )

    @property
    def perfect_csi(self) -> bool:
        return self.csi_error_bound == 0


@dataclass(frozen=True)
class ChannelDraw:
    """One slot's gains for one user, true and estimated."""

    direct_gain: float
    interference_gain: float
    estimated_interference_gain: float
    estimated_direct_gain: float

    def __post_init__(self) -> None:
        if not (
            self.direct_gain > 0
            and self.interference_gain > 0
            and self.estimated_interference_gain > 0
            and self.estimated_direct_gain > 0
        ):
            raise ParameterError("channel gains must be positive")


class ChannelBatch(NamedTuple):
    direct_gain: FloatArray
    interference_gain: FloatArray
    estimated_interference_gain: FloatArray
    estimated_direct_gain: FloatArray


class InterferenceAudit(NamedTuple):
    samples: int
    violations: int
    max_interference: float
    max_ratio: float


def _draw_gains(
    profile: FadingProfile, rng: np.random.Generator, size: int
) -> Tuple[FloatArray, FloatArray]:
    if profile.kind is FadingKind.CONSTANT:
        return (
            np.full(size, max(profile.mean_direct_gain, profile.direct_gain_floor)),
            np.full(size, profile.mean_interference_gain),
        )
    direct = rng.exponential(profile.mean_direct_gain, size)
    np.maximum(direct, profile.direct_gain_floor, out=direct)
    interference = rng.exponential(profile.mean_interference_gain, size)
    # Exponential draws of exactly 0.0 are possible in principle.
    np.maximum(interference, np.finfo(np.float64).tiny, out=interference)
    return direct, interference


def model_csi_errors(
    true_gains: FloatArray, params: RadioParams, rng: Optional[np.random.Generator]
) -> FloatArray:
    """Estimates ``g / (1 + e)``, one independent ``e ~ U[-eps, eps]`` per gain.

    Under perfect CSI the gains come back unchanged and no draws are consumed.
    """
    if params.perfect_csi:
        return true_gains
    if rng is None:
        raise ParameterError("imperfect CSI needs a dedicated csi random stream")
    eps = params.csi_error_bound
    return true_gains / (1.0 + rng.uniform(-eps, eps, true_gains.shape))


def sample_channels(
    profile: FadingProfile,
    rng: np.random.Generator,
    size: int,
    params: Optional[RadioParams] = None,
    csi_rng: Optional[np.random.Generator] = None,
) -> ChannelBatch:
    """Draw ``size`` independent slots of gains for one user.

    The interference estimate and the direct-gain estimate get independent
    error factors from ``csi_rng``.
    """
    direct, interference = _draw_gains(profile, rng, size)
    if params is None:
        return ChannelBatch(direct, interference, interference, direct)
    estimated_interference = model_csi_errors(interference, params, csi_rng)
    estimated_direct = model_csi_errors(direct, params, csi_rng)
    return ChannelBatch(direct, interference, estimated_interference, estimated_direct)


def sample_channel(
    profile: FadingProfile,
    rng: np.random.Generator,
    params: Optional[RadioParams] = None,
    csi_rng: Optional[np.random.Generator] = None,
) -> ChannelDraw:
    """Draw one slot of gains for one user."""
    batch = sample_channels(profile, rng, 1, params=params, csi_rng=csi_rng)
    return ChannelDraw(
        direct_gain=float(batch.direct_gain[0]),
        interference_gain=float(batch.interference_gain[0]),
        estimated_interference_gain=float(batch.estimated_interference_gain[0]),
        estimated_direct_gain=float(batch.estimated_direct_gain[0]),
    )


def transmission_rate(power: float, direct_gain: float, params: RadioParams) -> float:
    """Packets servable in one slot: ``B_w T_s ln(1 + P gamma)``."""
    if power < 0:
        raise ParameterError("power must be non-negative")
    return params.bandwidth_slots * math.log1p(power * direct_gain)


def allocate_power(estimated_interference_gain: float, params: RadioParams) -> float:
    """Largest power that keeps the primary receiver under the cap, up to P_max."""
    if not estimated_interference_gain > 0:
        raise ParameterError("estimated_interference_gain must be positive")
    return min(
        params.interference_cap / (estimated_interference_gain * params.csi_backoff),
        params.max_power,
    )


def _allocate_powers(estimated_interference_gain: FloatArray, params: RadioParams) -> FloatArray:
    limit = params.interference_cap / (estimated_interference_gain * params.csi_backoff)
    return np.minimum(limit, params.max_power)


def model_csi_error(true_gain: float, params: RadioParams, rng: np.random.Generator) -> float:
    """Return the estimate a user holds for ``true_gain``: ``g / (1 + e)``."""
    if not true_gain > 0:
        raise ParameterError("true_gain must be positive")
    return float(model_csi_errors(np.array([true_gain]), params, rng)[0])


def interference_within_cap(interference: float, params: RadioParams) -> bool:
    return interference <= params.interference_cap * (1.0 + INTERFERENCE_REL_SLACK)


def _reciprocal_rates(
    profile: FadingProfile,
    params: RadioParams,
    n_samples: int,
    rng: np.random.Generator,
    csi_rng: Optional[np.random.Generator] = None,
) -> List[FloatArray]:
    if n_samples < MIN_SERVICE_RATE_SAMPLES:
        raise ParameterError(f"n_samples must be at least {MIN_SERVICE_RATE_SAMPLES}")
    if profile.kind is FadingKind.EXPONENTIAL and profile.direct_gain_floor <= 0:
        raise ParameterError(
            "direct_gain_floor must be positive: E[1/R] diverges under untruncated exponential fading"
        )
    chunks = []
    remaining = n_samples
    while remaining > 0:
        size = min(remaining, SERVICE_RATE_CHUNK)
        batch = sample_channels(profile, rng, size, params=params, csi_rng=csi_rng)
        power = _allocate_powers(batch.estimated_interference_gain, params)
        rate = params.bandwidth_slots * np.log1p(power * batch.estimated_direct_gain)
        chunks.append(1.0 / rate)
        remaining -= size
    return chunks


def estimate_service_rate(
    profile: FadingProfile,
    params: RadioParams,
    n_samples: int,
    rng: np.random.Generator,
    csi_rng: Optional[np.random.Generator] = None,
) -> float:
    """Monte Carlo estimate of ``mu = 1 / E[1/R]`` under the power policy.

    Power and rate are computed exactly as the slot loop computes them: from
    the estimated gains, with the power set by :func:`allocate_power`
    (including the CSI back-off). Under imperfect CSI ``csi_rng`` supplies the
    estimation errors.
    """
    chunks = _reciprocal_rates(profile, params, n_samples, rng, csi_rng)
    total = sum(float(chunk.sum()) for chunk in chunks)
    return n_samples / total


def service_time_moments(
    profile: FadingProfile,
    params: RadioParams,
    n_samples: int,
    rng: np.random.Generator,
    orders: Tuple[int, ...] = (1, 2, 3, 4),
    csi_rng: Optional[np.random.Generator] = None,
) -> Tuple[float, ...]:
    """Empirical ``E[(1/R)^n]`` for each ``n`` in ``orders``."""
    sums = [0.0] * len(orders)
    for chunk in _reciprocal_rates(profile, params, n_samples, rng, csi_rng):
        for idx, order in enumerate(orders):
            sums[idx] += float(np.sum(chunk**order))
    return tuple(s / n_samples for s in sums)


def interference_audit(
    profile: FadingProfile,
    params: RadioParams,
    n_samples: int,
    rng: np.random.Generator,
    csi_rng: Optional[np.random.Generator] = None,
) -> InterferenceAudit:
    """Check ``P * g <= I`` on ``n_samples`` independent draws."""
    violations = 0
    worst = 0.0
    remaining = n_samples
    while remaining > 0:
        size = min(remaining, SERVICE_RATE_CHUNK)
        batch = sample_channels(profile, rng, size, params=params, csi_rng=csi_rng)
        received = _allocate_powers(batch.estimated_interference_gain, params) * batch.interference_gain
        limit = params.interference_cap * (1.0 + INTERFERENCE_REL_SLACK)
        violations += int(np.count_nonzero(received > limit))
        worst = max(worst, float(received.max()))
        remaining -= size
    if violations:
        logger.error("Interference audit: %d of %d draws above the cap", violations, n_samples)
    return InterferenceAudit(
        samples=n_samples,
        violations=violations,
        max_interference=worst,
        max_ratio=worst / params.interference_cap,
    )


class ChannelSampler:
    """Buffered per-user channel source for the slot loop.

    Draws are generated ``chunk`` slots at a time from the user's own streams
    and handed out one slot at a time as plain floats.
    """

    def __init__(
        self,
        profile: FadingProfile,
        params: RadioParams,
        rng: np.random.Generator,
        csi_rng: Optional[np.random.Generator] = None,
        chunk: int = 4096,
    ):
        self.profile = profile
        self.params = params
        self.rng = rng
        self.csi_rng = csi_rng
        self.chunk = chunk
        self._rows: List[Tuple[float, float, float, float]] = []
        self._pos = 0

    def _refill(self) -> None:
        batch = sample_channels(
            self.profile, self.rng, self.chunk, params=self.params, csi_rng=self.csi_rng
        )
        self._rows = list(
            zip(
                batch.direct_gain.tolist(),
                batch.interference_gain.tolist(),
                batch.estimated_interference_gain.tolist(),
                batch.estimated_direct_gain.tolist(),
            )
        )
        self._pos = 0

    def next_gains(self) -> Tuple[float, float, float, float]:
        """Return ``(gamma, g, g_hat, gamma_hat)`` for the next slot."""
        if self._pos >= len(self._rows):
            self._refill()
        row = self._rows[self._pos]
        self._pos += 1
        return row

    def next_draw(self) -> ChannelDraw:
        return ChannelDraw(*self.next_gains())
