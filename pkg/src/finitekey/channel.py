"""A-priori expected observables for experiment design.

These predictions turn hardware parameters into the numbers a bound would
see if the channel behaved as modelled.  They are design-time inputs only;
a measured-data rate must always be computed from measured values.

Conventions: ``p_d`` is the dark-count probability of one detector per gate,
and Bob has two detectors, so an empty pulse clicks with probability
``2 p_d``.  Double clicks are neglected in the weak-coherent-pulse model.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple

from .errors import DomainError

if TYPE_CHECKING:
    from .decoy import DecoyIntensities

Y_WARN = 0.15
Y_MAX = 0.3


@dataclass(frozen=True, slots=True)
class ChannelParams:
    """Transmittivity, detector efficiency, dark counts and optical error.

    Give either ``Q`` or ``V``; the other follows from ``Q = (1 - V) / 2``.
    """

    t: float
    eta: float = 0.1
    p_d: float = 1e-5
    Q: float | None = None
    V: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.t <= 1.0:
            raise DomainError(f"transmittivity t must lie in (0, 1], got {self.t!r}")
        if not 0.0 < self.eta <= 1.0:
            raise DomainError(f"efficiency eta must lie in (0, 1], got {self.eta!r}")
        if not 0.0 <= self.p_d < 0.5:
            raise DomainError(f"dark-count probability must lie in [0, 0.5), got {self.p_d!r}")
        if self.Q is None and self.V is None:
            raise DomainError("one of Q or V is required")
        if self.Q is None:
            if not 0.0 < self.V <= 1.0:
                raise DomainError(f"visibility must lie in (0, 1], got {self.V!r}")
            object.__setattr__(self, "Q", (1.0 - self.V) / 2.0)
        elif self.V is None:
            object.__setattr__(self, "V", 1.0 - 2.0 * self.Q)
        elif abs(self.Q - (1.0 - self.V) / 2.0) > 1e-12:
            raise DomainError(f"Q={self.Q!r} and V={self.V!r} are inconsistent")
        if not 0.0 <= self.Q < 0.5:
            raise DomainError(f"optical error Q must lie in [0, 0.5), got {self.Q!r}")

    @property
    def t_eta(self) -> float:
        return self.t * self.eta


@dataclass(frozen=True, slots=True)
class EbSourceParams:
    """Continuous-wave pair source; ``y`` is the pair number per
    coincidence window (only the product matters)."""

    y: float
    channel: ChannelParams

    def __post_init__(self) -> None:
        if not 0.0 < self.y <= Y_MAX:
            raise DomainError(f"pair parameter y must lie in (0, {Y_MAX}], got {self.y!r}")
        if self.y > Y_WARN:
            warnings.warn(
                f"y={self.y} > {Y_WARN}: truncating the pair distribution at two pairs is crude",
                stacklevel=2,
            )


def expected_rate_wcp(mu: float, ch: ChannelParams) -> float:
    if mu < 0.0:
        raise DomainError(f"mean photon number must be non-negative, got {mu!r}")
    # 1 - (1 - 2p_d) e^{-x} written to stay accurate when both terms are tiny
    x = mu * ch.t_eta
    return -math.expm1(-x) + 2.0 * ch.p_d * math.exp(-x)


def expected_error_wcp(mu: float, ch: ChannelParams) -> float:
    R = expected_rate_wcp(mu, ch)
    if R <= 0.0:
        raise DomainError("expected detection rate is zero; error rate undefined")
    x = mu * ch.t_eta
    # pure dark counts give (p_d) / (2 p_d) = 1/2
    return (-math.expm1(-x) * ch.Q + math.exp(-x) * ch.p_d) / R


class DecoyExpectation(NamedTuple):
    R: float
    e_X: float


def expected_decoy_observables(ints: "DecoyIntensities", ch: ChannelParams) -> dict[str, DecoyExpectation]:
    """Expected ``(R, e_X)`` at each of the three intensities."""
    mus = {"empty": 0.0, "I": ints.mu_I, "II": ints.mu_II}
    out = {}
    for label, mu in mus.items():
        R = expected_rate_wcp(mu, ch)
        # a dark-count-free vacuum never clicks; its error rate only ever
        # enters multiplied by a zero yield, so use the random-bit value
        out[label] = DecoyExpectation(R, expected_error_wcp(mu, ch) if R > 0.0 else 0.5)
    return out


class EbRates(NamedTuple):
    R_1c: float
    R_2c: float
    Q: float
    R: float
    R_prime: float
    delta_2c: float
    e_prime: float
    e: float


def eb_rates(src: EbSourceParams) -> EbRates:
    """Expected single/double-click rates and QBER per heralded detection
    on Alice's side, with p_A(1) = 1, p_A(2) = y and no larger pair numbers."""
    ch = src.channel
    y = src.y
    te = ch.t_eta
    p1, p2 = 1.0, y
    p_d = ch.p_d
    R_p = y * te * (p1 + p2 * (2.0 - te))
    R_d = y * 2.0 * p_d * (p1 * (1.0 - te) + p2 * (1.0 - te) ** 2)
    R_1c = R_p + R_d
    Q = ((1.0 - ch.V + y) * R_p + R_d) / (2.0 * R_1c)
    R_2c = y * (p2 * 0.5 * te * te + (p1 + p2 * (1.0 - te)) * (te * p_d + (1.0 - te) * p_d * p_d))
    R = R_1c + R_2c
    delta = R_2c / R
    e = (1.0 - delta) * Q + delta / 2.0
    return EbRates(R_1c, R_2c, Q, R, R_1c, delta, Q, e)
