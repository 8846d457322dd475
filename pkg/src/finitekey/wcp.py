"""Weak-coherent-pulse BB84 without decoy states.

Eve is granted every multi-photon pulse; the detected single-photon fraction
and its phase error are bounded from the measured detection rate ``R`` and
X-basis error rate.  ``R`` itself is a count ratio and carries no
fluctuation term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .core import (
    ErrorCorrectionModel,
    RateResult,
    SecurityBudget,
    SiftedCounts,
    assemble,
    binary_entropy,
    fluctuation_bound,
    require_n_pe,
)
from .errors import DomainError, NoSinglePhotonKey

VARIANT = "no-decoy"
N_PE = 2


@dataclass(frozen=True, slots=True)
class WcpObservables:
    counts: SiftedCounts
    R: float
    e_X: float
    e_Z: float
    mu: float

    def __post_init__(self) -> None:
        if not 0.0 < self.R <= 1.0:
            raise DomainError(f"detection rate R must lie in (0, 1], got {self.R!r}")
        for name in ("e_X", "e_Z"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {value!r}")
        if not self.mu > 0.0:
            raise DomainError(f"mean photon number must be positive, got {self.mu!r}")


def multi_photon_fraction(mu: float) -> float:
    """Probability that a Poissonian pulse holds two or more photons."""
    if mu < 0.0:
        raise DomainError(f"mean photon number must be non-negative, got {mu!r}")
    # -expm1 keeps precision for small mu where 1 - e^-mu(1+mu) ~ mu^2/2
    return -math.expm1(-mu) - mu * math.exp(-mu)


def y1_lower(obs: WcpObservables, eps_PE: float) -> float:
    """Lower bound on the fraction of detections caused by single photons."""
    xi = fluctuation_bound(obs.counts.N, 2, eps_PE)
    return max(0.0, 1.0 - (multi_photon_fraction(obs.mu) + xi) / obs.R)


def ex1_upper(obs: WcpObservables, y1_L: float, eps_PE: float) -> float:
    """Upper bound on the single-photon X-basis error, capped at 1/2."""
    if y1_L <= 0.0:
        raise NoSinglePhotonKey("single-photon yield bound is zero")
    xi = fluctuation_bound(obs.counts.m, 2, eps_PE)
    return min(0.5, (obs.e_X + xi) / y1_L)


def key_rate_no_decoy(
    obs: WcpObservables, budget: SecurityBudget, ec: ErrorCorrectionModel
) -> RateResult:
    require_n_pe(budget, N_PE, "the no-decoy bound")
    counts = obs.counts
    flags: tuple[str, ...] = ()
    y1 = y1_lower(obs, budget.eps_PE)
    try:
        ex1 = ex1_upper(obs, y1, budget.eps_PE)
    except NoSinglePhotonKey:
        ex1 = 0.5
        flags += ("no-single-photon",)
    else:
        if (obs.e_X + fluctuation_bound(counts.m, 2, budget.eps_PE)) / y1 >= 0.5:
            flags += ("ex1-capped",)
    s_xi = y1 * (1.0 - binary_entropy(ex1))
    return assemble(
        VARIANT,
        R=obs.R,
        weight=1.0,
        s_xi=s_xi,
        counts_n=counts.n,
        p_Z=counts.p_Z,
        budget=budget,
        e_key=min(obs.e_Z, 0.5),
        ec=ec,
        details={"y1_L": y1, "ex1_U": ex1},
        flags=flags,
    )


def asymptotic_rate_no_decoy(R: float, e_X: float, e_Z: float, mu: float, f_EC: float) -> float:
    """Infinite-key rate: no fluctuations, no Delta, p_Z = 1, clamped at 0."""
    y1 = 1.0 - multi_photon_fraction(mu) / R
    if y1 <= 0.0:
        return 0.0
    ex1 = min(0.5, e_X / y1)
    return max(0.0, R * (y1 * (1.0 - binary_entropy(ex1)) - f_EC * binary_entropy(min(e_Z, 0.5))))
