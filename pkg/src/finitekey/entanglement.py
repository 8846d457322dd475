"""Entanglement-based BB84 coding (BBM92): squashing and double-click bounds.

The squashing bound replaces each double click by a random bit, so its
error rates ``e`` include that noise and only ``e_X`` is estimated.  The
double-click bound discards double clicks, works with the primed error
rates of the reduced raw key and estimates the double-click fraction as a
second parameter.  Both conventions describe the same data:

    e = (1 - delta_2c) e' + delta_2c / 2,   delta_2c = (R - R') / R
"""
from __future__ import annotations

from dataclasses import dataclass

from .core import (
    ErrorCorrectionModel,
    RateResult,
    SecurityBudget,
    SiftedCounts,
    assemble,
    binary_entropy,
    clamp_upper,
    fluctuation_bound,
    require_n_pe,
)
from .errors import BoundInapplicable, DomainError

SQUASH = "eb-squash"
DOUBLE_CLICK = "eb-2click"
WINDOW = 0.08


def double_click_fraction(R: float, R_prime: float) -> float:
    if not R > 0.0:
        raise DomainError(f"detection rate must be positive, got {R!r}")
    if not 0.0 <= R_prime <= R:
        raise DomainError(f"need 0 <= R' <= R, got R={R!r}, R'={R_prime!r}")
    return (R - R_prime) / R


def koashi_factor(delta_2c: float) -> float:
    """(1 - 4 delta) / (1 - delta); the bound needs it strictly positive."""
    if not 0.0 <= delta_2c < 1.0:
        raise DomainError(f"double-click fraction must lie in [0, 1), got {delta_2c!r}")
    F = (1.0 - 4.0 * delta_2c) / (1.0 - delta_2c)
    if F <= 0.0:
        raise BoundInapplicable(f"double-click fraction {delta_2c:.4g} >= 1/4")
    return F


def squashed_error(e_prime: float, delta_2c: float) -> float:
    return (1.0 - delta_2c) * e_prime + delta_2c / 2.0


def primed_error(e: float, delta_2c: float) -> float:
    return (e - delta_2c / 2.0) / (1.0 - delta_2c)


@dataclass(frozen=True, slots=True)
class EbObservables:
    counts: SiftedCounts
    R: float
    R_prime: float
    e_X: float
    e_Z: float
    eprime_X: float
    eprime_Z: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.R_prime <= self.R <= 1.0 or self.R <= 0.0:
            raise DomainError(f"need 0 <= R' <= R <= 1 and R > 0, got R={self.R!r}, R'={self.R_prime!r}")
        for name in ("e_X", "e_Z", "eprime_X", "eprime_Z"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {value!r}")
        delta = self.delta_2c
        for e, ep, name in ((self.e_X, self.eprime_X, "X"), (self.e_Z, self.eprime_Z, "Z")):
            if abs(e - squashed_error(ep, delta)) > 1e-12:
                raise DomainError(f"{name}-basis error rates are inconsistent with delta_2c={delta!r}")

    @property
    def delta_2c(self) -> float:
        return double_click_fraction(self.R, self.R_prime)

    @classmethod
    def from_primed(
        cls, counts: SiftedCounts, R: float, R_prime: float, eprime_X: float, eprime_Z: float
    ) -> "EbObservables":
        delta = double_click_fraction(R, R_prime)
        return cls(
            counts, R, R_prime,
            squashed_error(eprime_X, delta), squashed_error(eprime_Z, delta),
            eprime_X, eprime_Z,
        )


def key_rate_squashing(
    obs: EbObservables, budget: SecurityBudget, ec: ErrorCorrectionModel
) -> RateResult:
    require_n_pe(budget, 1, "the squashing bound")
    counts = obs.counts
    e_U = min(0.5, clamp_upper(obs.e_X, fluctuation_bound(counts.m, 2, budget.eps_PE)))
    return assemble(
        SQUASH,
        R=obs.R,
        weight=1.0,
        s_xi=1.0 - binary_entropy(e_U),
        counts_n=counts.n,
        p_Z=counts.p_Z,
        budget=budget,
        e_key=min(obs.e_Z, 0.5),
        ec=ec,
        details={"eX_U": e_U},
    )


def key_rate_double_click(
    obs: EbObservables,
    budget: SecurityBudget,
    ec: ErrorCorrectionModel,
    eps_PE: float | None = None,
) -> RateResult:
    """Double-click-estimation bound.

    Raises :class:`BoundInapplicable` outside the small-error window
    ``e'_X^U <= 0.08 F(delta^U)``; fall back to :func:`key_rate_squashing`.
    The raw key lives in the double-click-free stream ``N' = N R'/R``.
    """
    require_n_pe(budget, 2, "the double-click bound")
    eps = budget.eps_PE if eps_PE is None else eps_PE
    counts = obs.counts
    delta_U = obs.delta_2c + fluctuation_bound(counts.N, 2, eps)
    if delta_U >= 1.0:
        raise BoundInapplicable("double-click fraction bound reaches 1")
    F = koashi_factor(delta_U)
    ep_U = clamp_upper(obs.eprime_X, fluctuation_bound(counts.m, 2, eps))
    if ep_U > WINDOW * F:
        raise BoundInapplicable(
            f"e'_X upper bound {ep_U:.4g} exceeds validity window 0.08 F = {WINDOW * F:.4g}"
        )
    weight = obs.R_prime / obs.R
    N_prime = counts.N * weight
    p_Z = counts.p_Z
    n = max(1, round(N_prime * p_Z * p_Z))
    return assemble(
        DOUBLE_CLICK,
        R=obs.R,
        weight=weight,
        s_xi=F * (1.0 - binary_entropy(ep_U / F)),
        counts_n=n,
        p_Z=p_Z,
        budget=budget,
        e_key=min(obs.eprime_Z, 0.5),
        ec=ec,
        details={"delta_2c_U": delta_U, "F": F, "eprimeX_U": ep_U},
    )


def asymptotic_rate_squashing(R: float, e_X: float, e_Z: float, f_EC: float) -> float:
    return max(0.0, R * (1.0 - binary_entropy(min(e_X, 0.5)) - f_EC * binary_entropy(min(e_Z, 0.5))))


def asymptotic_rate_double_click(
    R: float, R_prime: float, eprime_X: float, eprime_Z: float, f_EC: float
) -> float:
    F = koashi_factor(double_click_fraction(R, R_prime))
    return max(
        0.0,
        R_prime * (F * (1.0 - binary_entropy(min(eprime_X / F, 0.5))) - f_EC * binary_entropy(min(eprime_Z, 0.5))),
    )
