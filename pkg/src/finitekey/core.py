"""Implementation-independent finite-key machinery.

Every bound in this package has the same skeleton: a secret fraction

    r = p_Z^2 * [S_xi - Delta(n) - leak_EC]

built from a fluctuation-corrected entropy ``S_xi``, the smoothing and
privacy-amplification penalty ``Delta(n)`` and the error-correction leakage.
This module provides those pieces plus the epsilon bookkeeping.

Natural logarithms appear only in :func:`fluctuation_bound`; everything that
counts bits uses base 2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .errors import ContractError, DomainError

BUDGET_ATOL = 1e-15


def _check_probability(name: str, value: float, *, open_interval: bool = True) -> None:
    if open_interval:
        ok = 0.0 < value < 1.0
    else:
        ok = 0.0 <= value <= 1.0
    if not ok or math.isnan(value):
        bounds = "(0, 1)" if open_interval else "[0, 1]"
        raise DomainError(f"{name} must lie in {bounds}, got {value!r}")


@dataclass(frozen=True, slots=True)
class SecurityBudget:
    """Decomposition of the total failure probability.

    ``eps_total = eps_EC + eps_bar + n_PE * eps_PE + eps_PA``.  Use
    :meth:`from_split` or :meth:`uniform` to build one that satisfies the
    identity by construction.
    """

    eps_total: float
    eps_EC: float
    eps_bar: float
    eps_PE: float
    eps_PA: float
    n_PE: int

    def __post_init__(self) -> None:
        for name in ("eps_total", "eps_EC", "eps_bar", "eps_PE", "eps_PA"):
            _check_probability(name, getattr(self, name))
        if int(self.n_PE) != self.n_PE or self.n_PE < 1:
            raise DomainError(f"n_PE must be a positive integer, got {self.n_PE!r}")
        total = self.eps_EC + self.eps_bar + self.n_PE * self.eps_PE + self.eps_PA
        if abs(total - self.eps_total) > BUDGET_ATOL:
            raise ContractError(
                f"epsilon components sum to {total!r}, expected eps_total={self.eps_total!r}"
            )

    @classmethod
    def from_split(
        cls, eps_total: float, eps_EC: float, n_PE: int, eps_bar: float, eps_PE: float
    ) -> "SecurityBudget":
        """Build a budget with ``eps_PA`` taking whatever is left over."""
        eps_PA = eps_total - eps_EC - eps_bar - n_PE * eps_PE
        return cls(eps_total, eps_EC, eps_bar, eps_PE, eps_PA, n_PE)

    @classmethod
    def uniform(cls, eps_total: float, eps_EC: float, n_PE: int) -> "SecurityBudget":
        """Equal share for eps_bar, each eps_PE and eps_PA."""
        if not eps_total > eps_EC:
            raise DomainError("eps_total must exceed eps_EC")
        share = (eps_total - eps_EC) / (n_PE + 2)
        return cls.from_split(eps_total, eps_EC, n_PE, share, share)

    def components(self) -> dict[str, float]:
        return {
            "eps_EC": self.eps_EC,
            "eps_bar": self.eps_bar,
            "eps_PE": self.eps_PE,
            "eps_PA": self.eps_PA,
        }


@dataclass(frozen=True, slots=True)
class ErrorCorrectionModel:
    """Leakage model of a practical error-correcting code."""

    f_EC: float = 1.05
    eps_EC: float = 1e-10

    def __post_init__(self) -> None:
        if not self.f_EC >= 1.0:
            raise DomainError(f"f_EC must be >= 1, got {self.f_EC!r}")
        _check_probability("eps_EC", self.eps_EC)


@dataclass(frozen=True, slots=True)
class SiftedCounts:
    """Sample sizes of the asymmetric protocol for ``N`` detected signals.

    ``n`` and ``m`` are rounded to the nearest integer and never drop below 1.
    """

    N: float
    p_X: float
    n: int = field(init=False)
    m: int = field(init=False)

    def __post_init__(self) -> None:
        if not self.N >= 1:
            raise DomainError(f"N must be >= 1, got {self.N!r}")
        _check_probability("p_X", self.p_X)
        p_Z = 1.0 - self.p_X
        object.__setattr__(self, "n", max(1, round(self.N * p_Z * p_Z)))
        object.__setattr__(self, "m", max(1, round(self.N * self.p_X * self.p_X)))

    @property
    def p_Z(self) -> float:
        return 1.0 - self.p_X


def binary_entropy(p: float) -> float:
    """Shannon entropy of a Bernoulli(p) variable, in bits."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"binary entropy needs p in [0, 1], got {p!r}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def fluctuation_bound(m_prime: float, d: int, eps_PE: float) -> float:
    """Worst-case deviation of a frequency estimated on ``m_prime`` samples
    of a ``d``-outcome measurement, holding with probability ``1 - eps_PE``.
    """
    if not m_prime >= 1:
        raise DomainError(f"fluctuation bound needs at least one sample, got {m_prime!r}")
    if d < 2:
        raise DomainError(f"a POVM needs at least two outcomes, got d={d!r}")
    _check_probability("eps_PE", eps_PE)
    return math.sqrt((math.log(1.0 / eps_PE) + d * math.log(m_prime + 1.0)) / (2.0 * m_prime))


def clamp_upper(value: float, xi: float) -> float:
    return min(value + xi, 1.0)


def clamp_lower(value: float, xi: float) -> float:
    return max(value - xi, 0.0)


def delta_correction(n: float, eps_bar: float, eps_PA: float) -> float:
    """Penalty per raw-key bit from smoothing and privacy amplification."""
    if not n >= 1:
        raise DomainError(f"raw key length must be >= 1, got {n!r}")
    _check_probability("eps_bar", eps_bar)
    _check_probability("eps_PA", eps_PA)
    return 7.0 * math.sqrt(math.log2(2.0 / eps_bar) / n) + (2.0 / n) * math.log2(1.0 / eps_PA)


def leak_ec(e_key: float, ec: ErrorCorrectionModel, n: float) -> float:
    """Bits per raw-key bit disclosed by error correction.

    Uses ``h(e_key)`` for the conditional Shannon entropy (symmetric errors).
    """
    if not 0.0 <= e_key <= 0.5:
        raise DomainError(f"key-basis error rate must lie in [0, 0.5], got {e_key!r}")
    if not n >= 1:
        raise DomainError(f"raw key length must be >= 1, got {n!r}")
    return ec.f_EC * binary_entropy(e_key) + math.log2(2.0 / ec.eps_EC) / n


def secret_fraction(s_xi: float, delta: float, leak: float, p_Z: float) -> float:
    # a negative bracket means no extractable key
    return max(0.0, p_Z * p_Z * (s_xi - delta - leak))


def key_rate(R: float, r: float) -> float:
    return R * r


@dataclass(frozen=True, slots=True)
class RateResult:
    """Outcome of a finite-key bound, with the intermediates for audit.

    ``r`` is counted per detected signal and ``K = R * r`` per sent signal,
    where ``R`` is the total detection rate.  ``K_raw`` is the unclamped
    rate and ``bracket`` the unclamped ``S_xi - Delta - leak`` per raw-key
    bit; both go negative when no key exists.
    """

    variant: str
    K: float
    r: float
    R: float
    K_raw: float
    bracket: float
    s_xi: float
    delta: float
    leak: float
    n: int
    budget: SecurityBudget
    details: Mapping[str, float] = field(default_factory=dict)
    flags: tuple[str, ...] = ()

    @property
    def no_key(self) -> bool:
        return self.K <= 0.0

    def key_length(self, N: float) -> int:
        """Privacy-amplification output length, rounded down."""
        return math.floor(self.r * N)


def assemble(
    variant: str,
    *,
    R: float,
    weight: float,
    s_xi: float,
    counts_n: int,
    p_Z: float,
    budget: SecurityBudget,
    e_key: float,
    ec: ErrorCorrectionModel,
    details: Mapping[str, float] | None = None,
    flags: tuple[str, ...] = (),
) -> RateResult:
    """Combine an entropy bound with the generic finite-key corrections.

    ``weight`` is the fraction of detected signals that feed the raw key
    stream (1 for single-stream protocols).
    """
    delta = delta_correction(counts_n, budget.eps_bar, budget.eps_PA)
    leak = leak_ec(e_key, ec, counts_n)
    bracket = s_xi - delta - leak
    r = weight * secret_fraction(s_xi, delta, leak, p_Z)
    flags = tuple(flags)
    if r <= 0.0 and "no-key" not in flags:
        flags = flags + ("no-key",)
    return RateResult(
        variant=variant,
        K=key_rate(R, r),
        r=r,
        R=R,
        K_raw=R * weight * p_Z * p_Z * bracket,
        bracket=bracket,
        s_xi=s_xi,
        delta=delta,
        leak=leak,
        n=counts_n,
        budget=budget,
        details=dict(details or {}),
        flags=flags,
    )


def require_n_pe(budget: SecurityBudget, expected: int, what: str) -> None:
    if budget.n_PE != expected:
        raise ContractError(f"{what} estimates {expected} parameter(s); budget has n_PE={budget.n_PE}")
