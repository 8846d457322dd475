"""Three-intensity decoy-state bound (vacuum, mu_I, mu_II), key from mu_I.

The statistical treatment is the simplified one: the photon-number yields
f_0 and f_1 are solved from the measured rates without fluctuations, and a
fluctuation is then subtracted from each yield fraction.  The result is an
approximate bound, not an unconditionally secure one, and every
:class:`RateResult` produced here carries the ``approximate-bound`` flag.

On Bob's side the X-basis samples are ``m_I = N_I p_X^2`` (both parties
choose X), ``m_II = N_II p_X`` (Alice always prepares mu_II pulses in X) and
``m_empty = N_empty`` (an empty pulse has no basis).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .core import (
    ErrorCorrectionModel,
    RateResult,
    SecurityBudget,
    assemble,
    binary_entropy,
    clamp_upper,
    fluctuation_bound,
    require_n_pe,
)
from .errors import DomainError, EstimationError, NoSinglePhotonKey

VARIANT = "decoy-3"
N_PE = 3
LABELS = ("empty", "I", "II")
APPROXIMATE = "approximate-bound"


def poisson(k: int, mu: float) -> float:
    """Probability that a pulse of mean photon number ``mu`` holds k photons."""
    if mu == 0.0:
        return 1.0 if k == 0 else 0.0
    return math.exp(-mu) * mu**k / math.factorial(k)


@dataclass(frozen=True, slots=True)
class DecoyIntensities:
    mu_I: float
    mu_II: float
    q_empty: float
    q_I: float
    q_II: float

    def __post_init__(self) -> None:
        if not 0.0 < self.mu_I <= self.mu_II:
            raise DomainError(f"need 0 < mu_I <= mu_II, got {self.mu_I!r}, {self.mu_II!r}")
        # p_A(1|I) <= p_A(1|II), with a little slack for mu_II -> mu_I
        if self.mu_I * math.exp(-self.mu_I) > self.mu_II * math.exp(-self.mu_II) * (1 + 1e-12):
            raise DomainError("need mu_I exp(-mu_I) <= mu_II exp(-mu_II)")
        qs = (self.q_empty, self.q_I, self.q_II)
        if any(q < 0.0 for q in qs) or abs(sum(qs) - 1.0) > 1e-12:
            raise DomainError(f"intensity probabilities must be a distribution, got {qs!r}")

    def mu(self, gamma: str) -> float:
        return {"empty": 0.0, "I": self.mu_I, "II": self.mu_II}[gamma]

    def q(self, gamma: str) -> float:
        return {"empty": self.q_empty, "I": self.q_I, "II": self.q_II}[gamma]


@dataclass(frozen=True, slots=True)
class IntensityStats:
    """Detected count, detection rate per sent pulse, X-basis error rate and
    X-basis sample size for one intensity."""

    N: float
    R: float
    e_X: float
    m: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.R <= 1.0 or not 0.0 <= self.e_X <= 1.0:
            raise DomainError(f"rates must lie in [0, 1]: R={self.R!r}, e_X={self.e_X!r}")
        if self.N < 0 or self.m < 0 or self.m > self.N:
            raise DomainError(f"need 0 <= m <= N, got N={self.N!r}, m={self.m!r}")


@dataclass(frozen=True, slots=True)
class DecoyObservables:
    """Per-intensity statistics plus the key-basis error of the mu_I stream.

    ``a_priori`` marks expected values produced for design: there an unused
    intensity (zero counts) still has a model rate, which the yield
    estimates may use.  Measured data must leave it False.
    """

    empty: IntensityStats
    I: IntensityStats
    II: IntensityStats
    eZ_I: float
    p_X: float
    a_priori: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.eZ_I <= 1.0:
            raise DomainError(f"eZ_I must lie in [0, 1], got {self.eZ_I!r}")
        if not 0.0 < self.p_X < 1.0:
            raise DomainError(f"p_X must lie in (0, 1), got {self.p_X!r}")

    @property
    def p_Z(self) -> float:
        return 1.0 - self.p_X

    def stats(self, gamma: str) -> IntensityStats:
        if gamma not in LABELS:
            raise DomainError(f"unknown intensity label {gamma!r}")
        return getattr(self, gamma)

    @property
    def N_total(self) -> float:
        return self.empty.N + self.I.N + self.II.N

    @classmethod
    def from_design(
        cls,
        N: float,
        ints: DecoyIntensities,
        expected: dict,
        p_X: float,
    ) -> "DecoyObservables":
        """Split ``N`` detected signals over the intensities in proportion to
        ``q_gamma R_gamma`` and attach the expected rates."""
        weights = {g: ints.q(g) * expected[g].R for g in LABELS}
        total = sum(weights.values())
        stats = {}
        for g in LABELS:
            N_g = N * weights[g] / total
            stats[g] = IntensityStats(N_g, expected[g].R, expected[g].e_X, x_samples(g, N_g, p_X))
        return cls(stats["empty"], stats["I"], stats["II"], expected["I"].e_X, p_X, a_priori=True)


def x_samples(gamma: str, N_gamma: float, p_X: float) -> float:
    """X-basis sample size available at one intensity."""
    if gamma == "I":
        return N_gamma * p_X * p_X
    if gamma == "II":
        return N_gamma * p_X
    return N_gamma


def _xi(samples: float, eps_PE: float) -> float:
    # no samples: nothing can be certified, the deviation is unbounded
    if samples < 1:
        return math.inf
    return fluctuation_bound(samples, 2, eps_PE)


def f0_estimate(obs: DecoyObservables) -> tuple[float, float]:
    """Dark-count yield and its error rate, read off the vacuum pulses."""
    if obs.empty.N <= 0 and not obs.a_priori:
        raise EstimationError("no vacuum detections: f_0 cannot be estimated")
    return obs.empty.R, obs.empty.e_X


def f1_estimate(obs: DecoyObservables, ints: DecoyIntensities) -> float:
    """Single-photon yield solved from the two non-vacuum rates, clamped to [0, 1]."""
    mu_I, mu_II = ints.mu_I, ints.mu_II
    if mu_II == mu_I:
        raise DomainError("f_1 needs two distinct non-vacuum intensities")
    f0, _ = f0_estimate(obs)
    f1 = (
        (obs.I.R * mu_II / poisson(1, mu_I) - obs.II.R * mu_I / poisson(1, mu_II)) / (mu_II - mu_I)
        - f0 * (mu_II + mu_I) / (mu_II * mu_I)
    )
    return min(1.0, max(0.0, f1))


def y0_lower(gamma: str, obs: DecoyObservables, ints: DecoyIntensities, eps_PE: float) -> float:
    R_g = obs.stats(gamma).R
    if R_g <= 0.0:
        raise DomainError(f"detection rate at intensity {gamma} is zero")
    f0, _ = f0_estimate(obs)
    xi = _xi(obs.empty.N, eps_PE)
    return max(0.0, (poisson(0, ints.mu(gamma)) * f0 - xi) / R_g)


def y1_lower(
    gamma: str, obs: DecoyObservables, ints: DecoyIntensities, f1: float, eps_PE: float
) -> float:
    st = obs.stats(gamma)
    if st.R <= 0.0:
        raise DomainError(f"detection rate at intensity {gamma} is zero")
    xi = _xi(st.N, eps_PE)
    return max(0.0, (poisson(1, ints.mu(gamma)) * f1 - xi) / st.R)


def ex1_upper_decoy(
    obs: DecoyObservables,
    ints: DecoyIntensities,
    y0_L: dict[str, float],
    y1_L: dict[str, float],
    eps_PE: float,
) -> float:
    """Smallest single-photon phase-error bound over mu_I and mu_II, in [0, 1/2]."""
    e_vac_L = max(0.0, obs.empty.e_X - _xi(obs.empty.N, eps_PE))
    candidates = []
    for gamma in ("I", "II"):
        st = obs.stats(gamma)
        if y1_L.get(gamma, 0.0) <= 0.0 or st.m < 1:
            continue
        e_U = clamp_upper(st.e_X, fluctuation_bound(st.m, 2, eps_PE))
        candidates.append((e_U - y0_L[gamma] * e_vac_L) / y1_L[gamma])
    if not candidates:
        raise NoSinglePhotonKey("no intensity certifies a single-photon yield")
    return min(0.5, max(0.0, min(candidates)))


def _no_key_stream(obs: DecoyObservables, ints: DecoyIntensities, budget: SecurityBudget) -> RateResult:
    """Nothing detected at mu_I: there is no raw key to distil."""
    R_total = sum(ints.q(g) * obs.stats(g).R for g in LABELS)
    return RateResult(VARIANT, 0.0, 0.0, R_total, 0.0, -math.inf, 0.0, math.nan, math.nan, 0,
                      budget, {}, (APPROXIMATE, "no-key-stream", "no-key"))


def key_rate_decoy(
    obs: DecoyObservables,
    ints: DecoyIntensities,
    budget: SecurityBudget,
    ec: ErrorCorrectionModel,
) -> RateResult:
    require_n_pe(budget, N_PE, "the three-intensity decoy bound")
    eps = budget.eps_PE
    flags: tuple[str, ...] = (APPROXIMATE,)
    if ints.q_I <= 0.0 or obs.I.N < 1 or obs.I.R <= 0.0:
        return _no_key_stream(obs, ints, budget)
    f1 = f1_estimate(obs, ints)
    y0 = {g: y0_lower(g, obs, ints, eps) if obs.stats(g).R > 0 else 0.0 for g in ("I", "II")}
    y1 = {g: y1_lower(g, obs, ints, f1, eps) if obs.stats(g).R > 0 else 0.0 for g in ("I", "II")}
    try:
        ex1 = ex1_upper_decoy(obs, ints, y0, y1, eps)
    except NoSinglePhotonKey:
        ex1 = 0.5
        flags += ("no-single-photon",)
    s_xi = y0["I"] + y1["I"] * (1.0 - binary_entropy(ex1))
    R_total = sum(ints.q(g) * obs.stats(g).R for g in LABELS)
    p_Z = obs.p_Z
    n = max(1, round(obs.I.N * p_Z * p_Z))
    return assemble(
        VARIANT,
        R=R_total,
        weight=ints.q_I * obs.I.R / R_total,
        s_xi=s_xi,
        counts_n=n,
        p_Z=p_Z,
        budget=budget,
        e_key=min(obs.eZ_I, 0.5),
        ec=ec,
        details={
            "f1": f1,
            "y0_L_I": y0["I"],
            "y0_L_II": y0["II"],
            "y1_L_I": y1["I"],
            "y1_L_II": y1["II"],
            "ex1_U": ex1,
        },
        flags=flags,
    )


# infinite-statistics counterparts of the estimators above


def y0_tilde(gamma: str, obs: DecoyObservables, ints: DecoyIntensities) -> float:
    return poisson(0, ints.mu(gamma)) * obs.empty.R / obs.stats(gamma).R


def y1_tilde(gamma: str, obs: DecoyObservables, ints: DecoyIntensities, f1: float) -> float:
    return poisson(1, ints.mu(gamma)) * f1 / obs.stats(gamma).R


def ex1_tilde(obs: DecoyObservables, ints: DecoyIntensities, f1: float) -> float:
    e0 = obs.empty.e_X
    vals = [
        (obs.stats(g).e_X - y0_tilde(g, obs, ints) * e0) / y1_tilde(g, obs, ints, f1)
        for g in ("I", "II")
    ]
    return min(0.5, max(0.0, min(vals)))


def asymptotic_rate_decoy(obs: DecoyObservables, ints: DecoyIntensities, f_EC: float) -> float:
    """Rate with all pulses at mu_I (q_I -> 1), no fluctuations, p_Z = 1."""
    f1 = f1_estimate(obs, ints)
    if f1 <= 0.0:
        return 0.0
    s = y0_tilde("I", obs, ints) + y1_tilde("I", obs, ints, f1) * (
        1.0 - binary_entropy(ex1_tilde(obs, ints, f1))
    )
    return max(0.0, obs.I.R * (s - f_EC * binary_entropy(min(obs.eZ_I, 0.5))))
