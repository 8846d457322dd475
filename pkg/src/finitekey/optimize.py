"""Design optimization against a-priori channel models.

The objective is the key rate per sent signal.  At every design point the
free part of the security budget (eps_bar, eps_PE, eps_PA with eps_total and
eps_EC fixed) is optimized in log-space; the design variables are searched
by a coarse multi-start grid followed by bounded Nelder-Mead refinement.

Both searches climb on :func:`score`, which keeps a slope in regions without
key; reported rates are clamped at zero.
"""
from __future__ import annotations

import itertools
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from . import channel, decoy, entanglement, wcp
from .core import ErrorCorrectionModel, RateResult, SecurityBudget, SiftedCounts
from .errors import BoundInapplicable, ConfigError, DomainError, FiniteKeyError, InfeasibleDesign

log = logging.getLogger(__name__)

VARIANTS = ("no-decoy", "decoy-3", "eb-squash", "eb-2click")
N_PE = {"no-decoy": 2, "decoy-3": 3, "eb-squash": 1, "eb-2click": 2}

EPS_FLOOR_FRACTION = 1e-3
# with mu_II free the design-mode decoy estimate degenerates (see DecoyProblem)
DEFAULT_MU_II = 0.65
# stand-in objective for design points where the bound cannot be evaluated
INFEASIBLE = -1.0


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float
    upper: float
    log: bool = True

    def __post_init__(self) -> None:
        if not (self.lower < self.upper) or (self.log and self.lower <= 0.0):
            raise ConfigError(f"invalid bounds for {self.name}: [{self.lower}, {self.upper}]")

    def to_value(self, u: float) -> float:
        u = min(1.0, max(0.0, u))
        if self.log:
            return math.exp(math.log(self.lower) + u * (math.log(self.upper) - math.log(self.lower)))
        return self.lower + u * (self.upper - self.lower)

    def to_unit(self, value: float) -> float:
        if self.log:
            return (math.log(value) - math.log(self.lower)) / (math.log(self.upper) - math.log(self.lower))
        return (value - self.lower) / (self.upper - self.lower)


@dataclass(frozen=True)
class SecurityTargets:
    """User-fixed part of the security budget and the code efficiency."""

    eps_total: float = 1e-5
    eps_EC: float = 1e-10
    f_EC: float = 1.05

    def __post_init__(self) -> None:
        if not self.eps_total > self.eps_EC:
            raise ConfigError("eps_total must exceed eps_EC")

    @property
    def ec(self) -> ErrorCorrectionModel:
        return ErrorCorrectionModel(self.f_EC, self.eps_EC)


@dataclass(frozen=True)
class ProtocolDesign:
    variant: str
    values: Mapping[str, float]

    def __getitem__(self, key: str) -> float:
        return self.values[key]

    def get(self, key: str, default=None):
        return self.values.get(key, default)


@dataclass(frozen=True)
class OptimizationReport:
    variant: str
    N: float
    design: ProtocolDesign
    budget: SecurityBudget
    K: float
    result: RateResult
    evaluations: int
    converged: bool
    trace: Mapping[str, float] = field(default_factory=dict)

    @property
    def no_key(self) -> bool:
        return self.K <= 0.0


def score(res: RateResult) -> float:
    """Search objective: the rate where a key exists, otherwise the (negative)
    per-bit bracket, which keeps pointing towards key-producing regions
    instead of rewarding a vanishing detection rate."""
    if res.K_raw > 0.0:
        return res.K_raw
    return max(res.bracket, INFEASIBLE)


# ---------------------------------------------------------------------------
# epsilon split


def split_from_logits(z: Sequence[float], eps_total: float, eps_EC: float, n_PE: int) -> SecurityBudget:
    """Map two logits to a budget; (0, 0) is the uniform split.

    Each free component keeps at least ``EPS_FLOOR_FRACTION`` of the free
    budget; the rest is shared in proportion to ``exp(z)``, ``exp(0)`` going
    to eps_PA.
    """
    free = eps_total - eps_EC
    floor = EPS_FLOOR_FRACTION * free
    rest = free - (n_PE + 2) * floor
    w_bar, w_pe = math.exp(z[0]), math.exp(z[1])
    norm = w_bar + n_PE * w_pe + 1.0
    eps_bar = floor + rest * w_bar / norm
    eps_PE = floor + rest * w_pe / norm
    return SecurityBudget.from_split(eps_total, eps_EC, n_PE, eps_bar, eps_PE)


def optimize_epsilons(
    fixed: SecurityTargets | Mapping[str, float],
    n_PE: int,
    rate_fn: Callable[[SecurityBudget], RateResult],
    *,
    start: Sequence[float] = (0.0, 0.0),
    step: float = 1.5,
) -> tuple[SecurityBudget, RateResult, int]:
    """Best split of ``eps_total - eps_EC`` over eps_bar, n_PE eps_PE, eps_PA.

    Returns the budget, the rate at that budget and the number of bound
    evaluations.  Never worse than the starting split (uniform by default; kept on ties,
    see :func:`split_from_logits` for the parametrization).
    """
    if isinstance(fixed, Mapping):
        eps_total, eps_EC = fixed["eps_total"], fixed["eps_EC"]
    else:
        eps_total, eps_EC = fixed.eps_total, fixed.eps_EC
    if not eps_total > eps_EC:
        raise ConfigError("infeasible budget: eps_total must exceed eps_EC")
    cache: dict[tuple[float, float], RateResult] = {}

    def objective(z: np.ndarray) -> float:
        key = (float(z[0]), float(z[1]))
        res = cache.get(key)
        if res is None:
            res = rate_fn(split_from_logits(key, eps_total, eps_EC, n_PE))
            cache[key] = res
        return -score(res)

    z0 = np.asarray(start, dtype=float)
    f0 = objective(z0)
    sol = minimize(
        objective,
        z0,
        method="Nelder-Mead",
        bounds=[(-12.0, 12.0), (-12.0, 12.0)],
        options={"xatol": 0.05, "fatol": 1e-7 * abs(f0), "maxfev": 120,
                 "initial_simplex": z0 + step * np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])},
    )
    best = (float(sol.x[0]), float(sol.x[1]))
    if not objective(np.array(best)) < f0:
        best = (float(z0[0]), float(z0[1]))
    res = cache[best]
    return res.budget, res, len(cache)


def logits_of(budget: SecurityBudget) -> tuple[float, float]:
    """Inverse of :func:`split_from_logits` (for warm starts)."""
    free = budget.eps_total - budget.eps_EC
    floor = EPS_FLOOR_FRACTION * free
    pa = max(budget.eps_PA - floor, 1e-300)
    return (
        math.log(max(budget.eps_bar - floor, 1e-300) / pa),
        math.log(max(budget.eps_PE - floor, 1e-300) / pa),
    )


# ---------------------------------------------------------------------------
# problems


class DesignProblem:
    """A-priori rate of one variant as a function of its design variables."""

    variant: str
    variables: tuple[Variable, ...]

    def __init__(self, N: float, targets: SecurityTargets) -> None:
        if not N >= 1e3:
            raise ConfigError(f"N must be at least 1e3, got {N!r}")
        self.N = float(N)
        self.targets = targets
        self.ec = targets.ec
        self.n_PE = N_PE[self.variant]

    def evaluate(self, values: Mapping[str, float], budget: SecurityBudget) -> RateResult:
        raise NotImplementedError

    def asymptotic(self, values: Mapping[str, float]) -> float:
        raise NotImplementedError

    def observables(self, values: Mapping[str, float]):
        raise NotImplementedError


class NoDecoyProblem(DesignProblem):
    variant = "no-decoy"

    def __init__(self, ch: channel.ChannelParams, N: float, targets: SecurityTargets,
                 mu_bounds=(1e-4, 1.0), pX_bounds=(1e-4, 0.5)) -> None:
        super().__init__(N, targets)
        self.ch = ch
        self.variables = (Variable("mu", *mu_bounds), Variable("p_X", *pX_bounds))

    def observables(self, values):
        mu = values["mu"]
        R = channel.expected_rate_wcp(mu, self.ch)
        e = channel.expected_error_wcp(mu, self.ch)
        return wcp.WcpObservables(SiftedCounts(self.N, values["p_X"]), R, e, e, mu)

    def evaluate(self, values, budget):
        return wcp.key_rate_no_decoy(self.observables(values), budget, self.ec)

    def asymptotic(self, values):
        mu = values["mu"]
        R = channel.expected_rate_wcp(mu, self.ch)
        e = channel.expected_error_wcp(mu, self.ch)
        return wcp.asymptotic_rate_no_decoy(R, e, e, mu, self.targets.f_EC)


class DecoyProblem(DesignProblem):
    """Three intensities; ``q_empty`` may be pinned to exactly zero.

    ``mu_II`` is fixed by default.  Pass ``mu_II=None`` to search it too, but
    expected-value inputs carry no fluctuation into the f_1 solve, so the
    search then drifts to ``mu_II -> mu_I`` with a vanishing ``q_II``.
    """

    variant = "decoy-3"

    def __init__(self, ch: channel.ChannelParams, N: float, targets: SecurityTargets,
                 mu_II: float | None = DEFAULT_MU_II, q_empty_zero: bool = False,
                 mu_bounds=(1e-3, 1.0), q_bounds=(1e-9, 0.5), pX_bounds=(1e-4, 0.5)) -> None:
        super().__init__(N, targets)
        self.ch = ch
        self.fixed_mu_II = mu_II
        self.q_empty_zero = q_empty_zero
        variables = [Variable("mu_I", mu_bounds[0], mu_bounds[1] if mu_II is None else mu_II)]
        if mu_II is None:
            variables.append(Variable("mu_II", *mu_bounds))
        if not q_empty_zero:
            variables.append(Variable("q_empty", *q_bounds))
        variables += [Variable("q_II", *q_bounds), Variable("p_X", *pX_bounds)]
        self.variables = tuple(variables)

    def complete(self, values: Mapping[str, float]) -> dict[str, float]:
        full = dict(values)
        if self.fixed_mu_II is not None:
            full["mu_II"] = self.fixed_mu_II
        if self.q_empty_zero:
            full["q_empty"] = 0.0
        return full

    def intensities(self, values) -> decoy.DecoyIntensities:
        v = self.complete(values)
        q_I = 1.0 - v["q_empty"] - v["q_II"]
        return decoy.DecoyIntensities(v["mu_I"], v["mu_II"], v["q_empty"], q_I, v["q_II"])

    def observables(self, values):
        ints = self.intensities(values)
        if ints.mu_I >= ints.mu_II:
            raise DomainError("need mu_I < mu_II")
        expected = channel.expected_decoy_observables(ints, self.ch)
        return decoy.DecoyObservables.from_design(self.N, ints, expected, values["p_X"])

    def evaluate(self, values, budget):
        obs = self.observables(values)
        return decoy.key_rate_decoy(obs, self.intensities(values), budget, self.ec)

    def asymptotic(self, values):
        obs = self.observables(values)
        return decoy.asymptotic_rate_decoy(obs, self.intensities(values), self.targets.f_EC)


class _EbProblem(DesignProblem):
    def __init__(self, ch: channel.ChannelParams, N: float, targets: SecurityTargets,
                 y_bounds=(1e-4, 0.3), pX_bounds=(1e-4, 0.5)) -> None:
        super().__init__(N, targets)
        self.ch = ch
        self.variables = (Variable("y", *y_bounds), Variable("p_X", *pX_bounds))

    def rates(self, values) -> channel.EbRates:
        # the high-y advisory is irrelevant while searching the box
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return channel.eb_rates(channel.EbSourceParams(values["y"], self.ch))

    def observables(self, values):
        r = self.rates(values)
        return entanglement.EbObservables(
            SiftedCounts(self.N, values["p_X"]), r.R, r.R_prime, r.e, r.e, r.e_prime, r.e_prime
        )


class EbSquashProblem(_EbProblem):
    variant = "eb-squash"

    def evaluate(self, values, budget):
        return entanglement.key_rate_squashing(self.observables(values), budget, self.ec)

    def asymptotic(self, values):
        r = self.rates(values)
        return entanglement.asymptotic_rate_squashing(r.R, r.e, r.e, self.targets.f_EC)


class EbDoubleClickProblem(_EbProblem):
    variant = "eb-2click"

    def evaluate(self, values, budget):
        return entanglement.key_rate_double_click(self.observables(values), budget, self.ec)

    def asymptotic(self, values):
        r = self.rates(values)
        return entanglement.asymptotic_rate_double_click(
            r.R, r.R_prime, r.e_prime, r.e_prime, self.targets.f_EC
        )


def make_problem(variant: str, model: channel.ChannelParams, N: float,
                 targets: SecurityTargets, **options) -> DesignProblem:
    classes = {
        "no-decoy": NoDecoyProblem,
        "decoy-3": DecoyProblem,
        "eb-squash": EbSquashProblem,
        "eb-2click": EbDoubleClickProblem,
    }
    try:
        cls = classes[variant]
    except KeyError:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}") from None
    return cls(model, N, targets, **options)


# ---------------------------------------------------------------------------
# design search


class _Objective:
    """Nested epsilon optimization at each design point, memoized."""

    def __init__(self, problem: DesignProblem) -> None:
        self.problem = problem
        self.t = problem.targets
        self.evaluations = 0
        self._warm: tuple[float, float] | None = None
        self._cache: dict[tuple[float, ...], tuple[float, RateResult | None, tuple[float, float]]] = {}

    def values(self, u: Sequence[float]) -> dict[str, float]:
        return {v.name: v.to_value(x) for v, x in zip(self.problem.variables, u)}

    def _rate(self, values, budget) -> RateResult | None:
        self.evaluations += 1
        try:
            return self.problem.evaluate(values, budget)
        except (DomainError, BoundInapplicable):
            return None

    def uniform(self, u: Sequence[float]) -> float:
        """Rate at the uniform epsilon split (coarse-grid screening)."""
        budget = SecurityBudget.uniform(self.t.eps_total, self.t.eps_EC, self.problem.n_PE)
        res = self._rate(self.values(u), budget)
        return INFEASIBLE if res is None else score(res)

    def nested(self, u: Sequence[float]) -> tuple[float, RateResult | None]:
        key = tuple(float(x) for x in np.clip(u, 0.0, 1.0))
        hit = self._cache.get(key)
        if hit is not None:
            return hit[0], hit[1]
        values = self.values(key)
        probe = self._rate(values, SecurityBudget.uniform(self.t.eps_total, self.t.eps_EC, self.problem.n_PE))
        if probe is None:
            self._cache[key] = (INFEASIBLE, None, (0.0, 0.0))
            return INFEASIBLE, None

        def rate_fn(budget: SecurityBudget) -> RateResult:
            res = self._rate(values, budget)
            if res is None:
                # the split cannot make an evaluable design unevaluable, except
                # through the double-click window; treat it as very bad
                return _penalty(probe)
            return res

        if self._warm is None:
            _, res, _ = optimize_epsilons(self.t, self.problem.n_PE, rate_fn)
        else:
            _, res, _ = optimize_epsilons(self.t, self.problem.n_PE, rate_fn, start=self._warm, step=0.5)
        if res.K_raw > 0.0:
            self._warm = tuple(float(np.clip(z, -12.0, 12.0)) for z in logits_of(res.budget))
        self._cache[key] = (score(res), res, (0.0, 0.0))
        return score(res), res


def _penalty(template: RateResult) -> RateResult:
    return RateResult(template.variant, 0.0, 0.0, template.R, INFEASIBLE, INFEASIBLE, 0.0, 0.0, 0.0,
                      template.n, template.budget, {}, ("infeasible",))


def _coarse_grid(dim: int, points: int) -> list[tuple[float, ...]]:
    axis = np.linspace(0.05, 0.95, points)
    return [tuple(float(x) for x in p) for p in itertools.product(axis, repeat=dim)]


def _refine(fn: Callable[[Sequence[float]], float], u0: Sequence[float], maxfev: int, fatol: float):
    dim = len(u0)
    step = 0.08
    base = np.asarray(u0, dtype=float)
    simplex = [base]
    for i in range(dim):
        vertex = base.copy()
        vertex[i] += step if base[i] < 0.9 else -step
        simplex.append(vertex)
    sol = minimize(
        lambda u: -fn(u),
        base,
        method="Nelder-Mead",
        bounds=[(0.0, 1.0)] * dim,
        options={"xatol": 1e-4, "fatol": fatol, "maxfev": maxfev,
                 "initial_simplex": np.array(simplex), "adaptive": dim > 3},
    )
    return np.clip(sol.x, 0.0, 1.0), -float(sol.fun), bool(sol.success)


def reoptimize_epsilons(targets: SecurityTargets, n_PE: int,
                        rate_fn: Callable[[SecurityBudget], RateResult]) -> RateResult:
    """Optimize only the epsilon split of a fixed bound, from the uniform start.

    Splits for which the bound is inapplicable count as infeasible; if the
    uniform split itself is inapplicable the error propagates.
    """
    probe = rate_fn(SecurityBudget.uniform(targets.eps_total, targets.eps_EC, n_PE))

    def safe(budget: SecurityBudget) -> RateResult:
        try:
            return rate_fn(budget)
        except BoundInapplicable:
            return _penalty(probe)

    _, res, _ = optimize_epsilons(targets, n_PE, safe)
    return res


def evaluate_design(problem: DesignProblem, values: Mapping[str, float]) -> RateResult:
    """Rate at a fixed design with the epsilon split re-optimized; the same
    procedure serves measured data, so the two agree on identical inputs."""
    return reoptimize_epsilons(problem.targets, problem.n_PE,
                               lambda budget: problem.evaluate(values, budget))


def optimize_problem(problem: DesignProblem, *, grid_points: int | None = None,
                     starts: int = 2, maxfev: int | None = None) -> OptimizationReport:
    dim = len(problem.variables)
    if grid_points is None:
        grid_points = {1: 9, 2: 7, 3: 5}.get(dim, 4)
    if maxfev is None:
        maxfev = 120 * dim
    obj = _Objective(problem)
    grid = _coarse_grid(dim, grid_points)
    scored = sorted(((obj.uniform(u), u) for u in grid), key=lambda s: -s[0])
    grid_best, grid_u = scored[0]
    # distinct starts: skip grid neighbours of starts already chosen
    chosen: list[tuple[float, ...]] = []
    for val, u in scored:
        if len(chosen) >= starts or val <= INFEASIBLE:
            break
        if all(max(abs(a - b) for a, b in zip(u, c)) > 1.5 / grid_points for c in chosen):
            chosen.append(u)
    if not chosen:
        msg = f"no evaluable design point for {problem.variant} at N={problem.N:g}"
        if problem.variant == entanglement.DOUBLE_CLICK:
            raise BoundInapplicable(msg + " (double-click bound window violated everywhere)")
        raise InfeasibleDesign(msg)
    if grid_best <= 0.0:
        # no key anywhere on the grid: look for a key-producing region with
        # the cheap uniform-split objective before paying for nested searches
        u, val, _ = _refine(obj.uniform, chosen[0], maxfev, 1e-9)
        chosen = [tuple(u)] if val > 0.0 else []
    best_u, best_val, converged = np.asarray(grid_u), grid_best, True
    for u0 in chosen:
        u, val, ok = _refine(lambda x: obj.nested(x)[0], u0, maxfev, 1e-9 * abs(grid_best))
        if val > best_val:
            best_u, best_val, converged = u, val, ok
    values = obj.values(best_u)
    try:
        final = evaluate_design(problem, values)
    except (DomainError, BoundInapplicable):
        final = None
    if final is None or score(final) < grid_best:
        # refinement must never end below its own starting grid
        values = obj.values(grid_u)
        final = evaluate_design(problem, values)
    return _report(problem, values, final, obj.evaluations, converged,
                   {"grid_best_K": max(0.0, grid_best), "grid_best_score": grid_best,
                    "starts": float(len(chosen))})


def _report(problem: DesignProblem, values: Mapping[str, float], final: RateResult,
            evaluations: int, converged: bool, trace: Mapping[str, float]) -> OptimizationReport:
    if isinstance(problem, DecoyProblem):
        values = problem.complete(values)
    return OptimizationReport(problem.variant, problem.N, ProtocolDesign(problem.variant, dict(values)),
                              final.budget, final.K, final, evaluations, converged, dict(trace))


def optimize_design(variant: str, model: channel.ChannelParams, N: float,
                    targets: SecurityTargets | None = None, **options) -> OptimizationReport:
    """Maximize the a-priori key rate over design variables and epsilon split.

    For the decoy variant both ``q_empty = 0`` exactly and ``q_empty > 0`` are
    searched and the better one is kept (ties go to ``q_empty = 0``).
    """
    targets = targets or SecurityTargets()
    search = {k: options.pop(k) for k in ("grid_points", "starts", "maxfev") if k in options}
    if variant == "decoy-3" and "q_empty_zero" not in options:
        zero_problem = make_problem(variant, model, N, targets, q_empty_zero=True, **options)
        zero = optimize_problem(zero_problem, **search)
        free = optimize_problem(make_problem(variant, model, N, targets, q_empty_zero=False, **options), **search)
        evaluations = zero.evaluations + free.evaluations
        # a vacuum stream too thin to certify anything only costs key pulses:
        # the free optimum moved to q_empty = 0 is then at least as good
        moved = {k: v for k, v in free.design.values.items() if k not in ("q_empty", "mu_II")}
        if free.result.details.get("y0_L_I", 0.0) == 0.0:
            projected = evaluate_design(zero_problem, moved)
            if projected.K > zero.K:
                zero = _report(zero_problem, moved, projected, 0, free.converged, free.trace)
        best = free if free.K > zero.K else zero
        return replace(best, evaluations=evaluations)
    return optimize_problem(make_problem(variant, model, N, targets, **options), **search)


# ---------------------------------------------------------------------------
# transmittivity sweep


@dataclass(frozen=True)
class SweepRow:
    """One ``(N, t)`` point; ``report`` is None when the point failed."""

    variant: str
    N: float
    t: float
    report: OptimizationReport | None
    error: str | None = None


def _sweep_point(args) -> SweepRow:
    variant, model, N, t, targets, options = args
    try:
        report = optimize_design(variant, replace(model, t=t), N, targets, **dict(options))
    except FiniteKeyError as exc:
        log.warning("sweep point N=%g t=%g failed: %s", N, t, exc)
        return SweepRow(variant, N, t, None, f"{type(exc).__name__}: {exc}")
    return SweepRow(variant, N, t, report)


def sweep_transmittivity(variant: str, model: channel.ChannelParams, N_list: Iterable[float],
                         t_grid: Iterable[float], targets: SecurityTargets | None = None,
                         workers: int | None = None, **options) -> list[SweepRow]:
    """One design optimization per ``(N, t)``, rows sorted by ``(N, t)``.

    Points are independent; with ``workers > 1`` they run in a process pool.
    Row order and content do not depend on the number of workers.  Failed
    points come back as rows with ``error`` set instead of aborting.
    """
    N_list, t_grid = sorted(set(map(float, N_list))), sorted(set(map(float, t_grid)))
    if not N_list or not t_grid:
        raise ConfigError("sweep needs a non-empty N list and t grid")
    targets = targets or SecurityTargets()
    jobs = [(variant, model, N, t, targets, tuple(sorted(options.items())))
            for N in N_list for t in t_grid]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_point, jobs))
    return [_sweep_point(job) for job in jobs]
