"""Plain-mapping form of measured observables, used by the CLI and by
design records so that a design can be fed back as measured data."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Mapping

from . import decoy, entanglement, wcp
from .core import ErrorCorrectionModel, RateResult, SecurityBudget, SiftedCounts
from .errors import ConfigError


@dataclass(frozen=True)
class Measured:
    """Typed observables of one variant plus the fixed design they came from."""

    variant: str
    obs: Any
    N: float
    ints: decoy.DecoyIntensities | None = None

    def rate_fn(self, ec: ErrorCorrectionModel) -> Callable[[SecurityBudget], RateResult]:
        if self.variant == wcp.VARIANT:
            return lambda b: wcp.key_rate_no_decoy(self.obs, b, ec)
        if self.variant == decoy.VARIANT:
            return lambda b: decoy.key_rate_decoy(self.obs, self.ints, b, ec)
        if self.variant == entanglement.SQUASH:
            return lambda b: entanglement.key_rate_squashing(self.obs, b, ec)
        return lambda b: entanglement.key_rate_double_click(self.obs, b, ec)


def _num(block: Mapping[str, Any], key: str, where: str) -> float:
    if key not in block:
        raise ConfigError(f"{where}.{key}: required field missing")
    value = block[key]
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: expected a number, got {value!r}") from None
    if not math.isfinite(out):
        raise ConfigError(f"{where}.{key}: must be finite, got {value!r}")
    return out


def _opt(block: Mapping[str, Any], key: str, where: str) -> float | None:
    return _num(block, key, where) if block.get(key) is not None else None


def _eb_errors(block, where, delta):
    """Accept squashed or primed error rates (or both) and derive the rest."""
    out = {}
    for basis in ("X", "Z"):
        e = _opt(block, f"e_{basis}", where)
        ep = _opt(block, f"eprime_{basis}", where)
        if e is None and ep is None:
            raise ConfigError(f"{where}: need e_{basis} or eprime_{basis}")
        if ep is None:
            ep = entanglement.primed_error(e, delta)
        if e is None:
            e = entanglement.squashed_error(ep, delta)
        out[basis] = (e, ep)
    return out


def measured_from_mapping(variant: str, block: Mapping[str, Any], where: str = "observables") -> Measured:
    """Build typed observables; domain violations surface as DomainError."""
    if not isinstance(block, Mapping):
        raise ConfigError(f"{where}: expected a mapping")
    if variant == wcp.VARIANT:
        N = _num(block, "N", where)
        obs = wcp.WcpObservables(
            SiftedCounts(N, _num(block, "p_X", where)),
            _num(block, "R", where), _num(block, "e_X", where), _num(block, "e_Z", where),
            _num(block, "mu", where),
        )
        return Measured(variant, obs, N)
    if variant == decoy.VARIANT:
        q_empty, q_II = _num(block, "q_empty", where), _num(block, "q_II", where)
        q_I = _opt(block, "q_I", where)
        if q_I is None:
            q_I = 1.0 - q_empty - q_II
        ints = decoy.DecoyIntensities(_num(block, "mu_I", where), _num(block, "mu_II", where),
                                      q_empty, q_I, q_II)
        p_X = _num(block, "p_X", where)
        per = block.get("intensities")
        if not isinstance(per, Mapping):
            raise ConfigError(f"{where}.intensities: expected a mapping with keys {decoy.LABELS}")
        stats = {}
        for g in decoy.LABELS:
            sub = per.get(g)
            if not isinstance(sub, Mapping):
                raise ConfigError(f"{where}.intensities.{g}: required block missing")
            N_g = _num(sub, "N", f"{where}.intensities.{g}")
            stats[g] = decoy.IntensityStats(N_g, _num(sub, "R", f"{where}.intensities.{g}"),
                                            _num(sub, "e_X", f"{where}.intensities.{g}"),
                                            decoy.x_samples(g, N_g, p_X))
        obs = decoy.DecoyObservables(stats["empty"], stats["I"], stats["II"], _num(block, "eZ_I", where),
                                     p_X, a_priori=bool(block.get("a_priori", False)))
        return Measured(variant, obs, obs.N_total, ints)
    if variant in (entanglement.SQUASH, entanglement.DOUBLE_CLICK):
        N = _num(block, "N", where)
        R, R_prime = _num(block, "R", where), _num(block, "R_prime", where)
        delta = entanglement.double_click_fraction(R, R_prime)
        errs = _eb_errors(block, where, delta)
        obs = entanglement.EbObservables(SiftedCounts(N, _num(block, "p_X", where)), R, R_prime,
                                         errs["X"][0], errs["Z"][0], errs["X"][1], errs["Z"][1])
        return Measured(variant, obs, N)
    raise ConfigError(f"variant: unknown variant {variant!r}")


def mapping_from_observables(variant: str, obs: Any, ints: decoy.DecoyIntensities | None = None) -> dict:
    """Inverse of :func:`measured_from_mapping` (exact float round trip)."""
    if variant == wcp.VARIANT:
        return {"N": obs.counts.N, "p_X": obs.counts.p_X, "mu": obs.mu,
                "R": obs.R, "e_X": obs.e_X, "e_Z": obs.e_Z}
    if variant == decoy.VARIANT:
        return {
            "p_X": obs.p_X, "mu_I": ints.mu_I, "mu_II": ints.mu_II,
            "q_empty": ints.q_empty, "q_I": ints.q_I, "q_II": ints.q_II,
            "eZ_I": obs.eZ_I, "a_priori": obs.a_priori,
            "intensities": {g: {"N": obs.stats(g).N, "R": obs.stats(g).R, "e_X": obs.stats(g).e_X}
                            for g in decoy.LABELS},
        }
    return {"N": obs.counts.N, "p_X": obs.counts.p_X, "R": obs.R, "R_prime": obs.R_prime,
            "e_X": obs.e_X, "e_Z": obs.e_Z, "eprime_X": obs.eprime_X, "eprime_Z": obs.eprime_Z}


def flatten(mapping: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    out = {}
    for key, value in mapping.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            out.update(flatten(value, name + "."))
        else:
            out[name] = value
    return out


def differences(measured: Mapping[str, Any], expected: Mapping[str, Any], rtol: float) -> dict[str, tuple]:
    """Numeric entries present in both whose relative difference exceeds ``rtol``."""
    a, b = flatten(measured), flatten(expected)
    out = {}
    for key in sorted(a.keys() & b.keys()):
        x, y = a[key], b[key]
        if isinstance(x, bool) or isinstance(y, bool):
            continue
        try:
            x, y = float(x), float(y)
        except (TypeError, ValueError):
            continue
        if abs(x - y) > rtol * max(abs(x), abs(y)):
            out[key] = (x, y)
    return out
