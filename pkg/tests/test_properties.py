"""Property-based checks of the bounds' structural invariants."""
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from finitekey import channel, decoy, entanglement as eb, wcp
from finitekey.channel import ChannelParams
from finitekey.core import (
    ErrorCorrectionModel,
    SecurityBudget,
    SiftedCounts,
    clamp_lower,
    clamp_upper,
    delta_correction,
    fluctuation_bound,
    secret_fraction,
)
from finitekey.decoy import DecoyIntensities, DecoyObservables
from finitekey.optimize import split_from_logits

probability = st.floats(1e-12, 1 - 1e-12)
small_eps = st.floats(1e-15, 0.5)
unit = st.floats(0.0, 1.0)
EC = ErrorCorrectionModel(1.05, 1e-10)


class TestFluctuationAndPenalty:
    @given(st.floats(10, 1e15), st.floats(1.0001, 1e3), st.integers(2, 8), probability)
    def test_xi_decreasing(self, m1, factor, d, eps):
        m2 = m1 * factor
        assert fluctuation_bound(m2, d, eps) < fluctuation_bound(m1, d, eps)

    @given(unit, st.floats(0.0, 2.0))
    def test_clamp_range(self, lam, xi):
        assert 0.0 <= clamp_upper(lam, xi) <= 1.0
        assert 0.0 <= clamp_lower(lam, xi) <= 1.0

    @given(small_eps, small_eps)
    def test_delta_scaling(self, eps_bar, eps_pa):
        n = 1e12
        assert delta_correction(n, eps_bar, eps_pa) * math.sqrt(n) == pytest.approx(
            7 * math.sqrt(math.log2(2 / eps_bar)), rel=0.01)

    @given(st.floats(-1, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 0.99), st.floats(0, 0.5))
    def test_secret_fraction_monotone(self, s, d, leak, p_z, bump):
        base = secret_fraction(s, d, leak, p_z)
        assert secret_fraction(s, d + bump, leak, p_z) <= base
        assert secret_fraction(s, d, leak + bump, p_z) <= base
        assert secret_fraction(s + bump, d, leak, p_z) >= base


class TestBudgetIdentity:
    @given(st.floats(-12, 12), st.floats(-12, 12), st.integers(1, 3), st.floats(1e-12, 1e-2))
    def test_logit_split(self, z0, z1, n_pe, eps_total):
        b = split_from_logits((z0, z1), eps_total, eps_total * 1e-5, n_pe)
        total = b.eps_EC + b.eps_bar + n_pe * b.eps_PE + b.eps_PA
        assert abs(total - b.eps_total) <= 1e-15
        floor = 1e-3 * (b.eps_total - b.eps_EC)
        assert min(b.eps_bar, b.eps_PE, b.eps_PA) >= floor * (1 - 1e-9)

    @given(st.floats(1e-12, 0.5), st.integers(1, 3))
    def test_uniform_split(self, eps_total, n_pe):
        b = SecurityBudget.uniform(eps_total, eps_total / 1e5, n_pe)
        assert abs(b.eps_EC + b.eps_bar + n_pe * b.eps_PE + b.eps_PA - eps_total) <= 1e-15


class TestConventionRoundTrip:
    @given(st.floats(1e-6, 1.0), st.floats(0.0, 0.2), st.floats(0.0, 0.5), st.floats(0.0, 0.5))
    def test_primed_squashed(self, R, delta, ep_x, ep_z):
        R_prime = R * (1 - delta)
        obs = eb.EbObservables.from_primed(SiftedCounts(1e6, 0.1), R, R_prime, ep_x, ep_z)
        d = obs.delta_2c
        assert abs(eb.primed_error(obs.e_X, d) - ep_x) <= 1e-12
        assert abs(eb.primed_error(obs.e_Z, d) - ep_z) <= 1e-12


class TestNoDecoyBound:
    @staticmethod
    def obs(N, p_x, e_x, e_z, mu=0.1, t=1.0):
        ch = ChannelParams(t=t, Q=0.005)
        return wcp.WcpObservables(SiftedCounts(N, p_x), channel.expected_rate_wcp(mu, ch), e_x, e_z, mu)

    @given(st.floats(1e4, 1e16), st.floats(0.01, 0.5), st.floats(0, 0.2), st.floats(0, 0.2),
           st.floats(1e-3, 1.0), st.floats(0.01, 1.0))
    def test_finite_below_asymptotic(self, N, p_x, e_x, e_z, mu, t):
        o = self.obs(N, p_x, e_x, e_z, mu, t)
        K = wcp.key_rate_no_decoy(o, SecurityBudget.uniform(1e-5, 1e-10, 2), EC).K
        assert K <= wcp.asymptotic_rate_no_decoy(o.R, e_x, e_z, mu, 1.05) + 1e-12

    @given(st.floats(1e4, 1e14), st.floats(1.01, 100), st.floats(0.01, 0.5), st.floats(0, 0.05))
    def test_monotone_in_n(self, N, factor, p_x, e):
        b = SecurityBudget.uniform(1e-5, 1e-10, 2)
        k1 = wcp.key_rate_no_decoy(self.obs(N, p_x, e, e), b, EC).K
        k2 = wcp.key_rate_no_decoy(self.obs(N * factor, p_x, e, e), b, EC).K
        # rounding of n and m can move K by O(1/N)
        assert k2 >= k1 - 1e-12

    @given(st.floats(0, 0.1), st.floats(0, 0.1), st.floats(0, 0.05))
    def test_monotone_in_errors(self, e_x, e_z, bump):
        b = SecurityBudget.uniform(1e-5, 1e-10, 2)
        k = wcp.key_rate_no_decoy(self.obs(1e10, 0.05, e_x, e_z), b, EC).K
        assert wcp.key_rate_no_decoy(self.obs(1e10, 0.05, e_x + bump, e_z), b, EC).K <= k
        assert wcp.key_rate_no_decoy(self.obs(1e10, 0.05, e_x, e_z + bump), b, EC).K <= k


class TestDecoyEstimators:
    @given(st.floats(1e-9, 1e-2), st.floats(1.01, 1e6), st.floats(0.01, 1.0), st.floats(1e6, 1e12))
    def test_anti_monotone_in_xi(self, eps_lo, factor, t, N):
        eps_hi = min(0.5, eps_lo * factor)
        ints = DecoyIntensities(0.5, 0.65, 0.05, 0.8, 0.15)
        ch = ChannelParams(t=t, Q=0.005)
        obs = DecoyObservables.from_design(N, ints, channel.expected_decoy_observables(ints, ch), 0.1)
        f1 = decoy.f1_estimate(obs, ints)

        def bounds(eps):
            y0 = {g: decoy.y0_lower(g, obs, ints, eps) for g in ("I", "II")}
            y1 = {g: decoy.y1_lower(g, obs, ints, f1, eps) for g in ("I", "II")}
            try:
                e1 = decoy.ex1_upper_decoy(obs, ints, y0, y1, eps)
            except decoy.NoSinglePhotonKey:
                e1 = 0.5
            return y0, y1, e1

        y0a, y1a, ea = bounds(eps_lo)
        y0b, y1b, eb_ = bounds(eps_hi)
        for g in ("I", "II"):
            assert y0b[g] >= y0a[g] and y1b[g] >= y1a[g]
        assert eb_ <= ea + 1e-15


class TestEntanglementBounds:
    @given(st.floats(0, 0.06), st.floats(0, 0.06), st.floats(0, 0.01))
    def test_monotone_in_errors(self, ep_x, ep_z, bump):
        def K(fn, n_pe, x, z):
            obs = eb.EbObservables.from_primed(SiftedCounts(1e10, 0.05), 1e-3, 0.999e-3, x, z)
            try:
                return fn(obs, SecurityBudget.uniform(1e-5, 1e-10, n_pe), EC).K
            except eb.BoundInapplicable:
                return None
        for fn, n_pe in ((eb.key_rate_squashing, 1), (eb.key_rate_double_click, 2)):
            base = K(fn, n_pe, ep_x, ep_z)
            up_x, up_z = K(fn, n_pe, ep_x + bump, ep_z), K(fn, n_pe, ep_x, ep_z + bump)
            if base is not None:
                assert up_z is not None and up_z <= base
                if up_x is not None:
                    assert up_x <= base


class TestChannelModel:
    @given(st.floats(1e-4, 1.0), st.floats(1.01, 2.0), st.floats(0.01, 0.99), st.floats(0.01, 0.99),
           st.floats(1e-7, 1e-3))
    def test_rate_increasing(self, mu, f, t, eta, p_d):
        base = ChannelParams(t=t, eta=eta, p_d=p_d, Q=0.01)
        R = channel.expected_rate_wcp(mu, base)
        assert channel.expected_rate_wcp(mu * f, base) > R
        assert channel.expected_rate_wcp(mu, ChannelParams(t=min(1, t * f), eta=eta, p_d=p_d, Q=0.01)) > R
        assert channel.expected_rate_wcp(mu, ChannelParams(t=t, eta=min(1, eta * f), p_d=p_d, Q=0.01)) > R
        assert channel.expected_rate_wcp(mu, ChannelParams(t=t, eta=eta, p_d=p_d * f, Q=0.01)) > R

    @given(st.floats(1e-6, 5.0), st.floats(0.0, 0.2), st.floats(1e-8, 1e-3))
    def test_error_range(self, mu, Q, p_d):
        e = channel.expected_error_wcp(mu, ChannelParams(t=0.5, p_d=p_d, Q=Q))
        assert min(Q, 0.5) - 1e-12 <= e <= 0.5 + 1e-12

    def test_error_tends_to_half(self):
        assert channel.expected_error_wcp(1e-12, ChannelParams(t=0.5, Q=0.01)) == pytest.approx(0.5, abs=1e-6)


def _estimator_gaps(count: float, eps_PE: float = 1e-6) -> dict[str, float]:
    """|finite - tilde| for every finite estimator at sample sizes ``count``."""
    gaps = {}
    mu, ch = 0.1, ChannelParams(t=1.0, Q=0.005)
    R, e = channel.expected_rate_wcp(mu, ch), channel.expected_error_wcp(mu, ch)
    o = wcp.WcpObservables(SiftedCounts(count, 0.5), R, e, e, mu)
    y1 = wcp.y1_lower(o, eps_PE)
    y1_t = 1 - wcp.multi_photon_fraction(mu) / R
    gaps["wcp.y1"] = abs(y1 - y1_t)
    gaps["wcp.ex1"] = abs(wcp.ex1_upper(o, y1, eps_PE) - e / y1_t)

    ints = DecoyIntensities(0.5, 0.65, 1 / 3, 1 / 3, 1 / 3)
    obs = DecoyObservables.from_design(3 * count, ints, channel.expected_decoy_observables(ints, ch), 0.5)
    f1 = decoy.f1_estimate(obs, ints)
    y0 = {g: decoy.y0_lower(g, obs, ints, eps_PE) for g in ("I", "II")}
    y1d = {g: decoy.y1_lower(g, obs, ints, f1, eps_PE) for g in ("I", "II")}
    for g in ("I", "II"):
        gaps[f"decoy.y0.{g}"] = abs(y0[g] - decoy.y0_tilde(g, obs, ints))
        gaps[f"decoy.y1.{g}"] = abs(y1d[g] - decoy.y1_tilde(g, obs, ints, f1))
    gaps["decoy.ex1"] = abs(decoy.ex1_upper_decoy(obs, ints, y0, y1d, eps_PE) - decoy.ex1_tilde(obs, ints, f1))

    ebo = eb.EbObservables.from_primed(SiftedCounts(count, 0.5), 1e-3, 0.999e-3, 0.01, 0.01)
    sq = eb.key_rate_squashing(ebo, SecurityBudget.uniform(0.1, 1e-10, 1), EC)
    gaps["eb.eX"] = abs(sq.details["eX_U"] - ebo.e_X)
    two = eb.key_rate_double_click(ebo, SecurityBudget.uniform(0.1, 1e-10, 2), EC, eps_PE=eps_PE)
    gaps["eb.delta"] = abs(two.details["delta_2c_U"] - ebo.delta_2c)
    gaps["eb.eprimeX"] = abs(two.details["eprimeX_U"] - ebo.eprime_X)
    return gaps


class TestAsymptoticConvergence:
    def test_within_1e9_at_1e18_counts(self):
        gaps = _estimator_gaps(1e18)
        worst = max(gaps, key=gaps.get)
        assert gaps[worst] <= 1e-9, f"{worst} differs by {gaps[worst]:.3g}"

    def test_gaps_shrink_with_counts(self):
        # supplementary: the worst gap scales like sqrt(ln m / m) and reaches 1e-9 by 1e26
        g18, g26 = _estimator_gaps(1e18), _estimator_gaps(1e26)
        for key in g18:
            assert g26[key] <= g18[key]
        ratio = max(g18.values()) / max(g26.values())
        assert ratio == pytest.approx(1e4 * math.sqrt(math.log(1e18) / math.log(1e26)), rel=0.1)
        assert max(g26.values()) <= 1e-9


class TestDeterminism:
    def test_bit_identical_rates(self):
        ints = DecoyIntensities(0.5, 0.65, 0.05, 0.8, 0.15)
        ch = ChannelParams(t=0.1, Q=0.005)
        obs = DecoyObservables.from_design(1e10, ints, channel.expected_decoy_observables(ints, ch), 0.05)
        b = SecurityBudget.uniform(1e-5, 1e-10, 3)
        runs = [decoy.key_rate_decoy(obs, ints, b, EC) for _ in range(3)]
        assert runs[0] == runs[1] == runs[2]
