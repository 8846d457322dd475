"""Honest-channel Monte Carlo for the three-intensity protocol.

Pulses are simulated in aggregate: a multinomial draw over photon numbers
per intensity, then binomial draws for clicks, errors and X-basis sifting per
photon-number class.  The realized photon-number composition of the detected
signals is the ground truth the decoy estimators must bound.

The click and error probabilities per k-photon pulse are the ones that
reproduce the expected-value model exactly after averaging over Poisson
photon statistics:

    c_k = 1 - (1 - 2 p_d)(1 - t eta)^k
    e_k = [(1 - (1 - t eta)^k) Q + (1 - t eta)^k p_d] / c_k
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import poisson

from finitekey.channel import ChannelParams
from finitekey.decoy import LABELS, DecoyIntensities, DecoyObservables, IntensityStats

K_MAX = 15


@dataclass(frozen=True)
class Truth:
    """Realized photon-number composition at one intensity."""

    N: int
    Y0: float
    Y1: float
    e1: float
    f1: float


def click_probability(k: np.ndarray, ch: ChannelParams) -> np.ndarray:
    return 1.0 - (1.0 - 2.0 * ch.p_d) * (1.0 - ch.t_eta) ** k


def error_probability(k: np.ndarray, ch: ChannelParams) -> np.ndarray:
    lost = (1.0 - ch.t_eta) ** k
    return ((1.0 - lost) * ch.Q + lost * ch.p_d) / click_probability(k, ch)


def _photon_probs(mu: float) -> np.ndarray:
    k = np.arange(K_MAX)
    p = poisson.pmf(k, mu) if mu > 0 else (k == 0).astype(float)
    return np.append(p, max(0.0, 1.0 - p.sum()))


def simulate(rng: np.random.Generator, ints: DecoyIntensities, ch: ChannelParams,
             pulses: int, p_X: float) -> tuple[DecoyObservables, dict[str, Truth]]:
    """One honest run with ``pulses`` sent signals in total."""
    k = np.arange(K_MAX + 1)
    c_k, e_k = click_probability(k, ch), error_probability(k, ch)
    sent = rng.multinomial(pulses, [ints.q(g) for g in LABELS])
    sift = {"empty": 1.0, "I": p_X * p_X, "II": p_X}
    stats, truth = {}, {}
    for g, S in zip(LABELS, sent):
        n_k = rng.multinomial(S, _photon_probs(ints.mu(g)))
        d_k = rng.binomial(n_k, c_k)
        err_k = rng.binomial(d_k, e_k)
        x_k = rng.binomial(d_k, sift[g])
        # errors among the X-sifted detections: sampling without replacement
        x_err_k = np.array([rng.hypergeometric(e, d - e, x) if x > 0 else 0
                            for e, d, x in zip(err_k, d_k, x_k)])
        N_g, m_g = int(d_k.sum()), int(x_k.sum())
        R_g = N_g / S if S > 0 else 0.0
        e_X = x_err_k.sum() / m_g if m_g > 0 else 0.5
        stats[g] = IntensityStats(N_g, R_g, e_X, m_g)
        truth[g] = Truth(
            N=N_g,
            Y0=d_k[0] / N_g if N_g else 0.0,
            Y1=d_k[1] / N_g if N_g else 0.0,
            e1=err_k[1] / d_k[1] if d_k[1] else 0.0,
            f1=float(c_k[1]),
        )
    eZ_I = float(stats["I"].e_X)
    obs = DecoyObservables(stats["empty"], stats["I"], stats["II"], eZ_I, p_X)
    return obs, truth
