"""Statistics of the number of 1 outcomes in blocks of M consecutive measurements."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, signal, stats

from ramsey_noise.core import (
    ConfigError,
    NumericalError,
    RamseyProtocol,
    ResourceCapError,
    TlsEnsemble,
    mean_frequency_shift,
    ramsey_probability,
)

STATIC_TLS_CAP = 25


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    """Probabilities of observing ``m = 0..M`` ones in a block of ``M`` measurements."""

    M: int
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (self.M + 1,):
            raise ConfigError(f"expected {self.M + 1} probabilities, got shape {probs.shape}")
        if np.any(probs < 0) or abs(probs.sum() - 1) > 1e-12:
            raise ConfigError("probabilities must be non-negative and sum to 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def fractions(self) -> np.ndarray:
        """Block averages ``m / M`` at which the probabilities sit."""
        return np.arange(self.M + 1) / self.M

    def mean(self) -> float:
        return float(np.dot(self.fractions, self.probs))

    def std(self) -> float:
        mu = self.mean()
        return math.sqrt(float(np.dot((self.fractions - mu) ** 2, self.probs)))


def _check_M(M: int) -> int:
    if int(M) != M or M < 1:
        raise ConfigError(f"M must be a positive integer, got {M}")
    return int(M)


def binomial_pmf(M: int, p) -> np.ndarray:
    """Binomial probabilities for ``m = 0..M`` with success probability ``p``.

    ``p`` may be an array; the result then has shape ``p.shape + (M + 1,)``.
    """
    p = np.asarray(p, dtype=float)[..., None]
    # boost overflows for p near the smallest normal double; there the pmf is a point mass at 0
    p = np.where(p < 1e-300, 0.0, p)
    return stats.binom.pmf(np.arange(M + 1), M, p)


def _normalized(M: int, probs: np.ndarray, tol: float) -> OutcomeDistribution:
    total = probs.sum()
    if abs(total - 1) > tol:
        raise NumericalError(f"distribution sums to {total!r}, off by more than {tol}")
    return OutcomeDistribution(M, probs / total)


def rho_binomial(M: int, r1: float) -> OutcomeDistribution:
    """Distribution of block counts for uncorrelated outcomes."""
    M = _check_M(M)
    if not 0 <= r1 <= 1:
        raise ConfigError(f"r1 must lie in [0, 1], got {r1}")
    return _normalized(M, binomial_pmf(M, r1), 1e-12)


def static_tls_phases(ensemble: TlsEnsemble, protocol: RamseyProtocol, *, cap: int = STATIC_TLS_CAP):
    """Distinct phases of a frozen ensemble and their stationary probabilities.

    Phases are measured from the mean shift, matching the observable control phase.
    """
    if len(ensemble) > cap:
        raise ResourceCapError(f"{len(ensemble)} frozen TLSs exceed the enumeration cap of {cap}")
    theta = np.zeros(1)
    weight = np.ones(1)
    for t in ensemble:
        w0, w1 = t.W10 / t.W, t.W01 / t.W
        step = t.V * protocol.t_R
        theta = np.concatenate([theta + step, theta - step])
        weight = np.concatenate([weight * w0, weight * w1])
        # merge coinciding phases so identical TLSs cost N + 1, not 2^N
        keys = np.round(theta, 12)
        theta_u, inverse = np.unique(keys, return_inverse=True)
        weight = np.bincount(inverse.ravel(), weights=weight, minlength=theta_u.size)
        theta = theta_u
    keep = weight > 0
    return theta[keep] - mean_frequency_shift(ensemble) * protocol.t_R, weight[keep]


def rho_static_tls(ensemble: TlsEnsemble, protocol: RamseyProtocol, M: int, *, cap: int = STATIC_TLS_CAP) -> OutcomeDistribution:
    """Block-count distribution when every TLS is frozen for the whole block."""
    M = _check_M(M)
    theta, weight = static_tls_phases(ensemble, protocol, cap=cap)
    probs = weight @ binomial_pmf(M, ramsey_probability(theta, protocol))
    return _normalized(M, probs, 1e-10)


def rho_static_gauss(f0: float, protocol: RamseyProtocol, M: int) -> OutcomeDistribution:
    """Block-count distribution when a Gaussian phase of variance ``f0`` is frozen for the whole block."""
    M = _check_M(M)
    if f0 < 0:
        raise ConfigError("f0 must be non-negative")
    if f0 == 0:
        return rho_binomial(M, float(ramsey_probability(0.0, protocol)))
    s = math.sqrt(f0)

    def integrand(x):
        # x is the phase in units of its standard deviation
        return math.exp(-x * x / 2) / math.sqrt(2 * math.pi) * binomial_pmf(M, ramsey_probability(s * x, protocol))

    probs, err = integrate.quad_vec(integrand, -8.0, 8.0, epsabs=1e-14, epsrel=1e-12, points=(0.0,))
    if err > 1e-10:
        raise NumericalError(f"static Gaussian distribution quadrature error {err:.2e}")
    return _normalized(M, np.clip(probs, 0, None), 1e-10)


def variance_predicted(M: int, r1: float, r2_centered) -> float:
    """Variance of the block average ``m / M`` given the centered pair correlator ``r2(k), k = 1, 2, ...``.

    Lags not supplied are taken as zero; lags at or beyond ``M`` are ignored.
    """
    M = _check_M(M)
    r2 = np.asarray(r2_centered, dtype=float).ravel()[: M - 1]
    k = np.arange(1, r2.size + 1)
    return r1 * (1 - r1) / M + 2.0 / M**2 * float(np.dot(M - k, r2))


def total_variation(p, q) -> float:
    p = p.probs if isinstance(p, OutcomeDistribution) else np.asarray(p, dtype=float)
    q = q.probs if isinstance(q, OutcomeDistribution) else np.asarray(q, dtype=float)
    return 0.5 * float(np.abs(p - q).sum())


def distribution_peaks(probs, *, prominence: float) -> np.ndarray:
    """Indices ``m`` of local maxima whose prominence exceeds ``prominence``, edges included."""
    probs = np.asarray(probs.probs if isinstance(probs, OutcomeDistribution) else probs, dtype=float)
    padded = np.concatenate([[0.0], probs, [0.0]])
    peaks, _ = signal.find_peaks(padded, prominence=prominence)
    return peaks - 1
