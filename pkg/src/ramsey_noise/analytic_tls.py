"""Closed-form outcome correlators for qubits coupled to classical two-level fluctuators.

Two independent routes are provided.  The direct route multiplies the
per-TLS factors ``Xi`` (one measurement) and ``xi_k`` (correlated part of a
measurement pair) and sums over TLS subsets.  The characteristic-function
route propagates each TLS through 2x2 transfer matrices.  They agree to
rounding error and are used to check each other.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from ramsey_noise.core import ConfigError, RamseyProtocol, TlsEnsemble, TlsParams, mean_frequency_shift

SUBSET_CAP = 20
_CHUNK_ELEMENTS = 1 << 22


def gamma_from_rates(V, W, dW):
    """``0.5 sqrt(W^2 + 4 i V (dW + i V))`` on the principal branch."""
    V = np.asarray(V, dtype=float)
    return 0.5 * np.sqrt(np.asarray(W, dtype=float) ** 2 - 4 * V**2 + 4j * V * np.asarray(dW, dtype=float))


def gamma_param(tls: TlsParams) -> complex:
    return complex(gamma_from_rates(tls.V, tls.W, tls.dW))


def _sinh_over(g, t):
    """``sinh(g t) / g`` with the removable singularity at ``g = 0`` filled in."""
    g = np.asarray(g, dtype=complex)
    z = g * t
    small = np.abs(z) < 1e-4
    safe = np.where(small, 1.0, g)
    series = t * (1 + z**2 / 6 + z**4 / 120)
    return np.where(small, series, np.sinh(z) / safe)


def _ratio(dW, W):
    W = np.asarray(W, dtype=float)
    dW = np.asarray(dW, dtype=float)
    if np.any((W == 0) & (dW != 0)):
        raise ConfigError("W = 0 requires dW = 0")
    return np.divide(dW, W, out=np.zeros(np.broadcast(dW, W).shape), where=W != 0)


def xi_from_rates(V, W, dW, t):
    """Single-measurement factor ``Xi`` from raw rates; ``W = 0`` is the frozen limit."""
    g = gamma_from_rates(V, W, dW)
    s = _sinh_over(g, t)
    W = np.asarray(W, dtype=float)
    return ((0.5 * W + 1j * np.asarray(V) * _ratio(dW, W)) * s + np.cosh(g * t)) * np.exp(-0.5 * W * t)


def xi_factor(tls: TlsParams, t_R: float) -> complex:
    """``<exp(i theta)>`` for one TLS over a window of length ``t_R``, phase measured from the mean shift."""
    if t_R < 0:
        raise ConfigError("t_R must be non-negative")
    return complex(xi_from_rates(tls.V, tls.W, tls.dW, t_R))


def xi_k_factor(tls: TlsParams, protocol: RamseyProtocol, k):
    """Correlated part of a TLS's contribution to a pair of measurements ``k`` cycles apart.

    Its square reproduces the exact phase covariance of the two windows in the
    weak-coupling limit, which fixes the normalization: the decay envelope is
    ``exp(-k W t_cyc / 2)`` with no extra ``exp(-W t_R / 2)``.
    """
    k = np.asarray(k)
    if np.any(k < 1):
        raise ConfigError("lag k must be >= 1")
    g = gamma_param(tls)
    s = complex(_sinh_over(g, protocol.t_R))
    out = np.asarray(1j * tls.w * tls.V * s * np.exp(-0.5 * k * tls.W * protocol.t_cyc))
    return complex(out) if out.ndim == 0 else out


def _phase_tilde(ensemble: TlsEnsemble, protocol: RamseyProtocol) -> float:
    return protocol.phi_R - mean_frequency_shift(ensemble) * protocol.t_R


def r1_tls(ensemble: TlsEnsemble, protocol: RamseyProtocol) -> float:
    """Exact probability of outcome 1 for any TLS ensemble."""
    product = complex(np.prod([xi_factor(t, protocol.t_R) for t in ensemble])) if len(ensemble) else 1.0
    phase = cmath.exp(1j * _phase_tilde(ensemble, protocol))
    return 0.5 + 0.5 * protocol.coherence * (phase * product).real


def _subset_sum(Xi: np.ndarray, xi: np.ndarray, phase: complex, prune: bool) -> np.ndarray:
    """Sum over nonempty subsets S of ``Re(phase prod_S xi prod_rest Xi)^2``.

    ``Xi`` has shape (N,), ``xi`` has shape (N, K); returns shape (K,).
    """
    n, K = xi.shape
    if not prune:
        prod = np.full((1, K), phase, dtype=complex)
        for j in range(n):
            prod = np.concatenate([prod * Xi[j], prod * xi[j]], axis=0)
        # row 0 is the empty subset
        return np.sum(prod[1:].real ** 2, axis=0)
    out = np.empty(K)
    for col in range(K):
        prod = np.array([phase], dtype=complex)
        mag = np.array([0.0])  # |prod of xi| per row; the empty subset is tagged 0
        empty = np.array([True])
        running = 0.0
        for j in range(n):
            a = abs(xi[j, col])
            new_mag = np.where(empty, a, mag * a)
            prod = np.concatenate([prod * Xi[j], prod * xi[j, col]])
            mag = np.concatenate([mag, new_mag])
            empty = np.concatenate([empty, np.zeros_like(empty)])
            running = max(running, float(new_mag.max(initial=0.0)))
            keep = empty | (mag >= 1e-14 * running)
            prod, mag, empty = prod[keep], mag[keep], empty[keep]
        out[col] = np.sum(prod[~empty].real ** 2)
    return out


def r2_tls_centered(
    ensemble: TlsEnsemble,
    protocol: RamseyProtocol,
    k,
    *,
    cap: int = SUBSET_CAP,
    prune: bool = False,
):
    """Exact centered pair correlator ``r2(k) - r1^2`` by summation over TLS subsets.

    ``k`` may be an integer or an array of lags >= 1.  The cost grows as
    ``2**len(ensemble)``; ensembles above ``cap`` are rejected.
    """
    ks = np.atleast_1d(np.asarray(k))
    if np.any(ks < 1):
        raise ConfigError("lag k must be >= 1")
    n = len(ensemble)
    if n > cap:
        raise ConfigError(
            f"{n} TLSs exceed the subset-enumeration cap of {cap}; estimate the correlator by Monte Carlo instead"
        )
    if n == 0:
        out = np.zeros(ks.shape)
    else:
        Xi = np.array([xi_factor(t, protocol.t_R) for t in ensemble])
        xi = np.array([np.atleast_1d(xi_k_factor(t, protocol, ks)) for t in ensemble])
        phase = cmath.exp(1j * _phase_tilde(ensemble, protocol))
        chunk = max(1, _CHUNK_ELEMENTS >> n)
        out = np.concatenate(
            [_subset_sum(Xi, xi[:, i : i + chunk], phase, prune) for i in range(0, ks.size, chunk)]
        )
        out *= 0.25 * protocol.coherence**2
    return float(out[0]) if np.ndim(k) == 0 else out


def transfer_matrix(tls: TlsParams, alpha_V: float, t: float) -> np.ndarray:
    """Propagator of ``(<e^{i phi}>, <tau_z e^{i phi}>)`` over time ``t`` at coupling ``alpha_V``."""
    if t < 0:
        raise ConfigError("t must be non-negative")
    W, dW = tls.W, tls.dW
    g = complex(gamma_from_rates(alpha_V, W, dW))
    # eigenvalues -W/2 +- g have non-positive real parts; combining the
    # exponentials first keeps long free-evolution gaps finite
    grow = cmath.exp((g - 0.5 * W) * t)
    decay = cmath.exp((-g - 0.5 * W) * t)
    c = 0.5 * (grow + decay)
    if abs(g * t) < 1e-4:
        s = complex(_sinh_over(g, t)) * math.exp(-0.5 * W * t)
    else:
        s = 0.5 * (grow - decay) / g
    return np.array([[0.5 * W * s + c, 1j * alpha_V * s], [(1j * alpha_V + dW) * s, c - 0.5 * W * s]], dtype=complex)


def _stationary_vector(tls: TlsParams) -> np.ndarray:
    return np.array([1.0, tls.dW / tls.W], dtype=complex)


def characteristic_one_time(ensemble: TlsEnsemble, t_R: float) -> complex:
    out = 1.0 + 0j
    for tls in ensemble:
        out *= (transfer_matrix(tls, tls.V, t_R) @ _stationary_vector(tls))[0]
    return complex(out)


def characteristic_two_time(ensemble: TlsEnsemble, protocol: RamseyProtocol, k: int, sign: int) -> complex:
    """Joint characteristic function of two windows ``k`` cycles apart.

    The second window carries coupling ``+V``, the first ``sign * V``.  Between
    them the TLS evolves freely for ``k t_cyc - t_R``.
    """
    if k < 1:
        raise ConfigError("lag k must be >= 1")
    if sign not in (1, -1):
        raise ConfigError("sign must be +1 or -1")
    gap = k * protocol.t_cyc - protocol.t_R
    out = 1.0 + 0j
    for tls in ensemble:
        m = transfer_matrix(tls, tls.V, protocol.t_R) @ transfer_matrix(tls, 0.0, gap)
        m = m @ transfer_matrix(tls, sign * tls.V, protocol.t_R)
        out *= (m @ _stationary_vector(tls))[0]
    return complex(out)


def r1_via_characteristic(ensemble: TlsEnsemble, protocol: RamseyProtocol) -> float:
    chi = characteristic_one_time(ensemble, protocol.t_R)
    return 0.5 + 0.5 * protocol.coherence * (cmath.exp(1j * _phase_tilde(ensemble, protocol)) * chi).real


def r2_via_characteristic(ensemble: TlsEnsemble, protocol: RamseyProtocol, k: int) -> float:
    """Centered pair correlator assembled from one- and two-time characteristic functions."""
    chi = characteristic_one_time(ensemble, protocol.t_R)
    plus = characteristic_two_time(ensemble, protocol, k, 1)
    minus = characteristic_two_time(ensemble, protocol, k, -1)
    phase2 = cmath.exp(2j * _phase_tilde(ensemble, protocol))
    bracket = minus.real - abs(chi) ** 2 + (phase2 * (plus - chi**2)).real
    return 0.125 * protocol.coherence**2 * bracket


def _phase_variances(ensemble: TlsEnsemble, t_R: float) -> np.ndarray:
    """Per-TLS variance of the accumulated phase over one window."""
    V, W01, W10 = ensemble.arrays()
    W = W01 + W10
    w = 2 * np.sqrt(W01 * W10) / W
    x = W * t_R
    return 2 * (w * V / W) ** 2 * (x + np.expm1(-x))


def approx_r1(ensemble: TlsEnsemble, protocol: RamseyProtocol, mode: str) -> float:
    """Limiting forms of ``r1``: ``weak`` coupling, ``short`` Ramsey time, ``strong`` coupling."""
    p = protocol
    if mode == "weak":
        var = float(np.sum(_phase_variances(ensemble, p.t_R)))
        return 0.5 + 0.5 * math.exp(-p.t_R_over_T2 - var / 2) * math.cos(p.phi_R)
    if mode == "short":
        var = sum((t.w * t.V * p.t_R) ** 2 for t in ensemble)
        return 0.5 + 0.5 * math.exp(-p.t_R_over_T2 - var / 2) * math.cos(p.phi_R)
    if mode == "strong":
        prod = 1.0 + 0j
        for t in ensemble:
            prod *= math.exp(-t.W * p.t_R / 2) * complex(math.cos(t.V * p.t_R), t.dW / t.W * math.sin(t.V * p.t_R))
        return 0.5 + 0.5 * p.coherence * (cmath.exp(1j * _phase_tilde(ensemble, p)) * prod).real
    raise ConfigError(f"unknown mode {mode!r}; expected weak, short or strong")


def tls_phase_covariance(tls: TlsParams, protocol: RamseyProtocol, k):
    """Covariance of the phases one TLS imprints on windows ``k >= 1`` cycles apart."""
    W = tls.W
    return (
        (2 * tls.V * tls.w / W) ** 2
        * np.exp(-np.asarray(k) * W * protocol.t_cyc)
        * np.sinh(W * protocol.t_R / 2) ** 2
    )


def approx_r2(ensemble: TlsEnsemble, protocol: RamseyProtocol, k, mode: str):
    """Limiting forms of the centered pair correlator.

    ``weak`` and ``short`` sum single-TLS contributions dressed by the
    dephasing of the others; ``strong_single`` is the one-TLS strong-coupling
    result for a symmetric TLS.
    """
    p = protocol
    k = np.asarray(k)
    pref = 0.25 * p.coherence**2
    if mode == "strong_single":
        if len(ensemble) != 1:
            raise ConfigError("strong_single mode needs exactly one TLS")
        t = ensemble[0]
        out = pref * math.sin(p.phi_R) ** 2 * math.sin(t.V * p.t_R) ** 2 * np.exp(-k * t.W * p.t_cyc)
        return float(out) if out.ndim == 0 else out
    if mode == "weak":
        var = _phase_variances(ensemble, p.t_R)
        cov = [tls_phase_covariance(t, p, k) for t in ensemble]
    elif mode == "short":
        var = np.array([(t.w * t.V * p.t_R) ** 2 for t in ensemble])
        cov = [var[i] * np.exp(-k * t.W * p.t_cyc) for i, t in enumerate(ensemble)]
    else:
        raise ConfigError(f"unknown mode {mode!r}; expected weak, short or strong_single")
    total = np.sum(var)
    out = np.zeros(k.shape)
    for i, t in enumerate(ensemble):
        shift = t.V * t.dW / t.W
        out = out + cov[i] * math.exp(-(total - var[i])) * math.sin(p.phi_R - shift * p.t_R) ** 2
    out = pref * out
    return float(out) if out.ndim == 0 else out


def gaussian_equivalent_correlators(ensemble: TlsEnsemble, protocol: RamseyProtocol, K: int) -> np.ndarray:
    """Phase correlators ``f_0 .. f_K`` of Gaussian noise with the same spectrum as the ensemble."""
    f = np.zeros(K + 1)
    f[0] = float(np.sum(_phase_variances(ensemble, protocol.t_R)))
    lags = np.arange(1, K + 1)
    for tls in ensemble:
        f[1:] += tls_phase_covariance(tls, protocol, lags)
    return f
