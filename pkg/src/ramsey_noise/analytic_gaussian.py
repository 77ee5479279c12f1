"""Phase correlators of Gaussian frequency noise and the outcome correlators they imply.

For Gaussian noise every outcome statistic depends only on the phase
covariances ``f_k`` between measurement windows ``k`` cycles apart, which in
turn follow from the noise power spectrum.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import replace
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from ramsey_noise.core import (
    Colored,
    ConfigError,
    ExpCorrelated,
    NumericalError,
    OneOverF,
    PhaseCorrelators,
    RamseyProtocol,
    Tabulated,
    TlsEnsemble,
    White,
)

EULER_GAMMA = 0.5772156649015329


# Exponential and hyperbolic integrals.  scipy's Cephes-based routines are
# accurate to a few ulp over the whole range used here.


def ei(x):
    """Exponential integral ``Ei(x)``."""
    return special.expi(x)


def shi(x):
    return special.shichi(x)[0]


def chi(x):
    return special.shichi(x)[1]


def ei_quadrature(x: float) -> float:
    """``Ei(x)`` for ``x < 0`` as ``-int_{-x}^inf e^{-t}/t dt``; reference for testing."""
    if not x < 0:
        raise ConfigError("quadrature reference only covers x < 0")
    value, _ = integrate.quad(lambda t: math.exp(-t) / t, -x, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    return -value


# Closed forms.


def _exp_correlated(spec: ExpCorrelated, protocol: RamseyProtocol, k: np.ndarray) -> np.ndarray:
    D, tau, tR = spec.D_corr, spec.tau_corr, protocol.t_R
    x = tR / tau
    if x < 1e-3:
        f0_over_tau = x**2 / 2 - x**3 / 6 + x**4 / 24 - x**5 / 120
    else:
        f0_over_tau = x + math.expm1(-x)
    cosh_m1 = 2 * math.sinh(x / 2) ** 2
    return np.where(k == 0, D * tau * f0_over_tau, D * tau * np.exp(-k * protocol.t_cyc / tau) * cosh_m1)


def colored_phase(spec: Colored) -> float:
    w, g = spec.omega_clr, spec.Gamma_clr
    return 0.5 * math.atan2(2 * g * math.sqrt(w * w - g * g), w * w - 2 * g * g)


def _colored(spec: Colored, protocol: RamseyProtocol, k: np.ndarray, check_regime: bool) -> np.ndarray:
    w, g, tR = spec.omega_clr, spec.Gamma_clr, protocol.t_R
    if check_regime and not (math.sqrt(2) * g < w and w * tR <= 0.1):
        raise ConfigError(
            "colored-noise closed form needs sqrt(2) Gamma < omega_clr and omega_clr t_R << 1 "
            f"(got Gamma={g}, omega_clr={w}); use method='quadrature' or check_regime=False"
        )
    if not g < w:
        raise ConfigError("colored-noise closed form needs Gamma_clr < omega_clr")
    phi = colored_phase(spec)
    D = spec.D_clr
    t = k * protocol.t_cyc
    f0 = D * tR**2 / (4 * w**3 * math.sin(phi))
    fk = D * tR**2 / (2 * w**3 * math.sin(2 * phi)) * np.exp(-t * w * math.sin(phi)) * np.cos(t * w * math.cos(phi) - phi)
    return np.where(k == 0, f0, fk)


def _one_over_f(spec: OneOverF, protocol: RamseyProtocol, k: np.ndarray) -> np.ndarray:
    D, tR = spec.D_fl, protocol.t_R
    b = spec.omega_min * tR
    out = np.empty(k.shape)
    zero = k == 0
    if np.any(zero):
        # -1/b^2 + 2/b - (b-1) e^{-b}/b^2 regrouped so that nothing of order
        # 1/b^2 is cancelled numerically; shi - chi = E1.
        em1 = math.expm1(-b)
        head = ((b + em1) - b * em1) / b**2
        out[zero] = D * tR**2 / math.pi * (head - chi(b) + shi(b))
    if np.any(~zero):
        a = k[~zero] * protocol.t_cyc / tR
        ab = a * b
        cosh_m1 = 2 * math.sinh(b / 2) ** 2
        bracket = (
            2 * np.exp(-ab) * ((1 - ab) * cosh_m1 + b * math.sinh(b)) / b**2
            + 2 * a**2 * ei(-ab)
            - (a + 1) ** 2 * ei(-ab - b)
            - (a - 1) ** 2 * ei(b - ab)
        )
        out[~zero] = D * tR**2 / (2 * math.pi) * bracket
    return out


def _closed_form(spec, protocol: RamseyProtocol, k: np.ndarray, check_regime: bool) -> np.ndarray:
    if isinstance(spec, White):
        return np.where(k == 0, spec.D_w * protocol.t_R, 0.0)
    if isinstance(spec, ExpCorrelated):
        return _exp_correlated(spec, protocol, k)
    if isinstance(spec, Colored):
        return _colored(spec, protocol, k, check_regime)
    if isinstance(spec, OneOverF):
        return _one_over_f(spec, protocol, k)
    raise ConfigError(f"no closed form for {type(spec).__name__}")


def spectral_scales(spec) -> list[float]:
    """Characteristic frequencies of a spectrum, used to place quadrature breakpoints."""
    if isinstance(spec, ExpCorrelated):
        return [1 / spec.tau_corr]
    if isinstance(spec, Colored):
        return [spec.omega_clr, spec.Gamma_clr]
    if isinstance(spec, OneOverF):
        return [spec.omega_min]
    if isinstance(spec, Tabulated):
        grid = spec._half[0]
        positive = grid[grid > 0]
        return [float(positive.min()), float(grid.max())] if positive.size else [float(grid.max())]
    return []


def phase_correlator(spec, protocol: RamseyProtocol, k, *, method: str = "auto", check_regime: bool = True):
    """Covariance ``f_k`` of the phases accumulated in windows ``k`` cycles apart.

    ``method='auto'`` uses the closed form where one exists and quadrature of
    the spectrum for tabulated noise; ``'closed'`` and ``'quadrature'`` force
    a route.
    """
    ks = np.asarray(k)
    if np.any(ks < 0):
        raise ConfigError("lag k must be >= 0")
    if method == "auto":
        method = "quadrature" if isinstance(spec, Tabulated) else "closed"
    if method == "closed":
        out = _closed_form(spec, protocol, ks.astype(float), check_regime)
    elif method == "quadrature":
        scales = spectral_scales(spec)
        # interpolation nodes of a tabulated spectrum are kinks; integrate between them
        kinks = spec._half[0] if isinstance(spec, Tabulated) else ()
        S = _scalar_spectrum(spec)

        def quad(kk, atol=0.0):
            return phase_correlator_quadrature(S, protocol, kk, scales=scales, breakpoints=kinks, atol=atol)

        # |f_k| <= f_0, so errors far below f_0 are acceptable at any lag
        atol = 1e-12 * abs(quad(0)) if np.any(ks > 0) else 0.0
        out = np.array([quad(int(kk), atol) for kk in ks.ravel()]).reshape(ks.shape)
    else:
        raise ConfigError(f"unknown method {method!r}")
    return float(out) if out.ndim == 0 else out


def _scalar_spectrum(spec):
    """Pure-float version of ``spec.spectrum``; quadrature calls it tens of thousands of times."""
    if isinstance(spec, White):
        return lambda w: spec.D_w
    if isinstance(spec, ExpCorrelated):
        D, tau = spec.D_corr, spec.tau_corr
        return lambda w: D / (1.0 + (w * tau) ** 2)
    if isinstance(spec, Colored):
        D, w0, g = spec.D_clr, spec.omega_clr, spec.Gamma_clr
        return lambda w: D / ((w * w - w0 * w0) ** 2 + 4 * g * g * w * w)
    if isinstance(spec, OneOverF):
        c, wm = 2.0 / math.pi * spec.D_fl, spec.omega_min
        return lambda w: c * math.atan(w / wm) / w if w > 0 else c / wm
    return lambda w: float(spec.spectrum(w))


def phase_correlator_quadrature(
    spectrum,
    protocol: RamseyProtocol,
    k: int,
    *,
    scales: list[float] | None = None,
    breakpoints=(),
    epsrel: float = 1e-11,
    atol: float = 0.0,
) -> float:
    """``(1/pi) int S(omega) cos(omega k t_cyc) (1 - cos omega t_R) / omega^2 d omega`` by adaptive quadrature.

    The positive half-line is cut geometrically around the spectral scales,
    the Ramsey time and the lag; finite pieces use QUADPACK's cosine-weighted
    rule and the tail is split into pure cosine terms handled by its Fourier
    integrator.  ``breakpoints`` adds cuts where the spectrum is not smooth.
    The result is accepted when its error estimate is below ``atol`` or small
    relative to the value.
    """
    if k < 0:
        raise ConfigError("lag k must be >= 0")
    tR = protocol.t_R
    a = k * protocol.t_cyc
    marks = [1 / tR] + list(scales or [])
    if a > 0:
        marks.append(1 / a)
    lo, hi = min(marks) * 1e-3, max(marks) * 1e3
    edges = np.geomspace(lo, hi, max(8, int(4 * math.log10(hi / lo)) + 1))
    kinks = np.asarray(breakpoints, dtype=float)
    edges = np.union1d(edges, kinks[(kinks > lo) & (kinks < hi)])

    def h(w):
        if w == 0:
            return float(spectrum(w)) * tR * tR / 2
        return float(spectrum(w)) * 2 * math.sin(w * tR / 2) ** 2 / (w * w)

    total, err, magnitude = 0.0, 0.0, 0.0
    pieces = [(0.0, lo)] + list(zip(edges[:-1], edges[1:]))
    with warnings.catch_warnings():
        # Roundoff warnings on pieces that are already at machine precision are
        # expected; convergence is judged from the accumulated error estimate.
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for x0, x1 in pieces:
            if a > 0:
                val, e = integrate.quad(h, x0, x1, weight="cos", wvar=a, epsabs=0, epsrel=epsrel, limit=400)
            else:
                val, e = integrate.quad(h, x0, x1, epsabs=0, epsrel=epsrel, limit=400)
            total += val
            err += e
            magnitude += abs(val)

        def h0(w):
            return float(spectrum(w)) / w**2

        for coef, freq in ((1.0, a), (-0.5, a + tR), (-0.5, abs(a - tR))):
            if freq == 0:
                val, e = integrate.quad(h0, hi, np.inf, epsabs=0, epsrel=epsrel, limit=400)
            else:
                val, e = integrate.quad(h0, hi, np.inf, weight="cos", wvar=freq, epsabs=1e-16, limlst=200, limit=400)
            total += coef * val
            err += abs(coef) * e
            magnitude += abs(coef * val)
    # Strongly oscillating integrands cancel to values far below the size of
    # their pieces, so the error budget is set against both.
    if not np.isfinite(total) or err > 1e-8 * abs(total) + 1e-12 * magnitude + atol * math.pi / 2:
        raise NumericalError(
            f"phase-correlator quadrature for k={k} reached only {err:.2e} absolute accuracy (value {total:.6e})"
        )
    return 2.0 / math.pi * total


@lru_cache(maxsize=64)
def _cached_correlators(spec, protocol: RamseyProtocol, K: int, method: str, check_regime: bool) -> PhaseCorrelators:
    return PhaseCorrelators(phase_correlator(spec, protocol, np.arange(K + 1), method=method, check_regime=check_regime))


def phase_correlators(
    spec, protocol: RamseyProtocol, K: int, *, method: str = "auto", check_regime: bool = True
) -> PhaseCorrelators:
    """``f_0 .. f_K`` for a noise spectrum, cached per (spec, protocol, K)."""
    return _cached_correlators(spec, protocol, int(K), method, check_regime)


def scale_to_f0(spec, protocol: RamseyProtocol, f0: float):
    """Return ``spec`` with its intensity rescaled so that the single-window phase variance equals ``f0``."""
    field_name = {White: "D_w", ExpCorrelated: "D_corr", Colored: "D_clr", OneOverF: "D_fl"}.get(type(spec))
    if field_name is None:
        raise ConfigError(f"cannot rescale {type(spec).__name__}")
    current = phase_correlator(spec, protocol, 0, check_regime=False)
    if not current > 0:
        raise ConfigError("spectrum has zero intensity")
    return replace(spec, **{field_name: getattr(spec, field_name) * f0 / current})


def log_approx_f_k(spec: OneOverF, protocol: RamseyProtocol, k):
    """Logarithmic intermediate-lag form of the 1/f phase correlator."""
    k = np.asarray(k, dtype=float)
    return spec.D_fl * protocol.t_R**2 / math.pi * (-EULER_GAMMA - np.log(k * spec.omega_min * protocol.t_cyc))


def one_over_f_large_lag(spec: OneOverF, protocol: RamseyProtocol, k):
    """Asymptote of the 1/f phase correlator for ``k omega_min t_cyc >> 1``."""
    x = np.asarray(k, dtype=float) * spec.omega_min * protocol.t_cyc
    return spec.D_fl * protocol.t_R**2 / (math.pi * x) * np.exp(-x)


# Outcome correlators.


def _f_array(f) -> np.ndarray:
    return f.f if isinstance(f, PhaseCorrelators) else np.asarray(f, dtype=float)


def r1_gauss(f0: float, protocol: RamseyProtocol) -> float:
    if f0 < 0:
        raise ConfigError("f0 must be non-negative")
    return 0.5 * (1 + protocol.coherence * math.exp(-f0 / 2) * math.cos(protocol.phi_R))


def r2_gauss_centered(f, protocol: RamseyProtocol, k):
    fa = _f_array(f)
    k = np.asarray(k)
    if np.any(k < 1) or np.any(k > fa.size - 1):
        raise ConfigError("lag k must lie in 1..K")
    fk = fa[k]
    c2 = math.cos(2 * protocol.phi_R)
    out = 0.125 * protocol.coherence**2 * math.exp(-fa[0]) * (np.expm1(fk) + c2 * np.expm1(-fk))
    return float(out) if out.ndim == 0 else out


def r3_gauss_centered(f, protocol: RamseyProtocol, k, l):
    """Centered three-time correlator for windows at cycles ``0 < k < l``."""
    fa = _f_array(f)
    k, l = np.broadcast_arrays(np.asarray(k), np.asarray(l))
    if np.any(k < 1) or np.any(l <= k) or np.any(l > fa.size - 1):
        raise ConfigError("lags must satisfy 1 <= k < l <= K")
    fs = (fa[k], fa[l], fa[l - k])
    total = fs[0] + fs[1] + fs[2]
    phi = protocol.phi_R
    cos3 = np.exp(-total) + 2 - sum(np.exp(-x) for x in fs)
    cos1 = sum(np.exp(total - 2 * x) for x in fs) + 6 - sum(2 * np.exp(x) + np.exp(-x) for x in fs)
    pref = math.exp(-1.5 * fa[0] - 3 * protocol.t_R_over_T2) / 32
    out = pref * (math.cos(3 * phi) * cos3 + math.cos(phi) * cos1)
    return float(out) if out.ndim == 0 else out


def r3_gauss_weak(f, protocol: RamseyProtocol, k: int, l: int) -> float:
    """Leading weak-noise form of the centered three-time correlator."""
    fa = _f_array(f)
    fk, fl, fm = fa[k], fa[l], fa[l - k]
    phi = protocol.phi_R
    return (
        -0.125
        * math.exp(-1.5 * fa[0] - 3 * protocol.t_R_over_T2)
        * (fk * fl + fk * fm + fl * fm)
        * math.cos(phi)
        * math.sin(phi) ** 2
    )


def infer_f_from_measurements(r1_meas: float, r2_meas, protocol: RamseyProtocol, *, strict: bool = True):
    """Invert measured ``r1`` and centered ``r2(k), k = 1..K`` into phase correlators.

    With ``strict=False`` values violating ``|f_k| <= f_0`` are kept and a
    plain array is returned; this is what a Gaussian fit to non-Gaussian data
    produces, and it still feeds the three-time prediction.
    """
    p = protocol
    contrast = (2 * r1_meas - 1) / (p.coherence * math.cos(p.phi_R))
    if not 0 < contrast <= 1 + 1e-12:
        raise NumericalError(
            f"r1 = {r1_meas} lies outside the invertible range (1/2, p(0)] for phi_R = {p.phi_R}"
        )
    f0 = max(0.0, -2 * math.log(contrast))
    r2 = np.atleast_1d(np.asarray(r2_meas, dtype=float))
    c = math.cos(2 * p.phi_R)
    R = 8 * r2 * math.exp(f0) / p.coherence**2
    B = 1 + c + R
    disc = B * B - 4 * c
    if np.any(disc < 0):
        bad = int(np.argmax(disc < 0)) + 1
        raise NumericalError(f"centered r2 at lag {bad} is outside the invertible range")
    root = np.sqrt(disc)
    y_hi = (B + root) / 2
    with np.errstate(divide="ignore"):
        f_hi = np.log(y_hi)
        y_lo = np.where(c > 0, c / y_hi, np.nan)
        f_lo = np.log(y_lo)
    tol = 1e-9 * max(f0, 1e-300)
    use_lo = (np.abs(f_hi) > f0 + tol) & (np.abs(f_lo) <= f0 + tol)
    fk = np.where(use_lo, f_lo, f_hi)
    if not strict:
        if np.any(~np.isfinite(fk)):
            raise NumericalError("centered r2 outside the invertible range")
        return np.concatenate([[f0], fk])
    if np.any(np.abs(fk) > f0 + tol) or np.any(~np.isfinite(fk)):
        bad = int(np.argmax((np.abs(fk) > f0 + tol) | ~np.isfinite(fk))) + 1
        raise NumericalError(f"inferred |f_{bad}| exceeds f_0 = {f0}; measurements are not consistent with Gaussian noise")
    fk = np.clip(fk, -f0, f0)
    return PhaseCorrelators(np.concatenate([[f0], fk]))


def gaussianity_score(r3_meas: float, stderr: float, f_inferred, protocol: RamseyProtocol, k: int, l: int) -> float:
    """z-score of a measured centered three-time correlator against the Gaussian prediction."""
    if not stderr > 0:
        raise ConfigError("stderr must be positive")
    return (r3_meas - r3_gauss_centered(f_inferred, protocol, k, l)) / stderr


def tls_spectrum_theory(ensemble: TlsEnsemble, omega):
    """Frequency-noise power spectrum of a TLS ensemble: a sum of Lorentzians."""
    omega = np.asarray(omega, dtype=float)
    out = np.zeros(omega.shape)
    for t in ensemble:
        out = out + 2 * (t.w * t.V) ** 2 * t.W / (t.W**2 + omega**2)
    return out
