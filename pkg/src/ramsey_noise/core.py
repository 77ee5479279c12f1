"""Shared domain types and the single-measurement probability map.

Times are measured in units of the Ramsey interval by default, so the
default protocol has ``t_R = 1`` and ``t_cyc = 3``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


class ConfigError(ValueError):
    """Invalid parameters or configuration."""


class ResourceCapError(RuntimeError):
    """A requested computation exceeds a configured resource cap."""


class NumericalError(ArithmeticError):
    """A factorization, quadrature or inversion failed."""


def _finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class RamseyProtocol:
    """Timing and phase of a periodically repeated Ramsey measurement.

    Parameters
    ----------
    t_R : float
        Duration of the free-evolution interval.
    t_cyc : float
        Period of the measurement cycle, same units as ``t_R``.
    phi_R : float
        Control phase in radians.
    t_R_over_T2 : float
        Dimensionless intrinsic decoherence ``t_R / T2``.
    """

    t_R: float = 1.0
    t_cyc: float = 3.0
    phi_R: float = math.pi / 4
    t_R_over_T2: float = 0.0

    def __post_init__(self) -> None:
        for name in ("t_R", "t_cyc", "phi_R", "t_R_over_T2"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        if not self.t_R > 0:
            raise ConfigError(f"t_R must be positive, got {self.t_R}")
        if not self.t_cyc > self.t_R:
            raise ConfigError(f"t_cyc must exceed t_R, got t_cyc={self.t_cyc}, t_R={self.t_R}")
        if self.t_R_over_T2 < 0:
            raise ConfigError(f"t_R_over_T2 must be non-negative, got {self.t_R_over_T2}")

    @property
    def coherence(self) -> float:
        """Intrinsic fringe contrast ``exp(-t_R/T2)``."""
        return math.exp(-self.t_R_over_T2)


@dataclass(frozen=True)
class TlsParams:
    """A classical two-level fluctuator coupled to the qubit frequency.

    The qubit frequency is shifted by ``+V`` in state 0 and ``-V`` in state 1.
    ``W01`` is the rate of 0 -> 1 switching and ``W10`` of 1 -> 0.
    """

    V: float
    W01: float
    W10: float

    def __post_init__(self) -> None:
        for name in ("V", "W01", "W10"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        if self.W01 < 0 or self.W10 < 0:
            raise ConfigError(f"switching rates must be non-negative, got W01={self.W01}, W10={self.W10}")
        if not self.W01 + self.W10 > 0:
            raise ConfigError("W01 + W10 must be positive; use a tiny rate for a frozen fluctuator")

    @property
    def W(self) -> float:
        return self.W01 + self.W10

    @property
    def dW(self) -> float:
        return self.W10 - self.W01

    @property
    def w(self) -> float:
        """Asymmetry weight ``2 sqrt(W01 W10) / W``; equal to 1 for a symmetric TLS."""
        return 2.0 * math.sqrt(self.W01 * self.W10) / self.W

    @classmethod
    def symmetric(cls, V: float, W: float) -> "TlsParams":
        return cls(V, W / 2, W / 2)


@dataclass(frozen=True)
class TlsEnsemble:
    """An ordered, possibly empty, collection of independent TLSs."""

    tls_list: tuple[TlsParams, ...] = ()

    def __post_init__(self) -> None:
        items = tuple(self.tls_list)
        for item in items:
            if not isinstance(item, TlsParams):
                raise ConfigError(f"ensemble members must be TlsParams, got {type(item).__name__}")
        object.__setattr__(self, "tls_list", items)

    def __len__(self) -> int:
        return len(self.tls_list)

    def __iter__(self) -> Iterator[TlsParams]:
        return iter(self.tls_list)

    def __getitem__(self, index: int) -> TlsParams:
        return self.tls_list[index]

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(V, W01, W10)`` as float arrays."""
        V = np.array([t.V for t in self.tls_list], dtype=float)
        W01 = np.array([t.W01 for t in self.tls_list], dtype=float)
        W10 = np.array([t.W10 for t in self.tls_list], dtype=float)
        return V, W01, W10


def tls_ladder(n_tls: int, V: float, *, alpha: float = 0.75, n0: float = 0.0, t_R: float = 1.0) -> TlsEnsemble:
    """Symmetric TLSs with equal coupling and rates ``W_n t_R = exp(-alpha (n + n0))``, n = 1..n_tls."""
    return TlsEnsemble(tuple(TlsParams.symmetric(V, math.exp(-alpha * (n + n0)) / t_R) for n in range(1, n_tls + 1)))


def asymmetric_tls_ladder(n_tls: int, V: float, *, alpha: float = 0.75, t_R: float = 1.0) -> TlsEnsemble:
    """TLSs with ``W01 t_R = exp(-alpha (n+1)) / 2`` and ``W10 t_R = exp(-alpha n) / 2``, n = 1..n_tls."""
    return TlsEnsemble(
        tuple(
            TlsParams(V, math.exp(-alpha * (n + 1)) / (2 * t_R), math.exp(-alpha * n) / (2 * t_R))
            for n in range(1, n_tls + 1)
        )
    )


# Gaussian noise spectra.  Each variant exposes ``spectrum(omega)``, the
# classical (even) power spectrum of the qubit frequency fluctuations.


@dataclass(frozen=True)
class White:
    D_w: float

    def __post_init__(self) -> None:
        if _finite("D_w", self.D_w) < 0:
            raise ConfigError("D_w must be non-negative")

    def spectrum(self, omega):
        return np.full_like(np.asarray(omega, dtype=float), float(self.D_w))


@dataclass(frozen=True)
class ExpCorrelated:
    """Lorentzian spectrum ``D_corr / (1 + omega^2 tau_corr^2)``."""

    D_corr: float
    tau_corr: float

    def __post_init__(self) -> None:
        if _finite("D_corr", self.D_corr) < 0:
            raise ConfigError("D_corr must be non-negative")
        if not _finite("tau_corr", self.tau_corr) > 0:
            raise ConfigError("tau_corr must be positive")

    def spectrum(self, omega):
        omega = np.asarray(omega, dtype=float)
        return self.D_corr / (1.0 + (omega * self.tau_corr) ** 2)


@dataclass(frozen=True)
class Colored:
    """Damped-oscillator spectrum ``D / ((omega^2 - omega_clr^2)^2 + 4 Gamma^2 omega^2)``."""

    D_clr: float
    omega_clr: float
    Gamma_clr: float

    def __post_init__(self) -> None:
        if _finite("D_clr", self.D_clr) < 0:
            raise ConfigError("D_clr must be non-negative")
        if not _finite("omega_clr", self.omega_clr) > 0 or not _finite("Gamma_clr", self.Gamma_clr) > 0:
            raise ConfigError("omega_clr and Gamma_clr must be positive")

    def spectrum(self, omega):
        omega = np.asarray(omega, dtype=float)
        return self.D_clr / ((omega**2 - self.omega_clr**2) ** 2 + 4 * self.Gamma_clr**2 * omega**2)


@dataclass(frozen=True)
class OneOverF:
    """``D_fl / |omega|`` with a soft low-frequency cutoff at ``omega_min``.

    The spectrum is ``(2/pi) D_fl arctan(|omega|/omega_min) / |omega|``, a
    uniform superposition of Lorentzians with rates above ``omega_min``.
    """

    D_fl: float
    omega_min: float

    def __post_init__(self) -> None:
        if _finite("D_fl", self.D_fl) < 0:
            raise ConfigError("D_fl must be non-negative")
        if not _finite("omega_min", self.omega_min) > 0:
            raise ConfigError("omega_min must be positive")

    def spectrum(self, omega):
        a = np.abs(np.asarray(omega, dtype=float))
        with np.errstate(divide="ignore", invalid="ignore"):
            s = 2.0 / np.pi * self.D_fl * np.arctan(a / self.omega_min) / a
        return np.where(a > 0, s, 2.0 * self.D_fl / (np.pi * self.omega_min))


@dataclass(frozen=True)
class Tabulated:
    """Spectrum given on a grid, linearly interpolated in ``|omega|`` and zero beyond it."""

    omega: tuple[float, ...]
    S: tuple[float, ...]
    _half: tuple[np.ndarray, np.ndarray] = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        omega = np.asarray(self.omega, dtype=float)
        S = np.asarray(self.S, dtype=float)
        if omega.ndim != 1 or omega.shape != S.shape or omega.size < 2:
            raise ConfigError("tabulated spectrum needs matching 1-D grids with at least two points")
        if not (np.all(np.isfinite(omega)) and np.all(np.isfinite(S))):
            raise ConfigError("tabulated spectrum must be finite")
        if np.any(S < 0):
            raise ConfigError("tabulated spectrum must be non-negative")
        order = np.argsort(omega)
        omega, S = omega[order], S[order]
        if np.any(np.diff(omega) <= 0):
            raise ConfigError("tabulated frequencies must be distinct")
        neg = omega < 0
        if np.any(neg):
            pos = ~neg
            mirrored = np.interp(-omega[neg], omega[pos], S[pos], left=np.nan, right=np.nan)
            if not np.allclose(mirrored, S[neg], rtol=1e-9, atol=1e-300, equal_nan=False):
                raise ConfigError("tabulated spectrum must be even in omega")
            omega, S = omega[~neg], S[~neg]
        object.__setattr__(self, "omega", tuple(float(x) for x in self.omega))
        object.__setattr__(self, "S", tuple(float(x) for x in self.S))
        object.__setattr__(self, "_half", (omega, S))

    def spectrum(self, omega):
        grid, S = self._half
        return np.interp(np.abs(np.asarray(omega, dtype=float)), grid, S, left=S[0], right=0.0)


GaussianNoiseSpec = White | ExpCorrelated | Colored | OneOverF | Tabulated


@dataclass(frozen=True, eq=False)
class PhaseCorrelators:
    """Covariances ``f_k`` of the phases accumulated in cycles ``n`` and ``n + k``."""

    f: np.ndarray

    def __post_init__(self) -> None:
        f = np.array(self.f, dtype=float).ravel()
        if f.size == 0 or not np.all(np.isfinite(f)):
            raise ConfigError("phase correlators must be a non-empty finite sequence")
        if f[0] < 0:
            raise ConfigError(f"f_0 must be non-negative, got {f[0]}")
        if np.any(np.abs(f[1:]) > f[0] * (1 + 1e-12)):
            raise ConfigError("|f_k| must not exceed f_0")
        f.setflags(write=False)
        object.__setattr__(self, "f", f)

    @property
    def K(self) -> int:
        return self.f.size - 1

    def __getitem__(self, k: int) -> float:
        return float(self.f[k])

    def is_positive_semidefinite(self) -> bool:
        """Cholesky test of the Toeplitz matrix with ``1e-12 f_0`` diagonal regularization."""
        from scipy.linalg import toeplitz

        matrix = toeplitz(self.f) + 1e-12 * self.f[0] * np.eye(self.f.size)
        try:
            np.linalg.cholesky(matrix)
        except np.linalg.LinAlgError:
            return False
        return True


@dataclass(frozen=True, eq=False)
class OutcomeSeries:
    """Binary outcomes of one repetition of ``N`` measurement cycles."""

    bits: np.ndarray
    seed: int
    rep: int
    protocol: RamseyProtocol

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits)
        if bits.ndim != 1 or (bits.size and (bits.min() < 0 or bits.max() > 1)):
            raise ConfigError("outcome bits must be a 1-D sequence of 0/1")
        object.__setattr__(self, "bits", bits.astype(np.uint8, copy=False))

    def __len__(self) -> int:
        return self.bits.size


@dataclass(frozen=True)
class CorrelatorEstimate:
    value: float
    stderr: float
    n_samples: int


def ramsey_probability(theta, protocol: RamseyProtocol):
    """Probability of outcome 1 after accumulating extra phase ``theta``."""
    return 0.5 * (1.0 + protocol.coherence * np.cos(protocol.phi_R + np.asarray(theta, dtype=float)))


def tls_stationary(tls: TlsParams) -> tuple[float, float, float]:
    """Stationary populations ``(w0, w1)`` and mean ``tau_z`` of a TLS."""
    W = tls.W
    if not W > 0:
        raise ConfigError("stationary distribution undefined for W = 0")
    return tls.W10 / W, tls.W01 / W, tls.dW / W


def mean_frequency_shift(ensemble: TlsEnsemble | Sequence[TlsParams]) -> float:
    """Mean TLS-induced qubit frequency shift ``sum V dW / W``."""
    return float(sum(t.V * t.dW / t.W for t in ensemble))
