"""Statistics of simulated or measured outcome records."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ramsey_noise.acquisition import OutcomeDistribution
from ramsey_noise.analytic_gaussian import infer_f_from_measurements, r3_gauss_centered
from ramsey_noise.core import ConfigError, CorrelatorEstimate, OutcomeSeries, RamseyProtocol

_MIN_GROUPS = 10


def _matrix(series) -> np.ndarray:
    if isinstance(series, np.ndarray):
        x = np.atleast_2d(series)
    else:
        series = list(series)
        if not series:
            raise ConfigError("no outcome series given")
        lengths = {len(s.bits if isinstance(s, OutcomeSeries) else s) for s in series}
        if len(lengths) != 1:
            raise ConfigError(f"outcome series have different lengths {sorted(lengths)}")
        x = np.stack([np.asarray(s.bits if isinstance(s, OutcomeSeries) else s) for s in series])
    if x.size == 0:
        raise ConfigError("no outcome series given")
    return x.astype(float)


def _groups(x: np.ndarray) -> np.ndarray:
    """Independent-ish groups for the jackknife: repetitions, or contiguous batches of a single record."""
    if x.shape[0] > 1:
        return x
    n = x.shape[1] // _MIN_GROUPS
    if n == 0:
        raise ConfigError("a single record needs at least 10 cycles for error estimates")
    return x[0, : n * _MIN_GROUPS].reshape(_MIN_GROUPS, n)


@dataclass(frozen=True)
class CorrelatorSet:
    r1: CorrelatorEstimate
    r2: list[CorrelatorEstimate]
    r3: dict[tuple[int, int], CorrelatorEstimate] = field(default_factory=dict)

    def r2_values(self) -> np.ndarray:
        return np.array([e.value for e in self.r2])

    def r2_stderr(self) -> np.ndarray:
        return np.array([e.stderr for e in self.r2])


def estimate_correlators(
    series,
    k_max: int,
    triple_lags: Sequence[tuple[int, int]] = (),
    *,
    center: str = "global",
    group_size: int = 1,
) -> CorrelatorSet:
    """Mean outcome, centered pair correlators for lags ``1..k_max`` and centered triple correlators.

    Centering uses the mean of the whole dataset (``center="global"``) or of
    each repetition (``center="repetition"``).  Standard errors come from a
    jackknife over repetitions, or over ten contiguous batches when only one
    record is given.  ``group_size`` consecutive repetitions form one jackknife
    group, as needed for antithetic pairs.
    """
    x = _groups(_matrix(series))
    if group_size < 1 or x.shape[0] % group_size:
        raise ConfigError(f"{x.shape[0]} records cannot be split into groups of {group_size}")
    if group_size > 1 and center != "global":
        raise ConfigError("grouped jackknife needs global centering")
    n_groups, n = x.shape
    l_max = max([k_max] + [max(k, l) for k, l in triple_lags])
    if n < l_max + 1:
        raise ConfigError(f"records of length {n} are too short for lag {l_max}")
    if center not in ("global", "repetition"):
        raise ConfigError(f"unknown centering {center!r}")
    lags = np.arange(1, k_max + 1)
    triples = list(triple_lags)

    # Per-group raw moment sums; the centered statistics are polynomials in them,
    # so the jackknife only needs leave-one-group-out totals.
    def pair_sums(row):
        s1 = row.sum()
        out = np.empty((4, k_max))
        for j, k in enumerate(lags):
            a, b = row[:-k], row[k:]
            out[:, j] = (a @ b, a.sum(), b.sum(), n - k)
        return s1, out

    def triple_sums(row):
        out = np.empty((8, len(triples)))
        for j, (k, l) in enumerate(triples):
            length = n - l
            a, b, c = row[:length], row[k : k + length], row[l : l + length]
            out[:, j] = (a @ (b * c), a @ b, a @ c, b @ c, a.sum(), b.sum(), c.sum(), length)
        return out

    s1 = np.zeros(n_groups)
    pairs = np.zeros((n_groups, 4, k_max))
    trip = np.zeros((n_groups, 8, len(triples)))
    for g in range(n_groups):
        s1[g], pairs[g] = pair_sums(x[g])
        if triples:
            trip[g] = triple_sums(x[g])

    if center == "repetition":
        return _per_repetition(s1, pairs, trip, n, lags, triples)

    n_groups //= group_size
    s1 = s1.reshape(n_groups, group_size).sum(axis=1)
    pairs = pairs.reshape(n_groups, group_size, *pairs.shape[1:]).sum(axis=1)
    trip = trip.reshape(n_groups, group_size, *trip.shape[1:]).sum(axis=1)
    counts = np.full(n_groups, float(n * group_size))
    pair_n = pairs[:, 3, :]
    trip_n = trip[:, 7, :] if triples else np.zeros((n_groups, 0))
    packed = np.concatenate(
        [s1[:, None], pairs[:, :3, :].reshape(n_groups, -1), trip[:, :7, :].reshape(n_groups, -1)], axis=1
    )
    total_pair_n = pair_n.sum(axis=0)
    total_trip_n = trip_n.sum(axis=0)

    def stat(mean_vec, pair_count, trip_count):
        r1 = mean_vec[0]
        p = mean_vec[1 : 1 + 3 * k_max].reshape(3, k_max) / pair_count
        ab, a, b = p
        r2 = ab - r1 * (a + b) + r1 * r1
        t = mean_vec[1 + 3 * k_max :].reshape(7, len(triples)) / trip_count if triples else np.zeros((7, 0))
        abc, ab_, ac, bc, a3, b3, c3 = t
        r3 = abc - r1 * (ab_ + ac + bc) + r1 * r1 * (a3 + b3 + c3) - r1**3
        return np.concatenate([[r1], r2, r3])

    g = n_groups
    total = packed.sum(axis=0)
    n_total = counts.sum()
    full = stat(total / n_total, total_pair_n / n_total, total_trip_n / n_total if triples else 1.0)
    if g > 1:
        loo = []
        for i in range(g):
            nt = n_total - counts[i]
            loo.append(
                stat(
                    (total - packed[i]) / nt,
                    (total_pair_n - pair_n[i]) / nt,
                    (total_trip_n - trip_n[i]) / nt if triples else 1.0,
                )
            )
        loo = np.stack(loo)
        err = np.sqrt((g - 1) / g * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))
    else:
        err = np.full_like(full, np.nan)
    return _pack_result(full, err, n_groups * n, total_pair_n, total_trip_n, k_max, triples)


def _pack_result(full, err, n_cycles, pair_n, trip_n, k_max, triples) -> CorrelatorSet:
    r1 = CorrelatorEstimate(float(full[0]), float(err[0]), int(n_cycles))
    r2 = [CorrelatorEstimate(float(full[1 + j]), float(err[1 + j]), int(pair_n[j])) for j in range(k_max)]
    r3 = {
        tuple(kl): CorrelatorEstimate(float(full[1 + k_max + j]), float(err[1 + k_max + j]), int(trip_n[j]))
        for j, kl in enumerate(triples)
    }
    return CorrelatorSet(r1, r2, r3)


def _per_repetition(s1, pairs, trip, n, lags, triples) -> CorrelatorSet:
    g = s1.size
    r1 = s1 / n
    ab, a, b, cnt = pairs.transpose(1, 0, 2)
    r2 = (ab - r1[:, None] * (a + b)) / cnt + r1[:, None] ** 2
    cols = [r1[:, None], r2]
    if triples:
        abc, ab3, ac, bc, a3, b3, c3, cnt3 = trip.transpose(1, 0, 2)
        m = r1[:, None]
        r3 = (abc - m * (ab3 + ac + bc) + m * m * (a3 + b3 + c3)) / cnt3 - m**3
        cols.append(r3)
    per = np.concatenate(cols, axis=1)
    full = per.mean(axis=0)
    err = per.std(axis=0, ddof=1) / math.sqrt(g) if g > 1 else np.full_like(full, np.nan)
    pair_n = pairs[:, 3, :].sum(axis=0)
    trip_n = trip[:, 7, :].sum(axis=0) if triples else np.zeros(0)
    return _pack_result(full, err, g * n, pair_n, trip_n, len(lags), triples)


def block_histogram(series, M: int) -> OutcomeDistribution:
    """Histogram of the number of ones in disjoint blocks of ``M`` consecutive outcomes."""
    counts = block_counts(series, M)
    return OutcomeDistribution(M, np.bincount(counts, minlength=M + 1) / counts.size)


def block_counts(series, M: int) -> np.ndarray:
    """Number of ones in each disjoint block of ``M`` outcomes, blocks of all records concatenated."""
    if int(M) != M or M < 1:
        raise ConfigError(f"M must be a positive integer, got {M}")
    x = _matrix(series)
    blocks = x.shape[1] // M
    if blocks == 0:
        raise ConfigError(f"records of length {x.shape[1]} are shorter than M = {M}")
    return x[:, : blocks * M].reshape(-1, M).sum(axis=1).astype(np.int64)


class BlockHistogramAccumulator:
    """Streaming version of :func:`block_histogram` for records that do not fit in memory together."""

    def __init__(self, M: int) -> None:
        self.M = int(M)
        self.counts = np.zeros(self.M + 1, dtype=np.int64)

    def add(self, series) -> None:
        self.counts += np.bincount(block_counts(series, self.M), minlength=self.M + 1)

    @property
    def n_blocks(self) -> int:
        return int(self.counts.sum())

    def result(self) -> OutcomeDistribution:
        if self.n_blocks == 0:
            raise ConfigError("no blocks accumulated")
        return OutcomeDistribution(self.M, self.counts / self.n_blocks)


def block_std_sqrtM(series_or_counts, M: int, *, counts: bool = False) -> float:
    """``sqrt(M)`` times the standard deviation of the block average ``m / M``."""
    c = np.asarray(series_or_counts) if counts else block_counts(series_or_counts, M)
    return math.sqrt(M) * float(np.std(c / M))


@dataclass(frozen=True, eq=False)
class SpectrumEstimate:
    """Repetition-averaged power ``R(m) = |sum_n x_n exp(2 pi i m n / N)|^2`` over bins ``m = 0..N-1``."""

    R: np.ndarray
    n_reps: int
    convention: str = "forward sum with exp(+2 pi i m n / N), no 1/N"

    @property
    def N(self) -> int:
        return self.R.size


def _dft_plus(x: np.ndarray) -> np.ndarray:
    # sum_n x_n e^{+2 pi i m n / N} is the complex conjugate of numpy's forward FFT for real x
    return np.conj(np.fft.fft(x, axis=-1))


def outcome_power_spectrum(series) -> SpectrumEstimate:
    """Periodogram of the outcome records, averaged over repetitions."""
    x = _matrix(series)
    power = np.abs(_dft_plus(x)) ** 2
    return SpectrumEstimate(power.mean(axis=0), x.shape[0])


def outcome_power_at(series, m: float) -> tuple[float, float]:
    """Power at a possibly fractional bin ``m``, averaged over repetitions, with its standard error."""
    x = _matrix(series)
    n = np.arange(x.shape[1])
    power = np.abs(x @ np.exp(2j * np.pi * m * n / x.shape[1])) ** 2
    err = power.std(ddof=1) / math.sqrt(power.size) if power.size > 1 else math.nan
    return float(power.mean()), float(err)


def modulation_peak_theory(A_p: float, protocol: RamseyProtocol, N: int, omega_p: float, m, sigma_cyc: float = 0.0):
    """Power of the outcome spectrum near the modulation line ``2 pi m / N ~ omega_p t_cyc``.

    Without jitter the line has the finite-record shape
    ``(1 - cos N Delta) / Delta^2`` with ``Delta`` the detuning from the line.
    With Gaussian period jitter of spread ``sigma_cyc`` the phase of the
    modulation diffuses at rate ``Delta_c = omega_p^2 sigma_cyc^2 / 2`` per
    cycle, which broadens the line into a Lorentzian-like shape whose height
    grows only linearly in ``N`` once ``N Delta_c >> 1``.
    """
    m = np.asarray(m, dtype=float)
    pref = A_p**2 * math.sin(protocol.phi_R) ** 2 * protocol.coherence**2 / 8
    delta = 2 * np.pi * m / N - omega_p * protocol.t_cyc
    if sigma_cyc == 0:
        small = np.abs(N * delta) < 1e-6
        d = np.where(small, 1.0, delta)
        out = np.where(small, N**2 / 2.0, (1 - np.cos(N * d)) / d**2)
        return pref * out
    dc = omega_p**2 * sigma_cyc**2 / 2
    z = dc - 1j * delta
    # continuum limit of sum_{n, n'} exp(i (n - n') delta - dc |n - n'|), halved
    core = N / z - (1 - np.exp(-N * z)) / z**2
    return pref * core.real


def noise_power_spectrum(paths, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Periodogram of sampled frequency paths as a two-sided spectral density.

    Returns ``(omega, S)`` for the non-negative frequencies, with
    ``S = dt |DFT(D)|^2 / N_path`` averaged over paths, which estimates the
    spectral density ``S(omega) = integral <D(t) D(0)> e^{i omega t} dt``.
    """
    d = np.atleast_2d(np.asarray(paths, dtype=float))
    n = d.shape[1]
    power = np.abs(np.fft.rfft(d, axis=1)) ** 2
    omega = 2 * np.pi * np.fft.rfftfreq(n, dt)
    return omega, dt * power.mean(axis=0) / n


def log_binned(omega: np.ndarray, S: np.ndarray, bins_per_decade: int = 8) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Average a spectrum in logarithmic frequency bins; returns centers, means and standard errors."""
    keep = omega > 0
    omega, S = omega[keep], S[keep]
    edges = 10 ** np.arange(math.floor(math.log10(omega[0])), math.log10(omega[-1]) + 1 / bins_per_decade, 1 / bins_per_decade)
    idx = np.digitize(omega, edges)
    centers, means, errs = [], [], []
    for i in np.unique(idx):
        sel = idx == i
        if sel.sum() < 2:
            continue
        centers.append(math.exp(np.log(omega[sel]).mean()))
        means.append(S[sel].mean())
        errs.append(S[sel].std(ddof=1) / math.sqrt(sel.sum()))
    return np.array(centers), np.array(means), np.array(errs)


def gaussianity_test(series, protocol: RamseyProtocol, k: int, l: int, *, k_max: int | None = None) -> tuple[float, float, float]:
    """Difference between measured ``r3(k, l)`` and its Gaussian prediction from measured ``r1, r2``.

    Returns ``(difference, stderr, z)``; the stderr is a jackknife over
    repetitions of the whole difference, so it includes the uncertainty of the
    inferred phase correlators.  Phase correlators are inferred without the
    ``|f_k| <= f_0`` check, since data from non-Gaussian noise may violate it.
    """
    k_max = max(l, k_max or l)
    x = _groups(_matrix(series))
    g = x.shape[0]

    def diff(rows):
        est = estimate_correlators(rows, k_max, [(k, l)])
        f = infer_f_from_measurements(est.r1.value, est.r2_values(), protocol, strict=False)
        return est.r3[(k, l)].value - float(r3_gauss_centered(f, protocol, k, l))

    full = diff(x)
    loo = np.array([diff(np.delete(x, i, axis=0)) for i in range(g)])
    err = math.sqrt((g - 1) / g * float(((loo - loo.mean()) ** 2).sum()))
    return full, err, full / err if err > 0 else math.inf
