"""Monte-Carlo generation of repeated-Ramsey outcome records.

Every random draw comes from a counter-based Philox stream keyed by
``(seed, repetition, source, index)``, so a repetition's record does not
depend on how many repetitions are run or on how they are scheduled across
threads.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy import signal
from scipy.linalg import toeplitz

from ramsey_noise.analytic_gaussian import phase_correlators
from ramsey_noise.core import (
    ConfigError,
    ExpCorrelated,
    NumericalError,
    OneOverF,
    OutcomeSeries,
    RamseyProtocol,
    ResourceCapError,
    TlsEnsemble,
    White,
    mean_frequency_shift,
    ramsey_probability,
)

STEP_CAP = 1e10

# stream sources
_OUTCOMES, _TLS, _GAUSS, _MOD_PHASE, _JITTER = range(5)


def stream(seed: int, rep: int, source: int, index: int = 0) -> np.random.Generator:
    """Independent generator for one (repetition, source, index) triple."""
    seq = np.random.SeedSequence(int(seed), spawn_key=(int(rep), int(source), int(index)))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class Modulation:
    """Sinusoidal frequency modulation ``a_p cos(omega_p t + phase)``; ``phase=None`` draws it per repetition."""

    a_p: float
    omega_p: float
    phase: float | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.a_p) and math.isfinite(self.omega_p)) or self.omega_p <= 0:
            raise ConfigError("modulation needs finite a_p and positive omega_p")

    def amplitude(self, protocol: RamseyProtocol) -> float:
        """Amplitude of the phase modulation after integrating over one Ramsey window."""
        return 2 * self.a_p / self.omega_p * math.sin(self.omega_p * protocol.t_R / 2)


@dataclass(frozen=True)
class NoiseModel:
    """Independent noise sources whose phases add: TLSs, Gaussian noise, a modulation."""

    tls: TlsEnsemble = field(default_factory=TlsEnsemble)
    gaussian: object | None = None
    modulation: Modulation | None = None


@dataclass(frozen=True)
class SimulationConfig:
    N: int = 100_000
    R: int = 30
    seed: int = 0
    dt: float = 0.1
    k_corr: int | None = None
    sigma_cyc: float = 0.0
    threads: int = 1
    step_cap: float = STEP_CAP
    antithetic: bool = False

    def __post_init__(self) -> None:
        if int(self.N) != self.N or self.N < 1 or int(self.R) != self.R or self.R < 1:
            raise ConfigError("N and R must be positive integers")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.k_corr is not None and self.k_corr < 1:
            raise ConfigError("k_corr must be >= 1")
        if self.sigma_cyc < 0:
            raise ConfigError("sigma_cyc must be non-negative")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.antithetic and self.R % 2:
            raise ConfigError("antithetic sampling needs an even number of repetitions")


# Telegraph noise on the time grid.


def _switch_probabilities(tls, dt: float) -> tuple[float, float]:
    p01, p10 = tls.W01 * dt, tls.W10 * dt
    worst = max(p01, p10)
    if worst > 0.5:
        raise ConfigError(f"switching probability per step W*dt = {worst:.3g} exceeds 0.5; reduce dt")
    if worst > 0.1:
        warnings.warn(f"switching probability per step W*dt = {worst:.3g} exceeds 0.1", RuntimeWarning, stacklevel=3)
    return p01, p10


def _geometric(u: np.ndarray, p: float) -> np.ndarray:
    """Number of steps up to and including the first switch, by inverting the geometric CDF."""
    if p <= 0:
        return np.full(u.shape, np.inf)
    if p >= 1:
        return np.ones(u.shape)
    return np.maximum(1.0, np.ceil(np.log(u) / math.log1p(-p)))


def _runs(first_state: int, hold, total: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Alternating run lengths covering ``total``; ``hold[s](u)`` maps uniforms to holding lengths in state s."""
    lengths, states = [], []
    covered, state = 0.0, first_state
    batch = 64
    while covered < total:
        u = 1.0 - rng.random(batch)  # in (0, 1]
        seq = np.empty(batch)
        seq[0::2] = hold[state](u[0::2])
        seq[1::2] = hold[1 - state](u[1::2])
        cum = covered + np.cumsum(seq)
        stop = int(np.searchsorted(cum, total, side="left")) + 1
        lengths.append(seq[:stop])
        run_states = np.empty(batch, dtype=np.int8)
        run_states[0::2] = state
        run_states[1::2] = 1 - state
        states.append(run_states[:stop])
        covered = float(cum[min(stop, batch) - 1])
        if stop % 2 == 1:
            state = 1 - state
        batch = min(batch * 2, 1 << 20)
    return np.concatenate(lengths), np.concatenate(states)


def _integrate_runs(lengths: np.ndarray, states: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Integral of tau_z (+1 in state 0, -1 in state 1) from 0 up to each point."""
    sign = np.where(states == 0, 1.0, -1.0)
    finite = np.where(np.isfinite(lengths), lengths, points.max() + 1.0)
    starts = np.concatenate([[0.0], np.cumsum(finite)[:-1]])
    base = np.concatenate([[0.0], np.cumsum(sign * finite)[:-1]])
    idx = np.searchsorted(starts, points, side="right") - 1
    return base[idx] + sign[idx] * (points - starts[idx])


def _window_steps(protocol: RamseyProtocol, dt: float) -> tuple[float, int]:
    per_cycle = protocol.t_cyc / dt
    per_window = math.ceil(protocol.t_R / dt - 1e-9)
    return per_cycle, per_window


def sample_tls_phases(ensemble: TlsEnsemble, protocol: RamseyProtocol, N: int, dt: float, seed: int, rep: int) -> np.ndarray:
    """Phases ``theta_k = sum_n V_n dt sum_window d_n(m)`` from telegraph processes on a grid of step ``dt``.

    Each TLS starts from its stationary distribution and leaves state 0 (1)
    with probability ``W01 dt`` (``W10 dt``) per step.  The phases include the
    mean shift of the qubit frequency.
    """
    per_cycle, per_window = _window_steps(protocol, dt)
    starts = np.floor(np.arange(N) * per_cycle + 1e-9)
    ends = starts + per_window
    total = float(ends[-1])
    theta = np.zeros(N)
    for n, tls in enumerate(ensemble):
        rng = stream(seed, rep, _TLS, n)
        p01, p10 = _switch_probabilities(tls, dt)
        first = 0 if rng.random() < tls.W10 / tls.W else 1
        lengths, states = _runs(first, (lambda u, p=p01: _geometric(u, p), lambda u, p=p10: _geometric(u, p)), total, rng)
        theta += tls.V * dt * (_integrate_runs(lengths, states, ends) - _integrate_runs(lengths, states, starts))
    return theta


def sample_tls_phases_exact(ensemble: TlsEnsemble, protocol: RamseyProtocol, N: int, seed: int, rep: int) -> np.ndarray:
    """Continuous-time telegraph phases with exponential holding times; reference for the grid sampler."""
    starts = np.arange(N) * protocol.t_cyc
    ends = starts + protocol.t_R
    total = float(ends[-1])
    theta = np.zeros(N)
    for n, tls in enumerate(ensemble):
        rng = stream(seed, rep, _TLS, n)
        first = 0 if rng.random() < tls.W10 / tls.W else 1

        def hold(rate):
            return lambda u: -np.log(u) / rate if rate > 0 else np.full(u.shape, np.inf)

        lengths, states = _runs(first, (hold(tls.W01), hold(tls.W10)), total, rng)
        theta += tls.V * (_integrate_runs(lengths, states, ends) - _integrate_runs(lengths, states, starts))
    return theta


def tls_frequency_path(ensemble: TlsEnsemble, n_steps: int, dt: float, seed: int, rep: int) -> np.ndarray:
    """Instantaneous TLS frequency shift ``sum_n V_n d_n(m)`` on ``n_steps`` grid points."""
    path = np.zeros(n_steps)
    for n, tls in enumerate(ensemble):
        rng = stream(seed, rep, _TLS, n)
        p01, p10 = _switch_probabilities(tls, dt)
        first = 0 if rng.random() < tls.W10 / tls.W else 1
        lengths, states = _runs(first, (lambda u, p=p01: _geometric(u, p), lambda u, p=p10: _geometric(u, p)), n_steps, rng)
        lengths = np.minimum(lengths, n_steps).astype(np.int64)
        d = np.repeat(np.where(states == 0, 1.0, -1.0), lengths)[:n_steps]
        path += tls.V * d
    return path


# Gaussian noise.


def default_k_corr(spec, protocol: RamseyProtocol) -> int:
    """Window of past phases the Gaussian sampler conditions on."""
    if isinstance(spec, White):
        return 1
    if isinstance(spec, ExpCorrelated):
        return 10
    if isinstance(spec, OneOverF):
        return 400
    scale = getattr(spec, "Gamma_clr", None)
    if scale:
        return int(min(2000, math.ceil(8 / (scale * protocol.t_cyc))))
    return 100


@dataclass(frozen=True, eq=False)
class GaussianSampler:
    """Conditional-Gaussian phase sampler built from ``f_0 .. f_p``.

    Each phase is drawn from its distribution conditioned on the previous
    ``p`` phases, i.e. an autoregressive recursion with Yule-Walker
    coefficients ``ar`` and innovation variance ``innovation``; the first
    ``p + 1`` phases are drawn jointly through ``chol``.
    """

    ar: np.ndarray
    innovation: float
    chol: np.ndarray

    @property
    def order(self) -> int:
        return self.ar.size


def _levinson(r: np.ndarray) -> tuple[np.ndarray, float]:
    a = np.zeros(0)
    err = r[0]
    for m in range(1, r.size):
        refl = (r[m] - np.dot(a, r[m - 1 : 0 : -1])) / err
        a = np.concatenate([a - refl * a[::-1], [refl]])
        err *= 1 - refl * refl
        if not err > 0:
            raise np.linalg.LinAlgError("autocovariance is not positive definite")
    return a, err


def build_gaussian_sampler(f, k_corr: int) -> GaussianSampler:
    """Factorize the windowed covariance once; retries with ``1e-12 f_0`` diagonal regularization."""
    f = np.asarray(f.f if hasattr(f, "f") else f, dtype=float)
    if f.size < k_corr + 1:
        raise ConfigError(f"need phase correlators up to lag {k_corr}, got {f.size - 1}")
    r = f[: k_corr + 1].copy()
    if r[0] == 0:
        return GaussianSampler(np.zeros(k_corr), 0.0, np.zeros((k_corr + 1, k_corr + 1)))
    for bump in (0.0, 1e-12 * r[0]):
        r[0] = f[0] + bump
        try:
            ar, innovation = _levinson(r)
            chol = np.linalg.cholesky(toeplitz(r))
        except np.linalg.LinAlgError:
            continue
        return GaussianSampler(ar, float(innovation), chol)
    raise NumericalError(f"phase covariance window of size {k_corr + 1} is not positive definite")


def conditional_from_precision(f, k_corr: int) -> tuple[np.ndarray, float]:
    """Coefficients and variance of the last phase given the previous ``k_corr``, from the windowed precision matrix.

    Returns ``(c, var)`` with ``E[theta_k | past] = sum_j c_j theta_{k-j}``.
    """
    f = np.asarray(f.f if hasattr(f, "f") else f, dtype=float)
    psi = np.linalg.inv(toeplitz(f[: k_corr + 1]))
    last = psi[-1]
    return -last[-2::-1] / last[-1], 1.0 / last[-1]


def sample_gaussian_phases(sampler: GaussianSampler, N: int, rng: np.random.Generator) -> np.ndarray:
    """Stationary Gaussian phase sequence of length ``N``."""
    z = rng.standard_normal(N)
    head = min(N, sampler.order + 1)
    theta = np.empty(N)
    theta[:head] = sampler.chol[:head, :head] @ z[:head]
    if N > head:
        b = [math.sqrt(sampler.innovation)]
        a = np.concatenate([[1.0], -sampler.ar])
        zi = signal.lfiltic(b, a, theta[head - 1 :: -1][: sampler.order])
        theta[head:], _ = signal.lfilter(b, a, z[head:], zi=zi)
    return theta


# Modulation and outcomes.


def cycle_times(protocol: RamseyProtocol, N: int, sigma_cyc: float, rng: np.random.Generator | None) -> np.ndarray:
    """Start times of the measurement windows; periods are Gaussian with spread ``sigma_cyc``."""
    if sigma_cyc == 0:
        return np.arange(N) * protocol.t_cyc
    periods = protocol.t_cyc + sigma_cyc * rng.standard_normal(N - 1)
    return np.concatenate([[0.0], np.cumsum(periods)])


def inject_modulation(theta: np.ndarray, modulation: Modulation, protocol: RamseyProtocol, times: np.ndarray, phase: float) -> np.ndarray:
    """Add the phase a sinusoidal frequency modulation imprints on each window."""
    w = modulation.omega_p
    return theta + modulation.amplitude(protocol) * np.cos(w * times + phase + w * protocol.t_R / 2)


def sample_outcomes(theta: np.ndarray, protocol: RamseyProtocol, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli outcomes with probabilities ``p(theta_k)``."""
    return (rng.random(theta.size) < ramsey_probability(theta, protocol)).astype(np.uint8)


@dataclass(frozen=True)
class _Prepared:
    noise: NoiseModel
    protocol: RamseyProtocol
    config: SimulationConfig
    sampler: GaussianSampler | None


def _prepare(noise: NoiseModel, protocol: RamseyProtocol, config: SimulationConfig) -> _Prepared:
    if config.dt > protocol.t_R / 5 * (1 + 1e-12):
        raise ConfigError(f"dt = {config.dt} exceeds t_R / 5")
    if config.antithetic:
        if any(t.W01 != t.W10 for t in noise.tls):
            raise ConfigError("antithetic sampling needs symmetric TLSs")
        if noise.modulation is not None and noise.modulation.phase is not None:
            raise ConfigError("antithetic sampling needs a random modulation phase")
    if len(noise.tls):
        steps = config.N * config.R * protocol.t_cyc / config.dt
        if steps > config.step_cap:
            raise ResourceCapError(f"{steps:.3g} telegraph steps exceed the cap of {config.step_cap:.3g}")
        for tls in noise.tls:
            _switch_probabilities(tls, config.dt)
    sampler = None
    if noise.gaussian is not None:
        k_corr = config.k_corr or default_k_corr(noise.gaussian, protocol)
        k_corr = min(k_corr, max(config.N - 1, 1))
        sampler = build_gaussian_sampler(phase_correlators(noise.gaussian, protocol, k_corr), k_corr)
    return _Prepared(noise, protocol, config, sampler)


def _phases(prep: _Prepared, rep: int) -> np.ndarray:
    noise, protocol, cfg = prep.noise, prep.protocol, prep.config
    if cfg.antithetic and rep % 2:
        # the partner repetition sees the mirrored noise path, which is equally likely
        return -_phases(prep, rep - 1)
    theta = np.zeros(cfg.N)
    if len(noise.tls):
        raw = sample_tls_phases(noise.tls, protocol, cfg.N, cfg.dt, cfg.seed, rep)
        theta += raw - mean_frequency_shift(noise.tls) * protocol.t_R
    if prep.sampler is not None:
        theta += sample_gaussian_phases(prep.sampler, cfg.N, stream(cfg.seed, rep, _GAUSS))
    if noise.modulation is not None:
        mod = noise.modulation
        phase = mod.phase if mod.phase is not None else stream(cfg.seed, rep, _MOD_PHASE).uniform(0, 2 * math.pi)
        jitter = stream(cfg.seed, rep, _JITTER) if cfg.sigma_cyc > 0 else None
        times = cycle_times(protocol, cfg.N, cfg.sigma_cyc, jitter)
        theta = inject_modulation(theta, mod, protocol, times, phase)
    return theta


def simulate_phases(noise: NoiseModel, protocol: RamseyProtocol, config: SimulationConfig, rep: int) -> np.ndarray:
    """Total phase sequence of one repetition, measured from the mean TLS shift."""
    return _phases(_prepare(noise, protocol, config), rep)


def _one(prep: _Prepared, rep: int) -> OutcomeSeries:
    theta = _phases(prep, rep)
    bits = sample_outcomes(theta, prep.protocol, stream(prep.config.seed, rep, _OUTCOMES))
    return OutcomeSeries(bits, prep.config.seed, rep, prep.protocol)


def iter_experiment(noise: NoiseModel, protocol: RamseyProtocol, config: SimulationConfig) -> Iterator[OutcomeSeries]:
    """Yield the outcome record of each repetition in order."""
    prep = _prepare(noise, protocol, config)
    if config.threads == 1:
        for rep in range(config.R):
            yield _one(prep, rep)
        return
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        yield from pool.map(lambda rep: _one(prep, rep), range(config.R))


def run_experiment(noise: NoiseModel, protocol: RamseyProtocol, config: SimulationConfig) -> list[OutcomeSeries]:
    """``R`` repetitions of ``N`` measurement cycles.

    Repetitions are independent unless ``config.antithetic`` is set; then
    repetitions ``2j`` and ``2j + 1`` share a noise path with opposite sign
    (outcome draws stay independent), and estimates should treat each pair as
    one jackknife group.
    """
    return list(iter_experiment(noise, protocol, config))
