import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ramsey_noise import (
    ConfigError,
    OutcomeSeries,
    PhaseCorrelators,
    RamseyProtocol,
    TlsEnsemble,
    TlsParams,
    mean_frequency_shift,
    ramsey_probability,
    tls_ladder,
    tls_stationary,
)
from ramsey_noise.core import asymmetric_tls_ladder

finite = st.floats(-50, 50, allow_nan=False)


def test_probability_full_contrast():
    assert ramsey_probability(0.0, RamseyProtocol(phi_R=0.0)) == pytest.approx(1.0, abs=1e-15)


def test_probability_quadrature_point():
    for t2 in (0.0, 0.3, 2.0):
        p = RamseyProtocol(phi_R=math.pi / 4, t_R_over_T2=t2)
        assert ramsey_probability(math.pi / 4, p) == pytest.approx(0.5, abs=1e-15)


def test_probability_default_working_point():
    assert ramsey_probability(0.0, RamseyProtocol()) == pytest.approx((1 + 1 / math.sqrt(2)) / 2, abs=1e-15)
    assert float(ramsey_probability(0.0, RamseyProtocol())) == pytest.approx(0.8536, abs=5e-5)


@given(theta=finite, phi=finite, t2=st.floats(0, 5))
def test_probability_periodic_and_bounded(theta, phi, t2):
    p = RamseyProtocol(phi_R=phi, t_R_over_T2=t2)
    base = float(ramsey_probability(theta, p))
    assert float(ramsey_probability(theta + 2 * math.pi, p)) == pytest.approx(base, abs=1e-13)
    shifted = RamseyProtocol(phi_R=phi + 2 * math.pi, t_R_over_T2=t2)
    assert float(ramsey_probability(theta, shifted)) == pytest.approx(base, abs=1e-13)
    assert abs(base - 0.5) <= 0.5 * math.exp(-t2) + 1e-15


def test_protocol_validation():
    with pytest.raises(ConfigError):
        RamseyProtocol(t_R=0)
    with pytest.raises(ConfigError):
        RamseyProtocol(t_cyc=0.5)
    with pytest.raises(ConfigError):
        RamseyProtocol(t_R_over_T2=-1)
    with pytest.raises(ConfigError):
        RamseyProtocol(phi_R=float("nan"))


def test_stationary_examples():
    assert tls_stationary(TlsParams(0.3, 0.5, 0.5)) == (0.5, 0.5, 0.0)
    w0, w1, tau = tls_stationary(TlsParams(1.0, 1.0, 2.0))
    assert (w0, w1, tau) == pytest.approx((2 / 3, 1 / 3, 1 / 3), abs=1e-15)
    assert tls_stationary(TlsParams(1.0, 0.0, 1.0)) == (1.0, 0.0, 1.0)


@given(st.floats(0, 10), st.floats(0, 10))
def test_stationary_is_distribution(w01, w10):
    if w01 + w10 == 0:
        with pytest.raises(ConfigError):
            TlsParams(1.0, w01, w10)
        return
    w0, w1, tau = tls_stationary(TlsParams(1.0, w01, w10))
    assert 0 <= w0 <= 1 and 0 <= w1 <= 1
    assert w0 + w1 == pytest.approx(1.0, abs=1e-15)
    assert tau == pytest.approx(w0 - w1, abs=1e-15)


def test_mean_frequency_shift():
    assert mean_frequency_shift(tls_ladder(5, 0.2)) == 0.0
    assert mean_frequency_shift(TlsEnsemble((TlsParams(1.0, 1.0, 2.0),))) == pytest.approx(1 / 3)
    assert mean_frequency_shift(TlsEnsemble()) == 0.0


def test_ladders():
    lad = tls_ladder(3, 0.2, n0=2)
    assert [t.W for t in lad] == pytest.approx([math.exp(-0.75 * n) for n in (3, 4, 5)])
    assert all(t.W01 == t.W10 for t in lad)
    asym = asymmetric_tls_ladder(2, 0.2)
    assert asym[0].W01 == pytest.approx(math.exp(-1.5) / 2)
    assert asym[0].W10 == pytest.approx(math.exp(-0.75) / 2)


def test_ensemble_rejects_foreign_members():
    with pytest.raises(ConfigError):
        TlsEnsemble((1.0,))


def test_phase_correlators_invariants():
    f = PhaseCorrelators([1.0, 0.5, 0.2])
    assert f.K == 2 and f[1] == 0.5
    assert f.is_positive_semidefinite()
    assert not PhaseCorrelators([1.0, 1.0, -1.0]).is_positive_semidefinite()
    with pytest.raises(ConfigError):
        PhaseCorrelators([1.0, 1.5])
    with pytest.raises(ConfigError):
        PhaseCorrelators([-0.1])
    with pytest.raises(ValueError):
        f.f[0] = 3.0


def test_outcome_series_validation():
    s = OutcomeSeries(np.array([0, 1, 1]), 0, 0, RamseyProtocol())
    assert len(s) == 3 and s.bits.dtype == np.uint8
    with pytest.raises(ConfigError):
        OutcomeSeries(np.array([0, 2]), 0, 0, RamseyProtocol())


@settings(max_examples=50)
@given(st.lists(st.floats(0.01, 2), min_size=2, max_size=8))
def test_exponential_correlators_are_valid(rates):
    # a sum of exponentials in the lag is a valid covariance sequence
    k = np.arange(10)
    f = sum(np.exp(-r * k) for r in rates)
    pc = PhaseCorrelators(f)
    assert pc.is_positive_semidefinite()
