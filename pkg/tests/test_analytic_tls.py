import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ramsey_noise import ConfigError, RamseyProtocol, TlsEnsemble, TlsParams, ramsey_probability, tls_ladder
from ramsey_noise import analytic_tls as at
from ramsey_noise.analytic_gaussian import r2_gauss_centered
from ramsey_noise.core import asymmetric_tls_ladder

P = RamseyProtocol()

rate = st.floats(1e-4, 5.0)
coupling = st.floats(-3.0, 3.0)
tls_strategy = st.builds(TlsParams, coupling, rate, rate)


def test_gamma_examples():
    assert at.gamma_param(TlsParams(0.0, 0.3, 0.5)) == pytest.approx(0.4)
    assert at.gamma_from_rates(1.0, 0.0, 0.0) == pytest.approx(1j)
    assert at.gamma_param(TlsParams(1.0, 0.5, 0.5)) == pytest.approx(1j * math.sqrt(3) / 2)


def test_xi_factor_limits():
    assert at.xi_factor(TlsParams(0.0, 0.3, 0.2), 1.0) == pytest.approx(1.0)
    frozen = at.xi_factor(TlsParams.symmetric(0.2, 1e-12), 1.0)
    assert frozen == pytest.approx(math.cos(0.2), abs=1e-10)
    tls = TlsParams.symmetric(0.2, math.exp(-0.75))
    assert abs(at.xi_factor(tls, 1.0) - at.characteristic_one_time(TlsEnsemble((tls,)), 1.0)) < 1e-12


def test_xi_k_limits():
    assert at.xi_k_factor(TlsParams(0.0, 0.3, 0.2), P, 3) == 0
    assert abs(at.xi_k_factor(TlsParams.symmetric(0.5, 0.2), P, 2000)) < 1e-100
    V, W = 0.75, 1e-9
    xk = at.xi_k_factor(TlsParams.symmetric(V, W), P, 5)
    assert abs(xk) ** 2 == pytest.approx(math.sin(V) ** 2 * math.exp(-5 * W * 3), rel=1e-8)


@given(tls_strategy, st.floats(0.01, 3))
def test_xi_invariant_under_gamma_branch_flip(tls, t):
    g = at.gamma_param(tls)
    for gg in (g, -g):
        s = np.sinh(gg * t) / gg if abs(gg) > 1e-12 else t
        xi = ((0.5 * tls.W + 1j * tls.V * tls.dW / tls.W) * s + np.cosh(gg * t)) * math.exp(-0.5 * tls.W * t)
        assert xi == pytest.approx(at.xi_factor(tls, t), abs=1e-12)


def test_strong_coupling_xi_asymptote():
    for W in (1e-2, 1e-3, 1e-4):
        tls = TlsParams(50.0, 0.3 * W, 0.7 * W)
        expected = math.exp(-W / 2) * complex(math.cos(50.0), 0.4 * math.sin(50.0))
        assert abs(at.xi_factor(tls, 1.0) - expected) < 20 * W


def test_r1_examples():
    assert at.r1_tls(TlsEnsemble(), P) == pytest.approx(float(ramsey_probability(0.0, P)))
    # weak coupling: difference to the Gaussian form shrinks faster than V^2
    ens = lambda V: TlsEnsemble((TlsParams.symmetric(V, 2.0),))
    d1 = abs(at.r1_tls(ens(0.1), P) - at.approx_r1(ens(0.1), P, "weak"))
    d2 = abs(at.r1_tls(ens(0.05), P) - at.approx_r1(ens(0.05), P, "weak"))
    assert d2 < d1 / 8


def test_r2_examples():
    zero = TlsEnsemble((TlsParams(0.0, 0.3, 0.4), TlsParams(0.0, 1.0, 1.0)))
    assert np.all(at.r2_tls_centered(zero, P, np.arange(1, 5)) == 0)
    V, W = 0.75, 1e-8
    single = TlsEnsemble((TlsParams.symmetric(V, W),))
    for k in (1, 5, 40):
        expected = 0.25 * math.sin(P.phi_R) ** 2 * math.sin(V) ** 2 * math.exp(-k * W * 3)
        assert at.r2_tls_centered(single, P, k) == pytest.approx(expected, rel=1e-6)
        assert at.approx_r2(single, P, k, "strong_single") == pytest.approx(expected, rel=1e-6)


def test_single_tls_matches_characteristic_route():
    tls = TlsEnsemble((TlsParams(0.6, 0.2, 0.9),))
    for k in (1, 3, 10):
        assert at.r2_tls_centered(tls, P, k) == pytest.approx(at.r2_via_characteristic(tls, P, k), abs=1e-12)


def test_approx_r1_modes():
    n, V = 4, 0.01
    ens = TlsEnsemble(tuple(TlsParams.symmetric(V, 1e-3) for _ in range(n)))
    expected = 0.5 + 0.5 * math.exp(-n * V**2 / 2) * math.cos(P.phi_R)
    assert at.approx_r1(ens, P, "short") == pytest.approx(expected, abs=1e-15)
    assert at.approx_r1(TlsEnsemble((TlsParams(0.0, 1, 1),)), P, "weak") == pytest.approx(float(ramsey_probability(0, P)))
    strong = TlsEnsemble(tuple(TlsParams.symmetric(1.3, 1e-9) for _ in range(3)))
    assert at.approx_r1(strong, P, "strong") - 0.5 == pytest.approx(0.5 * math.cos(P.phi_R) * math.cos(1.3) ** 3, rel=1e-6)
    with pytest.raises(ConfigError):
        at.approx_r1(strong, P, "bogus")


def test_approx_r2_hand_value():
    p = RamseyProtocol(phi_R=math.pi / 2)
    tls = TlsEnsemble((TlsParams.symmetric(math.pi / 2, 0.001),))
    assert at.approx_r2(tls, p, 1, "strong_single") == pytest.approx(0.25 * math.exp(-0.003), rel=1e-14)
    assert np.all(at.approx_r2(TlsEnsemble((TlsParams(0.0, 1, 1),)), P, np.arange(1, 4), "weak") == 0)


def test_short_time_approximation_vs_exact():
    # First order in the summed phase covariance; for this ladder that is ~0.3,
    # which leaves up to ~14% deviation at the shortest lags.
    ens = tls_ladder(10, 0.2)
    k = np.arange(1, 51)
    exact = at.r2_tls_centered(ens, P, k)
    short = at.approx_r2(ens, P, k, "short")
    assert np.max(np.abs(short / exact - 1)) < 0.15
    assert abs(short[-1] / exact[-1] - 1) < 0.05


def test_transfer_matrix_properties():
    tls = TlsParams(0.7, 0.3, 1.1)
    assert np.allclose(at.transfer_matrix(tls, 0.7, 0.0), np.eye(2), atol=1e-15)
    free = at.transfer_matrix(tls, 0.0, 2.0)
    assert free[0, 1] == 0
    assert free[0, 0] == pytest.approx(1.0)


@settings(max_examples=200)
@given(coupling, rate, rate, st.floats(0.0, 5.0), st.sampled_from([-1, 0, 1]))
def test_transfer_matrix_determinant(V, w01, w10, t, sign):
    tls = TlsParams(V, w01, w10)
    det = np.linalg.det(at.transfer_matrix(tls, sign * V, t))
    assert abs(det - math.exp(-tls.W * t)) < 1e-12


@settings(max_examples=1000)
@given(tls_strategy, st.floats(0.0, 5.0))
def test_characteristic_bounded(tls, t):
    assert abs(at.characteristic_one_time(TlsEnsemble((tls,)), t)) <= 1 + 1e-12


def test_two_time_limits():
    zero = TlsEnsemble((TlsParams(0.0, 0.2, 0.4),))
    for s in (1, -1):
        assert at.characteristic_two_time(zero, P, 2, s) == pytest.approx(1.0)
    tls = TlsParams(0.4, 0.3, 0.5)
    ens = TlsEnsemble((tls,))
    sym = TlsParams.symmetric(0.4, 0.8)
    Xi = at.xi_factor(sym, P.t_R)
    for k in (1, 4):
        plus = at.characteristic_two_time(TlsEnsemble((sym,)), P, k, 1)
        assert plus == pytest.approx(Xi**2 + at.xi_k_factor(sym, P, k) ** 2, abs=1e-12)
    far = 4000
    assert at.characteristic_two_time(ens, P, far, 1) == pytest.approx(at.xi_factor(tls, 1.0) ** 2, abs=1e-12)
    assert at.characteristic_two_time(ens, P, far, -1) == pytest.approx(abs(at.xi_factor(tls, 1.0)) ** 2, abs=1e-12)


def test_empty_ensemble_routes():
    assert at.characteristic_one_time(TlsEnsemble(), 1.0) == 1
    assert at.r2_via_characteristic(TlsEnsemble(), P, 3) == 0


def test_strong_single_limit_of_oracle():
    ens = TlsEnsemble((TlsParams.symmetric(0.75, 1e-7),))
    assert at.r2_via_characteristic(ens, P, 2) == pytest.approx(at.approx_r2(ens, P, 2, "strong_single"), rel=1e-5)


ensembles = st.lists(tls_strategy, min_size=0, max_size=6).map(lambda xs: TlsEnsemble(tuple(xs)))
protocols = st.builds(RamseyProtocol, st.just(1.0), st.floats(1.5, 6.0), st.floats(-3.2, 3.2), st.floats(0, 1))


@settings(max_examples=60, deadline=None)
@given(ensembles, protocols)
def test_r2_nonnegative_and_bounded_by_decay(ens, p):
    k = np.arange(1, 30)
    r2 = at.r2_tls_centered(ens, p, k)
    assert np.all(r2 >= -1e-15)
    if len(ens):
        w_min = min(t.W for t in ens)
        # each subset term is bounded by the product of |xi_k|^2, itself <= (V s)^2 exp(-k W t_cyc)
        bound = 0.25 * (2 ** len(ens)) * np.exp(-k * w_min * p.t_cyc) * max(1.0, max(abs(t.V) for t in ens) * 10) ** (2 * len(ens))
        assert np.all(r2 <= bound)


def test_subset_cap_and_pruning():
    with pytest.raises(ConfigError):
        at.r2_tls_centered(tls_ladder(21, 0.1), P, 1)
    ens = tls_ladder(12, 0.2)
    k = np.arange(1, 40)
    assert np.allclose(at.r2_tls_centered(ens, P, k, prune=True), at.r2_tls_centered(ens, P, k), rtol=1e-10, atol=1e-16)


def test_zero_rate_with_bias_rejected():
    with pytest.raises(ConfigError):
        at.xi_from_rates(0.3, 0.0, 0.2, 1.0)


def test_gaussian_equivalent_matches_weak_limit():
    ens = TlsEnsemble(tuple(TlsParams.symmetric(0.01, w) for w in (0.1, 0.5)))
    f = at.gaussian_equivalent_correlators(ens, P, 10)
    k = np.arange(1, 11)
    assert np.allclose(r2_gauss_centered(f, P, k), at.r2_tls_centered(ens, P, k), rtol=1e-3)


def test_asymmetric_ladder_routes_agree():
    ens = asymmetric_tls_ladder(5, 0.2)
    for k in (1, 7, 30):
        assert at.r2_tls_centered(ens, P, k) == pytest.approx(at.r2_via_characteristic(ens, P, k), abs=1e-12)
    assert at.r1_tls(ens, P) == pytest.approx(at.r1_via_characteristic(ens, P), abs=1e-14)
