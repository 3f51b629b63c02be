from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from vpmm import constitutive as cm
from vpmm import tensor as tc
from vpmm.errors import INFINITE, ConfigError, DeterminantNotPositive

from conftest import random_glplus

HP = cm.HardeningParams(1.0, 1.0, 6.0, 12.0)
EP = cm.ElasticParams(1.0, 1.0, 2.0)
DP = cm.DissipationParams(1.0, 1.0, 2.0)
H_FD = np.finfo(float).eps ** (1 / 3)


def fd_gradient(f, X):
    G = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        h = H_FD * max(1.0, abs(X[idx]))
        Xp, Xm = X.copy(), X.copy()
        Xp[idx] += h
        Xm[idx] -= h
        G[idx] = (f(Xp) - f(Xm)) / (2 * h)
    return G


def rel(a, b):
    return np.linalg.norm(np.ravel(a) - np.ravel(b)) / max(np.linalg.norm(np.ravel(b)), 1e-12)


# ---------------------------------------------------------------- exponents
def test_example_exponents_valid():
    ex = cm.ExponentSet(3, 6, 6, 6, 12, 2, 2)
    assert ex.violations() == []
    assert ex.q_tilde == pytest.approx(3.0)


def test_gradient_integrability_violation_is_named():
    ex = cm.ExponentSet(3, 6, 6, 2, 12, 2, 2)
    msgs = " ".join(ex.violations())
    assert "gradient integrability" in msgs
    with pytest.raises(ConfigError):
        ex.validate()


def test_exponent_balance_violation_is_named():
    ex = cm.ExponentSet(4, 6, 6, 6, 12, 2, 2)
    assert any("exponent balance" in m for m in ex.violations())


# ---------------------------------------------------------------- energies
def test_hardening_examples():
    assert cm.hardening_K(np.eye(2), HP) == 9.0
    exact = Fraction(5) ** 3 + Fraction(1, 2**12)
    assert cm.hardening_K(np.diag([2.0, 1.0]), HP) == pytest.approx(float(exact), rel=1e-15)


def test_hardening_outside_domain_is_infinite():
    assert cm.hardening_K(np.diag([1.0, -1.0]), HP) is INFINITE
    with pytest.raises(DeterminantNotPositive):
        cm.d_hardening_K(np.diag([1.0, -1.0]), HP)


def test_elastic_examples():
    assert cm.elastic_W(np.eye(2), EP, 6) == 9.0
    assert cm.elastic_W(np.diag([2.0, 1.0]), EP, 6) == pytest.approx(125.25, rel=1e-15)
    assert cm.elastic_W(np.diag([-2.0, 1.0]), EP, 6) is INFINITE


def test_gradient_term_examples():
    A = np.zeros((2, 2, 2))
    val, _, dA = cm.gradient_term_H(np.eye(2), A, HP, 6)
    assert val == cm.hardening_K(np.eye(2), HP)
    np.testing.assert_array_equal(dA, 0.0)
    A[0, 1, 1] = 1.0
    val, _, _ = cm.gradient_term_H(np.eye(2), A, HP, 6)
    assert val - 9.0 == pytest.approx(1 / 6, rel=1e-14)


def test_mandel_examples():
    np.testing.assert_allclose(cm.mandel_stress(np.eye(2), EP, 6), 22 * np.eye(2), rtol=1e-15)
    np.testing.assert_allclose(cm.mandel_stress(np.diag([2.0, 1.0]), EP, 6), np.diag([599.5, 149.5]), rtol=1e-15)
    np.testing.assert_allclose(cm.kirchhoff_stress(np.eye(2), EP, 6), 22 * np.eye(2), rtol=1e-15)


def test_backstress_examples(rng):
    np.testing.assert_allclose(cm.backstress_B(np.eye(2), np.eye(2), EP, 6), 22 * np.eye(2), rtol=1e-15)
    P = random_glplus(rng)
    expected = (1 * 6 * 2 ** 2 - 1 * 2) * tc.inv_T(P)
    np.testing.assert_allclose(cm.backstress_B(P, P, EP, 6), expected, rtol=1e-12)


def test_regularizer_example():
    rp = cm.RegularizerParams(1.0, 0.0, 6.0)
    assert cm.regularizer_Wtilde(np.eye(2), rp, 2.0) == pytest.approx(128.0, rel=1e-14)
    clamped = cm.RegularizerParams(1.0, 1e6, 6.0)
    assert cm.regularizer_Wtilde(np.eye(2), clamped, 2.0) == 0.0
    np.testing.assert_array_equal(cm.d_regularizer_Wtilde(np.eye(2), clamped, 2.0), 0.0)


def test_regularizer_dominates_elastic_energy(rng):
    # |W(F)|^{p'} / (W~(F) + 1) stays bounded on a sample of moderate states
    rp = cm.RegularizerParams(1.0, 0.0, 6.0)
    ratios = []
    for _ in range(200):
        F = random_glplus(rng, 2, -1.0, 1.0)
        ratios.append(cm.elastic_W(F, EP, 6) ** 2 / (cm.regularizer_Wtilde(F, rp, 2.0) + 1))
    assert np.isfinite(max(ratios)) and max(ratios) < 1e3


@pytest.mark.parametrize("d", [2, 3])
def test_density_derivatives_match_fd(d, rng):
    rp = cm.RegularizerParams(0.5, 0.1, 6.0)
    for _ in range(20):
        F = random_glplus(rng, d)
        assert rel(cm.d_hardening_K(F, HP), fd_gradient(lambda X: cm.hardening_K(X, HP), F)) < 1e-6
        assert rel(cm.d_elastic_W(F, EP, 6), fd_gradient(lambda X: cm.elastic_W(X, EP, 6), F)) < 1e-6
        assert rel(
            cm.d_regularizer_Wtilde(F, rp, 2.0), fd_gradient(lambda X: cm.regularizer_Wtilde(X, rp, 2.0), F)
        ) < 1e-6
        A = rng.standard_normal((d, d, d))
        _, dA = cm.gradient_power_term(A[None], 6)
        assert rel(dA[0], fd_gradient(lambda X: cm.gradient_power_term(X[None], 6)[0][0], A)) < 1e-6


def test_backstress_is_minus_plastic_derivative(rng):
    for _ in range(20):
        F, P = random_glplus(rng), random_glplus(rng)
        fd = fd_gradient(lambda X: cm.elastic_W(F @ np.linalg.inv(X), EP, 6), P)
        assert rel(-cm.backstress_B(F, P, EP, 6), fd) < 1e-5


def test_mandel_closed_form_matches_product(rng):
    for _ in range(50):
        F = random_glplus(rng, 2, -1, 1)
        generic = F.T @ cm.d_elastic_W(F, EP, 6)
        closed = cm.mandel_stress(F, EP, 6)
        assert rel(closed, generic) < 1e-10


def test_mandel_kirchhoff_relation(rng):
    for _ in range(50):
        F = random_glplus(rng, 2, -1, 1)
        M, S = cm.mandel_stress(F, EP, 6), cm.kirchhoff_stress(F, EP, 6)
        assert rel(M, F.T @ S @ tc.inv_T(F)) < 1e-10
        Fs = F @ F.T
        S = cm.kirchhoff_stress(Fs, EP, 6)
        assert np.max(np.abs(S - S.T)) <= 1e-12 * np.max(np.abs(S))


def test_frame_indifference(rng):
    for _ in range(50):
        F = random_glplus(rng, 2, -1, 1)
        th = rng.uniform(0, 2 * np.pi)
        Q = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        w = cm.elastic_W(F, EP, 6)
        assert abs(cm.elastic_W(Q @ F, EP, 6) - w) <= 1e-12 * w


def test_plastic_indifference(rng):
    for _ in range(50):
        P, Pt = random_glplus(rng), random_glplus(rng)
        V = rng.standard_normal((2, 2))
        a = cm.dissipation_R(V @ np.linalg.inv(P), DP)
        b = cm.dissipation_R((V @ Pt) @ np.linalg.inv(P @ Pt), DP)
        assert abs(a - b) <= 1e-12 * max(1.0, a)


# ---------------------------------------------------------------- dissipation
def test_dissipation_examples():
    assert cm.dissipation_R(np.zeros((2, 2)), DP) == 0.0
    assert cm.dissipation_R(np.diag([1.0, 0.0]), DP) == 1.5
    eng = cm.DissipationParams(1.0, 1.0, 1.012)
    for r in (0.0, 1e-3, 1.0, 1e3):
        assert np.isfinite(cm.dissipation_R(r * np.diag([1.0, 0.0]), eng))


def test_conjugate_examples():
    assert cm.dissipation_R_conj(0.5 * np.eye(2) / np.sqrt(2), DP) == 0.0
    assert cm.dissipation_R_conj(np.diag([2.0, 0.0]), DP) == 0.5


def test_subdifferential_examples():
    V = np.diag([1.0, 0.0])
    np.testing.assert_array_equal(cm.subdiff_R(V, DP), 2 * V)
    ball = cm.subdiff_R(np.zeros((2, 2)), DP)
    assert ball.contains(0.9 * np.diag([1.0, 0.0])) and not ball.contains(np.diag([1.1, 0.0]))


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_fenchel_equality_at_subgradients(p, rng):
    dp = cm.DissipationParams(0.7, 1.3, p)
    for _ in range(200):
        V = rng.standard_normal((2, 2)) * rng.uniform(0.01, 5)
        Xi = cm.subdiff_R(V, dp)
        gap = cm.dissipation_R(V, dp) + cm.dissipation_R_conj(Xi, dp) - tc.frobenius_inner(Xi, V)
        assert abs(gap) <= 1e-10 * max(1.0, cm.dissipation_R(V, dp))


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.floats(-20, 20), min_size=4, max_size=4),
    st.lists(st.floats(-20, 20), min_size=4, max_size=4),
    st.sampled_from([1.2, 1.5, 2.0, 4.0]),
)
def test_fenchel_young_inequality(v, x, p):
    dp = cm.DissipationParams(1.0, 0.5, p)
    V, Xi = np.reshape(v, (2, 2)), np.reshape(x, (2, 2))
    gap = cm.dissipation_R(V, dp) + cm.dissipation_R_conj(Xi, dp) - tc.frobenius_inner(Xi, V)
    assert gap >= -1e-12 * max(1.0, abs(tc.frobenius_inner(Xi, V)))


@pytest.mark.parametrize("p", [1.5, 2.0])
def test_biconjugate_recovers_R(p, rng):
    dp = cm.DissipationParams(0.8, 1.4, p)
    for _ in range(20):
        V = rng.standard_normal((2, 2))
        nV = float(tc.frobenius_norm(V))
        # sup over Xi = s V/|V| of s |V| - R*(s); the supremum is attained on that ray
        res = minimize_scalar(
            lambda s: -(s * nV - cm.conjugate_values(np.array([[s]]), dp.sigma_yield, dp.nu, p)),
            bounds=(0, 100),
            method="bounded",
            options={"xatol": 1e-12},
        )
        assert -res.fun == pytest.approx(cm.dissipation_R(V, dp), abs=1e-6)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_prox_optimality(p, rng):
    sig, nu, lam = 0.6, 2.0, 0.3
    dp = cm.DissipationParams(sig, nu, p)
    Z = rng.standard_normal((50, 2, 2)) * rng.uniform(0, 3, (50, 1, 1))
    W = cm.prox_dissipation(Z, lam, sig, nu, p)
    for z, w in zip(Z, W):
        if tc.frobenius_norm(w) == 0:
            assert tc.frobenius_norm(z) <= lam * sig + 1e-14
        else:
            np.testing.assert_allclose(z - w, lam * cm.subdiff_R(w, dp), atol=1e-10)


def test_stress_control_examples():
    assert cm.stress_control_ratio(np.eye(2), EP, 6) == pytest.approx(22 * np.sqrt(2) / 10, rel=1e-14)
    bound = cm.stress_control_bound(EP, 6, 2)
    assert bound == pytest.approx(6 + 2 * np.sqrt(2))
    assert cm.stress_control_ratio(np.diag([1e-3, 1.0]), EP, 6) <= bound
    assert cm.stress_control_ratio(np.diag([1e3, 1.0]), EP, 6) <= bound


def test_parameter_validation():
    with pytest.raises(ConfigError):
        cm.DissipationParams(-1.0, 1.0, 2.0)
    with pytest.raises(ConfigError):
        cm.DissipationParams(1.0, 1.0, 1.0)
    with pytest.raises(ConfigError):
        cm.HardeningParams(0.0, 1.0)
