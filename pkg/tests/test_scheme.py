import logging

import numpy as np
import pytest

import oracles
from meanfield import rng as rngmod
from meanfield.config import SchemeConfig, reference_config
from meanfield.model import sample_parameters
from meanfield.scheme import (FitError, QuadraticMean, ReconstructionError, SchemeError,
                              condition, fit_polynomial_mean, gp_reconstruct, induction_step,
                              kernel, run_scheme, sample_mfl, solve_weights)

CFG = reference_config()
HAND_THETAS = np.array([
    [0.1, 0.2, 0.82, 0.2],
    [0.4, 0.9, 0.88, 0.9],
    [0.7, 0.3, 0.94, 0.35],
    [0.95, 0.6, 0.98, 0.6],
])


def zero_interaction(s1, th1, s2, th2, cfg):
    return np.zeros(np.broadcast_shapes(np.shape(s1), np.shape(s2)))


def own_state_only(s1, th1, s2, th2, cfg):
    # constant in the competitor's state and parameters
    return np.broadcast_to(-0.1 * np.asarray(s1) * th1[..., 3], np.broadcast_shapes(
        np.shape(s1), np.shape(s2))).copy()


# -- induction ----------------------------------------------------------------

def test_zero_interaction_leaves_values():
    v = np.full(4, 0.3)
    np.testing.assert_array_equal(induction_step(v, HAND_THETAS, v, HAND_THETAS, CFG,
                                                 zero_interaction), v)


def test_single_point_reduces_to_euler():
    th = HAND_THETAS[:1]
    got = induction_step([0.3], th, [0.3], th, CFG)
    want = 0.3 + CFG.dt * oracles.interaction(0.3, th[0], 0.3, th[0], CFG)
    assert got[0] == pytest.approx(want, rel=1e-14)


def test_four_point_hand_oracle():
    v = np.full(4, CFG.s0)
    got = induction_step(v, HAND_THETAS, v, HAND_THETAS, CFG)
    for i, th in enumerate(HAND_THETAS):
        acc = sum(oracles.interaction(CFG.s0, th, CFG.s0, w, CFG) for w in HAND_THETAS)
        assert got[i] == pytest.approx(CFG.s0 + CFG.dt * acc / 4, rel=1e-13)


def test_nonpositive_values_rejected():
    with pytest.raises(SchemeError):
        induction_step([0.0], HAND_THETAS[:1], [0.3], HAND_THETAS[:1], CFG)


# -- polynomial mean ----------------------------------------------------------

def _omega(n=300, seed=0):
    return sample_parameters(CFG, n, rngmod.stream(seed, "poly"))


def test_constant_fit_is_exact():
    m = fit_polynomial_mean(_omega(), np.full(300, 0.42))
    assert m.a == pytest.approx(0.42, abs=1e-9)
    np.testing.assert_allclose(m.b, 0, atol=1e-8)
    np.testing.assert_allclose(m.c, 0, atol=1e-7)


def test_linear_fit_is_exact():
    om = _omega()
    m = fit_polynomial_mean(om, 2 + om[:, 0])
    assert m.a == pytest.approx(2, abs=1e-8)
    np.testing.assert_allclose(m.b, [1, 0, 0, 0], atol=1e-7)
    np.testing.assert_allclose(m.c, 0, atol=1e-6)


def test_product_fit_matches_normal_equations():
    om = _omega()
    y = om[:, 0] * om[:, 1]
    m = fit_polynomial_mean(om, y)
    # independent route: normal equations on raw (unstandardized) monomials
    cols = [np.ones(len(om))] + [om[:, i] for i in range(4)]
    cols += [om[:, i] * om[:, j] for i in range(4) for j in range(i, 4)]
    A = np.column_stack(cols)
    coef = np.linalg.solve(A.T @ A, A.T @ y)
    assert np.sqrt(np.mean((m(om) - A @ coef) ** 2)) < 1e-8
    assert np.sqrt(np.mean((m(om) - y) ** 2)) < 1e-8
    C = m.c.reshape(4, 4)
    np.testing.assert_allclose(C, C.T)
    assert C[0, 1] == pytest.approx(0.5, abs=1e-6)


def test_quadratic_mean_serialization():
    m = fit_polynomial_mean(_omega(), _omega()[:, 2] ** 2)
    back = QuadraticMean.from_dict(m.to_dict())
    np.testing.assert_array_equal(back(_omega()), m(_omega()))


def test_fit_errors():
    with pytest.raises(FitError):
        fit_polynomial_mean(_omega(10), np.ones(10))
    om = _omega()
    om[:, 0] = 0.5
    with pytest.raises(FitError):
        fit_polynomial_mean(om, np.ones(300))


# -- kernel -------------------------------------------------------------------

def test_kernel_three_point_two_pass_oracle():
    om = HAND_THETAS[:3]
    prev = np.array([0.31, 0.33, 0.35])
    mean_prev = QuadraticMean(0.3, np.array([0.01, 0.0, 0.02, 0.0]), np.zeros(16))
    t1, t2 = HAND_THETAS[3], HAND_THETAS[0]
    m1, m2 = float(mean_prev(t1)), float(mean_prev(t2))
    g1 = [oracles.interaction(m1, t1, s, w, CFG) for s, w in zip(prev, om)]
    g2 = [oracles.interaction(m2, t2, s, w, CFG) for s, w in zip(prev, om)]
    want = CFG.dt**2 / 3 * oracles.two_pass_cov(g1, g2)
    got = kernel(t1[None], t2[None], mean_prev, om, prev, CFG)[0, 0]
    assert got == pytest.approx(want, rel=1e-10)


def test_kernel_diagonal_nonnegative_and_zero_for_flat_interaction():
    om = _omega(50)
    prev = np.full(50, CFG.s0)
    m = QuadraticMean.constant(CFG.s0)
    K = kernel(om[:10], om[:10], m, om, prev, CFG)
    assert np.all(np.diag(K) >= 0)
    flat = kernel(om[:10], om[:10], m, om, prev, CFG, own_state_only)
    np.testing.assert_allclose(flat, 0.0, atol=1e-20)


# -- conditioning ---------------------------------------------------------------

def test_two_by_two_solve_hand_inverse():
    K = np.array([[2.0, 0.5], [0.5, 1.0]])
    r = np.array([1.0, -1.0])
    det = 2.0 * 1.0 - 0.25
    want = np.array([1.0 * 1.0 - 0.5 * -1.0, -0.5 * 1.0 + 2.0 * -1.0]) / det
    np.testing.assert_allclose(solve_weights(K, r, 0.0), want, rtol=1e-14)


def test_singular_kernel_raises():
    with pytest.raises(ReconstructionError):
        solve_weights(np.ones((3, 3)), np.ones(3), 0.0, iteration=5)


def _conditioned(jitter, K=8, M=200, seed=1):
    om = _omega(M, seed)
    train = sample_parameters(CFG, K, rngmod.stream(seed, "train"))
    prev_om = np.full(M, CFG.s0)
    s1_om = induction_step(prev_om, om, prev_om, om, CFG)
    s1_train = induction_step(np.full(K, CFG.s0), train, prev_om, om, CFG)
    mean = fit_polynomial_mean(om, s1_om)
    st = condition(train, s1_train, mean, QuadraticMean.constant(CFG.s0), om, prev_om, CFG, jitter)
    return om, train, s1_train, st


def test_interpolation_identity_without_jitter():
    om, train, values, st = _conditioned(0.0)
    rec = gp_reconstruct(train, st, om, CFG)
    assert np.max(np.abs(rec - values)) < 1e-8 * CFG.s0


def test_zero_residual_gives_the_mean():
    om, train, _, st = _conditioned(1e-8)
    mean = st.mean
    st0 = condition(train, mean(train), mean, st.mean_prev, om, st.omega_prev, CFG, 1e-8)
    np.testing.assert_array_equal(st0.alpha, 0.0)
    np.testing.assert_allclose(gp_reconstruct(om[:20], st0, om, CFG), mean(om[:20]), rtol=1e-15)


def test_kernel_psd_after_jitter(small_flow):
    st = small_flow.gp[5]
    K = kernel(small_flow.train, small_flow.train, st.mean_prev, small_flow.omega,
               st.omega_prev, CFG)
    A = K + small_flow.scheme.jitter * np.mean(np.diag(K)) * np.eye(len(K))
    assert np.linalg.eigvalsh(0.5 * (A + A.T)).min() > 0


# -- full scheme ----------------------------------------------------------------

def test_zero_iterations():
    fa = run_scheme(CFG, SchemeConfig(M=50, K=10, n_max=0))
    assert fa.n_done == 0 and fa.J[1:] == [] and fa.J_poly[1:] == []
    np.testing.assert_array_equal(fa.reconstruct(fa.test, 0), CFG.s0)
    sizes, theta = sample_mfl(fa, 0, 5)
    np.testing.assert_array_equal(sizes, CFG.s0)
    sizes, theta = sample_mfl(fa, 0, 0)
    assert sizes.size == 0 and theta.shape == (0, 4)


def test_small_run_shapes_and_errors(small_flow):
    fa = small_flow
    assert fa.n_done == 20 and len(fa.J) == 21 and np.isnan(fa.J[0])
    assert all(np.isfinite(fa.J[1:])) and all(np.isfinite(fa.J_poly[1:]))
    with pytest.raises(IndexError):
        fa.reconstruct(fa.test, 21)


def test_failed_solve_recorded_as_missing(caplog):
    def omega_only(s1, th1, s2, th2, cfg):
        # identical features for every point make the kernel rank one
        return np.broadcast_to(0.01 * th2[..., 0], np.broadcast_shapes(
            np.shape(s1), np.shape(s2), th2.shape[:-1])).copy()
    with caplog.at_level(logging.WARNING, logger="meanfield.scheme"):
        fa = run_scheme(CFG, SchemeConfig(M=40, K=5, n_max=2, jitter=0.0), omega_only)
    assert np.isnan(fa.J[1]) and fa.gp[1] is None
    assert "missing" in caplog.text
    with pytest.raises(ReconstructionError):
        fa.reconstruct(fa.test, 1)


def test_scheme_is_deterministic():
    a = run_scheme(CFG, SchemeConfig(M=60, K=15, n_max=3, seed=8))
    b = run_scheme(CFG, SchemeConfig(M=60, K=15, n_max=3, seed=8))
    assert np.array_equal(a.J, b.J, equal_nan=True)
    assert a.flow_omega[3].tobytes() == b.flow_omega[3].tobytes()
    assert a.alpha[3].tobytes() == b.alpha[3].tobytes()


def test_reference_samples_within_envelope(reference_flow):
    fa = reference_flow
    sizes, _ = sample_mfl(fa, 100, 2000)
    slack = 3 * fa.J[100]
    assert np.all(sizes > CFG.s_m - slack) and np.all(sizes <= CFG.S_M + slack)
