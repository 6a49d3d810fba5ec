import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amp_lab.denoise import (DenoiserSpec, huber_active_prob, huber_moment, huber_psi, huber_Psi,
                             huber_Psi_deriv, soft_threshold, soft_threshold_deriv, st_corr,
                             st_mean_abs, st_risk, st_risk_grad_tau)
from amp_lab.exceptions import InvalidParameterError

MC = 10_000_000
finite = st.floats(-50, 50, allow_nan=False)


def mc_check(samples, value):
    se = samples.std() / np.sqrt(samples.size)
    assert abs(samples.mean() - value) <= 3 * se + 1e-15, (samples.mean(), value, se)


def test_soft_threshold_values():
    assert np.allclose(soft_threshold([3, -3, 1, 0], 1), [2, -2, 0, 0])
    assert soft_threshold(-0.4, 0.0) == -0.4
    assert list(soft_threshold_deriv([3, 1, 2], 2)) == [1, 0, 0]


def test_negative_tau_rejected():
    with pytest.raises(InvalidParameterError):
        soft_threshold(1.0, -0.1)


@given(finite, finite, st.floats(0, 10))
def test_soft_threshold_nonexpansive(a, b, tau):
    assert abs(soft_threshold(a, tau) - soft_threshold(b, tau)) <= abs(a - b) + 1e-12


def test_huber_values():
    assert huber_psi(0.5, 1) == 0.5 and huber_psi(3, 1) == 1 and huber_psi(-3, 1) == -1
    assert huber_Psi(0.0, 2.5, 0.3) == 0.0
    h = 1e-6
    fd = (huber_Psi(0.5 + h, 1, 1) - huber_Psi(0.5 - h, 1, 1)) / (2 * h)
    assert huber_Psi_deriv(0.5, 1, 1) == 0.5 and abs(fd - 0.5) < 1e-6
    assert huber_Psi_deriv(2.0, 1, 1) == 0.0


@pytest.mark.parametrize("lam,b", [(0, 1), (1, 0), (-1, 1)])
def test_huber_rejects_bad_params(lam, b):
    with pytest.raises(InvalidParameterError):
        huber_Psi(0.0, b, lam)


@given(finite, finite, st.floats(0.01, 100), st.floats(0.01, 10))
def test_huber_lipschitz(a, b, bb, lam):
    gap = abs(huber_Psi(a, bb, lam) - huber_Psi(b, bb, lam))
    assert gap <= bb / (1 + bb) * abs(a - b) + 1e-12


def test_denoiser_spec():
    d = DenoiserSpec("huber", lam=1.0, b=3.0)
    assert d.lipschitz == 0.75 and d(0.4) == huber_Psi(0.4, 3.0, 1.0)
    assert DenoiserSpec("soft-threshold", tau=1).deriv(2.0) == 1.0
    with pytest.raises(InvalidParameterError):
        DenoiserSpec("slope")


def test_st_risk_limits():
    assert np.isclose(st_risk(np.zeros(7), 1.3, 0.0, 4), 7 * 1.3**2 / 4)
    th = np.array([0.4, -1.0, 0.0, 2.0])
    tau = np.abs(th).max() + 20 * 0.5 / np.sqrt(9)
    assert abs(st_risk(th, 0.5, tau, 9) - th @ th) <= 1e-8


def test_st_risk_vectorised_in_tau():
    th = np.array([0.2, -0.7])
    taus = np.array([0.0, 0.3, 1.0])
    assert np.allclose(st_risk(th, 1.0, taus, 3), [st_risk(th, 1.0, t, 3) for t in taus])


def test_st_risk_monte_carlo():
    th = np.array([0.5, -0.2, 0.0])
    g = np.random.default_rng(1).standard_normal((MC, 3))
    loss = np.sum((th - soft_threshold(th + g, 0.3)) ** 2, axis=1)
    mc_check(loss, st_risk(th, 1.0, 0.3, 1))


def fd_risk(th, a, tau, n, h=1e-5):
    return (st_risk(th, a, tau + h, n) - st_risk(th, a, tau - h, n)) / (2 * h)


def test_risk_grad_finite_difference():
    th = np.zeros(6)
    assert abs(st_risk_grad_tau(th, 1.0, 1e-5, 2) - fd_risk(th, 1.0, 1e-5, 2, 1e-6)) <= 1e-6 * 6
    rng = np.random.default_rng(3)
    for _ in range(20):
        th = rng.normal(size=5)
        a, tau, n = rng.uniform(0.3, 2), rng.uniform(0.05, 2), int(rng.integers(1, 20))
        g = st_risk_grad_tau(th, a, tau, n)
        assert abs(g - fd_risk(th, a, tau, n)) <= 1e-5 * max(abs(g), 1e-3)


def test_risk_grad_vanishes_far_out():
    assert abs(st_risk_grad_tau(np.array([1.0, -0.5]), 1.0, 30.0, 1)) < 1e-8


def test_risk_grad_secant_sign():
    rng = np.random.default_rng(4)
    for _ in range(30):
        th = rng.normal(size=4)
        a, tau = rng.uniform(0.3, 2), rng.uniform(0.05, 3)
        g = st_risk_grad_tau(th, a, tau, 3)
        sec = st_risk(th, a, tau + 1e-4, 3) - st_risk(th, a, tau - 1e-4, 3)
        if abs(g) > 1e-6:
            assert np.sign(g) == np.sign(sec)


def test_st_mean_abs():
    assert np.isclose(st_mean_abs(0.0), np.sqrt(2 / np.pi), atol=1e-10)
    grid = st_mean_abs(np.arange(0, 5.01, 0.1))
    assert np.all(np.diff(grid) < 0)
    g = np.abs(np.random.default_rng(5).standard_normal(MC))
    mc_check(np.maximum(g - 1.0, 0.0), st_mean_abs(1.0))


def test_st_corr():
    assert st_corr(0.0) == 1.0
    g = np.random.default_rng(6).standard_normal(MC)
    mc_check(soft_threshold(g, 0.7) * g, st_corr(0.7))


def test_huber_moment_limits():
    eps = np.array([0.3, -1.2, 0.0, 2.0])
    big = huber_moment(eps, 0.8, 1e6, n=4)
    assert abs(big / (eps @ eps + 0.8**2) - 1) <= 1e-6
    assert huber_moment(eps, 0.0, 1.0) == pytest.approx(np.sum(np.minimum(eps**2, 1.0)))


def test_huber_moment_monte_carlo():
    eps = np.random.default_rng(7).normal(size=5)
    g = np.random.default_rng(8).standard_normal((MC, 5)) / np.sqrt(5)
    vals = np.sum(np.minimum((eps + g) ** 2, 0.64), axis=1)
    mc_check(vals, huber_moment(eps, 1.0, 0.8))


def test_active_prob():
    assert huber_active_prob(0.3, 1.0, 1e9, 4) == 1.0
    from scipy.stats import norm
    z = 0.8
    assert np.isclose(huber_active_prob(0.0, 2.0, 2.0 / 3.0 * z, 9), 2 * norm.cdf(z) - 1)
    g = np.random.default_rng(9).standard_normal(MC) * 1.5 / np.sqrt(6)
    hits = (np.abs(0.25 + g) < 0.5).astype(float)
    mc_check(hits, huber_active_prob(0.25, 1.5, 0.5, 6))
