import numpy as np
import pytest

from amp_lab.denoise import st_risk_grad_tau
from amp_lab.model import NoiseSpec, make_instance
from amp_lab.se import (contraction_ratios, empirical_se, robust_calibration, se_fixed_point,
                        se_for_model, se_step_robust, se_step_sparse, state_evolution)
from amp_lab.amp import run_amp


@pytest.fixture(scope="module")
def default_sparse():
    return make_instance(2000, 1000, 250, seed=0)


@pytest.fixture(scope="module")
def default_robust():
    return make_instance(2000, 1000, 250, noise_spec=NoiseSpec.for_robust(2000), seed=0)


def test_pythagorean_step():
    th = np.array([0.3, 0.0, -0.1])
    a, tau, g = se_step_sparse(th, 0.64, 0.6, 10)
    assert np.isclose(a, 1.0) and tau >= 0 and g > 0


def test_zero_signal_gamma_vanishes():
    _, tau, g = se_step_sparse(np.zeros(20), 0.25, 0.0, 40)
    assert g <= 1e-6 and tau > 0


def test_gradient_root_at_interior_minimum(default_sparse):
    th = default_sparse.signal
    e2 = float(default_sparse.noise @ default_sparse.noise)
    for gamma in (1.0, 0.7, 0.5):
        a, tau, _ = se_step_sparse(th, e2, gamma, default_sparse.n)
        assert 0 < tau < np.abs(th).max()
        assert abs(st_risk_grad_tau(th, a, tau, default_sparse.n)) <= 1e-6


def test_sparse_identities(default_sparse):
    se = se_for_model(default_sparse, "sparse", 15)
    assert np.isclose(se.gamma_star[1], np.linalg.norm(default_sparse.signal), rtol=0, atol=1e-14)
    lhs = se.alpha_star[1:] ** 2 - se.gamma_star[1:-1] ** 2
    assert np.allclose(lhs, se.eps_norm2, rtol=0, atol=1e-12)
    assert len(se.rows()) == 15


def test_robust_identities(default_robust):
    m = default_robust
    se = se_for_model(m, "robust", 10)
    assert np.allclose(se.gamma_star[2:] ** 2, m.p / m.n * se.alpha_star[1:] ** 2, rtol=0, atol=1e-12)
    for t in range(1, 11):
        res = robust_calibration(m.noise, se.gamma_star[t], 1 / np.sqrt(m.n), se.inner_param[t], m.n, m.p)
        assert abs(res) <= 1e-9


def test_robust_no_clipping_limit():
    eps = np.random.default_rng(1).normal(size=30) * 0.1
    b, a, g = se_step_robust(eps, 1e8, 30, 10, 0.7)
    assert np.isclose(b / (1 + b), 10 / 30)
    assert np.isclose(a, 30 / 10 * b / (1 + b) * np.sqrt(eps @ eps + 0.49))
    assert np.isclose(g**2, 10 / 30 * a**2)


def test_robust_alpha_monte_carlo():
    n, p, lam, gamma = 200, 100, 1 / np.sqrt(200), 1.0
    m = make_instance(n, p, 25, noise_spec=NoiseSpec.for_robust(n), seed=4)
    b, a, _ = se_step_robust(m.noise, lam, n, p, gamma)
    c = lam * (1 + b)
    scale = (n * b / (p * (1 + b))) ** 2
    rng = np.random.default_rng(5)
    vals = []
    for _ in range(20):
        g = rng.standard_normal((50_000, n)) * gamma / np.sqrt(n)
        vals.append(scale * np.sum(np.minimum((m.noise + g) ** 2, c * c), axis=1))
    vals = np.concatenate(vals)
    se_ = vals.std() / np.sqrt(vals.size)
    assert abs(vals.mean() - a**2) <= 3 * se_


def test_contraction_ratio_definition():
    g = np.array([np.nan, 2.0, 1.5, 1.25, 1.2])
    d = np.abs(np.diff(g[1:] ** 2))
    assert np.allclose(contraction_ratios(g), d[1:] / d[:-1])


def test_sparse_fixed_point_default(default_sparse):
    se = se_fixed_point(default_sparse.signal, default_sparse.noise, "sparse")
    fp = se.fixed_point
    assert fp.converged and fp.iterations <= 60
    assert np.all(fp.ratios[np.isfinite(fp.ratios)] < 1)


def test_fixed_point_flags_cap(default_sparse):
    se = se_fixed_point(default_sparse.signal, default_sparse.noise, "sparse", t_cap=3)
    assert not se.fixed_point.converged and se.fixed_point.iterations == 3


def test_empirical_se_matches_at_start(small_sparse):
    tr = run_amp(small_sparse, "sparse", 4)
    se = se_for_model(small_sparse, "sparse", 4)
    emp = empirical_se(tr, se)
    assert emp["gamma_gap2"][0] <= 1e-12
    assert emp["gamma_gap2"].shape == (4,)


def test_state_evolution_deterministic(small_sparse):
    a = state_evolution(small_sparse.signal, small_sparse.noise, "sparse", 5)
    b = state_evolution(small_sparse.signal, small_sparse.noise, "sparse", 5)
    assert np.array_equal(a.gamma_star, b.gamma_star, equal_nan=True)
