import numpy as np
import pytest

from amp_lab.amp import run_amp
from amp_lab.decomp import DecompState, decompose, hat_sequences
from amp_lab.exceptions import DegenerateDirection, InvalidParameterError
from amp_lab.model import NoiseSpec, make_instance


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def instance(mode, seed, n=60, p=40, k=10):
    noise = NoiseSpec.for_robust(n) if mode == "robust" else None
    return make_instance(n, p, k, noise_spec=noise, seed=seed)


@pytest.fixture(scope="module", params=["sparse", "robust"])
def built(request):
    m = instance(request.param, 3)
    tr = run_amp(m, request.param, 10)
    return tr, decompose(tr)


def test_orthonormal_bases(built):
    _, d = built
    for B in (d.U, d.V):
        assert np.allclose(B.T @ B, np.eye(B.shape[1]), atol=1e-10)


def test_first_direction(built):
    tr, d = built
    G1 = tr.G_value(1)
    assert np.allclose(d.U[:, 0], G1 / np.linalg.norm(G1), atol=1e-14)


def test_identities_and_spans(built):
    tr, d = built
    m = tr.model
    for t in range(1, d.T + 1):
        s_t = tr.s(t)
        b_next = tr[t].theta_next - m.signal
        assert rel(d.u[t - 1] + d.xi[t - 1], s_t) <= 1e-10
        assert rel(d.v[t - 1] + d.zeta[t - 1], b_next) <= 1e-10
        dx, dz = d.span_defect(t)
        assert dx <= 1e-10 or np.linalg.norm(d.xi[t - 1]) <= 1e-12
        assert dz <= 1e-10
        assert np.linalg.norm(d.xi[t - 1] - d.xi_closed[t - 1]) <= 1e-10 * max(1, np.linalg.norm(s_t))
        assert np.linalg.norm(d.zeta[t - 1] - d.zeta_closed[t - 1]) <= 1e-10 * max(1, np.linalg.norm(b_next))


def test_coefficient_norms(built):
    tr, d = built
    for t in range(1, d.T + 1):
        F, G = tr.F_value(t), tr.G_value(t)
        assert abs(np.linalg.norm(d.gamma[t - 1]) - np.linalg.norm(F)) <= 1e-12
        assert abs(np.linalg.norm(d.alpha[t - 1]) - np.linalg.norm(G)) <= 1e-12 * max(1, np.linalg.norm(G))
        assert np.linalg.norm(G - d.U[:, :t] @ d.alpha[t - 1]) <= 1e-10 * max(1, np.linalg.norm(G))


def test_sparse_initial_case():
    m = instance("sparse", 5)
    tr = run_amp(m, "sparse", 3)
    d = decompose(tr)
    assert np.isclose(d.gamma[0][0], np.linalg.norm(m.signal), atol=1e-14)
    assert np.linalg.norm(d.xi[0]) <= 1e-13
    hat = hat_sequences(d, tr)
    assert abs(hat.gamma_hat[0][0]) <= 1e-12


def test_projected_design_annihilates():
    m = make_instance(12, 8, 2, seed=6)
    tr = run_amp(m, "sparse", 3)
    st = DecompState(m.design, None, budget=10**6)
    from amp_lab import _rng
    st.aux = _rng.stream(0, 0, _rng.AUX)
    for t in (1, 2):
        st.extend_bases(tr.G_value(t), tr.F_value(t))
        st.draw_phi_psi()
    a1, b1 = st.U[:, 0], st.V[:, 0]
    assert abs(a1 @ st.U[:, 1]) <= 1e-12
    X2 = (np.eye(12) - np.outer(a1, a1)) @ m.design @ (np.eye(8) - np.outer(b1, b1))
    assert np.linalg.norm(a1 @ X2) <= 1e-10 and np.linalg.norm(X2 @ b1) <= 1e-10
    assert np.allclose(st.phi[0], m.design @ b1, atol=1e-14)


@pytest.mark.parametrize("mode", ["sparse", "robust"])
def test_lazy_matches_materialized(mode):
    tr = run_amp(instance(mode, 7), mode, 6)
    a = decompose(tr)
    b = decompose(tr, budget=0)
    assert a.materialized and not b.materialized
    for x, y in zip(a.phi + a.psi + a.xi, b.phi + b.psi + b.xi):
        assert np.allclose(x, y, atol=1e-12)


def test_aux_seed_changes_only_aux():
    tr = run_amp(instance("sparse", 8), "sparse", 4)
    a, b = decompose(tr), decompose(tr, aux_seed=99)
    assert np.array_equal(a.U, b.U) and not np.array_equal(a.phi[1], b.phi[1])
    assert np.array_equal(a.phi[0], b.phi[0])


def test_phi_gaussianity_over_replays():
    n, p, R = 200, 100, 200
    cross, norms = [], []
    for seed in range(R):
        m = make_instance(n, p, 25, seed=1000 + seed)
        d = decompose(run_amp(m, "sparse", 5))
        Phi = np.column_stack(d.phi)
        gram = Phi.T @ Phi
        cross.append(gram[np.triu_indices(Phi.shape[1], 1)])
        norms.extend(np.linalg.norm(Phi, axis=0))
    cross = np.array(cross)
    assert np.all(np.abs(cross.mean(axis=0)) <= 5 / np.sqrt(n * R))
    norms = np.array(norms)
    assert np.mean(np.abs(norms - 1) <= 5 / np.sqrt(n)) >= 0.95


def test_hat_sequences_shapes_and_identity(built):
    tr, d = built
    hat = hat_sequences(d, tr)
    assert len(hat.gamma_hat) == d.T and len(hat.zeta_hat_norm) == d.T
    maps = d.maps
    v = [np.zeros(tr.model.p)] + d.v
    for t in range(1, len(hat.beta_hat)):
        expect = v[t] + sum(hat.gamma_hat[t - 1][k - 1] * maps.F(k, v[k - 1]) for k in range(1, t + 1))
        assert np.allclose(hat.beta_hat[t], expect, atol=1e-12)
    assert np.all(np.isfinite(hat.xi_hat_norm))


def test_degenerate_stop():
    m = make_instance(6, 3, 1, seed=1)
    tr = run_amp(m, "sparse", 5)
    d = decompose(tr)
    assert d.T <= 3
    if d.T < 5:
        assert d.stopped
    st = DecompState(np.eye(3), None)
    with pytest.raises(DegenerateDirection):
        st.extend_bases(np.zeros(3), np.ones(3))


def test_requires_full_history(small_sparse):
    with pytest.raises(InvalidParameterError):
        decompose(run_amp(small_sparse, "sparse", 3, keep_history=False))
