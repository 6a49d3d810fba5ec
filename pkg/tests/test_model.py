import numpy as np
import pytest

from amp_lab.exceptions import InvalidParameterError
from amp_lab.model import (FORMAT_VERSION, LinearModel, NoiseSpec, SignalSpec, gen_design,
                           gen_noise, gen_signal, load_instance, make_instance, save_instance)


def test_design_single_entry_variance_over_seeds():
    draws = np.array([gen_design(1, 1, s)[0, 0] for s in range(1_000_000)])
    assert abs(draws.var() - 1.0) < 0.01


def test_design_grand_mean():
    X = gen_design(400, 200, 7)
    assert abs(X.mean()) <= 4 / np.sqrt(400 * 200 * 400)


def test_design_spectral_norm():
    target = 1 + np.sqrt(200 / 400)
    hits = sum(abs(np.linalg.norm(gen_design(400, 200, s), 2) - target) <= 0.2
               for s in range(100))
    assert hits >= 95


def test_design_deterministic_and_shaped():
    a, b = gen_design(30, 20, 3), gen_design(30, 20, 3)
    assert a.shape == (30, 20) and np.array_equal(a, b)
    assert not np.array_equal(a, gen_design(30, 20, 3, trial=1))


def test_signal_full_support():
    th = gen_signal(4, 4, seed=1)
    assert np.allclose(np.abs(th), 0.5) and np.isclose(np.linalg.norm(th), 1.0)


def test_signal_single_spike():
    th = gen_signal(10, 1, seed=2)
    assert np.count_nonzero(th) == 1 and np.isclose(np.abs(th).max(), 1.0)


def test_signal_l1_norm():
    th = gen_signal(1000, 250, seed=3)
    assert np.count_nonzero(th) == 250
    assert abs(np.abs(th).sum() - np.sqrt(250)) <= 1e-12


def test_signal_support_spreads():
    hits = np.zeros(20)
    for s in range(2000):
        hits += gen_signal(20, 5, seed=s) != 0
    assert np.all(np.abs(hits / 2000 - 0.25) < 0.05)


def test_signal_magnitude_and_explicit():
    assert np.allclose(np.abs(gen_signal(8, 2, SignalSpec(magnitude=3.0), 0)).max(), 3.0)
    vec = np.arange(5.0)
    assert np.array_equal(gen_signal(5, 4, SignalSpec("explicit-vector", vector=vec)), vec)


def test_signal_rejects_k_above_p():
    with pytest.raises(InvalidParameterError):
        gen_signal(3, 4)


def test_gaussian_noise_energy():
    s2, n = 0.7, 50
    e = [np.sum(gen_noise(n, NoiseSpec("gaussian", s2 / n), seed=s)[0] ** 2) for s in range(1000)]
    assert abs(np.mean(e) / s2 - 1) < 0.05


def test_mixture_without_contamination_matches_gaussian():
    g, _ = gen_noise(100, NoiseSpec("gaussian", 0.3), seed=4)
    m, mask = gen_noise(100, NoiseSpec("huber-mixture", 0.3, 0.0), seed=4)
    assert np.array_equal(g, m) and not mask.any()


def test_mixture_contaminated_count():
    n = 10_000
    spec = NoiseSpec("huber-mixture", 1 / n, 0.1, "point-mass", 5 / np.sqrt(n))
    eps, mask = gen_noise(n, spec, seed=5)
    assert abs(mask.sum() - 1000) <= 3 * np.sqrt(n * 0.1 * 0.9)
    assert np.all(eps[mask] == 5 / np.sqrt(n))


def test_heavy_tail_contamination():
    spec = NoiseSpec("huber-mixture", 1.0, 0.5, "heavy-tail", 2.0)
    eps, mask = gen_noise(20_000, spec, seed=6)
    assert np.isclose(np.median(np.abs(eps[mask])), 2.0, rtol=0.05)


@pytest.mark.parametrize("bad", [-0.1, 1.0])
def test_noise_rejects_bad_fraction(bad):
    with pytest.raises(InvalidParameterError):
        NoiseSpec("huber-mixture", 1.0, bad, "point-mass")


def test_robust_default_point_mass():
    spec = NoiseSpec.for_robust(400)
    assert spec.sigma2 == 1 / 400 and np.isclose(spec.contam_level, 5 / 20)


def test_reconstruction_and_immutability():
    m = make_instance(80, 50, 10, seed=8)
    resid = m.observations - m.design @ m.signal - m.noise
    assert np.linalg.norm(resid) <= 1e-12 * np.linalg.norm(m.observations)
    with pytest.raises(ValueError):
        m.design[0, 0] = 1.0
    assert (m.n, m.p, m.k) == (80, 50, 10)


def test_instance_determinism():
    a = make_instance(40, 30, 5, seed=9, trial=2)
    b = make_instance(40, 30, 5, seed=9, trial=2)
    for f in ("design", "signal", "noise", "observations"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_round_trip(tmp_path):
    m = make_instance(12, 7, 3, noise_spec=NoiseSpec.for_robust(12, 0.3), seed=10, trial=4)
    path = tmp_path / "inst.bin"
    save_instance(m, path)
    r = load_instance(path)
    for f in ("design", "signal", "noise", "observations", "contaminated"):
        assert np.array_equal(getattr(m, f), getattr(r, f))
    assert (r.k, r.seed, r.trial) == (3, 10, 4)


def test_round_trip_rejects_other_version(tmp_path):
    m = make_instance(5, 4, 2, seed=1)
    path = tmp_path / "inst.bin"
    save_instance(m, path)
    blob = bytearray(path.read_bytes())
    blob[8:12] = (FORMAT_VERSION + 1).to_bytes(4, "little")
    path.write_bytes(bytes(blob))
    with pytest.raises(InvalidParameterError, match="version"):
        load_instance(path)


def test_model_shape_checks():
    with pytest.raises(InvalidParameterError):
        LinearModel(np.zeros((3, 2)), np.zeros(3), np.zeros(3), k=1)
