import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdeforge import fieldgen as fg
from pdeforge.gridfield import Grid, divergence

# peak of r^4 / (1 + r^2)^(17/6): d/dr log = 4/r - (17/3) r / (1 + r^2) = 0 -> r^2 = 12/5
VKP_PEAK_K = 4.0 * math.sqrt(12 / 5)
VKP_PEAK_E = 1.453 / 4.0 * 2.4**2 / 3.4 ** (17 / 6) * math.exp(-2 * (VKP_PEAK_K / 1e3) ** 2)


def test_grf_zero_variance_gives_mean():
    g = Grid.periodic(16, 2)
    f = fg.sample_grf(g, fg.MaternParams(sigma2=0.0, mean=2.5), seed=3)
    assert np.all(f == 2.5)


def test_grf_rejects_bad_parameters_and_grids():
    with pytest.raises(ValueError):
        fg.MaternParams(lam=0.0)
    with pytest.raises(ValueError):
        fg.MaternParams(nu=-1.0)
    with pytest.raises(ValueError):
        fg.sample_grf(Grid((8, 8), bc=("dirichlet", "periodic")), fg.MaternParams(), 0)


def test_grf_ensemble_variance():
    g = Grid.periodic(128, 2)
    params = fg.MaternParams(lam=0.1, nu=1.0, sigma2=1.0)
    fields = np.stack([fg.sample_grf(g, params, seed) for seed in range(50)])
    assert abs(fields.var() - 1.0) < 0.1


def test_grf_determinism_and_seed_independence():
    g = Grid.periodic(128, 2)
    p = fg.MaternParams()
    a = fg.sample_grf(g, p, 11)
    np.testing.assert_array_equal(a, fg.sample_grf(g, p, 11))
    b = fg.sample_grf(g, p, 12)
    assert abs(np.corrcoef(a.ravel(), b.ravel())[0, 1]) < 0.1


def test_grf_ensemble_mean_is_stationary():
    g = Grid.periodic(64, 2)
    p = fg.MaternParams(lam=0.1, nu=1.5, sigma2=2.0, mean=0.7)
    fields = np.stack([fg.sample_grf(g, p, s) for s in range(200)])
    bound = 3 * math.sqrt(p.sigma2) / math.sqrt(200)
    dev = np.abs(fields.mean(axis=0) - p.mean)
    # a 3-sigma band is exceeded by ~0.3% of independent nodes by chance
    assert np.mean(dev <= bound) > 0.99
    assert dev.max() < 5 * bound / 3 * 1.5


def test_curl_potential_trivial_and_analytic():
    g = Grid.periodic(64, 2)
    assert np.all(fg.curl_potential(np.full(g.shape, 4.0), g) == 0)
    x, y = g.coords()
    u = fg.curl_potential(np.sin(x) * np.sin(y), g, staggered=False)
    h = g.spacing[0]
    assert np.max(np.abs(u[0] - np.sin(x) * np.cos(y))) < h**2
    assert np.max(np.abs(u[1] + np.cos(x) * np.sin(y))) < h**2
    div = divergence(u, g, staggered=False)
    assert np.max(np.abs(div)) <= 1e-12 * np.max(np.abs(u))
    us = fg.curl_potential(np.sin(x) * np.sin(y), g)
    assert np.max(np.abs(divergence(us, g))) <= 1e-12 * np.max(np.abs(us))


def test_curl_potential_3d_grf():
    g = Grid.periodic(16, 3)
    u = fg.grf_velocity(g, fg.MaternParams(lam=0.3), seed=5)
    assert u.shape == (3, 16, 16, 16)
    assert np.max(np.abs(divergence(u, g))) <= 1e-12 * np.max(np.abs(u))
    with pytest.raises(ValueError):
        fg.curl_potential([np.zeros(g.shape)], g)


def test_vkp_limits_and_peak():
    E = fg.vkp_spectrum()
    assert E(np.array(0.0)) == 0.0
    small = np.array([1e-4, 1e-3, 1e-2])
    ratio = E(small) / small**4
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-4)
    k, e = fg.spectrum_peak(E, 1e-3, 100.0)
    assert k == pytest.approx(VKP_PEAK_K, abs=1e-3)
    assert e == pytest.approx(VKP_PEAK_E, rel=1e-7)
    with pytest.raises(ValueError):
        fg.vkp_spectrum(u_rms=0.0)


def test_power_law_is_flat_below_cutoff():
    E = fg.PowerLaw()
    np.testing.assert_allclose(E(np.array([1.0, 3.0, 6.0])), 0.5 * 6.0 ** (-7 / 3))
    assert E(np.array(12.0)) == pytest.approx(0.5 * 12.0 ** (-7 / 3))
    assert fg.spectrum_from_dict(E.describe()) == E


def test_mode_set_invariants():
    for dim, n in ((2, 32), (3, 16)):
        g = Grid.periodic(n, dim)
        for lattice in (True, False):
            m = fg.make_modes(g, fg.vkp_spectrum(), 200, fg.rng_for(1), vector=True, lattice=lattice)
            np.testing.assert_allclose(np.sum(m.khat * m.sigma, axis=1), 0, atol=1e-12)
            np.testing.assert_allclose(np.linalg.norm(m.khat, axis=1), 1, atol=1e-12)
            np.testing.assert_allclose(np.linalg.norm(m.sigma, axis=1), 1, atol=1e-12)
            assert m.dk == pytest.approx((fg.nyquist(g) - 1) / 200)


def test_sphere_uniform_directions():
    g = Grid.periodic(16, 3)
    m = fg.make_modes(g, fg.vkp_spectrum(), 20000, fg.rng_for(2), lattice=False, sphere_uniform=True)
    cos_t = m.khat[:, 2]
    # uniform on the sphere means cos(theta) uniform on [-1, 1]
    assert abs(np.mean(cos_t)) < 0.03 and abs(np.mean(cos_t**2) - 1 / 3) < 0.02


def test_zero_spectrum_gives_zero_fields():
    zero = fg.Tabulated((0.0, 100.0), (0.0, 0.0))
    g = Grid.periodic(16, 2)
    assert np.all(fg.synth_scalar_field(g, zero, 1, 0) == 0)
    assert np.all(fg.synth_vector_field(g, zero, 1, 0) == 0)


def test_negative_spectrum_rejected():
    with pytest.raises(ValueError):
        fg.Tabulated((0.0, 1.0), (1.0, -1.0))

    class Bad(fg.SpectrumModel):
        def __call__(self, k):
            return -np.ones_like(k)

    with pytest.raises(ValueError):
        fg.synth_scalar_field(Grid.periodic(8, 2), Bad(), 4, 0)


def test_single_mode_variance():
    g = Grid.periodic(64, 2)
    flat = fg.PowerLaw(amplitude=2.0, exponent=0.0, k_min=0.0)
    for seed in range(5):
        f = fg.synth_scalar_field(g, flat, 1, seed, k_min=3.5, k_max=4.5)
        assert np.var(f) == pytest.approx(2.0, abs=1e-2)


def test_fft_path_matches_direct_sum():
    g = Grid.periodic(32, 2)
    for key in range(3):
        a = fg.synth_scalar_field(g, fg.PowerLaw(), 64, 9, key=(key,), method="fft")
        b = fg.synth_scalar_field(g, fg.PowerLaw(), 64, 9, key=(key,), method="direct")
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12 * np.abs(b).max())
    a = fg.synth_vector_field(g, fg.vkp_spectrum(), 64, 9, method="fft")
    b = fg.synth_vector_field(g, fg.vkp_spectrum(), 64, 9, method="direct")
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12 * np.abs(b).max())


def test_synthesis_determinism_and_independence():
    g = Grid.periodic(64, 2)
    a = fg.synth_scalar_field(g, fg.PowerLaw(), 256, 4)
    np.testing.assert_array_equal(a, fg.synth_scalar_field(g, fg.PowerLaw(), 256, 4))
    b = fg.synth_scalar_field(g, fg.PowerLaw(), 256, 5)
    assert abs(np.corrcoef(a.ravel(), b.ravel())[0, 1]) < 0.2


def test_vkp_ensemble_kinetic_energy():
    g = Grid.periodic(128, 2)
    E = fg.vkp_spectrum()
    M = 128
    target = None
    ke = []
    for seed in range(40):
        u = fg.synth_vector_field(g, E, M, seed)
        ke.append(0.5 * np.mean(np.sum(u**2, axis=0)))
        modes = fg.make_modes(g, E, M, fg.rng_for(seed), vector=True)
        t = np.sum(modes.amplitude**2)
        target = t if target is None else target + t
    target /= 40
    assert np.mean(ke) == pytest.approx(target, rel=0.15)


@pytest.mark.parametrize("dim,n", [(2, 64), (3, 32)])
def test_single_mode_discrete_divergence_matches_truncation(dim, n):
    """Face-sampled solenoidal mode: the staggered divergence is exactly the
    continuous one times the forward-difference symbol, so its size is
    |sum_a sigma_a (2 sin(k_a h / 2)/h - k_a)| ~ O(h^2 |k|^3)."""
    g = Grid.periodic(n, dim)
    k = np.array([3.0, 2.0, 1.0][:dim])
    khat = k / np.linalg.norm(k)
    sigma = np.array([-khat[1], khat[0]]) if dim == 2 else np.cross(khat, [0.0, 0.0, 1.0])
    sigma /= np.linalg.norm(sigma)
    h = g.spacing[0]
    u = np.empty((dim, *g.shape))
    for a in range(dim):
        x = g.face_coords(a)
        u[a] = sigma[a] * np.cos(sum(k[b] * x[b] for b in range(dim)))
    div = divergence(u, g)
    xc = g.center_coords()
    amp = np.sum(sigma * (2 * np.sin(k * h / 2) / h - k))
    expected = -amp * np.sin(sum(k[b] * xc[b] for b in range(dim)))
    np.testing.assert_allclose(div, expected, rtol=0, atol=1e-12)
    assert abs(amp) <= h**2 * np.linalg.norm(k) ** 3
    assert abs(np.dot(sigma, k)) < 1e-12


@given(st.integers(0, 10_000), st.integers(1, 64))
@settings(max_examples=20, deadline=None)
def test_scalar_variance_tracks_mode_energy(seed, M):
    g = Grid.periodic(32, 2)
    E = fg.PowerLaw(1.0, -1.0, 1.0)
    f = fg.synth_scalar_field(g, E, M, seed)
    modes = fg.make_modes(g, E, M, fg.rng_for(seed))
    expected = np.sum(modes.amplitude**2)
    # modes sharing a lattice point interfere, so only the order of magnitude is fixed
    assert 0 <= np.var(f) <= 4 * expected + 1e-12
