import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emtopo.forward import IncidentPlaneWave, Inclusion, TrialInclusion, incident_curl, incident_field, synthesize_far_field
from emtopo.geometry import build_product_quadrature
from emtopo.imaging import herglotz_batch
from emtopo.kernels import WaveParameters, curl_im_dyadic_green, im_dyadic_green
from emtopo.noise import (
    SPECKLE_KINDS,
    MeasurementNoiseSpec,
    MediumFluctuation,
    StatsReport,
    VoxelGrid,
    add_measurement_noise,
    clutter_herglotz_eps,
    clutter_herglotz_mu,
    clutter_indicator,
    cov_herglotz_noise,
    cov_indicator_measurement,
    fluctuation_sampler,
    generate_medium_fluctuation,
    monte_carlo,
    sample_measurement_noise,
    snr,
    speckle_covariance_analytic,
    speckle_kernel,
    squared_exponential,
    stream_rng,
    summarize_mean,
    summarize_variance,
    white_noise,
)
from emtopo.validation import fd_curl

E1, E2, E3 = np.eye(3)


@pytest.fixture(scope="module")
def small_quad():
    return build_product_quadrature(12, 24)


@pytest.fixture
def box():
    return VoxelGrid([-0.5, -0.5, -0.5], [1.0, 1.0, 1.0], (5, 5, 5))


class TestMeasurementNoise:
    def test_zero_sigma(self, small_quad):
        assert np.all(sample_measurement_noise(small_quad, MeasurementNoiseSpec(0.0, 3)) == 0)

    def test_tangential(self, small_quad):
        xi = sample_measurement_noise(small_quad, MeasurementNoiseSpec(1.0, 3))
        assert np.max(np.abs(np.einsum("kc,kc->k", xi, small_quad.nodes))) < 1e-12

    def test_discrete_covariance(self, small_quad):
        # sum_k w_k^2 E[xi_k xi_k^H] with normalized weights -> sigma^2 (2/3) I
        sigma = 0.8
        xi = white_noise(small_quad, sigma, np.random.default_rng(5), 10_000)
        w = small_quad.mean_weights
        m = np.einsum("k,bki,bkj->ij", w**2, xi, np.conj(xi)) / len(xi)
        assert np.allclose(m, sigma**2 * 2 / 3 * np.eye(3), rtol=0, atol=0.05 * sigma**2 * 2 / 3)

    def test_relative_norm_exact(self, small_quad, wp4):
        inc = Inclusion.sphere(np.zeros(3), 0.01, 2.0, 1.0, wp4)
        data = synthesize_far_field(inc, [IncidentPlaneWave(E1, E2, wp4), IncidentPlaneWave(E2, E3, wp4)], small_quad)
        spec = MeasurementNoiseSpec(0.0, 11, "relative", 10.0)
        noisy = add_measurement_noise(data, spec)
        diff = data.with_blocks(noisy.blocks - data.blocks)
        assert np.allclose(diff.l2_norms(), 0.10 * data.l2_norms(), rtol=1e-12)

    def test_blocks_use_independent_streams(self, small_quad, wp4):
        inc = Inclusion.sphere(np.zeros(3), 0.01, 2.0, 1.0, wp4)
        w = IncidentPlaneWave(E1, E2, wp4)
        data = synthesize_far_field(inc, [w, w], small_quad)
        noisy = add_measurement_noise(data, MeasurementNoiseSpec(1.0, 2))
        assert not np.allclose(noisy.blocks[0], noisy.blocks[1])

    def test_reproducible(self, small_quad):
        spec = MeasurementNoiseSpec(1.0, 2**64 - 1)
        assert np.array_equal(sample_measurement_noise(small_quad, spec), sample_measurement_noise(small_quad, spec))

    @pytest.mark.parametrize(
        "kwargs",
        [dict(sigma_xi=-1.0), dict(mode="other"), dict(mode="relative"), dict(mode="relative", percent=150.0), dict(seed=-1)],
    )
    def test_spec_validation(self, kwargs):
        with pytest.raises(ValueError):
            MeasurementNoiseSpec(**kwargs)

    def test_stream_keys_differ(self):
        assert stream_rng(1, 0).random() != stream_rng(1, 1).random()


class TestMeasurementCovariances:
    def test_herglotz_cov_coincident(self, wp4):
        z = np.array([0.1, 0.2, 0.3])
        assert np.allclose(cov_herglotz_noise(z, z, wp4, 0.5), 2 * 0.25 / 3 * np.eye(3))

    def test_herglotz_cov_quadratic_in_sigma(self, wp4, rng):
        z, z2 = rng.uniform(-1, 1, (2, 3))
        assert np.allclose(cov_herglotz_noise(z, z2, wp4, 3.0), 9 * cov_herglotz_noise(z, z2, wp4, 1.0))

    def test_herglotz_cov_small_monte_carlo(self, small_quad):
        wp = WaveParameters.from_kappa(2 * np.pi)
        z = np.array([[0, 0, 0], [0.2, 0.1, 0.0]])
        xi = white_noise(small_quad, 1.0, np.random.default_rng(9), 4000)
        H, _ = herglotz_batch(small_quad, xi, z, wp, curl=False)
        est = np.einsum("bi,bj->ij", H[:, 0], np.conj(H[:, 1])) / len(xi)
        ref = cov_herglotz_noise(z[0], z[1], wp, 1.0)
        assert np.max(np.abs(est - ref)) < 0.1 * (2 / 3)

    def test_var1_closed_form(self, wp8):
        trial = TrialInclusion.sphere(2.0, 1.0, wp8, volume=0.7)
        z = np.array([0.1, 0.0, 0.0])
        n, sigma, k = 37, 0.3, wp8.kappa
        expected = sigma**2 * k**6 * 0.7**2 * 3 * (1 - 2) ** 2 / (8 * n * np.pi**2 * (2 + 2) ** 2)
        assert cov_indicator_measurement(z, z, trial, wp8, sigma, n, "eps") == pytest.approx(expected, rel=1e-12)

    def test_sphere_specialization(self, wp4, rng):
        trial = TrialInclusion.sphere(1.0, 3.0, wp4)
        z, z2 = rng.uniform(-1, 1, (2, 3))
        g = im_dyadic_green(z, z2, wp4)
        factor = 9 * (1 - 3) ** 2 * trial.volume_factor**2 / (2 * 5 * (2 + 3) ** 2)
        a = cov_indicator_measurement(z, z2, trial, wp4, 1.0, 5, "mu")
        assert a == pytest.approx(factor * wp4.kappa**4 * np.sum(g * g), rel=1e-12)

    def test_halves_with_double_n(self, wp4):
        trial = TrialInclusion.sphere(2.0, 1.0, wp4)
        z = np.zeros(3)
        a = cov_indicator_measurement(z, z, trial, wp4, 1.0, 10, "eps")
        assert cov_indicator_measurement(z, z, trial, wp4, 1.0, 20, "eps") == pytest.approx(a / 2, rel=1e-15)

    def test_symmetric_nonnegative(self, wp4, rng):
        trial = TrialInclusion.sphere(2.0, 1.0, wp4)
        z, z2 = rng.uniform(-1, 1, (2, 3))
        assert cov_indicator_measurement(z, z2, trial, wp4, 1, 3, "eps") == pytest.approx(
            cov_indicator_measurement(z2, z, trial, wp4, 1, 3, "eps")
        )
        assert cov_indicator_measurement(z, z, trial, wp4, 1, 3, "eps") >= 0

    def test_mode_mismatch(self, wp4):
        with pytest.raises(ValueError):
            cov_indicator_measurement(np.zeros(3), np.zeros(3), TrialInclusion.sphere(2, 2, wp4), wp4, 1, 1, "eps")
        with pytest.raises(ValueError):
            snr(Inclusion.sphere(np.zeros(3), 0.01, 2, 1, wp4), wp4, 1.0, 4, "mu")

    def test_snr_reference(self, wp8):
        inc = Inclusion.sphere(np.zeros(3), 0.01, 2.0, 1.0, wp8)
        k = 8 * np.pi
        # independent evaluation of the closed form
        expected = np.sqrt(6) / (2 * np.pi * 4) * 1e-6 * (4 * np.pi / 3) * 1 * k**3 * np.sqrt(200)
        assert snr(inc, wp8, 1.0, 200, "eps") == pytest.approx(expected, rel=1e-13)
        assert snr(inc, wp8, 1.0, 400, "eps") == pytest.approx(np.sqrt(2) * expected, rel=1e-13)


class TestMediumFluctuation:
    def test_zero_sigma(self, box):
        f = generate_medium_fluctuation("eta", box, 0.0, 0.3, 1)
        assert np.all(f.values == 0)

    def test_support(self, box):
        f = generate_medium_fluctuation("phi", box, 1.0, 0.3, 1)
        assert np.all(f.value_at(np.array([[0.6, 0, 0], [0, -0.7, 0], [0, 0, 5]])) == 0)
        c = box.centers()[7]
        assert f.value_at(c) == f.flat()[7]

    def test_lag_correlation(self):
        grid = VoxelGrid([0, 0, 0], [1.0, 1.0, 1.0], (5, 5, 5))
        ell, sigma = 0.4, 1.3
        draw = fluctuation_sampler(grid, ell)
        v = draw(np.random.default_rng(4), sigma, 500)
        # voxel spacing 0.2, so lag ell is two cells along the first axis
        emp = np.mean(v[:, :-2] * v[:, 2:])
        assert emp == pytest.approx(sigma**2 * np.exp(-1), rel=0.15)

    def test_std_warning(self):
        grid = VoxelGrid([0, 0, 0], [0.1, 0.1, 0.1], (2, 2, 2))
        # nearly rigid field over a tiny box: the spatial std collapses
        with pytest.warns(UserWarning):
            generate_medium_fluctuation("eta", grid, 1.0, 10.0, 3)

    def test_reproducible(self, box):
        a = generate_medium_fluctuation("eta", box, 1.0, 0.3, 8)
        b = generate_medium_fluctuation("eta", box, 1.0, 0.3, 8)
        assert np.array_equal(a.values, b.values)

    def test_bad_kind(self, box):
        with pytest.raises(ValueError):
            MediumFluctuation("chi", box, np.zeros(box.counts), 1, 1)


def single_voxel(kind, grid, value=0.7, at=62):
    vals = np.zeros(grid.counts).ravel()
    vals[at] = value
    return MediumFluctuation(kind, grid, vals, 1.0, 0.2), grid.centers()[at]


class TestClutter:
    def test_zero_field(self, box, wp4):
        w = IncidentPlaneWave(E1, E2, wp4)
        for kind, op in (("eta", clutter_herglotz_mu), ("phi", clutter_herglotz_eps)):
            f = MediumFluctuation(kind, box, np.zeros(box.counts), 1.0, 0.2)
            assert np.all(op(f, w, np.zeros(3), wp4) == 0)

    def test_single_voxel_eta(self, box, wp4):
        w = IncidentPlaneWave(E1, E2, wp4)
        f, y0 = single_voxel("eta", box)
        z = np.array([0.3, 0.2, 0.1])
        expected = -wp4.kappa * box.voxel_volume * im_dyadic_green(z, y0, wp4) @ incident_field(w, y0) * 0.7
        assert np.allclose(clutter_herglotz_mu(f, w, z, wp4), expected, rtol=1e-13)

    @pytest.mark.parametrize("kind", ["eta", "phi"])
    def test_linear(self, box, wp4, kind):
        w = IncidentPlaneWave(E1, E2, wp4)
        f = generate_medium_fluctuation(kind, box, 0.1, 0.15, 5)
        op = clutter_herglotz_mu if kind == "eta" else clutter_herglotz_eps
        z = np.array([0.1, -0.2, 0.3])
        assert np.allclose(op(f.scaled(2.5), w, z, wp4), 2.5 * op(f, w, z, wp4), rtol=1e-12)

    def test_kind_mismatch(self, box, wp4):
        f = MediumFluctuation("eta", box, np.ones(box.counts), 1.0, 0.2)
        with pytest.raises(ValueError):
            clutter_herglotz_eps(f, IncidentPlaneWave(E1, E2, wp4), np.zeros(3), wp4)

    def test_eps_integration_by_parts(self):
        wp = WaveParameters.from_kappa(2 * np.pi)
        w = IncidentPlaneWave(E1, E2, wp)
        grid = VoxelGrid([-0.5] * 3, [1.0] * 3, (16, 16, 16))
        y = grid.centers()
        bump = lambda p: np.exp(-np.sum(p * p, -1) / 0.12**2)  # noqa: E731
        f = MediumFluctuation("phi", grid, bump(y), 1.0, 0.12)
        z = np.array([0.3, 0.1, -0.2])
        src = fd_curl(lambda p: bump(p)[..., None] * incident_curl(w, p), y, 1e-4)
        direct = -(1 / wp.kappa) * grid.voxel_volume * np.einsum("vij,vj->i", im_dyadic_green(z, y, wp), src)
        got = clutter_herglotz_eps(f, w, z, wp)
        assert np.max(np.abs(got - direct)) < 0.01 * np.max(np.abs(direct))

    @pytest.mark.parametrize("kind", ["eta", "phi"])
    def test_curl_flag_matches_fd(self, box, wp4, kind):
        w = IncidentPlaneWave(E1, E2, wp4)
        f = generate_medium_fluctuation(kind, box, 0.1, 0.3, 6)
        op = clutter_herglotz_mu if kind == "eta" else clutter_herglotz_eps
        # evaluate away from the voxel centers
        z = np.array([[0.77, 0.81, -0.9]])
        fd = fd_curl(lambda p: op(f, w, p, wp4), z, 1e-5 * wp4.wavelength)
        an = op(f, w, z, wp4, curl=True)
        assert np.max(np.abs(fd - an)) < 1e-6 * np.max(np.abs(an))

    def test_indicator_is_real_and_linear(self, box, wp4):
        w = [IncidentPlaneWave(E1, E2, wp4), IncidentPlaneWave(E1, E3, wp4)]
        trial = TrialInclusion.sphere(2.0, 1.5, wp4)
        f = generate_medium_fluctuation("eta", box, 0.1, 0.3, 6)
        z = np.array([[0.1, 0.0, 0.05]])
        a = clutter_indicator(f, w, trial, z, wp4)
        assert a.dtype == np.float64
        assert np.allclose(clutter_indicator(f.scaled(-2), w, trial, z, wp4), -2 * a)


class TestSpeckle:
    def test_q_eta_identity_at_coincidence(self, wp4):
        z = np.array([0.2, 0.1, 0.0])
        v = speckle_kernel("Q_eta", np.eye(3), z, z, wp4)
        assert v == pytest.approx(wp4.kappa**2 / (12 * np.pi**2), rel=1e-14)

    @pytest.mark.parametrize("kind", SPECKLE_KINDS)
    def test_real_and_symmetric(self, wp4, rng, kind):
        A = rng.standard_normal((3, 3))
        A = A + A.T
        x, y = rng.uniform(-1, 1, (2, 10, 3))
        a = speckle_kernel(kind, A, x, y, wp4)
        assert np.isrealobj(a)
        assert np.allclose(a, speckle_kernel(kind, A, y, x, wp4), rtol=1e-12, atol=1e-14)

    def test_qtilde_eta_by_fd(self, wp4, rng):
        x, y = rng.uniform(-1, 1, (2, 3))
        h = 1e-5 * wp4.wavelength
        c = np.stack([fd_curl(lambda p: im_dyadic_green(x, p, wp4)[:, col], y, h) for col in range(3)], axis=1)
        assert speckle_kernel("Qtilde_eta", np.eye(3), x, y, wp4) == pytest.approx(np.sum(c * c), rel=1e-6)

    def test_unknown_kernel(self, wp4):
        with pytest.raises(ValueError):
            speckle_kernel("Q_chi", np.eye(3), np.zeros(3), np.ones(3), wp4)

    def test_zero_correlation(self, box, wp4):
        trial = TrialInclusion.sphere(2.0, 1.0, wp4)
        n = np.prod(box.counts)
        assert speckle_covariance_analytic("eta", trial, wp4, np.zeros((n, n)), box, np.zeros(3), np.zeros(3), "eps") == 0

    def test_single_voxel_correlation(self, box, wp4):
        trial = TrialInclusion.sphere(1.0, 2.0, wp4)
        n = np.prod(box.counts)
        c = np.zeros((n, n))
        c[10, 10] = 0.3
        y = box.centers()[10]
        z, z2 = np.array([0.1, 0, 0]), np.array([0, 0.2, 0])
        a2 = -0.5
        pref = wp4.kappa**4 * a2**2
        k1 = speckle_kernel("Qtilde_eta", trial.M_mu, y, z, wp4)
        k2 = speckle_kernel("Qtilde_eta", trial.M_mu, y, z2, wp4)
        got = speckle_covariance_analytic("eta", trial, wp4, c, box, z, z2, "mu")
        assert got == pytest.approx(pref * box.voxel_volume**2 * 0.3 * k1 * k2, rel=1e-12)

    def test_symmetric_nonnegative(self, box, wp4):
        trial = TrialInclusion.sphere(2.0, 1.0, wp4)
        cov = squared_exponential(0.1, 0.3)
        z, z2 = np.array([0.1, 0, 0]), np.array([0, 0.2, 0.1])
        a = speckle_covariance_analytic("phi", trial, wp4, cov, box, z, z2, "eps")
        b = speckle_covariance_analytic("phi", trial, wp4, cov, box, z2, z, "eps")
        assert a == pytest.approx(b, rel=1e-12)
        assert speckle_covariance_analytic("phi", trial, wp4, cov, box, z, z, "eps") >= 0

    def test_mode_mismatch(self, box, wp4):
        trial = TrialInclusion.sphere(2.0, 2.0, wp4)
        with pytest.raises(ValueError):
            speckle_covariance_analytic("eta", trial, wp4, squared_exponential(1, 1), box, np.zeros(3), np.zeros(3), "eps")

    def test_clutter_matches_analytic_small(self, wp4):
        # tiny version of the acceptance check: 3^3 voxels, eta fluctuation, eps trial
        from emtopo.experiments import speckle_report
        from emtopo.geometry import build_direction_set

        grid = VoxelGrid([-0.5] * 3, [1.0] * 3, (3, 3, 3))
        trial = TrialInclusion.sphere(2.0, 1.0, wp4)
        rep = speckle_report("eta", trial, wp4, build_direction_set(12, 12, "equal_area"), "eps", grid, 0.05, 0.25, np.array([0.1, 0, 0.05]), 300, 1)
        assert rep.rel_error < 0.3


class TestMonteCarlo:
    def test_deterministic_statistic(self):
        s = monte_carlo(lambda rng, t: 3.5, 10, 0)
        rep = summarize_variance("v", s, 0.0)
        assert rep.estimate == 0.0
        assert summarize_mean("m", s, 3.5).rel_error == 0.0

    def test_unit_gaussian_variance(self):
        s = monte_carlo(lambda rng, t: rng.standard_normal(), 10_000, 7)
        assert summarize_variance("v", s, 1.0).rel_error < 0.05

    def test_ci_shrinks(self):
        hw = [summarize_mean("m", monte_carlo(lambda rng, t: rng.standard_normal(), n, 3), 0).ci95_halfwidth for n in (1000, 4000)]
        assert hw[0] / hw[1] == pytest.approx(2.0, rel=0.2)

    def test_thread_independent(self):
        f = lambda rng, t: rng.standard_normal(3)  # noqa: E731
        assert np.array_equal(monte_carlo(f, 50, 2, threads=1), monte_carlo(f, 50, 2, threads=4))

    def test_rejects_single_trial(self):
        with pytest.raises(ValueError):
            monte_carlo(lambda rng, t: 0.0, 1, 0)

    @settings(max_examples=25)
    @given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
    def test_report_rel_error(self, est, ana):
        r = StatsReport.build("x", est, ana, 10, 0.0)
        assert r.rel_error == pytest.approx(abs(est - ana) / max(abs(ana), 1e-300))
        assert set(r.as_dict()) == {"name", "estimate", "analytic", "trials", "rel_error", "ci95_halfwidth"}
