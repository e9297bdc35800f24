import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emtopo.kernels import (
    CoincidentPointsError,
    WaveParameters,
    contract,
    cross_matrix,
    curl_im_dyadic_green,
    dyadic_green,
    frobenius,
    im_dyadic_green,
    scalar_green,
    spherical_bessel_j,
)
from emtopo.validation import fd_curl


def j2_reference(x):
    # independent closed form, only used away from zero
    return (3 / x**3 - 1 / x) * np.sin(x) - 3 * np.cos(x) / x**2


class TestWaveParameters:
    def test_from_kappa_consistent(self):
        wp = WaveParameters.from_kappa(4 * np.pi, epsilon0=2.0, mu0=0.5)
        assert wp.kappa == pytest.approx(wp.omega * np.sqrt(wp.epsilon0 * wp.mu0), rel=1e-14)
        assert wp.wavelength == pytest.approx(0.5)

    def test_inconsistent_kappa_rejected(self):
        with pytest.raises(ValueError):
            WaveParameters(1.0, 1.0, 1.0, 2.0)

    @pytest.mark.parametrize("bad", [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, 0.0)])
    def test_nonpositive_rejected(self, bad):
        with pytest.raises(ValueError):
            WaveParameters(*bad, 1.0)


class TestBessel:
    def test_j0_at_zero(self):
        assert spherical_bessel_j(0, 0.0) == 1.0

    def test_j2_at_zero(self):
        assert spherical_bessel_j(2, 0.0) == 0.0

    def test_j2_at_pi(self):
        assert spherical_bessel_j(2, np.pi) == pytest.approx(3 / np.pi**2, rel=1e-14)
        assert spherical_bessel_j(2, np.pi) == pytest.approx(0.3039635509, abs=1e-10)

    def test_branches_join_smoothly(self):
        # series and closed form agree on both sides of each switch
        for n in (0, 1, 2):
            for x0 in (1e-2, 2.0):
                lo, hi = spherical_bessel_j(n, [np.nextafter(x0, 0), x0])
                assert abs(lo - hi) < 1e-12

    def test_small_argument_leading_terms(self):
        x = np.array([1e-6, 1e-4, 5e-3])
        assert np.allclose(spherical_bessel_j(1, x), x / 3, rtol=1e-4)
        assert np.allclose(spherical_bessel_j(2, x), x**2 / 15, rtol=1e-4)

    def test_matches_closed_form_away_from_zero(self):
        x = np.linspace(2.5, 60, 500)
        assert np.allclose(spherical_bessel_j(2, x), j2_reference(x), rtol=0, atol=1e-14)

    def test_recurrence(self):
        s = np.linspace(0.1, 50.0, 5001)
        j0, j1, j2 = (spherical_bessel_j(n, s) for n in (0, 1, 2))
        err = np.abs(j0 + j2 - 3 * j1 / s) / (np.abs(j0) + np.abs(j2))
        assert err.max() < 1e-12

    def test_invalid_order(self):
        with pytest.raises(ValueError):
            spherical_bessel_j(3, 1.0)

    def test_negative_argument(self):
        with pytest.raises(ValueError):
            spherical_bessel_j(0, -1.0)

    @given(st.floats(0.0, 100.0))
    def test_bounded(self, x):
        for n in (0, 1, 2):
            assert abs(spherical_bessel_j(n, x)) <= 1.0 + 1e-15


class TestScalarGreen:
    def test_phase_wraps_unit_distance(self):
        wp = WaveParameters.from_kappa(2 * np.pi)
        g = scalar_green([1.0, 0, 0], [0, 0, 0], wp)
        assert g == pytest.approx(1 / (4 * np.pi), abs=1e-15)

    def test_half_distance(self):
        wp = WaveParameters.from_kappa(4 * np.pi)
        g = scalar_green([0, 0.5, 0], [0, 0, 0], wp)
        assert g == pytest.approx(1 / (2 * np.pi), abs=1e-15)

    def test_quarter_distance(self):
        wp = WaveParameters.from_kappa(4 * np.pi)
        g = scalar_green([0, 0, 0.25], [0, 0, 0], wp)
        # exp(i pi) / (4 pi * 0.25)
        assert g == pytest.approx(-1 / np.pi, abs=1e-15)

    def test_coincident_points(self, wp4):
        with pytest.raises(CoincidentPointsError):
            scalar_green([0.1, 0.2, 0.3], [0.1, 0.2, 0.3], wp4)


class TestDyadicGreen:
    def test_symmetry_and_reciprocity(self, wp8, rng):
        x = rng.uniform(-1, 1, (100, 3))
        y = rng.uniform(-1, 1, (100, 3))
        g = dyadic_green(x, y, wp8)
        scale = np.abs(g).max(axis=(-2, -1), keepdims=True)
        assert np.max(np.abs(g - np.swapaxes(g, -1, -2)) / scale) < 1e-12
        assert np.max(np.abs(g - dyadic_green(y, x, wp8)) / scale) < 1e-12

    def test_imaginary_part_on_axis(self, wp4):
        y = np.zeros(3)
        x = np.array([0, 0, np.pi / wp4.kappa])
        g = dyadic_green(x, y, wp4)
        assert np.allclose(g.imag, im_dyadic_green(x, y, wp4), rtol=0, atol=1e-10 * np.abs(g).max())

    def test_linear_in_epsilon0(self, rng):
        w1 = WaveParameters.from_kappa(3.0, epsilon0=1.0)
        w2 = WaveParameters.from_kappa(3.0, epsilon0=2.0)
        x, y = rng.uniform(-1, 1, (2, 3))
        assert np.allclose(dyadic_green(x, y, w2), 2 * dyadic_green(x, y, w1), rtol=1e-13)

    def test_finite_off_diagonal(self, wp8, rng):
        x, y = rng.uniform(-1, 1, (2, 20, 3))
        assert np.all(np.isfinite(dyadic_green(x, y, wp8)))

    def test_coincident(self, wp4):
        with pytest.raises(CoincidentPointsError):
            dyadic_green(np.zeros(3), np.zeros(3), wp4)


class TestImDyadicGreen:
    def test_coincidence_value(self, wp4):
        assert np.allclose(im_dyadic_green(np.zeros(3), np.zeros(3), wp4), -(2 / 3) * np.eye(3), atol=1e-15)

    def test_at_kr_pi(self, wp4):
        x = np.array([0, 0, np.pi / wp4.kappa])
        expected = -(wp4.kappa / (4 * np.pi)) * (3 / np.pi**2) * np.diag([-1 / 3, -1 / 3, 2 / 3])
        assert np.allclose(im_dyadic_green(x, np.zeros(3), wp4), expected, atol=1e-14)

    def test_frobenius_at_coincidence(self, wp4):
        m = im_dyadic_green(np.ones(3), np.ones(3), wp4)
        assert frobenius(m) == pytest.approx(wp4.kappa / (2 * np.sqrt(3) * np.pi), rel=1e-14)

    def test_linear_in_epsilon0(self, rng):
        w1 = WaveParameters.from_kappa(5.0, epsilon0=1.0)
        w3 = WaveParameters.from_kappa(5.0, epsilon0=3.0)
        x, y = rng.uniform(-1, 1, (2, 3))
        assert np.allclose(im_dyadic_green(x, y, w3), 3 * im_dyadic_green(x, y, w1), rtol=1e-13)

    def test_matches_imaginary_part_random(self, wp8, rng):
        x, y = rng.uniform(-1, 1, (2, 200, 3))
        g = dyadic_green(x, y, wp8)
        scale = np.abs(g).max(axis=(-2, -1), keepdims=True)
        assert np.max(np.abs(g.imag - im_dyadic_green(x, y, wp8)) / scale) < 1e-10

    def test_continuous_at_coincidence(self, wp8):
        near = im_dyadic_green(np.array([1e-9, 0, 0]), np.zeros(3), wp8)
        at = im_dyadic_green(np.zeros(3), np.zeros(3), wp8)
        assert np.allclose(near, at, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=6, max_size=6))
    def test_symmetric(self, c):
        wp = WaveParameters.from_kappa(4 * np.pi)
        x, y = np.array(c[:3]), np.array(c[3:])
        m = im_dyadic_green(x, y, wp)
        assert np.allclose(m, m.T, atol=1e-14)
        assert np.allclose(m, im_dyadic_green(y, x, wp), atol=1e-14)


class TestCurlImGreen:
    def test_against_finite_differences(self, wp8, rng):
        xs, ys = rng.uniform(-1, 1, (2, 50, 3))
        h = 1e-5 * wp8.wavelength
        for col in range(3):
            fd = fd_curl(lambda p: im_dyadic_green(p, ys, wp8)[..., :, col], xs, h)
            an = curl_im_dyadic_green(xs, ys, wp8, wrt="first")[..., :, col]
            assert np.max(np.abs(fd - an)) < 1e-6
            fd = fd_curl(lambda p: im_dyadic_green(xs, p, wp8)[..., :, col], ys, h)
            an = curl_im_dyadic_green(xs, ys, wp8, wrt="second")[..., :, col]
            assert np.max(np.abs(fd - an)) < 1e-6

    def test_swap_transpose(self, wp4, rng):
        # curl in the first slot at (x, y) is the transpose of the same curl at (y, x)
        x, y = rng.uniform(-1, 1, (2, 30, 3))
        a = curl_im_dyadic_green(x, y, wp4, wrt="first")
        b = curl_im_dyadic_green(y, x, wp4, wrt="first")
        assert np.allclose(a, np.swapaxes(b, -1, -2), atol=1e-13)
        # Im Gamma(x, y) = Im Gamma(y, x), so both flags see the same function
        assert np.allclose(a, curl_im_dyadic_green(y, x, wp4, wrt="second"), atol=1e-13)

    def test_zero_at_coincidence(self, wp4):
        assert np.array_equal(curl_im_dyadic_green(np.ones(3), np.ones(3), wp4), np.zeros((3, 3)))

    def test_bad_flag(self, wp4):
        with pytest.raises(ValueError):
            curl_im_dyadic_green(np.zeros(3), np.ones(3), wp4, wrt="third")


class TestHelpers:
    def test_cross_matrix(self, rng):
        a, b = rng.standard_normal((2, 3))
        assert np.allclose(cross_matrix(a) @ b, np.cross(a, b))

    def test_contract_and_frobenius(self, rng):
        a = rng.standard_normal((3, 3))
        assert contract(a, a) == pytest.approx(frobenius(a) ** 2)
        assert contract(a, np.eye(3)) == pytest.approx(np.trace(a))
