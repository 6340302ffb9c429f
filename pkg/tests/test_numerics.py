import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rcstruct import numerics
from rcstruct.errors import InvalidDimensionError, InvalidInputError

from conftest import crandn


def dft_matrix(n):
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


class TestFft:
    @pytest.mark.parametrize("n", [1, 2, 8, 64])
    def test_matches_dft_matrix(self, rng, n):
        v = crandn(rng, n)
        np.testing.assert_allclose(numerics.fft(v), dft_matrix(n) @ v, atol=1e-10)

    def test_impulse_gives_flat_spectrum(self):
        v = np.zeros(8)
        v[0] = 1
        np.testing.assert_allclose(numerics.fft(v), np.ones(8), atol=1e-15)

    def test_round_trip(self, rng):
        v = crandn(rng, 3, 1024)
        np.testing.assert_allclose(numerics.ifft(numerics.fft(v)), v, atol=1e-12)

    def test_parseval(self, rng):
        v = crandn(rng, 256)
        lhs = np.sum(np.abs(v) ** 2)
        rhs = np.sum(np.abs(numerics.fft(v)) ** 2) / 256
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_axis_argument(self, rng):
        v = crandn(rng, 16, 3)
        np.testing.assert_allclose(numerics.fft(v, axis=0), (dft_matrix(16) @ v), atol=1e-10)

    def test_rejects_non_power_of_two(self):
        with pytest.raises(InvalidDimensionError):
            numerics.fft(np.ones(12))

    def test_rejects_size_mismatch(self):
        with pytest.raises(InvalidDimensionError):
            numerics.ifft(np.ones(16), size=32)


class TestSvd:
    def test_reconstruction(self, rng):
        m = crandn(rng, 5, 3)
        u, s, v = numerics.svd(m)
        np.testing.assert_allclose(u @ np.diag(s) @ v.conj().T, m, atol=1e-12)
        assert np.all(np.diff(s) <= 0)

    def test_orthonormal_factors(self, rng):
        u, _, v = numerics.svd(crandn(rng, 4, 6))
        np.testing.assert_allclose(u.conj().T @ u, np.eye(4), atol=1e-12)
        np.testing.assert_allclose(v.conj().T @ v, np.eye(4), atol=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            numerics.svd(np.array([[1.0, np.nan]]))

    def test_rejects_empty(self):
        with pytest.raises(InvalidInputError):
            numerics.svd(np.zeros((0, 3)))


def assert_moore_penrose(a, p, tol=1e-8):
    np.testing.assert_allclose(a @ p @ a, a, atol=tol)
    np.testing.assert_allclose(p @ a @ p, p, atol=tol)
    np.testing.assert_allclose((a @ p).conj().T, a @ p, atol=tol)
    np.testing.assert_allclose((p @ a).conj().T, p @ a, atol=tol)


class TestPseudoInverse:
    def test_invertible_matches_inverse(self, rng):
        a = crandn(rng, 4, 4)
        np.testing.assert_allclose(numerics.pseudo_inverse(a), np.linalg.inv(a), atol=1e-10)

    def test_rank_deficient_conditions(self, rng):
        a = crandn(rng, 5, 2) @ crandn(rng, 2, 4)
        assert_moore_penrose(a, numerics.pseudo_inverse(a))

    def test_zero_matrix(self):
        np.testing.assert_array_equal(numerics.pseudo_inverse(np.zeros((2, 3))), np.zeros((3, 2)))

    def test_batched(self, rng):
        a = crandn(rng, 7, 3, 2)
        p = numerics.pseudo_inverse(a)
        for k in range(7):
            np.testing.assert_allclose(p[k], np.linalg.pinv(a[k]), atol=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
    def test_moore_penrose_property(self, rows, cols, seed):
        a = crandn(np.random.default_rng(seed), rows, cols)
        assert_moore_penrose(a, numerics.pseudo_inverse(a))


class TestLmmse:
    def test_closed_form(self, rng):
        h = crandn(rng, 2, 2)
        r = crandn(rng, 2, 8)
        y = h @ r + 0.3 * crandn(rng, 2, 8)
        expect = y @ r.conj().T @ np.linalg.inv(r @ r.conj().T + 0.1 * np.eye(2))
        np.testing.assert_allclose(numerics.lmmse_estimate(y, r, 0.1), expect, atol=1e-10)

    def test_noiseless_exact(self, rng):
        h = crandn(rng, 3, 2)
        r = crandn(rng, 2, 6)
        np.testing.assert_allclose(numerics.lmmse_estimate(h @ r, r, 0.0), h, atol=1e-10)

    def test_rank_deficient_reference_uses_minimum_norm(self):
        r = np.array([[1.0, 1.0], [1.0, 1.0]])
        y = np.array([[2.0, 2.0]])
        h = numerics.lmmse_estimate(y, r, 0.0)
        np.testing.assert_allclose(h, [[1.0, 1.0]], atol=1e-12)

    def test_shrinks_toward_zero(self, rng):
        r = crandn(rng, 2, 4)
        y = crandn(rng, 2, 4)
        small = np.linalg.norm(numerics.lmmse_estimate(y, r, 100.0))
        assert small < np.linalg.norm(numerics.lmmse_estimate(y, r, 0.0))

    def test_column_mismatch(self, rng):
        with pytest.raises(InvalidDimensionError):
            numerics.lmmse_estimate(crandn(rng, 2, 3), crandn(rng, 2, 4), 0.1)

    def test_negative_noise(self, rng):
        with pytest.raises(InvalidInputError):
            numerics.lmmse_estimate(crandn(rng, 2, 3), crandn(rng, 2, 3), -1.0)


def test_spectral_radius_power_iteration(rng):
    m = crandn(rng, 8, 8)
    v = crandn(rng, 8)
    for _ in range(2000):
        v = m @ v
        v /= np.linalg.norm(v)
    rayleigh = abs(v.conj() @ m @ v)
    assert numerics.spectral_radius(m) == pytest.approx(rayleigh, rel=1e-3)


def test_pairs_round_trip(rng):
    a = crandn(rng, 2, 3)
    np.testing.assert_array_equal(numerics.from_pairs(numerics.to_pairs(a)), a)


def test_seed_sequence_passthrough():
    ss = np.random.SeedSequence(5)
    assert numerics.seed_sequence(ss) is ss
    assert numerics.seed_sequence(5).entropy == 5
