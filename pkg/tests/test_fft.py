import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lwr_fno import fft


@pytest.mark.parametrize("n", list(range(1, 70)) + [97, 120, 128, 211, 256, 600, 1009])
def test_fft_matches_reference(n):
    rng = np.random.default_rng(n)
    x = rng.standard_normal((2, n)) + 1j * rng.standard_normal((2, n))
    ref = np.fft.fft(x)
    np.testing.assert_allclose(fft.fft(x), ref, rtol=0, atol=1e-11 * max(1, n))
    np.testing.assert_allclose(fft.ifft(x), np.fft.ifft(x), rtol=0, atol=1e-11)


@pytest.mark.parametrize("n", [1, 2, 7, 12, 37, 60, 120, 257])
def test_naive_dft_oracle(n):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(n)
    k = np.arange(n)
    naive = np.exp(-2j * np.pi * np.outer(k, k) / n) @ x
    np.testing.assert_allclose(fft.fft(x), naive, atol=1e-9)


@given(st.integers(1, 5000))
def test_factorize_product(n):
    radices = fft.factorize(n)
    assert int(np.prod(radices)) == n
    assert all(r >= 2 for r in radices) or n == 1


def test_factorize_rejects_zero():
    with pytest.raises(ValueError):
        fft.factorize(0)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 200), st.integers(0, 2**31))
def test_round_trip_and_parseval(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    X = fft.fft(x)
    np.testing.assert_allclose(fft.ifft(X), x, atol=1e-10)
    assert np.sum(np.abs(X) ** 2) / n == pytest.approx(np.sum(np.abs(x) ** 2), rel=1e-10)


def test_linearity():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((2, 45))
    np.testing.assert_allclose(fft.fft(2 * a - 3 * b), 2 * fft.fft(a) - 3 * fft.fft(b), atol=1e-12)


def test_axis_argument():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((6, 10))
    np.testing.assert_allclose(fft.fft(x, axis=0), np.fft.fft(x, axis=0), atol=1e-12)


def test_fft2_matches_reference():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((3, 4, 32, 120))
    np.testing.assert_allclose(fft.fft2(x), np.fft.fft2(x), atol=1e-9)
    np.testing.assert_allclose(fft.ifft2(fft.fft2(x)).real, x, atol=1e-12)


def test_delta_and_constant():
    d = np.zeros(12)
    d[0] = 1
    np.testing.assert_allclose(fft.fft(d), np.ones(12), atol=1e-15)
    np.testing.assert_allclose(fft.fft(np.ones(12)), np.eye(1, 12)[0] * 12, atol=1e-12)
