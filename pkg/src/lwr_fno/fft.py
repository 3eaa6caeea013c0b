"""Mixed-radix FFT with a Bluestein fallback for large prime factors.

All transforms act on the last axis (or last two axes for the 2-D variants)
and are vectorised over every leading axis. Forward transforms are
unnormalised; inverse transforms carry the ``1/n`` factor.

Plan: ``n`` is split into radices 4, 2, 3, 5, 7, ... (small primes first).
Each decimation-in-time stage transforms the ``p`` interleaved subsequences
recursively, applies twiddles, and finishes with a dense ``p x p`` DFT.
Prime factors above ``BLUESTEIN_THRESHOLD`` go through Bluestein's chirp-z
identity, which re-expresses the length-``p`` DFT as a power-of-two circular
convolution.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

BLUESTEIN_THRESHOLD = 31


@lru_cache(maxsize=None)
def factorize(n: int) -> tuple[int, ...]:
    """Radix sequence used for length ``n`` (product equals ``n``)."""
    if n < 1:
        raise ValueError(f"FFT length must be >= 1, got {n}")
    radices = []
    while n % 4 == 0:
        radices.append(4)
        n //= 4
    if n % 2 == 0:
        radices.append(2)
        n //= 2
    p = 3
    while p * p <= n:
        while n % p == 0:
            radices.append(p)
            n //= p
        p += 2
    if n > 1:
        radices.append(n)
    return tuple(radices)


@lru_cache(maxsize=None)
def _dft_matrix(p: int) -> np.ndarray:
    k = np.arange(p)
    return np.exp(-2j * np.pi * np.outer(k, k) / p)


@lru_cache(maxsize=None)
def _twiddles(p: int, m: int) -> np.ndarray:
    r = np.arange(p)[:, None]
    k = np.arange(m)[None, :]
    return np.exp(-2j * np.pi * r * k / (p * m))


@lru_cache(maxsize=None)
def _bluestein_plan(n: int):
    size = 1 << (2 * n - 1).bit_length()
    k = np.arange(n)
    # k^2 mod 2n keeps the chirp phase exact for large k
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    b = np.zeros(size, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    b[size - n + 1:] = np.conj(chirp[1:])[::-1]
    return size, chirp, _fft_last(b)


def _bluestein(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    size, chirp, b_hat = _bluestein_plan(n)
    a = np.zeros(x.shape[:-1] + (size,), dtype=np.complex128)
    a[..., :n] = x * chirp
    conv = _ifft_last(_fft_last(a) * b_hat)
    return conv[..., :n] * chirp


def _fft_last(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    if n == 1:
        return x.astype(np.complex128, copy=True)
    radices = factorize(n)
    p = radices[0]
    if len(radices) == 1:
        if p > BLUESTEIN_THRESHOLD:
            return _bluestein(x)
        return x @ _dft_matrix(p).T
    m = n // p
    # subsequence r holds x[r], x[r + p], ...; transform all p at once
    sub = _fft_last(np.swapaxes(x.reshape(x.shape[:-1] + (m, p)), -1, -2))
    sub = sub * _twiddles(p, m)
    out = _dft_matrix(p) @ sub  # (..., p, m): row k2 holds outputs k2*m + k1
    return out.reshape(x.shape[:-1] + (n,))


def _ifft_last(x: np.ndarray) -> np.ndarray:
    return np.conj(_fft_last(np.conj(x))) / x.shape[-1]


def fft(x, axis: int = -1) -> np.ndarray:
    """Unnormalised forward DFT along ``axis``."""
    x = np.moveaxis(np.asarray(x, dtype=np.complex128), axis, -1)
    return np.moveaxis(_fft_last(x), -1, axis)


def ifft(x, axis: int = -1) -> np.ndarray:
    """Inverse DFT along ``axis`` with ``1/n`` normalisation."""
    x = np.moveaxis(np.asarray(x, dtype=np.complex128), axis, -1)
    return np.moveaxis(_ifft_last(x), -1, axis)


def fft2(x) -> np.ndarray:
    """Unnormalised 2-D DFT over the last two axes."""
    return fft(fft(x, -1), -2)


def ifft2(x) -> np.ndarray:
    """Inverse 2-D DFT over the last two axes (``1/(n1 n2)`` normalisation)."""
    return ifft(ifft(x, -1), -2)
