"""Radix-2 2D FFT, centring shifts and phase-encode line masking.

Conventions used throughout the package:

* transforms are unitary (``1/sqrt(n)`` per axis), so Parseval holds exactly;
* k-space handed to :func:`reconstruct` is DC-centred (DC at ``(H//2, W//2)``);
* phase-encode lines are columns, i.e. the mask runs along the width axis and
  readout runs along the height axis.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


def is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _check_pow2(shape) -> None:
    for n in shape:
        if not is_pow2(int(n)):
            raise ValueError(f"FFT extents must be powers of two, got {tuple(shape)}")


@lru_cache(maxsize=None)
def _bitrev(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(n: int, inverse: bool, dtype: str) -> tuple:
    sign = 1.0 if inverse else -1.0
    out = []
    m = 2
    while m <= n:
        half = m // 2
        out.append(np.exp(sign * 2j * np.pi * np.arange(half) / m).astype(dtype))
        m *= 2
    return tuple(out)


def _fft_last(a: np.ndarray, inverse: bool) -> np.ndarray:
    """Iterative decimation-in-time radix-2 FFT along the last axis (unnormalised)."""
    n = a.shape[-1]
    if n == 1:
        return a.copy()
    lead = a.shape[:-1]
    x = a[..., _bitrev(n)]
    for tw in _twiddles(n, inverse, a.dtype.str):
        half = tw.shape[0]
        x = x.reshape(lead + (n // (2 * half), 2 * half))
        even = x[..., :half]
        odd = x[..., half:] * tw
        x = np.concatenate((even + odd, even - odd), axis=-1)
    return x.reshape(lead + (n,))


def _complex(x) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype in (np.complex64, np.complex128):
        return x
    return x.astype(np.complex128 if x.dtype == np.float64 else np.complex64)


def _fft2(x, inverse: bool) -> np.ndarray:
    z = _complex(x)
    if z.ndim < 2:
        raise ValueError("fft2 needs at least 2 dimensions")
    h, w = z.shape[-2:]
    _check_pow2((h, w))
    z = _fft_last(z, inverse)
    z = np.swapaxes(_fft_last(np.swapaxes(z, -1, -2), inverse), -1, -2)
    scale = 1.0 / np.sqrt(h * w)
    return np.ascontiguousarray(z * z.real.dtype.type(scale))


def fft2(x) -> np.ndarray:
    """Unitary 2D DFT over the last two axes, DC at the origin."""
    return _fft2(x, inverse=False)


def ifft2(k) -> np.ndarray:
    """Inverse of :func:`fft2`."""
    return _fft2(k, inverse=True)


def fftshift(x: np.ndarray) -> np.ndarray:
    """Move the origin sample to ``(H//2, W//2)`` on the last two axes."""
    h, w = x.shape[-2:]
    return np.roll(x, (h // 2, w // 2), axis=(-2, -1))


def ifftshift(x: np.ndarray) -> np.ndarray:
    h, w = x.shape[-2:]
    return np.roll(x, (-(h // 2), -(w // 2)), axis=(-2, -1))


@dataclass
class KSpaceGrid:
    """Complex H x W k-space samples plus their layout convention."""

    data: np.ndarray
    centered: bool = True

    def __post_init__(self):
        self.data = _complex(self.data)
        if self.data.ndim != 2:
            raise ValueError(f"KSpaceGrid must be 2D, got shape {self.data.shape}")
        _check_pow2(self.data.shape)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def as_centered(self) -> "KSpaceGrid":
        return self if self.centered else KSpaceGrid(fftshift(self.data), True)

    def as_origin(self) -> "KSpaceGrid":
        return KSpaceGrid(ifftshift(self.data), False) if self.centered else self

    @classmethod
    def from_image(cls, image) -> "KSpaceGrid":
        """Centred k-space of a real or complex image."""
        return cls(fftshift(fft2(image)), True)


def check_mask(mask, width: int) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 1 or m.shape[0] != width:
        raise ValueError(f"line mask length {m.shape} does not match k-space width {width}")
    return m.astype(bool)


def apply_mask(k, mask) -> np.ndarray:
    """Zero the unacquired phase-encode columns of a k-space array."""
    k = np.asarray(k.data if isinstance(k, KSpaceGrid) else k)
    m = check_mask(mask, k.shape[-1])
    return k * m


def reconstruct(k, mask) -> np.ndarray:
    """Zero-filled magnitude reconstruction ``|F^-1(K * M)|`` from centred k-space."""
    if isinstance(k, KSpaceGrid):
        k = k.as_centered().data
    k = np.asarray(k)
    m = check_mask(mask, k.shape[-1])
    if not m.any():
        return np.zeros(k.shape, dtype=k.real.dtype)
    return np.abs(ifft2(ifftshift(k * m)))


def dc_column(width: int) -> int:
    return width // 2
