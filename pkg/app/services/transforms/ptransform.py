"""
Offset-variable Fourier transform and differentiation.

Sinogram rows are sampled on the odd-length symmetric grid
p_j = (j - P) h_p; the transform uses the 1-D convention
g^(sigma) = (2 pi)^{-1/2} int g(p) exp(-i p sigma) dp.
"""
import logging
import math

import numpy as np
from scipy import fft as spfft

from app.config.settings import P_PADDING

logger = logging.getLogger(__name__)


def p_frequencies(size: int, spacing: float) -> np.ndarray:
    """Centered frequencies 2 pi k / (M h_p) for an odd row length M."""
    if size % 2 == 0:
        raise ValueError(f"Offset rows must have odd length, got {size}")
    half = size // 2
    return 2.0 * math.pi * np.arange(-half, half + 1) / (size * spacing)


def p_forward(values: np.ndarray, spacing: float) -> np.ndarray:
    """Transform along the last axis; zero offset sits at the center."""
    shifted = spfft.ifftshift(values, axes=-1)
    return spfft.fftshift(spfft.fft(shifted, axis=-1), axes=-1) * spacing / math.sqrt(2.0 * math.pi)


def p_inverse(spectrum: np.ndarray, spacing: float) -> np.ndarray:
    shifted = spfft.ifftshift(spectrum, axes=-1)
    return spfft.fftshift(spfft.ifft(shifted, axis=-1), axes=-1) * math.sqrt(2.0 * math.pi) / spacing


def pad_offsets(values: np.ndarray, factor: int = P_PADDING) -> np.ndarray:
    """Zero-extend rows of length 2P+1 to 2(factor P)+1, keeping p = 0 centered."""
    if factor <= 1:
        return values
    half = values.shape[-1] // 2
    extra = (factor - 1) * half
    return np.pad(values, [(0, 0)] * (values.ndim - 1) + [(extra, extra)])


def crop_offsets(values: np.ndarray, size: int) -> np.ndarray:
    start = (values.shape[-1] - size) // 2
    return values[..., start:start + size]


def differentiate_p(values: np.ndarray, spacing: float, order: int, method: str = "spectral",
                    padding: int = P_PADDING) -> np.ndarray:
    """
    Derivative of given order along the offset axis.

    Args:
        values: Real rows, last axis the offset grid
        spacing: Offset spacing h_p
        order: Number of derivatives
        method: "spectral" (multiply by (i sigma)^order on a zero-padded row)
            or "central" (second-order centered differences)
        padding: Zero-padding factor for the spectral method

    Returns:
        Array of the same shape
    """
    if order < 0:
        raise ValueError(f"Derivative order must be non-negative, got {order}")
    if order == 0:
        return np.array(values, copy=True)
    if method == "spectral":
        size = values.shape[-1]
        padded = pad_offsets(values, padding)
        sigma = p_frequencies(padded.shape[-1], spacing)
        spectrum = p_forward(padded, spacing) * (1j * sigma) ** order
        return crop_offsets(np.real(p_inverse(spectrum, spacing)), size)
    if method == "central":
        result = np.asarray(values, dtype=float)
        remaining = order
        while remaining >= 2:
            padded = np.pad(result, [(0, 0)] * (result.ndim - 1) + [(1, 1)])
            result = (padded[..., 2:] - 2.0 * padded[..., 1:-1] + padded[..., :-2]) / spacing ** 2
            remaining -= 2
        if remaining:
            padded = np.pad(result, [(0, 0)] * (result.ndim - 1) + [(1, 1)])
            result = (padded[..., 2:] - padded[..., :-2]) / (2.0 * spacing)
        return result
    raise ValueError(f"Unknown differentiation method: {method}")
