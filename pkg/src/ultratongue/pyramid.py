"""Undecimated complex steerable pyramid built in the Fourier domain.

Each subband filter is a product of a log-radial Gaussian centred on
``0.25 / 2**level`` cycles/pixel and an angular window
``cos(theta - theta_k) ** (orientations - 1)`` restricted to one half-plane.
Keeping only one half-plane makes the response analytic, so coefficients
are complex and a small translation mostly rotates their phase.
Filtering is circular (periodic boundaries).
"""

from functools import lru_cache

import numpy as np

from .errors import SizeError


@lru_cache(maxsize=16)
def subband_filters(shape, levels=2, orientations=4, octave_sigma=0.5):
    """Frequency responses, shape ``(levels * orientations, H, W)``."""
    h, w = shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    radius = np.hypot(fx, fy)
    theta = np.arctan2(fy, fx)
    with np.errstate(divide="ignore"):
        log_r = np.log2(radius)
    out = []
    for level in range(levels):
        center = 0.25 / 2 ** level
        radial = np.where(radius > 0, np.exp(-0.5 * ((log_r - np.log2(center)) / octave_sigma) ** 2), 0.0)
        for k in range(orientations):
            d = np.angle(np.exp(1j * (theta - np.pi * k / orientations)))
            angular = np.where(np.abs(d) < np.pi / 2, np.cos(d) ** (orientations - 1), 0.0)
            out.append(2.0 * radial * angular)
    filters = np.stack(out)
    filters.setflags(write=False)
    return filters


def decompose(images, levels=2, orientations=4):
    """Complex subbands of an ``(N, H, W)`` stack -> ``(N, levels * orientations, H, W)``."""
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    h, w = x.shape[-2:]
    if min(h, w) < 4 * 2 ** levels:
        raise SizeError(f"{w}x{h} image is too small for a {levels}-level pyramid")
    spec = np.fft.fft2(x)[:, None]
    return np.fft.ifft2(spec * subband_filters((h, w), levels, orientations)[None])
