"""Latent codec: the stand-in for a learned autoencoder.

encode: average-pool the map by an integer factor and flatten row-major,
giving a latent of dimension (n/factor)^2. decode: bilinear interpolation
back to n x n (latent values sit at block centers) followed by per-block
mean restoration, then a clip to [0, 1]. The restoration makes pooling a
one-sided inverse of decoding (encode(decode(z)) == z while no clipping
engages), so decode-then-encode is a projection. Both directions are
linear up to the final clip.
"""

import numpy as np

from .errors import ConfigurationError
from .raster import RadioMap

DEFAULT_FACTOR = 4


def encode(rmap: RadioMap, factor: int = DEFAULT_FACTOR) -> np.ndarray:
    n = rmap.shape[0]
    if factor <= 0 or n % factor != 0:
        raise ConfigurationError(f"pool factor {factor} does not divide grid side {n}")
    m = n // factor
    pooled = rmap.values.reshape(m, factor, m, factor).mean(axis=(1, 3))
    return pooled.astype(np.float32).ravel()


def _axis_interp(values: np.ndarray, n: int, factor: int, axis: int) -> np.ndarray:
    m = values.shape[axis]
    if m == 1:
        return np.repeat(values, n, axis=axis)
    # target cell centers in block-index coordinates, clamped at the borders
    u = (np.arange(n) + 0.5) / factor - 0.5
    u = np.clip(u, 0.0, m - 1.0)
    i0 = np.minimum(np.floor(u).astype(int), m - 2)
    frac = (u - i0).astype(np.float32)
    lo = np.take(values, i0, axis=axis)
    hi = np.take(values, i0 + 1, axis=axis)
    shape = [1, 1]
    shape[axis] = n
    frac = frac.reshape(shape)
    return lo * (1.0 - frac) + hi * frac


def decode(latent: np.ndarray, n: int, factor: int = DEFAULT_FACTOR) -> RadioMap:
    latent = np.asarray(latent, dtype=np.float32)
    if factor <= 0 or n % factor != 0:
        raise ConfigurationError(f"pool factor {factor} does not divide grid side {n}")
    m = n // factor
    if latent.shape != (m * m,):
        raise ConfigurationError(
            f"latent dimension {latent.shape} does not match ({m * m},)"
        )
    grid = latent.reshape(m, m)
    out = _axis_interp(_axis_interp(grid, n, factor, 0), n, factor, 1).astype(np.float64)
    # restore each block's mean so pooling inverts the upsample exactly
    blocks = out.reshape(m, factor, m, factor)
    correction = grid.astype(np.float64) - blocks.mean(axis=(1, 3))
    blocks += correction[:, np.newaxis, :, np.newaxis]
    return RadioMap(np.clip(out, 0.0, 1.0).astype(np.float32))


def latent_dim(n: int, factor: int = DEFAULT_FACTOR) -> int:
    if factor <= 0 or n % factor != 0:
        raise ConfigurationError(f"pool factor {factor} does not divide grid side {n}")
    return (n // factor) ** 2
