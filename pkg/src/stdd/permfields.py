"""Fine-scale permeability fields: file ingestion and synthetic generators.

Fields are (nx, ny) arrays in md on the fine base grid, index [i, j] with
i along x.  Generators are deterministic given their seed.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DimensionMismatch, NonPositivePermeability


def load_permeability(path, shape, layout="row-major"):
    """Read an ASCII whitespace-separated field of md values.

    "row-major" lists x fastest (one y-row per physical row of the file);
    "column-major" lists y fastest.
    """
    values = np.loadtxt(path).ravel()
    nx, ny = shape
    if values.size != nx * ny:
        raise DimensionMismatch(
            f"{path}: {values.size} values, expected {nx}x{ny}={nx * ny}")
    if np.any(values <= 0):
        raise NonPositivePermeability(f"{path}: non-positive value present")
    if layout == "row-major":
        return values.reshape(ny, nx).T.copy()
    if layout == "column-major":
        return values.reshape(nx, ny).copy()
    raise ValueError(f"unknown layout {layout!r}")


def gaussian_field(shape, seed, *, mean_log=3.0, sigma_log=1.0, corr_len=4.0):
    """Lognormal field with Gaussian-filtered white-noise log-permeability.

    `corr_len` is the filter radius in cells.  The filtered noise is
    rescaled to unit variance before exponentiation so `sigma_log`
    controls the actual log spread.
    """
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(shape)
    smooth = gaussian_filter(noise, sigma=corr_len, mode="reflect")
    smooth = (smooth - smooth.mean()) / smooth.std()
    return np.exp(mean_log + sigma_log * smooth)


def channelized_field(shape, seed, *, k_background=5.0, k_channel=500.0,
                      n_channels=3, width=3.0, wiggle=0.15):
    """High-contrast field with sinuous high-permeability channels along x.

    Channel centerlines are smooth random walks in y; `width` is the
    channel half-width in cells, `wiggle` the walk step scale.
    """
    rng = np.random.default_rng(seed)
    nx, ny = shape
    field = np.full(shape, float(k_background))
    jj = np.arange(ny)
    for c in range(n_channels):
        y = rng.uniform(0.15, 0.85) * ny
        steps = rng.standard_normal(nx) * wiggle * ny / 30.0
        path = y + np.cumsum(steps)
        # reflect the centerline into the interior band
        path = np.clip(path, width, ny - 1 - width)
        for i in range(nx):
            mask = np.abs(jj + 0.5 - path[i]) <= width
            field[i, mask] = k_channel
    return field


def make_field(kind, shape, seed=0, **kwargs):
    """Dispatch on generator kind: uniform, gaussian, channelized."""
    if kind == "uniform":
        return np.full(shape, float(kwargs.get("value", 100.0)))
    if kind == "gaussian":
        return gaussian_field(shape, seed, **kwargs)
    if kind == "channelized":
        return channelized_field(shape, seed, **kwargs)
    raise ValueError(f"unknown field kind {kind!r}")
