"""Synthetic data generators shared across tests."""

from __future__ import annotations

import numpy as np

from specsr.cube import HsiCube, cie1964_srf, simulate_input


def gaussian_basis(bands: int, dim: int, width: float = 0.15) -> np.ndarray:
    """Non-negative smooth spectral basis, (bands, dim)."""
    grid = np.linspace(0.0, 1.0, bands)
    centers = np.linspace(0.1, 0.9, dim)
    return np.stack(
        [np.exp(-((grid - c) ** 2) / (2 * width**2)) + 0.05 for c in centers], axis=1
    )


def smooth_fields(dim: int, h: int, w: int, rng: np.random.Generator,
                  block: int = 16) -> np.ndarray:
    """Smooth non-negative coefficient maps, (dim, h, w): coarse uniform noise
    upsampled with bilinear interpolation."""
    gh, gw = h // block + 2, w // block + 2
    coarse = rng.random((dim, gh, gw))
    ys = np.linspace(0, gh - 1.001, h)
    xs = np.linspace(0, gw - 1.001, w)
    y0 = ys.astype(int)
    x0 = xs.astype(int)
    fy = (ys - y0)[None, :, None]
    fx = (xs - x0)[None, None, :]
    c00 = coarse[:, y0][:, :, x0]
    c01 = coarse[:, y0][:, :, x0 + 1]
    c10 = coarse[:, y0 + 1][:, :, x0]
    c11 = coarse[:, y0 + 1][:, :, x0 + 1]
    out = (c00 * (1 - fy) * (1 - fx) + c01 * (1 - fy) * fx
           + c10 * fy * (1 - fx) + c11 * fy * fx)
    return out.astype(np.float32)


def subspace_cube(bands: int, h: int, w: int, dim: int,
                  rng: np.random.Generator, block: int = 16) -> HsiCube:
    """Cube whose pixel spectra lie in a fixed dim-dimensional non-negative
    linear model."""
    basis = gaussian_basis(bands, dim).astype(np.float32)
    coeff = smooth_fields(dim, h, w, rng, block=block)
    data = np.tensordot(basis, coeff, axes=(1, 0))
    return HsiCube(data, 400.0 + 10.0 * np.arange(bands))


def linear_model_patches(n: int, size: int, bands: int, dim: int,
                         rng: np.random.Generator,
                         block: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """(inputs, targets) pairs: targets from a dim-dimensional linear spectral
    model, inputs simulated with the CIE 1964 response."""
    srf = cie1964_srf()
    inputs = np.empty((n, 3, size, size), np.float32)
    targets = np.empty((n, bands, size, size), np.float32)
    for i in range(n):
        cube = subspace_cube(bands, size, size, dim, rng, block=block)
        targets[i] = cube.data
        inputs[i] = simulate_input(cube, srf)
    return inputs, targets
