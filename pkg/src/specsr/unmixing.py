"""Linear-mixing-model analysis: endmember extraction (VCA), fully constrained
abundance estimation (FCLS), and PCA-projection denoising.

Pixel spectra are treated as columns of a (bands x pixels) matrix. The linear
mixing model writes each pixel as E @ a with endmember matrix E (bands x k)
and per-pixel abundances a >= 0, sum(a) = 1.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .cube import HsiCube
from .errors import ExtractionError, InputError, ParameterError

log = logging.getLogger(__name__)

# Endmember columns closer than this angle count as duplicates.
DUPLICATE_SAM_DEG = 0.1


@dataclass
class Endmembers:
    """Spectral signatures as columns of matrix (bands x k)."""

    matrix: np.ndarray
    wavelengths: np.ndarray
    pixel_indices: list[int] | None = None

    @property
    def count(self) -> int:
        return self.matrix.shape[1]


@dataclass
class AbundanceMaps:
    """Per-pixel mixing coefficients stored as k maps of (height x width)."""

    maps: np.ndarray  # (k, height, width)

    @property
    def count(self) -> int:
        return self.maps.shape[0]


def _spectra_matrix(cube: HsiCube) -> np.ndarray:
    return cube.data.reshape(cube.bands, -1).astype(np.float64)


def pca_project(cube: HsiCube, k: int) -> HsiCube:
    """Project mean-centered pixel spectra onto the top-k eigenvectors of the
    spectral covariance and reconstruct; a denoising step for near-linear data.

    Rank-deficient input is truncated to the available rank with a warning.
    """
    if k < 1 or k > cube.bands:
        raise ParameterError(f"k must be in 1..{cube.bands}, got {k}")
    x = _spectra_matrix(cube)
    n = x.shape[1]
    if n < k + 1:
        raise InputError(f"need at least k+1 = {k + 1} pixels, got {n}")
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    cov = (xc @ xc.T) / n
    evals, evecs = np.linalg.eigh(cov)  # ascending
    evals = evals[::-1]
    evecs = evecs[:, ::-1]
    rank = int(np.sum(evals > max(evals[0], 0.0) * 1e-12))
    k_eff = min(k, max(rank, 1))
    if k_eff < k:
        log.warning("pca_project: rank %d < requested k=%d; truncating", rank, k)
    basis = evecs[:, :k_eff]
    recon = basis @ (basis.T @ xc) + mu
    return HsiCube(
        data=recon.reshape(cube.data.shape).astype(cube.data.dtype),
        wavelengths=cube.wavelengths.copy(),
        scale=cube.scale,
    )


def _pairwise_sam_deg(e: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(e, axis=0)
    unit = e / np.maximum(norms, 1e-300)
    cos = np.clip(unit.T @ unit, -1.0, 1.0)
    return np.degrees(np.arccos(cos))


def vca_extract(cube: HsiCube, k: int, rng: np.random.Generator) -> Endmembers:
    """Vertex component analysis: project pixels onto a k-dim signal subspace,
    then iteratively pick the pixel with the largest absolute projection onto a
    random direction orthogonal to the span of the already-selected endmembers.
    Returns the selected pixels' spectra as columns.
    """
    if k < 2:
        raise ParameterError(f"endmember count must be >= 2, got {k}")
    x = _spectra_matrix(cube)
    bands, n = x.shape
    if n < k:
        raise InputError(f"need at least k = {k} pixels, got {n}")
    if k > bands:
        raise ExtractionError(f"k = {k} exceeds {bands} bands")

    # signal subspace from the uncentered second-moment matrix
    r = (x @ x.T) / n
    evals, evecs = np.linalg.eigh(r)
    evals = evals[::-1]
    evecs = evecs[:, ::-1]
    if evals[k - 1] <= max(evals[0], 0.0) * 1e-12:
        raise ExtractionError(f"k = {k} exceeds the numerical rank of the data")
    y = evecs[:, :k].T @ x  # (k, n)

    # projective normalization onto the hyperplane y.u = 1
    u = y.mean(axis=1)
    denom = y.T @ u
    tiny = 1e-12 * float(np.abs(denom).max())
    safe = np.abs(denom) > tiny
    yp = np.zeros_like(y)
    yp[:, safe] = y[:, safe] / denom[safe]

    a = np.zeros((k, k))
    a[k - 1, 0] = 1.0
    indices: list[int] = []
    eye = np.eye(k)
    for i in range(k):
        w = rng.standard_normal(k)
        f = (eye - a @ np.linalg.pinv(a)) @ w
        norm_f = np.linalg.norm(f)
        if norm_f < 1e-12:
            raise ExtractionError("degenerate projection direction; data rank too low")
        f /= norm_f
        v = f @ yp
        idx = int(np.argmax(np.abs(v)))
        indices.append(idx)
        a[:, i] = yp[:, idx]

    matrix = np.maximum(x[:, indices], 0.0)  # clip noise-induced negatives
    off_diag = _pairwise_sam_deg(matrix) + np.eye(k) * 180.0
    if off_diag.min() <= DUPLICATE_SAM_DEG:
        raise ExtractionError(
            f"duplicate endmembers extracted (pairwise SAM {off_diag.min():.4f} deg)"
        )
    return Endmembers(matrix=matrix, wavelengths=cube.wavelengths.copy(),
                      pixel_indices=indices)


# ---------------------------------------------------------------------------
# Non-negative least squares (Lawson-Hanson active set, normal-equation form)
# ---------------------------------------------------------------------------


def _nnls_gram(g: np.ndarray, f: np.ndarray, max_iter: int) -> np.ndarray:
    """argmin_x 0.5 x'Gx - f'x  s.t. x >= 0, with G = A'A and f = A'b."""
    n = g.shape[0]
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = f.copy()  # f - G @ x with x = 0
    # dual feasibility threshold just above float64 roundoff at the data scale
    tol = 256.0 * np.finfo(np.float64).eps * max(1.0, float(np.abs(f).max()))
    it = 0
    while it < max_iter:
        candidates = ~passive
        if not candidates.any() or w[candidates].max() <= tol:
            break
        j = int(np.argmax(np.where(candidates, w, -np.inf)))
        passive[j] = True
        while it < max_iter:
            it += 1
            idx = np.flatnonzero(passive)
            s_p = np.linalg.solve(g[np.ix_(idx, idx)], f[idx])
            if (s_p > 0).all():
                x = np.zeros(n)
                x[idx] = s_p
                break
            s = np.zeros(n)
            s[idx] = s_p
            neg = passive & (s <= 0)
            ratios = x[neg] / np.maximum(x[neg] - s[neg], 1e-300)
            alpha = float(ratios.min())
            x = x + alpha * (s - x)
            passive &= x > 1e-14
            x[~passive] = 0.0
        w = f - g @ x
    return x


def nnls(a: np.ndarray, b: np.ndarray, max_iter: int | None = None) -> np.ndarray:
    """Solve argmin_x ||Ax - b||^2 subject to x >= 0 (active-set method)."""
    n = a.shape[1]
    if max_iter is None:
        max_iter = 10 * n * n
    return _nnls_gram(a.T @ a, a.T @ b, max_iter)


def fcls_abundances(cube: HsiCube, endmembers: Endmembers) -> AbundanceMaps:
    """Per pixel, solve min ||E a - x||^2 s.t. a >= 0 and sum(a) = 1, via NNLS
    on the system augmented with the weighted sum-to-one row delta * 1' = delta,
    delta = 1e3 times the mean column norm of E."""
    e = endmembers.matrix.astype(np.float64)
    bands, k = e.shape
    if bands != cube.bands:
        raise InputError(f"endmembers have {bands} bands, cube has {cube.bands}")
    if np.linalg.matrix_rank(e) < k:
        raise InputError("endmember matrix is rank deficient")
    delta = 1e3 * float(np.linalg.norm(e, axis=0).mean())
    # Gram matrix and projections of the augmented system [E; delta*1']
    g = e.T @ e + delta * delta
    x = _spectra_matrix(cube)
    f_all = e.T @ x + delta * delta  # (k, n)
    max_iter = 10 * k * k
    n = x.shape[1]
    out = np.empty((k, n))
    for i in range(n):
        out[:, i] = _nnls_gram(g, f_all[:, i], max_iter)
    return AbundanceMaps(maps=out.reshape(k, cube.height, cube.width))


def lmm_reconstruct(endmembers: Endmembers, abundances: AbundanceMaps,
                    scale: float = 1.0) -> HsiCube:
    """Per pixel x_hat = E @ a."""
    e = endmembers.matrix
    k, h, w = abundances.maps.shape
    if e.shape[1] != k:
        raise InputError(f"endmember count {e.shape[1]} != abundance maps {k}")
    data = (e @ abundances.maps.reshape(k, -1)).reshape(e.shape[0], h, w)
    return HsiCube(data=data.astype(np.float32),
                   wavelengths=endmembers.wavelengths.copy(), scale=scale)


def save_endmembers_csv(path, endmembers: Endmembers) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["wavelength"] + [f"e{i + 1}" for i in range(endmembers.count)])
        for b, lam in enumerate(endmembers.wavelengths):
            writer.writerow([f"{lam:.9g}"] + [f"{v:.9g}" for v in endmembers.matrix[b]])
