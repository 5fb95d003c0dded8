"""Slow, independent reference implementations used for verification.

Everything here follows operation definitions directly (nested loops,
exhaustive enumeration, Jacobi rotations) and deliberately shares no code
with the fast kernels it checks.
"""

from __future__ import annotations

import itertools

import numpy as np


def naive_conv2d(x: np.ndarray, weights: np.ndarray, bias: np.ndarray, pad: int) -> np.ndarray:
    """Direct cross-correlation: loop over every output coordinate."""
    b, c, h, w = x.shape
    out_ch, _, kh, kw = weights.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = h + 2 * pad - kh + 1
    ow = w + 2 * pad - kw + 1
    out = np.zeros((b, out_ch, oh, ow), dtype=x.dtype)
    for bi in range(b):
        for oc in range(out_ch):
            for i in range(oh):
                for j in range(ow):
                    patch = xp[bi, :, i : i + kh, j : j + kw]
                    out[bi, oc, i, j] = np.sum(patch * weights[oc]) + bias[oc]
    return out


def naive_max_pool2x2(x: np.ndarray) -> np.ndarray:
    b, c, h, w = x.shape
    out = np.zeros((b, c, h // 2, w // 2), dtype=x.dtype)
    for bi in range(b):
        for ci in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    out[bi, ci, i, j] = x[bi, ci, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2].max()
    return out


def naive_pixel_shuffle(x: np.ndarray, r: int) -> np.ndarray:
    b, c, h, w = x.shape
    co = c // (r * r)
    out = np.zeros((b, co, h * r, w * r), dtype=x.dtype)
    for bi in range(b):
        for co_i in range(co):
            for i in range(h):
                for j in range(w):
                    for dy in range(r):
                        for dx in range(r):
                            out[bi, co_i, r * i + dy, r * j + dx] = x[
                                bi, co_i * r * r + dy * r + dx, i, j
                            ]
    return out


def naive_concat_channels(xs: list[np.ndarray]) -> np.ndarray:
    b, _, h, w = xs[0].shape
    total = sum(x.shape[1] for x in xs)
    out = np.zeros((b, total, h, w), dtype=xs[0].dtype)
    ch = 0
    for x in xs:
        for c in range(x.shape[1]):
            out[:, ch] = x[:, c]
            ch += 1
    return out


def jacobi_eigh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns (eigenvalues descending, eigenvectors as columns). Independent of
    LAPACK; used to cross-check covariance spectra.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off < tol * max(1.0, np.trace(np.abs(a))):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    evals = np.diag(a).copy()
    order = np.argsort(evals)[::-1]
    return evals[order], v[:, order]


def fcls_enumerate(e: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, float]:
    """Exhaustive solver of min ||E a - x||^2 s.t. a >= 0, sum(a) = 1.

    Enumerates every support set (2^k - 1 candidates), solves each
    equality-constrained least-squares subproblem via its KKT system, and
    returns the best feasible point. Tractable for k <= ~10.
    """
    bands, k = e.shape
    best_a, best_obj = None, np.inf
    for size in range(1, k + 1):
        for support in itertools.combinations(range(k), size):
            idx = list(support)
            es = e[:, idx]
            # KKT for min ||Es a - x||^2 s.t. 1'a = 1:
            # [2 Es'Es  1] [a     ]   [2 Es'x]
            # [1'        0] [lambda] = [1     ]
            m = np.zeros((size + 1, size + 1))
            m[:size, :size] = 2.0 * es.T @ es
            m[:size, size] = 1.0
            m[size, :size] = 1.0
            rhs = np.concatenate([2.0 * es.T @ x, [1.0]])
            try:
                sol = np.linalg.solve(m, rhs)
            except np.linalg.LinAlgError:
                continue
            a_s = sol[:size]
            if (a_s < -1e-12).any():
                continue
            a = np.zeros(k)
            a[idx] = np.clip(a_s, 0.0, None)
            a /= a.sum()
            obj = float(np.sum((e @ a - x) ** 2))
            if obj < best_obj:
                best_obj, best_a = obj, a
    return best_a, best_obj
