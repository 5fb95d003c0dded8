"""Self-check battery: kernel oracles, gradient checks, metric oracles,
unmixing recovery, and PCA identities, each with a measured error and a
pinned tolerance. This is what `specsr verify` runs."""

from __future__ import annotations

import itertools
import time
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import reference as ref
from . import tensor_core as tc
from .cube import HsiCube
from .metrics import rmse_8bit, rmse_rel, sam_degrees
from .network import NetworkSpec, build_network, predict_tiled
from .optim import grad_check
from .unmixing import Endmembers, fcls_abundances, pca_project, vca_extract

FAULT_KINDS = ("conv-backward",)


@dataclass
class CheckResult:
    name: str
    measured: float
    tolerance: float
    passed: bool
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: measured {self.measured:.3e} vs tolerance {self.tolerance:.1e} ({self.seconds:.1f}s)"


def _result(name: str, measured: float, tolerance: float, t0: float) -> CheckResult:
    return CheckResult(name, float(measured), tolerance,
                       bool(measured <= tolerance), time.time() - t0)


@contextmanager
def _inject_fault(fault: str | None):
    """Testing hook: corrupt a kernel to prove the battery catches it."""
    if fault is None:
        yield
        return
    if fault not in FAULT_KINDS:
        raise ValueError(f"unknown fault {fault!r}; known: {FAULT_KINDS}")
    orig = tc.conv2d_backward

    def corrupted(x, k, grad_out, pad, xpt=None):
        gx, gw, gb = orig(x, k, grad_out, pad, xpt=xpt)
        return gx, -gw, gb  # sign-flipped weight gradient

    tc.conv2d_backward = corrupted
    try:
        yield
    finally:
        tc.conv2d_backward = orig


def miniature_spec() -> NetworkSpec:
    """2-scale miniature of the full architecture, used for gradient checks."""
    return NetworkSpec(in_channels=3, out_channels=5, num_scales=2,
                       layers_per_block=2, growth_filters=4, stem_filters=8,
                       dropout_rate=0.0)


def check_kernel_oracles(seed: int = 0, n_shapes: int = 100) -> list[CheckResult]:
    """Fast kernels vs naive nested-loop oracles on random shapes <= 2x8x16x16."""
    rng = np.random.default_rng(seed)
    err_conv = 0.0
    err_pool = 0.0
    err_shuffle = 0.0
    err_concat = 0.0
    t0 = time.time()
    for _ in range(n_shapes):
        b = int(rng.integers(1, 3))
        c = int(rng.integers(1, 9))
        h = int(rng.integers(1, 17))
        w = int(rng.integers(1, 17))

        # conv: random 1x1 or 3x3 kernel at same-size padding
        k = int(rng.choice([1, 3]))
        oc = int(rng.integers(1, 9))
        x = rng.standard_normal((b, c, h, w)).astype(np.float32)
        weights = rng.standard_normal((oc, c, k, k)).astype(np.float32)
        bias = rng.standard_normal(oc).astype(np.float32)
        got = tc.conv2d(x, tc.ConvKernel(weights, bias), (k - 1) // 2)
        want = ref.naive_conv2d(x, weights, bias, (k - 1) // 2)
        err_conv = max(err_conv, float(np.abs(got - want).max()))

        # pool: even spatial dims
        he, we = h + (h % 2), w + (w % 2)
        xp = rng.standard_normal((b, c, he, we)).astype(np.float32)
        got_pool, _ = tc.max_pool2x2(xp)
        err_pool = max(err_pool, float(np.abs(got_pool - ref.naive_max_pool2x2(xp)).max()))

        # pixel shuffle: channels divisible by r^2
        r = 2
        xs = rng.standard_normal((b, c * r * r, h, w)).astype(np.float32)
        err_shuffle = max(
            err_shuffle,
            float(np.abs(tc.pixel_shuffle(xs, r) - ref.naive_pixel_shuffle(xs, r)).max()),
        )

        # concat of 2-3 pieces
        pieces = [
            rng.standard_normal((b, int(rng.integers(1, 5)), h, w)).astype(np.float32)
            for _ in range(int(rng.integers(2, 4)))
        ]
        err_concat = max(
            err_concat,
            float(np.abs(tc.concat_channels(pieces) - ref.naive_concat_channels(pieces)).max()),
        )
    return [
        _result("kernel_oracle_conv", err_conv, 1e-5, t0),
        _result("kernel_oracle_pool", err_pool, 0.0, t0),
        _result("kernel_oracle_pixel_shuffle", err_shuffle, 0.0, t0),
        _result("kernel_oracle_concat", err_concat, 0.0, t0),
    ]


def check_gradient(seed: int = 0, fault: str | None = None) -> CheckResult:
    """Finite-difference check of the full backward pass on the miniature
    network (16x16 input, 64-bit, dropout disabled, loss + l2 objective)."""
    t0 = time.time()
    rng = np.random.default_rng(seed)
    net = build_network(miniature_spec(), rng)
    net.set_dtype(np.float64)
    x = rng.standard_normal((1, 3, 16, 16))
    target = rng.standard_normal((1, 5, 16, 16))
    with _inject_fault(fault):
        report = grad_check(net, x, target, tolerance=1e-5, l2_coeff=1e-6,
                            n_samples=200, step=1e-5, rng=rng)
    return _result("gradient_finite_difference", report.max_rel_error, 1e-5, t0)


def check_metric_oracles() -> list[CheckResult]:
    results = []

    t0 = time.time()
    pred = HsiCube(np.array([1.0, 1.0], np.float32).reshape(2, 1, 1), [500.0, 600.0])
    gt = HsiCube(np.array([1.0, 0.0], np.float32).reshape(2, 1, 1), [500.0, 600.0])
    results.append(_result("metric_sam_45deg", abs(sam_degrees(pred, gt) - 45.0), 1e-9, t0))

    t0 = time.time()
    rng = np.random.default_rng(7)
    # integer-valued data so the +3 offset is exact in float32 and no clipping engages
    base = rng.integers(50, 200, size=(3, 6, 6)).astype(np.float32)
    gt2 = HsiCube(base, [500.0, 550.0, 600.0], scale=255.0)
    pred2 = HsiCube(base + 3.0, [500.0, 550.0, 600.0], scale=255.0)
    results.append(_result("metric_rmse_offset3", abs(rmse_8bit(pred2, gt2) - 3.0), 1e-9, t0))

    t0 = time.time()
    p = rng.uniform(0.1, 1.0, size=(3, 5, 5)).astype(np.float64)
    g = rng.uniform(0.1, 1.0, size=(3, 5, 5)).astype(np.float64)
    lams = [500.0, 550.0, 600.0]
    alpha = 7.25
    r1 = rmse_rel(HsiCube(p, lams), HsiCube(g, lams))
    r2 = rmse_rel(HsiCube(alpha * p, lams), HsiCube(alpha * g, lams))
    results.append(_result("metric_rmse_rel_scale_invariance", abs(r1 - r2), 1e-12, t0))

    t0 = time.time()
    # extending an already-clipped value further out of range must not move RMSE
    gt3 = HsiCube(np.array([[[0.5, 1.2, -0.1, 0.8]]], np.float32).reshape(1, 2, 2), [500.0])
    pred_a = HsiCube(np.array([[[0.5, 1.5, -0.5, 0.8]]], np.float32).reshape(1, 2, 2), [500.0])
    pred_b = HsiCube(np.array([[[0.5, 9.0, -9.0, 0.8]]], np.float32).reshape(1, 2, 2), [500.0])
    err = abs(rmse_8bit(pred_a, gt3) - rmse_8bit(pred_b, gt3))
    results.append(_result("metric_rmse_clipping_idempotent", err, 1e-12, t0))
    return results


def _match_columns(estimated: np.ndarray, truth: np.ndarray) -> tuple[list[int], float]:
    """Best column permutation by total spectral angle; returns (perm, max SAM deg)."""
    k = truth.shape[1]

    def sam(u, v):
        cos = float(u @ v / max(np.linalg.norm(u) * np.linalg.norm(v), 1e-300))
        return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))

    best_perm, best_total = None, np.inf
    for perm in itertools.permutations(range(k)):
        total = sum(sam(estimated[:, perm[j]], truth[:, j]) for j in range(k))
        if total < best_total:
            best_total, best_perm = total, perm
    worst = max(sam(estimated[:, best_perm[j]], truth[:, j]) for j in range(k))
    return list(best_perm), worst


def make_simplex_cube(bands: int, h: int, w: int, k: int, rng: np.random.Generator,
                      noise: float = 0.0, pure_pixels: bool = True):
    """Synthetic linear-mixing data with known endmembers and abundances."""
    grid = np.linspace(0.0, 1.0, bands)
    e = np.stack(
        [np.exp(-((grid - c) ** 2) / (2 * s * s)) + 0.05
         for c, s in zip(np.linspace(0.15, 0.85, k), rng.uniform(0.08, 0.2, size=k))],
        axis=1,
    )
    a = rng.dirichlet(np.ones(k), size=h * w).T  # (k, n)
    if pure_pixels:
        for j in range(k):
            a[:, j] = 0.0
            a[j, j] = 1.0
    x = e @ a
    if noise > 0:
        x = x + noise * rng.standard_normal(x.shape)
    wavelengths = 400.0 + 10.0 * np.arange(bands)
    cube = HsiCube(x.reshape(bands, h, w).astype(np.float32), wavelengths)
    return cube, e, a


def check_unmixing(seed: int = 0) -> list[CheckResult]:
    results = []
    rng = np.random.default_rng(seed)

    # noiseless 3-endmember simplex with pure pixels: VCA must recover exactly
    t0 = time.time()
    cube, e_true, a_true = make_simplex_cube(31, 20, 20, 3, rng)
    ems = vca_extract(cube, 3, np.random.default_rng(seed + 1))
    perm, worst_sam = _match_columns(ems.matrix, e_true)
    results.append(_result("vca_simplex_recovery_sam_deg", worst_sam, 0.1, t0))

    # FCLS abundances against the generating coefficients
    t0 = time.time()
    e_matched = ems.matrix[:, perm]
    ems_matched = Endmembers(matrix=e_matched, wavelengths=ems.wavelengths)
    ab = fcls_abundances(cube, ems_matched)
    err = float(np.abs(ab.maps.reshape(3, -1) - a_true).max())
    results.append(_result("fcls_simplex_abundance_error", err, 1e-4, t0))

    # constraint satisfaction on noisy pixels outside the simplex
    t0 = time.time()
    n = 10_000
    cube_n, e_n, _ = make_simplex_cube(31, 100, 100, 5, rng, noise=0.05, pure_pixels=False)
    ems_n = Endmembers(matrix=e_n, wavelengths=cube_n.wavelengths)
    ab_n = fcls_abundances(cube_n, ems_n)
    flat = ab_n.maps.reshape(5, -1)[:, :n]
    neg = float(max(0.0, -(flat.min())))
    sum_dev = float(np.abs(flat.sum(axis=0) - 1.0).max())
    results.append(_result("fcls_nonnegativity_violation", neg, 1e-9, t0))
    results.append(_result("fcls_sum_to_one_deviation", sum_dev, 1e-6, t0))

    # objective vs exhaustive active-set enumeration, k = 4
    t0 = time.time()
    cube4, e4, _ = make_simplex_cube(31, 5, 10, 4, rng, noise=1e-3, pure_pixels=False)
    ems4 = Endmembers(matrix=e4, wavelengths=cube4.wavelengths)
    ab4 = fcls_abundances(cube4, ems4)
    x4 = cube4.data.reshape(31, -1).astype(np.float64)
    worst = 0.0
    for i in range(x4.shape[1]):
        obj_fcls = float(np.sum((e4 @ ab4.maps.reshape(4, -1)[:, i] - x4[:, i]) ** 2))
        _, obj_enum = ref.fcls_enumerate(e4, x4[:, i])
        worst = max(worst, abs(obj_fcls - obj_enum))
    results.append(_result("fcls_enumeration_objective_gap", worst, 1e-8, t0))
    return results


def check_pca(seed: int = 0) -> list[CheckResult]:
    results = []
    rng = np.random.default_rng(seed)
    bands, h, w = 8, 24, 24
    data = rng.standard_normal((bands, h, w)).astype(np.float32)
    lams = 400.0 + 10.0 * np.arange(bands)
    cube = HsiCube(data, lams)

    t0 = time.time()
    full = pca_project(cube, bands)
    results.append(_result("pca_full_rank_reconstruction",
                           float(np.abs(full.data - cube.data).max()), 1e-6, t0))

    t0 = time.time()
    k = 3
    proj = pca_project(cube, k)
    x = cube.data.reshape(bands, -1).astype(np.float64)
    n = x.shape[1]
    xc = x - x.mean(axis=1, keepdims=True)
    evals, _ = ref.jacobi_eigh((xc @ xc.T) / n)  # independent eigensolver
    mean_sse = float(np.mean(np.sum((proj.data.reshape(bands, -1).astype(np.float64) - x) ** 2, axis=0)))
    discarded = float(np.sum(evals[k:]))
    results.append(_result("pca_discarded_eigenvalue_identity",
                           abs(mean_sse - discarded), 1e-6, t0))
    return results


def check_tiling(seed: int = 0) -> CheckResult:
    """predict_tiled on a single 64x64 tile must equal forward() bit-exactly."""
    t0 = time.time()
    rng = np.random.default_rng(seed)
    net = build_network(miniature_spec(), rng)
    image = rng.standard_normal((3, 64, 64)).astype(np.float32)
    direct = net.predict(image[None])[0]
    tiled = predict_tiled(net, image)
    exact = float(0.0 if np.array_equal(direct, tiled) else np.abs(direct - tiled).max())
    return _result("tiling_single_tile_bit_exact", exact, 0.0, t0)


def run_all(seed: int = 0, fault: str | None = None) -> list[CheckResult]:
    results: list[CheckResult] = []
    results.extend(check_kernel_oracles(seed))
    results.append(check_gradient(seed, fault=fault))
    results.extend(check_metric_oracles())
    results.extend(check_unmixing(seed))
    results.extend(check_pca(seed))
    results.append(check_tiling(seed))
    return results
