"""Evaluation metric tests, including the independent scalar-loop oracle."""

import math

import numpy as np
import pytest

from specsr.cube import HsiCube
from specsr.errors import InputError, MetricError
from specsr.metrics import (compute_report, per_band_rmse_8bit, rmse_8bit,
                            rmse_rel, sam_degrees, write_report_csv)


def cube_of(data, scale=1.0):
    data = np.asarray(data)
    return HsiCube(data, 400.0 + 10.0 * np.arange(data.shape[0]), scale=scale)


def scalar_loop_metrics(pred, gt, scale):
    """Independent all-Python oracle for the three metrics (64-bit)."""
    bands, h, w = pred.shape
    sq = 0.0
    for b in range(bands):
        for i in range(h):
            for j in range(w):
                p = min(max(255.0 * pred[b, i, j] / scale, 0.0), 255.0)
                g = min(max(255.0 * gt[b, i, j] / scale, 0.0), 255.0)
                sq += (p - g) ** 2
    rmse = math.sqrt(sq / (bands * h * w))

    sq = 0.0
    total = 0.0
    for b in range(bands):
        for i in range(h):
            for j in range(w):
                sq += (pred[b, i, j] - gt[b, i, j]) ** 2
                total += gt[b, i, j]
    mean_gt = total / (bands * h * w)
    rel = math.sqrt(sq / (bands * h * w)) / mean_gt

    angles = []
    for i in range(h):
        for j in range(w):
            dot = sum(pred[b, i, j] * gt[b, i, j] for b in range(bands))
            np_ = math.sqrt(sum(pred[b, i, j] ** 2 for b in range(bands)))
            ng = math.sqrt(sum(gt[b, i, j] ** 2 for b in range(bands)))
            if np_ < 1e-8 or ng < 1e-8:
                continue
            angles.append(math.degrees(math.acos(max(-1.0, min(1.0, dot / (np_ * ng))))))
    sam = sum(angles) / len(angles)
    return rmse, rel, sam


class TestRmse8bit:
    def test_equal_cubes(self, rng):
        gt = cube_of(rng.random((3, 4, 4)))
        assert rmse_8bit(cube_of(gt.data.copy()), gt) == 0.0

    def test_constant_offset_three(self, rng):
        base = rng.integers(20, 200, size=(2, 5, 5)).astype(np.float32)
        gt = cube_of(base, scale=255.0)
        pred = cube_of(base + 3.0, scale=255.0)
        assert abs(rmse_8bit(pred, gt) - 3.0) < 1e-9

    def test_clipping_idempotence(self):
        gt = cube_of(np.array([[[0.5, 1.4]]]))
        a = cube_of(np.array([[[0.5, 2.0]]]))
        b = cube_of(np.array([[[0.5, 50.0]]]))
        assert rmse_8bit(a, gt) == rmse_8bit(b, gt)

    def test_shape_mismatch(self, rng):
        with pytest.raises(InputError):
            rmse_8bit(cube_of(rng.random((2, 3, 3))), cube_of(rng.random((2, 3, 4))))


class TestRmseRel:
    def test_equal_cubes(self, rng):
        gt = cube_of(rng.random((3, 4, 4)) + 0.5)
        assert rmse_rel(cube_of(gt.data.copy()), gt) == 0.0

    def test_constant_cubes(self):
        gt = cube_of(np.full((2, 3, 3), 100.0))
        pred = cube_of(np.full((2, 3, 3), 110.0))
        assert abs(rmse_rel(pred, gt) - 0.1) < 1e-12

    def test_joint_scale_invariance(self, rng):
        p = rng.random((3, 4, 4)) + 0.2
        g = rng.random((3, 4, 4)) + 0.2
        r1 = rmse_rel(cube_of(p), cube_of(g))
        r2 = rmse_rel(cube_of(13.7 * p), cube_of(13.7 * g))
        assert abs(r1 - r2) < 1e-12

    def test_zero_mean_gt_rejected(self, rng):
        gt = cube_of(np.zeros((2, 2, 2)))
        with pytest.raises(InputError):
            rmse_rel(cube_of(rng.random((2, 2, 2))), gt)


class TestSamDegrees:
    def test_positive_scaling_gives_zero(self, rng):
        g = rng.random((4, 3, 3)) + 0.1
        assert sam_degrees(cube_of(3.7 * g), cube_of(g)) < 1e-6

    def test_orthogonal_spectra(self):
        pred = cube_of(np.array([1.0, 0.0]).reshape(2, 1, 1))
        gt = cube_of(np.array([0.0, 1.0]).reshape(2, 1, 1))
        assert abs(sam_degrees(pred, gt) - 90.0) < 1e-9

    def test_45_degrees(self):
        pred = cube_of(np.array([1.0, 1.0]).reshape(2, 1, 1))
        gt = cube_of(np.array([1.0, 0.0]).reshape(2, 1, 1))
        assert abs(sam_degrees(pred, gt) - 45.0) < 1e-9

    def test_symmetry(self, rng):
        p = cube_of(rng.random((3, 4, 4)) + 0.1)
        g = cube_of(rng.random((3, 4, 4)) + 0.1)
        assert abs(sam_degrees(p, g) - sam_degrees(g, p)) < 1e-12

    def test_per_pixel_rescale_invariance(self, rng):
        p = rng.random((3, 4, 4)) + 0.1
        g = rng.random((3, 4, 4)) + 0.1
        scales = rng.random((4, 4)) * 5 + 0.1
        assert abs(sam_degrees(cube_of(p * scales), cube_of(g)) -
                   sam_degrees(cube_of(p), cube_of(g))) < 1e-9

    def test_degenerate_pixels_excluded(self, rng):
        p = rng.random((2, 1, 3)) + 0.5
        g = rng.random((2, 1, 3)) + 0.5
        p[:, 0, 0] = 0.0  # degenerate pixel: must not poison the average
        full = sam_degrees(cube_of(p[:, :, 1:]), cube_of(g[:, :, 1:]))
        with_degenerate = sam_degrees(cube_of(p), cube_of(g))
        assert abs(full - with_degenerate) < 1e-9

    def test_all_degenerate_raises(self):
        z = cube_of(np.zeros((2, 2, 2)))
        with pytest.raises(MetricError):
            sam_degrees(z, z)


class TestScalarLoopOracle:
    def test_all_three_metrics_match(self, rng):
        pred = rng.random((3, 4, 4)) + 0.05
        gt = rng.random((3, 4, 4)) + 0.05
        scale = 1.3
        want_rmse, want_rel, want_sam = scalar_loop_metrics(pred, gt, scale)
        p, g = cube_of(pred, scale), cube_of(gt, scale)
        assert abs(rmse_8bit(p, g) - want_rmse) < 1e-10
        assert abs(rmse_rel(p, g) - want_rel) < 1e-10
        assert abs(sam_degrees(p, g) - want_sam) < 1e-10


class TestReport:
    def test_report_fields(self, rng):
        pred = cube_of(rng.random((3, 4, 4)) + 0.1)
        gt = cube_of(rng.random((3, 4, 4)) + 0.1)
        rep = compute_report(pred, gt)
        assert rep.pixel_count == 16
        assert rep.per_band_rmse.shape == (3,)
        assert rep.rmse >= 0 and 0 <= rep.sam_deg <= 180

    def test_per_band_consistency(self, rng):
        pred = cube_of(rng.random((3, 4, 4)))
        gt = cube_of(rng.random((3, 4, 4)))
        per_band = per_band_rmse_8bit(pred, gt)
        total = rmse_8bit(pred, gt)
        assert abs(np.sqrt(np.mean(per_band**2)) - total) < 1e-9

    def test_csv_aggregate_is_mean(self, rng, tmp_path):
        rows = []
        for i in range(3):
            pred = cube_of(rng.random((2, 3, 3)) + 0.1)
            gt = cube_of(rng.random((2, 3, 3)) + 0.1)
            rows.append((f"img{i}", compute_report(pred, gt)))
        path = tmp_path / "m.csv"
        write_report_csv(path, rows)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 5  # header + 3 images + aggregate
        agg = lines[-1].split(",")
        assert agg[0] == "aggregate"
        assert abs(float(agg[1]) - np.mean([r.rmse for _, r in rows])) < 1e-6
