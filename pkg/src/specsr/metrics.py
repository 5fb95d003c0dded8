"""Evaluation measures for predicted hyperspectral cubes.

RMSE is computed on the 8-bit range (values mapped through the ground-truth
scale and clipped to [0, 255], kept real-valued). RMSERel divides the plain
RMSE by the ground-truth mean, without 8-bit conversion. SAM is the average
per-pixel angle between predicted and reference spectra, in degrees, computed
on raw values (it is scale-invariant).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .cube import HsiCube, to_8bit
from .errors import InputError, MetricError

log = logging.getLogger(__name__)

DEGENERATE_NORM = 1e-8


def _check_pair(pred: HsiCube, gt: HsiCube) -> None:
    if pred.data.shape != gt.data.shape:
        raise InputError(f"shape mismatch: pred {pred.data.shape} vs gt {gt.data.shape}")
    if not np.allclose(pred.wavelengths, gt.wavelengths):
        raise InputError("cube wavelengths differ between prediction and ground truth")


def per_band_rmse_8bit(pred: HsiCube, gt: HsiCube) -> np.ndarray:
    """Per-band RMSE in 8-bit units, both cubes mapped via the ground-truth scale."""
    _check_pair(pred, gt)
    p = to_8bit(pred.data.astype(np.float64), gt.scale)
    g = to_8bit(gt.data.astype(np.float64), gt.scale)
    return np.sqrt(np.mean((p - g) ** 2, axis=(1, 2)))


def rmse_8bit(pred: HsiCube, gt: HsiCube) -> float:
    """Root mean square error over all pixels and bands, in 8-bit units."""
    _check_pair(pred, gt)
    p = to_8bit(pred.data.astype(np.float64), gt.scale)
    g = to_8bit(gt.data.astype(np.float64), gt.scale)
    return float(np.sqrt(np.mean((p - g) ** 2)))


def rmse_rel(pred: HsiCube, gt: HsiCube) -> float:
    """Relative RMSE: both cubes normalized by the ground-truth mean,
    equivalently RMSE(pred, gt) / mean(gt). No 8-bit conversion."""
    _check_pair(pred, gt)
    mean_gt = float(np.mean(gt.data.astype(np.float64)))
    if mean_gt <= 0:
        raise InputError(f"ground-truth mean must be > 0 for RMSERel, got {mean_gt}")
    diff = pred.data.astype(np.float64) - gt.data.astype(np.float64)
    return float(np.sqrt(np.mean(diff**2)) / mean_gt)


def sam_degrees(pred: HsiCube, gt: HsiCube) -> float:
    """Average angular deviation between per-pixel spectra, in degrees.

    Pixels where either spectrum has norm < 1e-8 are excluded (logged)."""
    _check_pair(pred, gt)
    p = pred.data.reshape(pred.bands, -1).astype(np.float64)
    g = gt.data.reshape(gt.bands, -1).astype(np.float64)
    np_norm = np.linalg.norm(p, axis=0)
    ng_norm = np.linalg.norm(g, axis=0)
    valid = (np_norm >= DEGENERATE_NORM) & (ng_norm >= DEGENERATE_NORM)
    n_skipped = int((~valid).sum())
    if not valid.any():
        raise MetricError("all pixels have degenerate spectra; SAM undefined")
    if n_skipped:
        log.info("SAM: excluded %d degenerate pixels of %d", n_skipped, valid.size)
    cosine = np.sum(p[:, valid] * g[:, valid], axis=0) / (np_norm[valid] * ng_norm[valid])
    angles = np.arccos(np.clip(cosine, -1.0, 1.0))
    return float(np.degrees(np.mean(angles)))


@dataclass
class MetricReport:
    rmse: float
    rmse_rel: float
    sam_deg: float
    per_band_rmse: np.ndarray
    pixel_count: int
    degenerate_pixels: int

    def row(self) -> dict:
        return {
            "rmse": self.rmse,
            "rmse_rel": self.rmse_rel,
            "sam_deg": self.sam_deg,
            "pixel_count": self.pixel_count,
        }


def compute_report(pred: HsiCube, gt: HsiCube) -> MetricReport:
    _check_pair(pred, gt)
    p = pred.data.reshape(pred.bands, -1).astype(np.float64)
    g = gt.data.reshape(gt.bands, -1).astype(np.float64)
    degenerate = int(
        ((np.linalg.norm(p, axis=0) < DEGENERATE_NORM)
         | (np.linalg.norm(g, axis=0) < DEGENERATE_NORM)).sum()
    )
    return MetricReport(
        rmse=rmse_8bit(pred, gt),
        rmse_rel=rmse_rel(pred, gt),
        sam_deg=sam_degrees(pred, gt),
        per_band_rmse=per_band_rmse_8bit(pred, gt),
        pixel_count=pred.height * pred.width,
        degenerate_pixels=degenerate,
    )


def write_report_csv(path, rows: list[tuple[str, MetricReport]]) -> None:
    """Per-image rows plus an aggregate row (mean over images)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["image_id", "rmse", "rmse_rel", "sam_deg", "pixel_count"])
        for image_id, rep in rows:
            writer.writerow([image_id, f"{rep.rmse:.9g}", f"{rep.rmse_rel:.9g}",
                             f"{rep.sam_deg:.9g}", rep.pixel_count])
        if rows:
            writer.writerow([
                "aggregate",
                f"{np.mean([r.rmse for _, r in rows]):.9g}",
                f"{np.mean([r.rmse_rel for _, r in rows]):.9g}",
                f"{np.mean([r.sam_deg for _, r in rows]):.9g}",
                int(np.sum([r.pixel_count for _, r in rows])),
            ])
