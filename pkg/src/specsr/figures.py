"""Matplotlib figure rendering for CLI reports (PNG files next to the CSVs)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def loss_curve(history: list[dict], path) -> None:
    if not history:
        return
    steps = [r["step"] for r in history]
    losses = [r["loss"] for r in history]
    lrs = [r["lr"] for r in history]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.semilogy(steps, losses, lw=1.2, color="tab:blue")
    ax.set_xlabel("step")
    ax.set_ylabel("training loss")
    # mark learning-rate phase boundaries
    for i in range(1, len(history)):
        if lrs[i] != lrs[i - 1]:
            ax.axvline(steps[i], color="tab:red", ls="--", lw=0.8)
            ax.text(steps[i], max(losses), f" lr={lrs[i]:g}", fontsize=8, color="tab:red")
    ax.set_title("training loss")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def per_band_rmse(rows, wavelengths, path) -> None:
    """rows: list of (image_id, MetricReport)."""
    if not rows:
        return
    fig, ax = plt.subplots(figsize=(7, 4))
    for image_id, rep in rows:
        ax.plot(wavelengths, rep.per_band_rmse, lw=1.0, alpha=0.7, label=image_id)
    mean_curve = np.mean([rep.per_band_rmse for _, rep in rows], axis=0)
    ax.plot(wavelengths, mean_curve, lw=2.2, color="black", label="mean")
    ax.set_xlabel("band center [nm]")
    ax.set_ylabel("RMSE [8-bit units]")
    ax.set_title("per-band RMSE")
    if len(rows) <= 10:
        ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def metric_bars(rows, path) -> None:
    if not rows:
        return
    ids = [image_id for image_id, _ in rows]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.5))
    for ax, key, label in zip(
        axes,
        ("rmse", "rmse_rel", "sam_deg"),
        ("RMSE [8-bit]", "RMSERel", "SAM [deg]"),
    ):
        vals = [getattr(rep, key) for _, rep in rows]
        ax.bar(range(len(ids)), vals, color="tab:blue")
        ax.axhline(np.mean(vals), color="tab:red", ls="--", lw=1.0)
        ax.set_xticks(range(len(ids)))
        ax.set_xticklabels(ids, rotation=60, fontsize=7, ha="right")
        ax.set_title(label, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def endmember_spectra(endmembers, path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    for j in range(endmembers.count):
        ax.plot(endmembers.wavelengths, endmembers.matrix[:, j], lw=1.2, label=f"e{j + 1}")
    ax.set_xlabel("wavelength [nm]")
    ax.set_ylabel("signature")
    ax.set_title("extracted endmembers")
    if endmembers.count <= 16:
        ax.legend(fontsize=7, ncol=2)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def abundance_grid(maps: np.ndarray, path) -> None:
    k = maps.shape[0]
    cols = min(5, k)
    rows = (k + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(2.4 * cols, 2.4 * rows), squeeze=False)
    for j in range(rows * cols):
        ax = axes[j // cols][j % cols]
        if j < k:
            im = ax.imshow(maps[j], cmap="viridis", vmin=0.0, vmax=1.0)
            ax.set_title(f"a{j + 1}", fontsize=8)
        ax.axis("off")
    fig.colorbar(im, ax=axes[-1][-1], fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def verify_chart(results, path) -> None:
    names = [r.name for r in results]
    # distance below tolerance on a log scale; failed checks stick out above 1
    ratios = [max(r.measured, 1e-16) / max(r.tolerance, 1e-16) for r in results]
    colors = ["tab:green" if r.passed else "tab:red" for r in results]
    fig, ax = plt.subplots(figsize=(8, 0.4 * len(names) + 1.5))
    ax.barh(range(len(names)), ratios, color=colors)
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names, fontsize=7)
    ax.axvline(1.0, color="black", lw=1.0)
    ax.set_xscale("log")
    ax.set_xlabel("measured / tolerance (must be < 1)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
