"""Training patch extraction with dihedral augmentation, and dataset splits."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cube import HsiCube
from .errors import FormatError, InputError, ParameterError

PATCH_SIZE = 64

# Augmentation codes 0..7 form the dihedral group of the square:
# code & 3 = number of 90-degree CCW rotations, code & 4 = horizontal flip first.


def augment(patch: np.ndarray, code: int) -> np.ndarray:
    """Apply dihedral-group element `code` to a (channels, H, W) patch."""
    if not 0 <= code <= 7:
        raise ParameterError(f"augmentation code must be in 0..7, got {code}")
    out = patch
    if code & 4:
        out = np.flip(out, axis=2)
    k = code & 3
    if k:
        out = np.rot90(out, k=k, axes=(1, 2))
    return np.ascontiguousarray(out)


def inverse_augment(patch: np.ndarray, code: int) -> np.ndarray:
    """Exact inverse of augment(., code)."""
    if not 0 <= code <= 7:
        raise ParameterError(f"augmentation code must be in 0..7, got {code}")
    out = patch
    k = code & 3
    if k:
        out = np.rot90(out, k=-k, axes=(1, 2))
    if code & 4:
        out = np.flip(out, axis=2)
    return np.ascontiguousarray(out)


@dataclass
class PatchRecord:
    """Provenance of one sampled patch: enough to re-extract it exactly."""

    source_id: str
    row: int
    col: int
    code: int


@dataclass
class PatchSet:
    """Paired input/target patches with per-patch provenance."""

    inputs: np.ndarray   # (n, in_channels, patch, patch)
    targets: np.ndarray  # (n, bands, patch, patch)
    records: list[PatchRecord]

    def __len__(self) -> int:
        return self.inputs.shape[0]


def extract_patch(input_img: np.ndarray, target_cube: HsiCube, record: PatchRecord,
                  patch_size: int = PATCH_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Replay a PatchRecord against its source arrays."""
    r, c = record.row, record.col
    inp = augment(input_img[:, r : r + patch_size, c : c + patch_size], record.code)
    tgt = augment(target_cube.data[:, r : r + patch_size, c : c + patch_size], record.code)
    return inp, tgt


def sample_patches(
    input_img: np.ndarray,
    target_cube: HsiCube,
    count: int,
    rng: np.random.Generator,
    patch_size: int = PATCH_SIZE,
    augment_patches: bool = True,
    source_id: str = "",
) -> PatchSet:
    """Sample `count` aligned input/target patches at uniform random offsets,
    each with a random dihedral augmentation applied identically to both."""
    if input_img.shape[1:] != (target_cube.height, target_cube.width):
        raise InputError(
            f"input image {input_img.shape[1:]} and cube "
            f"{(target_cube.height, target_cube.width)} spatial dims differ"
        )
    h, w = target_cube.height, target_cube.width
    if h < patch_size or w < patch_size:
        raise InputError(f"cube {h}x{w} smaller than patch size {patch_size}")
    rows = rng.integers(0, h - patch_size + 1, size=count)
    cols = rng.integers(0, w - patch_size + 1, size=count)
    codes = rng.integers(0, 8, size=count) if augment_patches else np.zeros(count, dtype=int)
    inputs = np.empty((count, input_img.shape[0], patch_size, patch_size), dtype=np.float32)
    targets = np.empty((count, target_cube.bands, patch_size, patch_size), dtype=np.float32)
    records = []
    for i in range(count):
        rec = PatchRecord(source_id, int(rows[i]), int(cols[i]), int(codes[i]))
        inputs[i], targets[i] = extract_patch(input_img, target_cube, rec, patch_size)
        records.append(rec)
    return PatchSet(inputs=inputs, targets=targets, records=records)


# ---------------------------------------------------------------------------
# Dataset splits
#
# Split file format: newline-separated image ids under `train:` / `test:`
# section markers; `#` lines are comments.
# ---------------------------------------------------------------------------


def split_two_fold(image_ids: list[str], seed: int) -> tuple[list[str], list[str]]:
    """Deterministic disjoint covering halves (first fold gets the extra id)."""
    if not image_ids:
        raise InputError("empty image id list")
    if len(image_ids) < 2:
        raise InputError("two-fold split needs at least 2 images")
    ids = list(image_ids)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    half = (len(ids) + 1) // 2
    fold_a = [ids[i] for i in sorted(order[:half])]
    fold_b = [ids[i] for i in sorted(order[half:])]
    return fold_a, fold_b


def load_split_file(path) -> tuple[list[str], list[str]]:
    sections: dict[str, list[str]] = {"train": [], "test": []}
    current: str | None = None
    for ln, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.lower() in ("train:", "test:"):
            current = line[:-1].lower()
            continue
        if current is None:
            raise FormatError(f"{path}: line {ln}: id before any 'train:'/'test:' marker")
        sections[current].append(line)
    if not sections["train"] and not sections["test"]:
        raise FormatError(f"{path}: no ids found")
    return sections["train"], sections["test"]


def save_split_file(path, train_ids: list[str], test_ids: list[str]) -> None:
    lines = ["train:"] + list(train_ids) + ["test:"] + list(test_ids)
    Path(path).write_text("\n".join(lines) + "\n")
