"""Hyperspectral cube container, its on-disk format, spectral response
functions, and broad-band input simulation.

Cube file format (bit-exact, trivially parseable):
  <stem>.json   header: {"format_version": 1, "height": H, "width": W,
                "bands": B, "wavelengths": [...], "scale": s,
                "dtype": "f32le", "layout": "BSQ"} (+ optional "meta" dict)
  <stem>.bsq    raw payload, little-endian float32, band-sequential
                (band-major, then row-major with width fastest)

SRF file format: CSV with header `wavelength_nm,ch0,ch1,...`, one row per
sample wavelength in increasing order; `#` lines are comments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError, ParameterError, SimulationError

CUBE_FORMAT_VERSION = 1


@dataclass
class HsiCube:
    """A hyperspectral image: (bands, height, width) data with per-band
    center wavelengths in nm and a full-range scale for 8-bit conversion."""

    data: np.ndarray
    wavelengths: np.ndarray
    scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        self.wavelengths = np.asarray(self.wavelengths, dtype=np.float64)
        self.validate()

    def validate(self) -> None:
        if self.data.ndim != 3:
            raise FormatError(f"cube data must be (bands, height, width), got {self.data.shape}")
        if min(self.data.shape) < 1:
            raise FormatError(f"cube dims must all be >= 1, got {self.data.shape}")
        if self.wavelengths.shape != (self.data.shape[0],):
            raise FormatError(
                f"wavelengths count {self.wavelengths.shape} does not match "
                f"{self.data.shape[0]} bands"
            )
        if self.data.shape[0] > 1 and not np.all(np.diff(self.wavelengths) > 0):
            raise FormatError("wavelengths must be strictly increasing")
        if self.scale <= 0:
            raise FormatError(f"scale must be > 0, got {self.scale}")

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def _cube_paths(path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix in (".json", ".bsq"):
        p = p.with_suffix("")
    return p.with_suffix(".json"), p.with_suffix(".bsq")


def save_cube(cube: HsiCube, path) -> Path:
    """Write header sidecar + raw payload; returns the header path."""
    header_path, payload_path = _cube_paths(path)
    header = {
        "format_version": CUBE_FORMAT_VERSION,
        "height": cube.height,
        "width": cube.width,
        "bands": cube.bands,
        "wavelengths": [float(w) for w in cube.wavelengths],
        "scale": float(cube.scale),
        "dtype": "f32le",
        "layout": "BSQ",
    }
    if cube.meta:
        header["meta"] = cube.meta
    header_path.write_text(json.dumps(header, sort_keys=True, indent=1) + "\n")
    payload_path.write_bytes(np.ascontiguousarray(cube.data, dtype="<f4").tobytes())
    return header_path


def load_cube(path) -> HsiCube:
    header_path, payload_path = _cube_paths(path)
    if not header_path.exists():
        raise FormatError(f"missing cube header: {header_path}")
    if not payload_path.exists():
        raise FormatError(f"missing cube payload: {payload_path}")
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{header_path}: malformed JSON header: {e}") from e
    for key in ("format_version", "height", "width", "bands", "wavelengths", "scale",
                "dtype", "layout"):
        if key not in header:
            raise FormatError(f"{header_path}: missing header field '{key}'")
    if header["format_version"] != CUBE_FORMAT_VERSION:
        raise FormatError(f"{header_path}: unsupported format_version {header['format_version']}")
    if header["dtype"] != "f32le":
        raise FormatError(f"{header_path}: unsupported dtype {header['dtype']!r}")
    if header["layout"] != "BSQ":
        raise FormatError(f"{header_path}: unsupported layout {header['layout']!r}")
    b, h, w = int(header["bands"]), int(header["height"]), int(header["width"])
    raw = payload_path.read_bytes()
    expected = 4 * b * h * w
    if len(raw) != expected:
        raise FormatError(
            f"{payload_path}: payload is {len(raw)} bytes, header implies {expected} "
            f"(bands={b}, height={h}, width={w})"
        )
    data = np.frombuffer(raw, dtype="<f4").reshape(b, h, w).copy()
    wavelengths = np.asarray(header["wavelengths"], dtype=np.float64)
    if wavelengths.shape != (b,):
        raise FormatError(f"{header_path}: wavelengths count != bands field")
    return HsiCube(data=data, wavelengths=wavelengths, scale=float(header["scale"]),
                   meta=header.get("meta", {}))


# ---------------------------------------------------------------------------
# Spectral response functions
# ---------------------------------------------------------------------------


@dataclass
class SpectralResponse:
    """Per-output-channel weights over sample wavelengths (the spectral blur
    kernel of a broad-band sensor)."""

    sample_wavelengths: np.ndarray
    weights: np.ndarray  # (out_channels, samples)

    def __post_init__(self):
        self.sample_wavelengths = np.asarray(self.sample_wavelengths, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[1] != self.sample_wavelengths.size:
            raise FormatError(
                f"SRF weights shape {self.weights.shape} does not match "
                f"{self.sample_wavelengths.size} sample wavelengths"
            )
        if not np.all(np.diff(self.sample_wavelengths) > 0):
            raise FormatError("SRF sample wavelengths must be strictly increasing")
        if (self.weights < 0).any():
            raise FormatError("SRF weights must be non-negative")
        if not (self.weights > 0).any(axis=1).all():
            bad = int(np.argmin((self.weights > 0).any(axis=1)))
            raise FormatError(f"SRF channel {bad} has no positive weight")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]


def load_srf(path) -> SpectralResponse:
    lines = [ln for ln in Path(path).read_text().splitlines()
             if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise FormatError(f"{path}: empty SRF file")
    header = [c.strip() for c in lines[0].split(",")]
    if header[0] != "wavelength_nm" or len(header) < 2:
        raise FormatError(f"{path}: SRF header must be 'wavelength_nm,ch0,...', got {lines[0]!r}")
    rows = []
    for ln, line in enumerate(lines[1:], 2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise FormatError(f"{path}: line {ln} has {len(parts)} fields, expected {len(header)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as e:
            raise FormatError(f"{path}: line {ln}: {e}") from e
    table = np.asarray(rows)
    return SpectralResponse(sample_wavelengths=table[:, 0], weights=table[:, 1:].T)


def save_srf(srf: SpectralResponse, path) -> None:
    header = "wavelength_nm," + ",".join(f"ch{i}" for i in range(srf.out_channels))
    lines = [header]
    for j, lam in enumerate(srf.sample_wavelengths):
        vals = ",".join(f"{v:.9g}" for v in srf.weights[:, j])
        lines.append(f"{lam:.9g},{vals}")
    Path(path).write_text("\n".join(lines) + "\n")


def cie1964_srf() -> SpectralResponse:
    """The packaged CIE 1964 10-degree observer color matching functions."""
    with resources.files("specsr.data").joinpath("cie1964_10deg.csv").open("r") as f:
        text = f.read()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    table = np.asarray([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return SpectralResponse(sample_wavelengths=table[:, 0], weights=table[:, 1:].T)


def simulate_input(cube: HsiCube, srf: SpectralResponse) -> np.ndarray:
    """Integrate cube bands into broad-band channels: out[c] = sum_b w[c,b]*cube[b],
    with the SRF linearly resampled onto the cube's wavelengths and each
    channel's weights normalized to unit sum over the cube's bands."""
    grid = srf.sample_wavelengths
    lo, hi = grid[0], grid[-1]
    if cube.wavelengths[0] < lo or cube.wavelengths[-1] > hi:
        raise SimulationError(
            f"cube wavelengths {cube.wavelengths[0]}..{cube.wavelengths[-1]} nm fall outside "
            f"the SRF grid {lo}..{hi} nm"
        )
    resampled = np.stack(
        [np.interp(cube.wavelengths, grid, srf.weights[c]) for c in range(srf.out_channels)]
    )
    sums = resampled.sum(axis=1)
    for c, s in enumerate(sums):
        if s <= 0:
            raise SimulationError(f"SRF channel {c} has empty spectral overlap with the cube")
    resampled /= sums[:, None]
    flat = cube.data.reshape(cube.bands, -1)
    out = resampled.astype(flat.dtype) @ flat
    return out.reshape(srf.out_channels, cube.height, cube.width).astype(np.float32)


def to_8bit(values: np.ndarray, scale: float) -> np.ndarray:
    """Map stored units onto the 8-bit range: clip(255*v/scale, 0, 255).

    No rounding; values stay real for smooth metric computation."""
    if scale <= 0:
        raise ParameterError(f"scale must be > 0, got {scale}")
    return np.clip(values * (255.0 / scale), 0.0, 255.0)


def image_cube(data: np.ndarray, wavelengths=None, scale: float = 1.0) -> HsiCube:
    """Wrap a (channels, H, W) array as a cube; channel indices stand in for
    wavelengths when none are given (used for simulated broad-band images)."""
    data = np.asarray(data, dtype=np.float32)
    if wavelengths is None:
        wavelengths = np.arange(data.shape[0], dtype=np.float64)
    return HsiCube(data=data, wavelengths=wavelengths, scale=scale)


def load_illumination(path) -> np.ndarray:
    """Per-band illumination vector: CSV with header `wavelength_nm,value`."""
    lines = [ln for ln in Path(path).read_text().splitlines()
             if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or [c.strip() for c in lines[0].split(",")] != ["wavelength_nm", "value"]:
        raise FormatError(f"{path}: illumination header must be 'wavelength_nm,value'")
    try:
        rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e
    table = np.asarray(rows)
    if table.size and not np.all(np.diff(table[:, 0]) > 0):
        raise FormatError(f"{path}: wavelengths must be strictly increasing")
    return table


def apply_illumination(cube: HsiCube, illum: np.ndarray, mode: str) -> HsiCube:
    """Reflectance <-> radiance conversion: per-band multiply or divide by the
    illumination value at each cube wavelength (linearly interpolated)."""
    if mode not in ("multiply", "divide"):
        raise ParameterError(f"mode must be 'multiply' or 'divide', got {mode!r}")
    values = np.interp(cube.wavelengths, illum[:, 0], illum[:, 1])
    if mode == "divide":
        if (np.abs(values) < 1e-12).any():
            raise InputError("illumination has (near-)zero values; cannot divide")
        values = 1.0 / values
    data = cube.data * values.astype(cube.data.dtype)[:, None, None]
    return HsiCube(data=data, wavelengths=cube.wavelengths.copy(), scale=cube.scale,
                   meta=dict(cube.meta))
