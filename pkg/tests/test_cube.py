"""Cube container, on-disk format, SRF handling, and simulation tests."""

import json
import struct

import numpy as np
import pytest

from specsr.cube import (HsiCube, SpectralResponse, cie1964_srf, image_cube,
                         load_cube, load_srf, save_cube, save_srf,
                         simulate_input, to_8bit)
from specsr.errors import FormatError, ParameterError, SimulationError


def random_cube(rng, bands=3, h=4, w=5, scale=1.0):
    data = rng.standard_normal((bands, h, w)).astype(np.float32)
    wavelengths = 400.0 + 10.0 * np.arange(bands)
    return HsiCube(data, wavelengths, scale=scale)


class TestCubeValidation:
    def test_wavelength_count_mismatch(self, rng):
        with pytest.raises(FormatError):
            HsiCube(rng.standard_normal((3, 2, 2)).astype(np.float32), [400.0, 410.0])

    def test_non_monotone_wavelengths(self, rng):
        with pytest.raises(FormatError, match="increasing"):
            HsiCube(rng.standard_normal((3, 2, 2)).astype(np.float32),
                    [400.0, 390.0, 410.0])

    def test_bad_scale(self, rng):
        with pytest.raises(FormatError, match="scale"):
            HsiCube(rng.standard_normal((2, 2, 2)).astype(np.float32),
                    [400.0, 410.0], scale=0.0)


class TestCubeIO:
    def test_save_load_equal_bits(self, rng, tmp_path):
        cube = random_cube(rng, bands=4, h=5, w=3)
        save_cube(cube, tmp_path / "c")
        loaded = load_cube(tmp_path / "c")
        assert np.array_equal(loaded.data, cube.data)
        assert np.array_equal(loaded.wavelengths, cube.wavelengths)
        assert loaded.scale == cube.scale

    def test_round_trip_byte_exact(self, rng, tmp_path):
        cube = random_cube(rng)
        save_cube(cube, tmp_path / "a")
        again = load_cube(tmp_path / "a")
        save_cube(again, tmp_path / "b")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        assert (tmp_path / "a.bsq").read_bytes() == (tmp_path / "b.bsq").read_bytes()

    def test_header_band_count_over_payload(self, rng, tmp_path):
        cube = random_cube(rng, bands=9)
        save_cube(cube, tmp_path / "c")
        header = json.loads((tmp_path / "c.json").read_text())
        header["bands"] = 10
        header["wavelengths"] = header["wavelengths"] + [500.0]
        (tmp_path / "c.json").write_text(json.dumps(header))
        with pytest.raises(FormatError, match="payload"):
            load_cube(tmp_path / "c")

    def test_non_monotone_wavelengths_in_header(self, rng, tmp_path):
        cube = random_cube(rng, bands=3)
        save_cube(cube, tmp_path / "c")
        header = json.loads((tmp_path / "c.json").read_text())
        header["wavelengths"] = [400.0, 390.0, 410.0]
        (tmp_path / "c.json").write_text(json.dumps(header))
        with pytest.raises(FormatError, match="increasing"):
            load_cube(tmp_path / "c")

    def test_missing_header_field(self, rng, tmp_path):
        cube = random_cube(rng)
        save_cube(cube, tmp_path / "c")
        header = json.loads((tmp_path / "c.json").read_text())
        del header["layout"]
        (tmp_path / "c.json").write_text(json.dumps(header))
        with pytest.raises(FormatError, match="layout"):
            load_cube(tmp_path / "c")

    def test_bsq_layout_independent_parse(self, rng, tmp_path):
        """Band-sequential little-endian float32 layout verified by a raw
        struct-level parse that shares no code with the loader."""
        cube = random_cube(rng, bands=2, h=3, w=2)
        save_cube(cube, tmp_path / "c")
        raw = (tmp_path / "c.bsq").read_bytes()
        vals = struct.unpack("<" + "f" * (2 * 3 * 2), raw)
        for b in range(2):
            for i in range(3):
                for j in range(2):
                    assert vals[b * 6 + i * 2 + j] == cube.data[b, i, j]


class TestSrf:
    def test_round_trip(self, rng, tmp_path):
        srf = SpectralResponse(
            sample_wavelengths=[400.0, 500.0, 600.0],
            weights=rng.random((2, 3)),
        )
        save_srf(srf, tmp_path / "s.csv")
        loaded = load_srf(tmp_path / "s.csv")
        assert np.allclose(loaded.weights, srf.weights)
        assert np.allclose(loaded.sample_wavelengths, srf.sample_wavelengths)

    def test_header_required(self, tmp_path):
        (tmp_path / "bad.csv").write_text("lambda,a,b\n400,1,2\n")
        with pytest.raises(FormatError, match="wavelength_nm"):
            load_srf(tmp_path / "bad.csv")

    def test_negative_weight_rejected(self):
        with pytest.raises(FormatError, match="non-negative"):
            SpectralResponse([400.0, 500.0], [[1.0, -0.5]])

    def test_channel_without_weight_rejected(self):
        with pytest.raises(FormatError, match="channel 1"):
            SpectralResponse([400.0, 500.0], [[1.0, 0.5], [0.0, 0.0]])

    def test_cie1964_table(self):
        srf = cie1964_srf()
        assert srf.out_channels == 3
        assert srf.sample_wavelengths[0] == 380.0
        assert srf.sample_wavelengths[-1] == 780.0
        assert np.all(np.diff(srf.sample_wavelengths) == 5.0)
        assert (srf.weights >= 0).all()
        # the middle (y-bar) channel peaks near 557 nm
        peak = srf.sample_wavelengths[np.argmax(srf.weights[1])]
        assert 545 <= peak <= 570


class TestSimulateInput:
    def test_uniform_single_channel_is_band_mean(self, rng):
        cube = random_cube(rng, bands=5)
        srf = SpectralResponse([395.0, 450.0], np.ones((1, 2)))
        out = simulate_input(cube, srf)
        assert np.allclose(out[0], cube.data.mean(axis=0), atol=1e-6)

    def test_one_hot_selects_band(self, rng):
        cube = random_cube(rng, bands=3)  # wavelengths 400, 410, 420
        weights = np.zeros((1, 3))
        weights[0, 1] = 1.0
        srf = SpectralResponse([400.0, 410.0, 420.0], weights)
        out = simulate_input(cube, srf)
        assert np.allclose(out[0], cube.data[1], atol=1e-7)

    def test_flat_spectrum_gives_equal_channels(self):
        wavelengths = 400.0 + 10.0 * np.arange(31)
        cube = HsiCube(np.full((31, 4, 4), 0.7, np.float32), wavelengths)
        out = simulate_input(cube, cie1964_srf())
        assert np.allclose(out, 0.7, atol=1e-6)
        assert np.allclose(out[0], out[1], atol=1e-6)
        assert np.allclose(out[1], out[2], atol=1e-6)

    def test_linearity(self, rng):
        a_cube = random_cube(rng, bands=6)
        b_cube = HsiCube(rng.standard_normal((6, 4, 5)).astype(np.float32),
                         a_cube.wavelengths)
        srf = SpectralResponse([395.0, 430.0, 460.0], rng.random((2, 3)))
        mix = HsiCube(2.0 * a_cube.data + 3.0 * b_cube.data, a_cube.wavelengths)
        lhs = simulate_input(mix, srf)
        rhs = 2.0 * simulate_input(a_cube, srf) + 3.0 * simulate_input(b_cube, srf)
        assert np.abs(lhs - rhs).max() < 1e-5

    def test_out_of_grid_cube_rejected(self, rng):
        cube = random_cube(rng, bands=3)  # 400..420
        srf = SpectralResponse([405.0, 415.0], np.ones((1, 2)))
        with pytest.raises(SimulationError, match="outside"):
            simulate_input(cube, srf)

    def test_empty_overlap_names_channel(self, rng):
        cube = random_cube(rng, bands=3)  # 400, 410, 420
        weights = np.array([[1.0, 1.0, 1.0, 1.0], [0.0, 0.0, 0.0, 1.0]])
        srf = SpectralResponse([300.0, 350.0, 430.0, 500.0], weights)
        # channel 1's support interpolates to zero on every cube wavelength
        with pytest.raises(SimulationError, match="channel 1"):
            simulate_input(cube, srf)


class TestTo8bit:
    def test_full_scale_maps_to_255(self):
        assert to_8bit(np.array([2.0]), scale=2.0)[0] == 255.0

    def test_negative_clips_to_zero(self):
        assert to_8bit(np.array([-1.0]), scale=2.0)[0] == 0.0

    def test_overrange_clips_to_255(self):
        assert to_8bit(np.array([3.0]), scale=2.0)[0] == 255.0

    def test_no_rounding(self):
        out = to_8bit(np.array([1.0]), scale=3.0)
        assert abs(out[0] - 85.0) < 1e-6

    def test_bad_scale(self):
        with pytest.raises(ParameterError):
            to_8bit(np.array([1.0]), scale=0.0)


class TestImageCube:
    def test_channel_indices_as_wavelengths(self, rng):
        img = rng.standard_normal((3, 4, 4)).astype(np.float32)
        cube = image_cube(img)
        assert np.array_equal(cube.wavelengths, [0.0, 1.0, 2.0])
