"""Fingerprint image conversion tests."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from amdnloc.channel import DatasetMeta, make_path, synthesize_cfr
from amdnloc.images import adcam_to_image, cfr_to_image, dump_pgm


class TestCfrToImage:
    def test_constant_ones_matrix(self):
        img = cfr_to_image(np.ones((3, 4), dtype=complex))
        np.testing.assert_allclose(img.pixels[0], 1.0)
        np.testing.assert_allclose(img.pixels[1], 0.5)

    def test_zero_matrix_guard(self):
        img = cfr_to_image(np.zeros((3, 4), dtype=complex))
        np.testing.assert_array_equal(img.pixels[0], 0.0)
        np.testing.assert_allclose(img.pixels[1], 0.5)

    def test_single_path_gives_flat_magnitude_and_phase_ramp(self):
        """One path has constant |H| and a linear column phase ramp with
        slope -2*pi*delay/N_c (odd N_c keeps the ramp off the +/-pi wrap)."""
        meta = DatasetMeta(num_bs_antennas=4, num_subcarriers=9)
        p = make_path(np.pi / 2, 0.0, 1.0, 2, 0.0, 10.0, meta)
        h = synthesize_cfr([p], meta)
        img = cfr_to_image(h)
        np.testing.assert_allclose(img.pixels[0], 1.0, atol=1e-12)
        expected = (np.angle(np.exp(-2j * np.pi * np.arange(9) * 2 / 9)) + np.pi) \
            / (2 * np.pi)
        for row in img.pixels[1]:
            delta = (row - expected) % 1.0
            np.testing.assert_allclose(np.minimum(delta, 1.0 - delta), 0.0,
                                       atol=1e-12)

    def test_orientation_rows_are_antennas(self):
        meta = DatasetMeta(num_bs_antennas=4, num_subcarriers=8)
        p = make_path(1.0, 0.0, 1.0, 0, 0.0, 10.0, meta)
        img = cfr_to_image(synthesize_cfr([p], meta))
        assert (img.height, img.width) == (4, 8)
        assert img.channels == 2

    def test_positive_scaling_invariance(self):
        rng = np.random.default_rng(2)
        h = rng.normal(size=(5, 6)) + 1j * rng.normal(size=(5, 6))
        base = cfr_to_image(h)
        for c in (1e-6, 0.5, 3.0, 1e7):
            scaled = cfr_to_image(c * h)
            np.testing.assert_allclose(scaled.pixels[0], base.pixels[0],
                                       atol=1e-7)

    def test_global_phase_shifts_channel_one_by_constant_mod_one(self):
        rng = np.random.default_rng(3)
        h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        theta = 0.7
        base = cfr_to_image(h).pixels[1]
        rotated = cfr_to_image(np.exp(1j * theta) * h).pixels[1]
        delta = (rotated - base) % 1.0
        delta = np.minimum(delta, 1.0 - delta)   # wrap-safe distance
        np.testing.assert_allclose(delta, theta / (2 * np.pi), atol=1e-9)

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=100, deadline=None)
    def test_pixels_always_in_unit_interval(self, seed):
        rng = np.random.default_rng(seed)
        h = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        img = cfr_to_image(h)
        assert img.pixels.min() >= 0.0
        assert img.pixels.max() <= 1.0


class TestAdcamToImage:
    def test_single_nonzero_entry(self):
        a = np.zeros((3, 3))
        a[1, 2] = 0.37
        img = adcam_to_image(a)
        assert img.channels == 1
        assert img.pixels[0, 1, 2] == 1.0
        assert img.pixels.sum() == 1.0

    def test_zero_matrix(self):
        np.testing.assert_array_equal(adcam_to_image(np.zeros((2, 2))).pixels,
                                      np.zeros((1, 2, 2)))

    def test_scaling_invariance(self):
        rng = np.random.default_rng(4)
        a = rng.uniform(size=(4, 5))
        np.testing.assert_allclose(adcam_to_image(a).pixels,
                                   adcam_to_image(123.0 * a).pixels,
                                   atol=1e-12)


class TestPgmDump:
    def test_writes_valid_binary_pgm(self, tmp_path):
        img = cfr_to_image(np.ones((3, 4), dtype=complex))
        path = tmp_path / "cfr_0.pgm"
        dump_pgm(img, path)
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n4 3\n255\n")
        assert len(raw) == len(b"P5\n4 3\n255\n") + 12
        assert raw[-12:] == bytes([255] * 12)

    def test_deterministic_bytes(self, tmp_path):
        rng = np.random.default_rng(5)
        img = cfr_to_image(rng.normal(size=(6, 6))
                           + 1j * rng.normal(size=(6, 6)))
        dump_pgm(img, tmp_path / "a.pgm")
        dump_pgm(img, tmp_path / "b.pgm")
        assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()
