"""Math kernel tests: steering vectors, CFR synthesis, DFT transforms."""

import numpy as np
import pytest

from amdnloc.channel import (
    ChannelDomainError,
    DatasetMeta,
    compute_adcam,
    dft_matrices,
    make_path,
    steering_vector,
    synthesize_cfr,
)


def small_meta(nt=4, nc=4):
    return DatasetMeta(num_bs_antennas=nt, num_subcarriers=nc)


class TestSteeringVector:
    def test_broadside_is_all_ones(self):
        """cos(pi/2) = 0 kills every phase term."""
        for nt in (1, 2, 8, 64):
            e = steering_vector(np.pi / 2, small_meta(nt=nt))
            np.testing.assert_allclose(e, np.ones(nt), atol=1e-12)

    def test_near_endfire_two_elements(self):
        """cos(phi) -> 1 gives [1, exp(-j*pi)] = [1, -1] at half-wave spacing."""
        e = steering_vector(1e-9, small_meta(nt=2))
        np.testing.assert_allclose(e, [1.0, -1.0], atol=1e-6)

    def test_sixty_degrees(self):
        """cos(pi/3) = 1/2 gives [1, exp(-j*pi/2)] = [1, -1j]."""
        e = steering_vector(np.pi / 3, small_meta(nt=2))
        np.testing.assert_allclose(e, [1.0, -1.0j], atol=1e-12)

    def test_first_element_always_one(self):
        for phi in np.linspace(0.01, np.pi - 0.01, 17):
            assert steering_vector(phi, small_meta(nt=5))[0] == 1.0 + 0.0j

    def test_conjugate_symmetry_about_broadside(self):
        """phi and pi - phi flip the sign of cos, conjugating the vector."""
        meta = small_meta(nt=6)
        for phi in (0.3, 1.0, 1.4):
            a = steering_vector(phi, meta)
            b = steering_vector(np.pi - phi, meta)
            np.testing.assert_allclose(a, b.conj(), atol=1e-12)

    @pytest.mark.parametrize("phi", [0.0, np.pi, -0.5, 3.5])
    def test_rejects_out_of_range_angle(self, phi):
        with pytest.raises(ChannelDomainError):
            steering_vector(phi, small_meta())


class TestSynthesizeCfr:
    def test_single_trivial_path_gives_all_ones(self):
        meta = small_meta()
        p = make_path(np.pi / 2, 0.0, 1.0, 0, 0.0, 1.0, meta)
        h = synthesize_cfr([p], meta)
        np.testing.assert_allclose(h, np.ones((4, 4)), atol=1e-12)

    def test_single_path_entries_are_unimodular_times_gain(self):
        meta = small_meta(nt=6, nc=8)
        gain = 0.37 - 0.21j
        p = make_path(1.1, 0.3, gain, 3, 0.0, 20.0, meta)
        h = synthesize_cfr([p], meta)
        np.testing.assert_allclose(np.abs(h), abs(gain), atol=1e-12)

    def test_opposite_paths_cancel(self):
        meta = small_meta()
        a = make_path(0.8, 0.0, 1.0, 2, 0.0, 10.0, meta)
        b = make_path(0.8, 0.0, -1.0, 2, 0.0, 10.0, meta)
        np.testing.assert_allclose(synthesize_cfr([a, b], meta),
                                   np.zeros((4, 4)), atol=1e-14)

    def test_linear_in_path_lists(self):
        """CFR of concatenated path lists is the sum of per-list CFRs."""
        meta = small_meta(nt=8, nc=16)
        rng = np.random.default_rng(5)
        lists = []
        for _ in range(3):
            lists.append([
                make_path(rng.uniform(0.1, np.pi - 0.1), rng.uniform(-np.pi, np.pi),
                          complex(rng.normal(), rng.normal()),
                          int(rng.integers(0, 16)), 0.0, 10.0, meta)
                for _ in range(4)
            ])
        combined = synthesize_cfr(lists[0] + lists[1] + lists[2], meta)
        parts = sum(synthesize_cfr(lst, meta) for lst in lists)
        np.testing.assert_allclose(combined, parts, atol=1e-12)

    def test_empty_path_list_rejected(self):
        with pytest.raises(ChannelDomainError):
            synthesize_cfr([], small_meta())

    def test_delay_outside_window_rejected_at_construction(self):
        meta = small_meta(nc=4)
        with pytest.raises(ChannelDomainError):
            make_path(1.0, 0.0, 1.0, 4, 0.0, 10.0, meta)


class TestDftMatrices:
    @pytest.mark.parametrize("nt,nc", [(1, 1), (2, 3), (4, 4), (8, 16), (64, 64)])
    def test_unitarity(self, nt, nc):
        v, f = dft_matrices(small_meta(nt=nt, nc=nc))
        np.testing.assert_allclose(v.conj().T @ v, np.eye(nt), atol=1e-10)
        np.testing.assert_allclose(f.conj().T @ f, np.eye(nc), atol=1e-10)

    def test_single_subcarrier_f_is_unit(self):
        _, f = dft_matrices(small_meta(nt=2, nc=1))
        np.testing.assert_allclose(f, [[1.0]], atol=1e-15)

    def test_two_antenna_columns_orthonormal_by_direct_loops(self):
        """Independent loop-based check of V^H V for N_t = 2."""
        v, _ = dft_matrices(small_meta(nt=2))
        for i in range(2):
            for j in range(2):
                acc = sum(np.conj(v[k, i]) * v[k, j] for k in range(2))
                expected = 1.0 if i == j else 0.0
                assert abs(acc - expected) < 1e-12

    def test_frobenius_norm_is_sqrt_size(self):
        v, f = dft_matrices(small_meta(nt=7, nc=5))
        assert abs(np.linalg.norm(v) - np.sqrt(7)) < 1e-10
        assert abs(np.linalg.norm(f) - np.sqrt(5)) < 1e-10


def adcam_by_loops(h, meta):
    """Triple-product oracle: elementwise |V^H H F| via explicit sums."""
    v, f = dft_matrices(meta)
    nt, nc = meta.num_bs_antennas, meta.num_subcarriers
    out = np.zeros((nt, nc))
    for z in range(nt):
        for q in range(nc):
            acc = 0.0 + 0.0j
            for t in range(nt):
                for c in range(nc):
                    acc += np.conj(v[t, z]) * h[t, c] * f[c, q]
            out[z, q] = abs(acc)
    return out


class TestComputeAdcam:
    def test_zero_in_zero_out(self):
        meta = small_meta()
        np.testing.assert_array_equal(compute_adcam(np.zeros((4, 4)), meta),
                                      np.zeros((4, 4)))

    def test_on_grid_path_concentrates_in_one_bin(self):
        """An angle on the DFT grid with an integer delay lands in exactly
        one (angle, delay) bin; verified against the loop oracle."""
        meta = small_meta(nt=4, nc=4)
        # d*cos(phi)/wavelength * N_t = 1 -> phi = arccos(1/2)
        phi = np.arccos(0.5)
        p = make_path(phi, 0.0, 1.0, 1, 0.0, 10.0, meta)
        h = synthesize_cfr([p], meta)
        a = compute_adcam(h, meta)
        np.testing.assert_allclose(a, adcam_by_loops(h, meta), atol=1e-10)
        nonzero = np.argwhere(a > 1e-9)
        assert nonzero.shape[0] == 1
        z, q = nonzero[0]
        assert a[z, q] == pytest.approx(np.sqrt(4 * 4), abs=1e-9)

    def test_matches_loop_oracle_on_random_input(self):
        meta = small_meta(nt=3, nc=5)
        rng = np.random.default_rng(9)
        h = rng.normal(size=(3, 5)) + 1j * rng.normal(size=(3, 5))
        np.testing.assert_allclose(compute_adcam(h, meta),
                                   adcam_by_loops(h, meta), atol=1e-10)

    def test_frobenius_preservation_over_random_draws(self):
        """100 random matrices: |V^H H F| has the same Frobenius norm."""
        meta = small_meta(nt=4, nc=4)
        rng = np.random.default_rng(11)
        for _ in range(100):
            h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            a = compute_adcam(h, meta)
            assert abs(np.linalg.norm(a) - np.linalg.norm(h)) \
                <= 1e-8 * np.linalg.norm(h)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ChannelDomainError):
            compute_adcam(np.zeros((3, 4)), small_meta(nt=4, nc=4))


class TestDatasetMeta:
    def test_sample_interval_is_inverse_bandwidth(self):
        meta = DatasetMeta(bandwidth=0.05e9)
        assert meta.sample_interval == pytest.approx(2e-8)

    def test_default_spacing_is_half_wavelength(self):
        meta = DatasetMeta(carrier_frequency=60e9)
        assert meta.antenna_spacing == pytest.approx(meta.wavelength / 2)

    def test_invalid_fields_rejected(self):
        with pytest.raises(ChannelDomainError):
            DatasetMeta(num_bs_antennas=0)
        with pytest.raises(ChannelDomainError):
            DatasetMeta(bandwidth=-1.0)

    def test_round_trips_through_dict(self):
        meta = DatasetMeta(num_bs_antennas=8, num_subcarriers=32)
        assert DatasetMeta.from_dict(meta.to_dict()) == meta
