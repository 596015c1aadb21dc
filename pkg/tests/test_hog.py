import numpy as np
import pytest

from multikernel.hog import HogConfig, compute_hog, compute_hog_batch, hog_dim

DEFAULT = HogConfig()


def brute_force_bin_mass(patch, cfg):
    """Per-pixel gradient tabulation, independent of the descriptor pipeline:
    centered differences with replicated borders, magnitude votes split
    between the two nearest unsigned-orientation bin centers."""
    n = patch.shape[0]
    mass = np.zeros(cfg.bins)
    for y in range(n):
        for x in range(n):
            gx = patch[y, min(x + 1, n - 1)] - patch[y, max(x - 1, 0)]
            gy = patch[min(y + 1, n - 1), x] - patch[max(y - 1, 0), x]
            m = np.hypot(gx, gy)
            ang = np.arctan2(gy, gx) % np.pi
            t = ang / (np.pi / cfg.bins)
            lo = int(np.floor(t))
            frac = t - lo
            mass[lo % cfg.bins] += m * (1 - frac)
            mass[(lo + 1) % cfg.bins] += m * frac
    return mass


class TestHogDim:
    def test_default_layout_is_900(self):
        # 5x5 blocks of 2x2 cells x 9 bins
        assert hog_dim(DEFAULT) == 900

    def test_single_block_window(self):
        assert hog_dim(HogConfig(window=8, cell=4)) == 36

    def test_degenerate_single_bin(self):
        assert hog_dim(HogConfig(bins=1)) == 100

    def test_invalid_configs_rejected(self):
        with pytest.raises(ValueError):
            HogConfig(window=25)
        with pytest.raises(ValueError):
            HogConfig(bins=0)
        with pytest.raises(ValueError):
            HogConfig(epsilon=0.0)


class TestComputeHog:
    def test_constant_patch_gives_zero_descriptor(self):
        desc = compute_hog(np.full((24, 24), 0.7))
        assert desc.shape == (900,)
        assert np.all(desc == 0.0)

    def test_length_matches_hog_dim(self):
        rng = np.random.default_rng(0)
        desc = compute_hog(rng.random((24, 24)))
        assert desc.shape == (hog_dim(DEFAULT),)

    def test_wrong_patch_size_rejected(self):
        with pytest.raises(ValueError):
            compute_hog(np.zeros((23, 24)))

    def test_step_edge_mass_concentrates_in_horizontal_gradient_bin(self):
        patch = np.zeros((24, 24))
        patch[:, 12:] = 1.0
        oracle_mass = brute_force_bin_mass(patch, DEFAULT)
        dominant = int(np.argmax(oracle_mass))

        desc = compute_hog(patch)
        per_bin = desc.reshape(-1, DEFAULT.bins).sum(axis=0)
        assert per_bin[dominant] >= 0.95 * per_bin.sum()
        # The oracle agrees that essentially all gradient energy is in one bin.
        assert oracle_mass[dominant] >= 0.95 * oracle_mass.sum()

    def test_entries_bounded_in_unit_interval(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            desc = compute_hog(rng.random((24, 24)))
            assert np.all(desc >= 0.0)
            assert np.all(desc <= 1.0)

    def test_block_segments_have_bounded_norm(self):
        rng = np.random.default_rng(2)
        desc = compute_hog(rng.random((24, 24)))
        seg_norms = np.linalg.norm(desc.reshape(-1, 36), axis=1)
        assert np.all(seg_norms <= 1.0 + 1e-9)

    def test_invariant_to_constant_offset(self):
        rng = np.random.default_rng(3)
        patch = rng.random((24, 24)) * 0.5
        np.testing.assert_allclose(
            compute_hog(patch), compute_hog(patch + 0.3), atol=1e-10
        )

    def test_pure_function(self):
        rng = np.random.default_rng(4)
        patch = rng.random((24, 24))
        np.testing.assert_array_equal(compute_hog(patch), compute_hog(patch.copy()))

    def test_half_turn_rotation_preserves_descriptor_norm(self):
        # Synthetic gradient patterns: ramps and sinusoids.
        ys, xs = np.meshgrid(np.arange(24), np.arange(24), indexing="ij")
        patterns = [
            xs / 23.0,
            ys / 23.0,
            (xs + ys) / 46.0,
            0.5 + 0.5 * np.sin(xs / 3.0) * np.cos(ys / 4.0),
        ]
        for patch in patterns:
            d0 = compute_hog(patch)
            d1 = compute_hog(np.rot90(patch, 2))
            assert abs(np.linalg.norm(d0) - np.linalg.norm(d1)) <= 1e-6


class TestBatchConsistency:
    def test_batch_matches_single_calls_exactly(self):
        rng = np.random.default_rng(5)
        patches = rng.random((7, 24, 24))
        batch = compute_hog_batch(patches)
        for i in range(7):
            np.testing.assert_array_equal(batch[i], compute_hog(patches[i]))

    def test_empty_batch(self):
        assert compute_hog_batch(np.zeros((0, 24, 24))).shape == (0, 900)

    def test_nondefault_layout(self):
        cfg = HogConfig(window=8, cell=4)
        rng = np.random.default_rng(6)
        patches = rng.random((3, 8, 8))
        batch = compute_hog_batch(patches, cfg)
        assert batch.shape == (3, 36)
        np.testing.assert_array_equal(batch[1], compute_hog(patches[1], cfg))
