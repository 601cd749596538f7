import numpy as np
import pytest

from pixelprobe.core import (
    ContractViolationError,
    apply_perturbation,
    apply_perturbation_batch,
    changed_pixels,
    composite,
    load_image,
    round_half_up,
    save_image,
)


def black(h=4, w=4):
    return np.zeros((h, w, 3))


class TestApplyPerturbation:
    def test_single_write(self):
        out = apply_perturbation(black(), [2.0, 3.0, 255, 0, 0])
        assert tuple(out[3, 2]) == (255.0, 0.0, 0.0)  # (x=2, y=3) is row 3, col 2
        unchanged = np.ones((4, 4), dtype=bool)
        unchanged[3, 2] = False
        assert np.all(out[unchanged] == 0)

    def test_color_clamped(self):
        out = apply_perturbation(black(), [0, 0, 300, -5, 128])
        assert tuple(out[0, 0]) == (255.0, 0.0, 128.0)

    def test_collision_last_write_wins(self):
        out = apply_perturbation(black(), [1, 1, 10, 10, 10, 1.2, 0.8, 90, 91, 92])
        assert tuple(out[1, 1]) == (90.0, 91.0, 92.0)
        assert changed_pixels(black(), out) == [(1, 1)]

    def test_round_half_up(self):
        assert round_half_up(2.5) == 3
        assert round_half_up(2.49) == 2
        assert round_half_up(-0.5) == 0
        out = apply_perturbation(black(), [1.5, 0.5, 1, 2, 3])
        assert changed_pixels(black(), out) == [(2, 1)]

    def test_coordinates_clamped_into_image(self):
        out = apply_perturbation(black(), [99.0, -4.0, 7, 7, 7])
        assert changed_pixels(black(), out) == [(3, 0)]

    def test_malformed_candidate_rejected(self):
        with pytest.raises(ContractViolationError):
            apply_perturbation(black(), [1, 2, 3])
        with pytest.raises(ContractViolationError):
            apply_perturbation(black(), [])

    def test_original_untouched(self):
        img = black()
        apply_perturbation(img, [0, 0, 50, 50, 50])
        assert np.all(img == 0)

    def test_changes_at_most_l_pixels(self):
        rng = np.random.default_rng(7)
        img = rng.uniform(0, 255, (6, 5, 3))
        for pixels in (1, 3, 5):
            cand = rng.uniform(0, 255, 5 * pixels)
            cand[0::5] = rng.uniform(0, 5, pixels)
            cand[1::5] = rng.uniform(0, 6, pixels)
            out = apply_perturbation(img, cand)
            diff = changed_pixels(img, out)
            assert len(diff) <= pixels
            xs = np.clip(round_half_up(cand[0::5]), 0, 4)
            ys = np.clip(round_half_up(cand[1::5]), 0, 5)
            assert set(diff) <= set(zip(xs.tolist(), ys.tolist()))

    def test_batch_matches_single(self):
        rng = np.random.default_rng(3)
        img = rng.uniform(0, 255, (5, 7, 3))
        cands = rng.uniform(-10, 260, (20, 10))
        batch = apply_perturbation_batch(img, cands)
        for i in range(20):
            np.testing.assert_array_equal(batch[i], apply_perturbation(img, cands[i]))


class TestComposite:
    def test_all_foreground_mask(self):
        rng = np.random.default_rng(0)
        orig = rng.uniform(0, 255, (3, 3, 3))
        pert = rng.uniform(0, 255, (3, 3, 3))
        mask = np.ones((3, 3), dtype=bool)
        np.testing.assert_array_equal(composite(orig, pert, mask, "foreground"), pert)

    def test_all_background_mask_foreground_attack(self):
        rng = np.random.default_rng(1)
        orig = rng.uniform(0, 255, (3, 3, 3))
        pert = rng.uniform(0, 255, (3, 3, 3))
        mask = np.zeros((3, 3), dtype=bool)
        np.testing.assert_array_equal(composite(orig, pert, mask, "foreground"), orig)

    def test_2x2_single_foreground_pixel(self):
        # enumerate the four pixels by hand: only (0, 0) may change
        orig = np.arange(12, dtype=float).reshape(2, 2, 3)
        pert = orig + 100
        mask = np.array([[True, False], [False, False]])
        out = composite(orig, pert, mask, "foreground")
        assert tuple(out[0, 0]) == tuple(pert[0, 0])
        assert tuple(out[0, 1]) == tuple(orig[0, 1])
        assert tuple(out[1, 0]) == tuple(orig[1, 0])
        assert tuple(out[1, 1]) == tuple(orig[1, 1])

    def test_complementary_regions(self):
        rng = np.random.default_rng(2)
        orig = rng.uniform(0, 255, (4, 4, 3))
        pert = rng.uniform(0, 255, (4, 4, 3))
        mask = rng.random((4, 4)) > 0.5
        fg = composite(orig, pert, mask, "foreground")
        bg = composite(orig, pert, mask, "background")
        np.testing.assert_array_equal(fg[mask], pert[mask])
        np.testing.assert_array_equal(fg[~mask], orig[~mask])
        np.testing.assert_array_equal(bg[~mask], pert[~mask])
        np.testing.assert_array_equal(bg[mask], orig[mask])

    def test_identity(self):
        rng = np.random.default_rng(4)
        img = rng.uniform(0, 255, (4, 4, 3))
        mask = rng.random((4, 4)) > 0.5
        for region in ("foreground", "background"):
            np.testing.assert_array_equal(composite(img, img, mask, region), img)

    def test_dimension_mismatch(self):
        with pytest.raises(ContractViolationError):
            composite(black(4, 4), black(4, 5), np.ones((4, 4), dtype=bool), "foreground")
        with pytest.raises(ContractViolationError):
            composite(black(), black(), np.ones((5, 5), dtype=bool), "foreground")

    def test_region_constraint_end_to_end(self):
        # changed pixels = candidate targets intersected with the region
        rng = np.random.default_rng(5)
        img = rng.uniform(0, 255, (6, 6, 3))
        mask = rng.random((6, 6)) > 0.5
        for _ in range(25):
            cand = rng.uniform(0, 256, 15)
            cand[0::5] = rng.uniform(0, 6, 3)
            cand[1::5] = rng.uniform(0, 6, 3)
            pert = apply_perturbation(img, cand)
            for region, attacked in (("foreground", mask), ("background", ~mask)):
                out = composite(img, pert, mask, region)
                for x, y in changed_pixels(img, out):
                    assert attacked[y, x]
                    assert (x, y) in changed_pixels(img, pert)


class TestImageIO:
    def test_png_roundtrip(self, tmp_path):
        rng = np.random.default_rng(6)
        img = rng.integers(0, 256, (9, 11, 3)).astype(float)
        path = tmp_path / "img.png"
        save_image(img, path)
        np.testing.assert_array_equal(load_image(path), img)

    def test_save_quantizes_reals(self, tmp_path):
        img = np.full((2, 2, 3), 100.4)
        path = tmp_path / "img.png"
        save_image(img, path)
        assert np.all(load_image(path) == 100.0)

    def test_value_range_enforced(self):
        with pytest.raises(ContractViolationError):
            apply_perturbation(np.full((2, 2, 3), 300.0), [0, 0, 1, 1, 1])
