import itertools

import numpy as np
import pytest

from pixelprobe.core import ContractViolationError
from pixelprobe.segmentation import (
    TRIMAP_BG,
    TRIMAP_FG,
    TRIMAP_UNKNOWN,
    ColorMixture,
    GmmModel,
    GrabcutParams,
    data_term,
    fit_gmms,
    grabcut,
    labeling_energy,
    load_mask,
    load_trimap,
    min_cut,
    neighbor_pairs,
    save_mask,
    save_trimap,
    smoothness_term,
    trimap_from_rectangle,
)


def brute_force_min_energy(d_fg, d_bg, pairs, weights, trimap):
    """Independent oracle: enumerate every labeling allowed by the trimap."""
    tri = np.asarray(trimap).ravel()
    d_fg = np.asarray(d_fg).ravel()
    d_bg = np.asarray(d_bg).ravel()
    unknown = np.flatnonzero(tri == TRIMAP_UNKNOWN)
    base = tri == TRIMAP_FG
    best = np.inf
    for bits in itertools.product([False, True], repeat=len(unknown)):
        labeling = base.copy()
        labeling[unknown] = bits
        energy = np.where(labeling, d_fg, d_bg)[tri == TRIMAP_UNKNOWN].sum()
        energy += np.where(labeling, d_fg, d_bg)[tri != TRIMAP_UNKNOWN].sum()
        cut = labeling[pairs[:, 0]] != labeling[pairs[:, 1]]
        energy += weights[cut].sum()
        best = min(best, energy)
    return best


def disk_image(size=32, radius=9, seed=0):
    """Red disk on a blue field with mild noise; returns (image, truth mask)."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    cy = size / 2 + rng.uniform(-2, 2)
    cx = size / 2 + rng.uniform(-2, 2)
    truth = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
    image = np.empty((size, size, 3))
    image[truth] = [200.0, 40.0, 40.0]
    image[~truth] = [40.0, 60.0, 200.0]
    image += rng.normal(0, 5, image.shape)
    return np.clip(image, 0, 255), truth


def iou(a, b):
    return (a & b).sum() / (a | b).sum()


class TestFitGmms:
    params = GrabcutParams(components=1)

    def test_solid_color_single_component(self):
        image = np.full((4, 4, 3), 120.0)
        alpha = np.zeros((4, 4), dtype=bool)
        alpha[:2] = True
        model = fit_gmms(image, alpha, self.params)
        np.testing.assert_allclose(model.foreground.means[0], [120.0, 120.0, 120.0])
        np.testing.assert_allclose(model.foreground.covs[0], 1e-3 * np.eye(3))
        assert model.foreground.weights[0] == 1.0

    def test_two_separated_colors(self):
        image = np.zeros((2, 8, 3))
        image[:, :4] = [250.0, 10.0, 10.0]
        image[:, 4:] = [10.0, 10.0, 250.0]
        alpha = np.zeros((2, 8), dtype=bool)
        alpha[0] = True  # foreground row has both colors
        model = fit_gmms(image, alpha, GrabcutParams(components=2))
        means = sorted(model.foreground.means.tolist())
        assert np.allclose(means[0], [10.0, 10.0, 250.0], atol=1.0)
        assert np.allclose(means[1], [250.0, 10.0, 10.0], atol=1.0)

    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(0)
        image = rng.uniform(0, 255, (8, 8, 3))
        alpha = rng.random((8, 8)) > 0.4
        model = fit_gmms(image, alpha, GrabcutParams(components=5))
        assert model.foreground.weights.sum() == pytest.approx(1.0)
        assert model.background.weights.sum() == pytest.approx(1.0)

    def test_region_smaller_than_k(self):
        rng = np.random.default_rng(1)
        image = rng.uniform(0, 255, (3, 3, 3))
        alpha = np.zeros((3, 3), dtype=bool)
        alpha[0, 0] = True
        alpha[0, 1] = True
        model = fit_gmms(image, alpha, GrabcutParams(components=5))
        assert model.foreground.means.shape[0] <= 2

    def test_empty_region_rejected(self):
        image = np.zeros((2, 2, 3))
        with pytest.raises(ContractViolationError):
            fit_gmms(image, np.zeros((2, 2), dtype=bool), self.params)


class TestDataTerm:
    def single_component(self, cov):
        return GmmModel(
            foreground=ColorMixture(means=np.array([[10.0, 20.0, 30.0]]),
                                    covs=np.array([cov]), weights=np.array([1.0])),
            background=ColorMixture(means=np.array([[0.0, 0.0, 0.0]]),
                                    covs=np.array([np.eye(3)]), weights=np.array([1.0])),
        )

    def test_cost_at_mean_closed_form(self):
        sigma = 4.0 * np.eye(3)
        model = self.single_component(sigma)
        expected = -np.log(1.0) + 0.5 * (3 * np.log(2 * np.pi) + np.log(np.linalg.det(sigma)))
        assert data_term([10.0, 20.0, 30.0], "foreground", model) == pytest.approx(expected, abs=1e-9)

    def test_mahalanobis_two_closed_form(self):
        model = self.single_component(np.eye(3))
        point = np.array([12.0, 20.0, 30.0])  # Mahalanobis distance 2
        expected = 0.5 * (3 * np.log(2 * np.pi)) + 0.5 * 4.0
        assert data_term(point, "foreground", model) == pytest.approx(expected, abs=1e-9)

    def test_far_point_costs_more(self):
        model = self.single_component(np.eye(3))
        near = data_term([10.0, 20.0, 30.0], "foreground", model)
        far = data_term([200.0, 200.0, 200.0], "foreground", model)
        assert far > near

    def test_min_over_components(self):
        mixture = ColorMixture(
            means=np.array([[0.0, 0.0, 0.0], [100.0, 100.0, 100.0]]),
            covs=np.array([np.eye(3), np.eye(3)]),
            weights=np.array([0.5, 0.5]),
        )
        model = GmmModel(foreground=mixture, background=mixture)
        near_second = data_term([99.0, 100.0, 100.0], "foreground", model)
        expected = -np.log(0.5) + 0.5 * (3 * np.log(2 * np.pi)) + 0.5 * 1.0
        assert near_second == pytest.approx(expected, abs=1e-9)


class TestSmoothness:
    def test_identical_neighbors_weight_gamma(self):
        image = np.full((2, 2, 3), 9.0)
        image[0, 0] = 200.0  # make the pair-mean nonzero
        params = GrabcutParams(gamma=50.0)
        pairs, weights = smoothness_term(image, params)
        flat_equal = [i for i, (m, n) in enumerate(pairs)
                      if np.array_equal(image.reshape(-1, 3)[m], image.reshape(-1, 3)[n])]
        assert flat_equal
        np.testing.assert_allclose(weights[flat_equal], 50.0)

    def test_two_pixel_hand_value(self):
        image = np.zeros((1, 2, 3))
        image[0, 1] = 255.0
        params = GrabcutParams(gamma=50.0)
        pairs, weights = smoothness_term(image, params)
        assert pairs.shape == (1, 2)
        assert weights[0] == pytest.approx(50.0 * np.exp(-0.5))

    def test_uniform_image_beta_zero(self):
        image = np.full((3, 3, 3), 42.0)
        pairs, weights = smoothness_term(image, GrabcutParams(gamma=7.0))
        np.testing.assert_allclose(weights, 7.0)

    def test_eight_connectivity_pair_count(self):
        pairs = neighbor_pairs(3, 3)
        # 3x3: 6 horizontal + 6 vertical + 4 + 4 diagonals
        assert pairs.shape == (20, 2)


class TestMinCut:
    def test_zero_smoothness_decomposes(self):
        rng = np.random.default_rng(0)
        shape = (3, 4)
        d_fg = rng.uniform(0, 10, shape)
        d_bg = rng.uniform(0, 10, shape)
        trimap = np.full(shape, TRIMAP_UNKNOWN)
        pairs = neighbor_pairs(*shape)
        weights = np.zeros(len(pairs))
        labels = min_cut(d_fg, d_bg, pairs, weights, trimap)
        np.testing.assert_array_equal(labels, d_fg < d_bg)

    def test_all_fg_favoring(self):
        shape = (3, 3)
        d_fg = np.zeros(shape)
        d_bg = np.ones(shape)
        trimap = np.full(shape, TRIMAP_UNKNOWN)
        pairs = neighbor_pairs(*shape)
        weights = np.full(len(pairs), 0.2)
        labels = min_cut(d_fg, d_bg, pairs, weights, trimap)
        assert labels.all()

    def test_matches_brute_force_3x3(self):
        rng = np.random.default_rng(1)
        shape = (3, 3)
        pairs = neighbor_pairs(*shape)
        for trial in range(20):
            d_fg = rng.uniform(0, 5, shape)
            d_bg = rng.uniform(0, 5, shape)
            weights = rng.uniform(0, 2, len(pairs))
            trimap = np.full(shape, TRIMAP_UNKNOWN)
            labels = min_cut(d_fg, d_bg, pairs, weights, trimap)
            energy = labeling_energy(labels, d_fg, d_bg, pairs, weights)
            best = brute_force_min_energy(d_fg, d_bg, pairs, weights, trimap)
            assert energy == pytest.approx(best, abs=1e-9)

    def test_pins_respected(self):
        rng = np.random.default_rng(2)
        shape = (4, 4)
        pairs = neighbor_pairs(*shape)
        for trial in range(10):
            d_fg = rng.uniform(0, 5, shape)
            d_bg = rng.uniform(0, 5, shape)
            weights = rng.uniform(0, 2, len(pairs))
            trimap = rng.choice([TRIMAP_BG, TRIMAP_UNKNOWN, TRIMAP_FG], size=shape)
            if not (trimap == TRIMAP_UNKNOWN).any():
                trimap[0, 0] = TRIMAP_UNKNOWN
            labels = min_cut(d_fg, d_bg, pairs, weights, trimap)
            assert labels[trimap == TRIMAP_FG].all()
            assert not labels[trimap == TRIMAP_BG].any()


class TestGrabcut:
    def test_disk_segmentation_iou(self):
        image, truth = disk_image(seed=3)
        trimap = trimap_from_rectangle(image.shape[:2], (3, 3, 29, 29))
        result = grabcut(image, trimap, GrabcutParams())
        assert iou(result.mask, truth) >= 0.95

    def test_energy_non_increasing(self):
        image, _ = disk_image(seed=4)
        trimap = trimap_from_rectangle(image.shape[:2], (2, 2, 30, 30))
        result = grabcut(image, trimap, GrabcutParams(iterations=5))
        energies = result.energy_history
        assert len(energies) >= 1
        for before, after in zip(energies, energies[1:]):
            assert after <= before + 1e-6

    def test_single_unknown_pixel(self):
        rng = np.random.default_rng(5)
        image = rng.uniform(0, 255, (4, 4, 3))
        trimap = np.full((4, 4), TRIMAP_BG)
        trimap[:2] = TRIMAP_FG
        trimap[2, 2] = TRIMAP_UNKNOWN
        result = grabcut(image, trimap, GrabcutParams(components=2, iterations=3))
        pinned_fg = trimap == TRIMAP_FG
        pinned_bg = trimap == TRIMAP_BG
        assert result.mask[pinned_fg].all()
        assert not result.mask[pinned_bg].any()

    def test_collapsing_cut_keeps_last_valid_labeling(self):
        # uniform image, rectangle trimap only (no definite foreground): the
        # cut wants to send everything to background; the result must keep
        # the last labeling with both regions non-empty and flag a warning
        image = np.full((8, 8, 3), 50.0)
        trimap = trimap_from_rectangle((8, 8), (2, 2, 6, 6))
        result = grabcut(image, trimap, GrabcutParams(components=1, iterations=4))
        assert result.mask.any() and not result.mask.all()
        assert not result.mask[trimap == TRIMAP_BG].any()
        if result.warning is not None:
            # the rejected collapse leaves the rectangle interior as foreground
            np.testing.assert_array_equal(result.mask, trimap == TRIMAP_UNKNOWN)

    def test_trimap_validation(self):
        with pytest.raises(ContractViolationError):
            trimap_from_rectangle((8, 8), (0, 0, 8, 8))  # no background left
        with pytest.raises(ContractViolationError):
            grabcut(np.zeros((4, 4, 3)), np.full((4, 4), TRIMAP_BG))


class TestMaskIO:
    def test_all_values(self, tmp_path):
        all_fg = np.ones((5, 5), dtype=bool)
        all_bg = np.zeros((5, 5), dtype=bool)
        for name, mask in (("fg", all_fg), ("bg", all_bg)):
            path = tmp_path / f"{name}.png"
            save_mask(mask, path)
            np.testing.assert_array_equal(load_mask(path), mask)

    def test_checkerboard_roundtrip(self, tmp_path):
        yy, xx = np.mgrid[0:6, 0:7]
        mask = (yy + xx) % 2 == 0
        path = tmp_path / "checker.png"
        save_mask(mask, path)
        np.testing.assert_array_equal(load_mask(path), mask)

    def test_dimension_mismatch(self, tmp_path):
        mask = np.ones((4, 4), dtype=bool)
        path = tmp_path / "m.png"
        save_mask(mask, path)
        with pytest.raises(ContractViolationError):
            load_mask(path, expected_shape=(5, 5))

    def test_trimap_roundtrip(self, tmp_path):
        trimap = np.full((4, 4), TRIMAP_BG)
        trimap[1:3, 1:3] = TRIMAP_UNKNOWN
        trimap[2, 2] = TRIMAP_FG
        path = tmp_path / "t.png"
        save_trimap(trimap, path)
        np.testing.assert_array_equal(load_trimap(path), trimap)
