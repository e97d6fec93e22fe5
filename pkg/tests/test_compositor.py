import numpy as np
import pytest

from texturesmith import (
    FeatherParams,
    InitMode,
    RegionStyle,
    ShapeError,
    SynthesisConfig,
    composite,
    feather_mask,
    normalize_soft_masks,
    per_region_synthesize,
    seeded_test_network,
    style_descriptor,
    synthesize,
)
from texturesmith.compositing import style_crop

from _fixtures import seeded_style_image, two_region_content
from _oracles import box_filter_oracle


def half_masks(size):
    left = np.zeros((size, size))
    left[:, :size // 2] = 1.0
    return [left, 1.0 - left]


def synth_cfg(layers, max_iterations=25, **kwargs):
    return SynthesisConfig(layer_indices=layers, step_size=1e5,
                           max_iterations=max_iterations, convergence_tol=0.0,
                           **kwargs)


class TestFeatherMask:
    def test_radius_zero_identity(self, rng):
        mask = (rng.random((6, 6)) > 0.5).astype(np.float64)
        out = feather_mask(mask, FeatherParams(radius=0))
        assert np.array_equal(out, mask)

    def test_all_ones_preserved(self):
        mask = np.ones((8, 8))
        for radius in (1, 2, 3):
            assert np.array_equal(feather_mask(mask, FeatherParams(radius)), mask)

    def test_single_pixel_plateau(self):
        mask = np.zeros((7, 7))
        mask[3, 3] = 1.0
        out = feather_mask(mask, FeatherParams(radius=1))
        expected = np.zeros((7, 7))
        expected[2:5, 2:5] = 1.0 / 9.0
        assert np.allclose(out, expected)

    def test_matches_box_filter_oracle(self, rng):
        mask = (rng.random((9, 7)) > 0.4).astype(np.float64)
        for radius in (1, 2, 3):
            out = feather_mask(mask, FeatherParams(radius))
            assert np.abs(out - box_filter_oracle(mask, radius)).max() < 1e-12

    def test_radius_out_of_bounds(self):
        with pytest.raises(ShapeError):
            feather_mask(np.ones((4, 4)), FeatherParams(radius=3))

    def test_non_binary_rejected(self):
        with pytest.raises(ShapeError):
            feather_mask(np.full((4, 4), 0.5), FeatherParams(radius=1))


class TestNormalizeSoftMasks:
    def test_binary_partition_unchanged(self):
        masks = half_masks(6)
        out = normalize_soft_masks(masks)
        for a, b in zip(out, masks):
            assert np.array_equal(a, b)

    def test_two_halves_unchanged(self):
        masks = [np.full((4, 4), 0.5), np.full((4, 4), 0.5)]
        out = normalize_soft_masks(masks)
        for a, b in zip(out, masks):
            assert np.array_equal(a, b)

    def test_random_positive_masks_sum_to_one(self, rng):
        masks = [rng.uniform(0.05, 1.0, size=(5, 5)) for _ in range(3)]
        out = normalize_soft_masks(masks)
        assert np.abs(np.stack(out).sum(axis=0) - 1.0).max() < 1e-9

    def test_zero_sum_pixel_rejected(self):
        masks = [np.zeros((3, 3)), np.zeros((3, 3))]
        with pytest.raises(ShapeError):
            normalize_soft_masks(masks)


class TestComposite:
    def test_single_region_identity(self, rng):
        image = rng.uniform(0, 1, size=(3, 4, 4)).astype(np.float32)
        out = composite([image], [np.ones((4, 4))])
        assert np.array_equal(out, image)

    def test_identical_regions_any_masks(self, rng):
        image = rng.uniform(0, 1, size=(3, 4, 4)).astype(np.float32)
        masks = normalize_soft_masks([rng.uniform(0.1, 1, size=(4, 4)) for _ in range(2)])
        out = composite([image, image], masks)
        assert np.allclose(out, image, atol=1e-6)

    def test_matches_weighted_sum_oracle(self, rng):
        images = [rng.uniform(0, 1, size=(3, 5, 4)).astype(np.float32) for _ in range(3)]
        masks = normalize_soft_masks([rng.uniform(0.1, 1, size=(5, 4)) for _ in range(3)])
        out = composite(images, masks)
        expected = np.zeros((3, 5, 4))
        for ch in range(3):
            for r in range(5):
                for c in range(4):
                    expected[ch, r, c] = sum(
                        float(m[r, c]) * float(img[ch, r, c])
                        for m, img in zip(masks, images))
        assert np.abs(out - expected).max() < 1e-6

    def test_binary_masks_select_bitwise(self, rng):
        images = [rng.uniform(0, 1, size=(3, 6, 6)).astype(np.float32) for _ in range(2)]
        masks = half_masks(6)
        out = composite(images, masks)
        assert np.array_equal(out[:, :, :3], images[0][:, :, :3])
        assert np.array_equal(out[:, :, 3:], images[1][:, :, 3:])

    def test_count_mismatch(self, rng):
        image = rng.uniform(size=(3, 4, 4)).astype(np.float32)
        with pytest.raises(ShapeError):
            composite([image], [np.ones((4, 4)), np.ones((4, 4))])


class TestStyleCrop:
    def test_bounding_box(self, rng):
        image = rng.uniform(0, 1, size=(3, 8, 8)).astype(np.float32)
        mask = np.zeros((8, 8))
        mask[2:5, 3:7] = 1.0
        cropped = style_crop(image, mask)
        assert np.array_equal(cropped, image[:, 2:5, 3:7])

    def test_empty_mask_rejected(self, rng):
        image = rng.uniform(size=(3, 4, 4)).astype(np.float32)
        with pytest.raises(ShapeError):
            style_crop(image, np.zeros((4, 4)))


class TestPerRegionSynthesize:
    def test_single_region_fixed_point(self):
        net = seeded_test_network(seed=7, depth=2, channels=6)
        content = two_region_content(size=16)
        cfg = synth_cfg((1, 3))
        descriptor = style_descriptor(net, content, cfg.layer_indices, cfg.layer_weights)
        regions = [RegionStyle(mask=np.ones((16, 16)), descriptor=descriptor)]
        result = per_region_synthesize(content, regions, net, cfg, FeatherParams(radius=2))
        assert np.array_equal(result.image, content)
        assert result.traces[0][-1].total == 0.0

    def test_two_regions_same_style_equal_single(self):
        net = seeded_test_network(seed=7, depth=2, channels=6)
        content = two_region_content(size=16)
        style = seeded_style_image(31, size=16)
        cfg = synth_cfg((1, 3))
        descriptor = style_descriptor(net, style, cfg.layer_indices, cfg.layer_weights)
        regions = [RegionStyle(mask=m, descriptor=descriptor) for m in half_masks(16)]
        result = per_region_synthesize(content, regions, net, cfg, FeatherParams(radius=2))
        single, _ = synthesize(content, descriptor, net, cfg)
        assert np.abs(result.image - single).max() < 1e-6

    def test_two_distinct_styles_envelope(self):
        net = seeded_test_network(seed=7, depth=2, channels=6)
        content = two_region_content(size=16)
        cfg = synth_cfg((1, 3))
        regions = [
            RegionStyle(mask=m, style_image=seeded_style_image(s, size=16))
            for m, s in zip(half_masks(16), (31, 77))
        ]
        result = per_region_synthesize(content, regions, net, cfg, FeatherParams(radius=2))
        lo = np.minimum(result.region_images[0], result.region_images[1])
        hi = np.maximum(result.region_images[0], result.region_images[1])
        assert np.all(result.image >= lo - 1e-6)
        assert np.all(result.image <= hi + 1e-6)

    def test_partition_preserved_after_feathering(self):
        net = seeded_test_network(seed=7, depth=2, channels=6)
        content = two_region_content(size=16)
        cfg = synth_cfg((1, 3), max_iterations=2)
        regions = [
            RegionStyle(mask=m, style_image=seeded_style_image(s, size=16))
            for m, s in zip(half_masks(16), (31, 77))
        ]
        result = per_region_synthesize(content, regions, net, cfg, FeatherParams(radius=3))
        sums = np.stack(result.soft_masks).sum(axis=0)
        assert np.abs(sums - 1.0).max() < 1e-9

    def test_radius_zero_is_bitwise_selection(self):
        net = seeded_test_network(seed=7, depth=2, channels=6)
        content = two_region_content(size=16)
        cfg = synth_cfg((1, 3), max_iterations=5)
        masks = half_masks(16)
        regions = [
            RegionStyle(mask=m, style_image=seeded_style_image(s, size=16))
            for m, s in zip(masks, (31, 77))
        ]
        result = per_region_synthesize(content, regions, net, cfg, FeatherParams(radius=0))
        for mask, region_image in zip(masks, result.region_images):
            sel = mask.astype(bool)
            assert np.array_equal(result.image[:, sel], region_image[:, sel])

    def test_region_order_does_not_change_output(self):
        net = seeded_test_network(seed=7, depth=2, channels=6)
        content = two_region_content(size=16)
        cfg = synth_cfg((1, 3), max_iterations=5)
        masks = half_masks(16)
        styles = [seeded_style_image(s, size=16) for s in (31, 77)]
        forward = [RegionStyle(mask=m, style_image=s) for m, s in zip(masks, styles)]
        reversed_ = [RegionStyle(mask=m, style_image=s)
                     for m, s in zip(masks[::-1], styles[::-1])]
        a = per_region_synthesize(content, forward, net, cfg, FeatherParams(radius=2))
        b = per_region_synthesize(content, reversed_, net, cfg, FeatherParams(radius=2))
        assert a.image.tobytes() == b.image.tobytes()

    def test_partition_violation_rejected(self):
        net = seeded_test_network(seed=7, depth=1, channels=4)
        content = two_region_content(size=8)
        cfg = synth_cfg((1,), max_iterations=2)
        overlapping = [np.ones((8, 8)), np.ones((8, 8))]
        regions = [RegionStyle(mask=m, style_image=content) for m in overlapping]
        with pytest.raises(ShapeError, match="partition"):
            per_region_synthesize(content, regions, net, cfg, FeatherParams(radius=1))

    def test_style_mask_crops_descriptor_input(self):
        net = seeded_test_network(seed=7, depth=1, channels=4)
        content = two_region_content(size=8)
        style = seeded_style_image(5, size=8)
        style_mask = np.zeros((8, 8))
        style_mask[0:4, 0:4] = 1.0
        cfg = synth_cfg((1,), max_iterations=2)
        regions = [RegionStyle(mask=np.ones((8, 8)), style_image=style,
                               style_mask=style_mask)]
        result = per_region_synthesize(content, regions, net, cfg, FeatherParams(radius=0))
        cropped = style_crop(style, style_mask)
        descriptor = style_descriptor(net, cropped, cfg.layer_indices, cfg.layer_weights)
        direct, _ = synthesize(content, descriptor, net, cfg)
        assert np.array_equal(result.image, direct)
