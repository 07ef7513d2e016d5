import colorsys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_otsu
from toneaudit.colorimetry import Rgb8
from toneaudit.skin_extraction import (
    HsvBox,
    LowColorCriterion,
    SegmentationConfig,
    image_from_pixels,
    is_low_color,
    mean_skin_rgb,
    otsu_threshold,
    rgb_to_hsv,
    rgb_to_ycrcb,
    segment_skin,
    skin_mask_hsv,
    skin_mask_ycrcb,
)

LIGHT_SKIN = (180, 120, 90)


def uniform(rgb, h=16, w=16):
    return np.full((h, w, 3), rgb, dtype=np.uint8)


images = arrays(np.uint8, st.tuples(st.integers(1, 8), st.integers(1, 8), st.just(3)))


class TestImageHelpers:
    def test_from_pixels_row_major(self):
        img = image_from_pixels(2, 1, [(1, 2, 3), (4, 5, 6)])
        assert img.shape == (1, 2, 3)
        assert img[0, 1].tolist() == [4, 5, 6]

    def test_from_pixels_length_mismatch(self):
        with pytest.raises(ValueError):
            image_from_pixels(2, 2, [(0, 0, 0)])

    def test_rejects_non_rgb(self):
        with pytest.raises(ValueError):
            is_low_color(np.zeros((4, 4)))
        with pytest.raises(ValueError):
            is_low_color(np.zeros((0, 4, 3)))

    def test_hsv_matches_colorsys(self):
        rng = np.random.default_rng(3)
        px = rng.integers(0, 256, (500, 3))
        ours = rgb_to_hsv(px)
        for (r, g, b), (h, s, v) in zip(px, ours):
            eh, es, ev = colorsys.rgb_to_hsv(r / 255, g / 255, b / 255)
            assert (h, s, v) == pytest.approx((eh * 360, es, ev), abs=1e-9)


class TestLowColor:
    def test_gray(self):
        low, stats = is_low_color(uniform((128, 128, 128)))
        assert low
        assert stats == (0.0, 0.0)

    def test_saturated(self):
        low, stats = is_low_color(uniform((200, 120, 80)))
        assert not low
        assert stats.mean_chroma == 120.0 and stats.saturation_fraction == 1.0

    def test_half_and_half(self):
        img = uniform((128, 128, 128), 8, 8)
        img[:, :4] = (200, 120, 80)
        # brute force: proxy is 0 on 32 pixels and 120 on 32
        proxies = [max(p) - min(p) for p in img.reshape(-1, 3).astype(int).tolist()]
        mean = sum(proxies) / len(proxies)
        vivid = sum(p > 16 for p in proxies) / len(proxies)
        assert (mean, vivid) == (60.0, 0.5)
        low, stats = is_low_color(img)
        assert low == (mean < 8 or vivid < 0.05) == False  # noqa: E712
        assert stats == (mean, vivid)

    def test_sparse_colour_is_low(self):
        img = uniform((100, 100, 100), 10, 10)
        img[0, :4] = (255, 0, 0)  # 4% vivid, mean proxy 10.2
        low, stats = is_low_color(img)
        assert stats.mean_chroma >= 8
        assert low

    def test_criterion_is_configurable(self):
        img = uniform((120, 110, 105))  # proxy 15
        assert not is_low_color(img, LowColorCriterion(vivid_chroma=10))[0]
        assert is_low_color(img)[0]

    @given(images, st.randoms())
    def test_permutation_invariant(self, img, rnd):
        flat = img.reshape(-1, 3).copy()
        order = list(range(len(flat)))
        rnd.shuffle(order)
        shuffled = flat[order].reshape(img.shape)
        assert is_low_color(img) == is_low_color(shuffled)


class TestChrominanceBoxes:
    def test_ycrcb_light_skin(self):
        r, g, b = LIGHT_SKIN
        y = 0.299 * r + 0.587 * g + 0.114 * b
        cr = (r - y) * 0.5 / (1 - 0.299) + 128
        cb = (b - y) * 0.5 / (1 - 0.114) + 128
        assert (y, cr, cb) == pytest.approx(tuple(rgb_to_ycrcb(np.array(LIGHT_SKIN))), abs=1e-3)
        assert y > 80 and 135 <= cr <= 180 and 85 <= cb <= 135
        assert skin_mask_ycrcb(uniform(LIGHT_SKIN, 1, 1))[0, 0]

    def test_ycrcb_rejects_green_and_black(self):
        assert not skin_mask_ycrcb(uniform((0, 255, 0), 1, 1)).any()
        assert not skin_mask_ycrcb(uniform((0, 0, 0), 1, 1)).any()

    def test_hsv_rejects_blue_and_white(self):
        assert not skin_mask_hsv(uniform((0, 0, 255), 1, 1)).any()
        assert not skin_mask_hsv(uniform((255, 255, 255), 1, 1)).any()

    def test_hsv_light_skin(self):
        h, s, v = colorsys.rgb_to_hsv(*(c / 255 for c in LIGHT_SKIN))
        assert (h * 360, s, v) == pytest.approx((20.0, 0.5, 180 / 255))
        assert 0 <= h * 360 <= 50 and 0.23 <= s <= 0.68 and v > 0.35
        assert skin_mask_hsv(uniform(LIGHT_SKIN, 1, 1))[0, 0]

    def test_boxes_are_configurable(self):
        img = uniform(LIGHT_SKIN, 1, 1)
        assert not skin_mask_hsv(img, HsvBox(h_min_deg=25))[0, 0]


class TestOtsu:
    def test_identical_values(self):
        assert otsu_threshold([100] * 20) == 100

    def test_bimodal(self):
        vals = [40] * 50 + [200] * 50
        t = otsu_threshold(vals)
        assert t == brute_otsu(vals) == 41
        assert 40 < t < 200

    def test_extremes(self):
        assert otsu_threshold([0, 255]) == brute_otsu([0, 255]) == 1

    def test_empty(self):
        with pytest.raises(ValueError):
            otsu_threshold([])

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            otsu_threshold([3, 256])

    @settings(max_examples=60)
    @given(st.lists(st.integers(0, 255), min_size=1, max_size=60))
    def test_matches_exhaustive_search(self, vals):
        assert otsu_threshold(vals) == brute_otsu(vals)

    @given(st.lists(st.integers(0, 255), min_size=2, max_size=40), st.randoms())
    def test_order_free(self, vals, rnd):
        shuffled = vals[:]
        rnd.shuffle(shuffled)
        assert otsu_threshold(vals) == otsu_threshold(shuffled)


class TestSegmentSkin:
    def test_green_is_empty(self):
        assert not segment_skin(uniform((0, 255, 0))).any()

    def test_uniform_skin_is_full(self):
        assert segment_skin(uniform(LIGHT_SKIN)).all()

    def test_half_skin_half_blue(self):
        img = uniform(LIGHT_SKIN, 10, 20)
        img[:, 10:] = (0, 0, 255)
        mask = segment_skin(img)
        expected = np.zeros((10, 20), bool)
        expected[:, :10] = True
        np.testing.assert_array_equal(mask, expected)

    def test_otsu_drops_low_cr_cluster(self):
        # both clusters pass both boxes; Cr about 160 vs 145
        img = uniform(LIGHT_SKIN, 10, 20)
        img[:, 10:] = (170, 140, 110)
        cand = skin_mask_ycrcb(img) & skin_mask_hsv(img)
        assert cand.all()
        mask = segment_skin(img)
        assert mask[:, :10].all() and not mask[:, 10:].any()

    def test_otsu_keeps_close_clusters(self):
        img = uniform(LIGHT_SKIN, 10, 20)
        img[:, 10:] = (190, 120, 90)  # Cr about 5 above
        assert segment_skin(img).all()
        cfg = SegmentationConfig(otsu_min_separation=0.0)
        assert not segment_skin(img, cfg).all()

    @settings(max_examples=50)
    @given(images)
    def test_subset_of_both_boxes(self, img):
        mask = segment_skin(img)
        assert mask.shape == img.shape[:2]
        assert not (mask & ~skin_mask_ycrcb(img)).any()
        assert not (mask & ~skin_mask_hsv(img)).any()


class TestMeanSkinRgb:
    def test_uniform(self):
        img = uniform((150, 100, 80))
        assert mean_skin_rgb(img, np.ones((16, 16), bool)) == Rgb8(150, 100, 80)

    def test_two_pixels(self):
        img = image_from_pixels(2, 1, [(100, 100, 100), (200, 200, 200)])
        mean = mean_skin_rgb(img, np.ones((1, 2), bool), min_fraction=0, min_pixels=1)
        assert mean == Rgb8(150, 150, 150)

    def test_half_up_rounding(self):
        img = image_from_pixels(2, 1, [(100, 0, 1), (101, 1, 2)])
        mean = mean_skin_rgb(img, np.ones((1, 2), bool), min_fraction=0, min_pixels=1)
        assert mean == Rgb8(101, 1, 2)

    def test_empty_mask(self):
        assert mean_skin_rgb(uniform((1, 2, 3)), np.zeros((16, 16), bool)) is None

    def test_coverage_floor(self):
        img = uniform((150, 100, 80), 100, 100)
        mask = np.zeros((100, 100), bool)
        mask.flat[:99] = True  # 99 px < 1% of 10,000
        assert mean_skin_rgb(img, mask) is None
        mask.flat[:100] = True
        assert mean_skin_rgb(img, mask) == Rgb8(150, 100, 80)
        small = uniform((150, 100, 80), 4, 4)
        assert mean_skin_rgb(small, np.ones((4, 4), bool)) is None  # 16 < 64 px

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mean_skin_rgb(uniform((1, 2, 3)), np.ones((3, 3), bool))

    @given(images, st.randoms())
    def test_permutation_invariant(self, img, rnd):
        flat = img.reshape(-1, 3)
        order = list(range(len(flat)))
        rnd.shuffle(order)
        ones = np.ones(img.shape[:2], bool)
        a = mean_skin_rgb(img, ones, 0, 1)
        b = mean_skin_rgb(flat[order].reshape(img.shape), ones, 0, 1)
        assert a == b
