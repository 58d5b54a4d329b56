import itertools

import numpy as np
import pytest

from ptlfusion.errors import CalibrationError, DatasetError, MissingDetectionError
from ptlfusion.synth import synth_frame
from ptlfusion.vision import (
    GREEN,
    RED,
    UNAVAILABLE,
    BlobDetector,
    BoundingBox,
    ExternalDetector,
    HueRange,
    VisionFeatures,
    calibrate_hue_ranges,
    classify_hue,
    crop,
    frame_observation,
    hsv_to_rgb,
    hue_histogram,
    pixel_percentages,
    rgb_image_to_hsv,
    rgb_to_hsv,
)

from oracles import oracle_hue_histogram, oracle_rgb_to_hsv


def colored_region(n_red, n_green, n_grey, shape=None):
    """Region with exact counts of saturated red/green pixels plus grey fill."""
    pixels = (
        [(230, 20, 40)] * n_red        # hue ~177
        + [(20, 230, 230)] * n_green   # hue 90
        + [(90, 90, 90)] * n_grey
    )
    total = len(pixels)
    if shape is None:
        shape = (1, total)
    return np.array(pixels, dtype=np.uint8).reshape(shape + (3,))


class TestRgbToHsv:
    def test_pure_red(self):
        assert rgb_to_hsv((255, 0, 0)) == (0.0, 255.0, 255.0)

    def test_pure_green(self):
        assert rgb_to_hsv((0, 255, 0)) == (60.0, 255.0, 255.0)

    def test_achromatic_convention(self):
        assert rgb_to_hsv((128, 128, 128)) == (0.0, 0.0, 128.0)

    def test_cube_corners_match_hexcone_formula(self):
        for pixel in itertools.product((0, 255), repeat=3):
            h, s, v = rgb_to_hsv(pixel)
            eh, es, ev = oracle_rgb_to_hsv(pixel)
            assert (h % 180.0) == pytest.approx(eh % 180.0, abs=1e-9)
            assert s == pytest.approx(es, abs=1e-9)
            assert v == pytest.approx(ev, abs=1e-9)

    def test_random_pixels_match_hexcone_formula(self):
        rng = np.random.default_rng(31)
        for _ in range(1000):
            pixel = tuple(int(c) for c in rng.integers(0, 256, 3))
            h, s, v = rgb_to_hsv(pixel)
            eh, es, ev = oracle_rgb_to_hsv(pixel)
            assert h == pytest.approx(eh, abs=1e-9)
            assert s == pytest.approx(es, abs=1e-9)
            assert v == pytest.approx(ev, abs=1e-9)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(37)
        image = rng.integers(0, 256, (13, 9, 3)).astype(np.uint8)
        h, s, v = rgb_image_to_hsv(image)
        for y in range(image.shape[0]):
            for x in range(image.shape[1]):
                eh, es, ev = rgb_to_hsv(tuple(image[y, x]))
                assert h[y, x] == pytest.approx(eh, abs=1e-9)
                assert s[y, x] == pytest.approx(es, abs=1e-9)
                assert v[y, x] == pytest.approx(ev, abs=1e-9)

    def test_hsv_round_trip(self):
        rng = np.random.default_rng(41)
        for _ in range(200):
            pixel = tuple(int(c) for c in rng.integers(0, 256, 3))
            h, s, v = rgb_to_hsv(pixel)
            back = hsv_to_rgb(h, s, v)
            assert np.allclose(back, pixel, atol=1e-6)


class TestHueHistogram:
    def test_all_red_region(self):
        region = np.zeros((2, 2, 3), dtype=np.uint8)
        region[..., 0] = 255
        counts = hue_histogram(region)
        assert counts[0] == 4 and counts.sum() == 4

    def test_pure_green_region(self):
        region = np.zeros((2, 2, 3), dtype=np.uint8)
        region[..., 1] = 255
        counts = hue_histogram(region)
        assert counts[60] == 4

    def test_matches_per_pixel_loop(self):
        rng = np.random.default_rng(43)
        for _ in range(100):
            region = rng.integers(0, 256, (6, 5, 3)).astype(np.uint8)
            assert np.array_equal(hue_histogram(region), oracle_hue_histogram(region))

    def test_empty_region_rejected(self):
        with pytest.raises(ValueError):
            hue_histogram(np.zeros((0, 4, 3), dtype=np.uint8))


class TestPixelPercentages:
    def test_thirty_red_ten_green(self):
        region = colored_region(30, 10, 24, shape=(8, 8))
        features = pixel_percentages(region)
        assert features == VisionFeatures(75.0, 25.0, True)

    def test_all_green(self):
        features = pixel_percentages(colored_region(0, 50, 14, shape=(8, 8)))
        assert features == VisionFeatures(0.0, 100.0, True)

    def test_no_counted_pixels(self):
        features = pixel_percentages(colored_region(0, 0, 16, shape=(4, 4)))
        assert features == VisionFeatures(0.0, 0.0, True)
        assert classify_hue(features) == UNAVAILABLE

    def test_low_saturation_pixels_are_gated(self):
        # Hue inside the red range but desaturated: must not count.
        region = np.full((4, 4, 3), (120, 100, 104), dtype=np.uint8)
        assert pixel_percentages(region).as_pair() == (0.0, 0.0)

    def test_overlapping_ranges_rejected(self):
        with pytest.raises(ValueError, match="overlap"):
            pixel_percentages(
                colored_region(1, 1, 0), red=HueRange(60, 100), green=HueRange(90, 120)
            )

    def test_percentages_sum_to_hundred(self):
        rng = np.random.default_rng(47)
        seen = 0
        for _ in range(100):
            region = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
            features = pixel_percentages(region)
            if features.as_pair() != (0.0, 0.0):
                assert features.p_red + features.p_green == pytest.approx(100.0)
                seen += 1
        assert seen > 0


class TestClassifyHue:
    def test_red_dominant(self):
        assert classify_hue(VisionFeatures(75, 25, True)) == RED

    def test_tie_is_unavailable(self):
        assert classify_hue(VisionFeatures(50, 50, True)) == UNAVAILABLE

    def test_green_dominant(self):
        assert classify_hue(VisionFeatures(10, 90, True)) == GREEN

    def test_no_detection_is_unavailable(self):
        assert classify_hue(VisionFeatures.none()) == UNAVAILABLE

    def test_swap_symmetry(self):
        rng = np.random.default_rng(53)
        for _ in range(300):
            p_red = float(rng.uniform(0, 100))
            p_green = 100.0 - p_red
            forward = classify_hue(VisionFeatures(p_red, p_green, True))
            swapped = classify_hue(VisionFeatures(p_green, p_red, True))
            if p_red == p_green:
                assert forward == swapped == UNAVAILABLE
            else:
                assert {forward, swapped} == {RED, GREEN}


class TestCalibration:
    def _crops(self, label, n, seed0):
        detector = BlobDetector()
        crops = []
        for i in range(n):
            image, _ = synth_frame(label, 96, 96, seed=seed0 + i)
            boxes = detector.detect(image)
            assert boxes, "generator should always yield a detectable disc"
            crops.append(crop(image, boxes[0]))
        return crops

    def test_synthetic_corpus_ranges(self):
        green_crops = self._crops(GREEN, 12, 100)
        red_crops = self._crops(RED, 12, 900)
        green, red = calibrate_hue_ranges(green_crops, red_crops, balance=True)
        assert green.contains(90.0)
        assert red.contains(175.0)
        assert not green.overlaps(red)

    def test_single_region_per_class(self):
        green, red = calibrate_hue_ranges(
            [colored_region(0, 40, 9, shape=(7, 7))],
            [colored_region(40, 0, 9, shape=(7, 7))],
        )
        assert green.contains(90.0)
        assert red.contains(177.0)

    def test_missing_class_rejected(self):
        with pytest.raises(DatasetError):
            calibrate_hue_ranges([], [colored_region(4, 0, 0)])

    def test_overlap_reported(self):
        # Same hue on both sides cannot produce disjoint ranges.
        same = [colored_region(0, 30, 0, shape=(5, 6))]
        with pytest.raises(CalibrationError, match="overlap"):
            calibrate_hue_ranges(same, same)

    def test_balance_truncates_larger_class(self):
        green_crops = self._crops(GREEN, 3, 300)
        # Poison the tail of the red list: with balance only the first 3 count.
        red_crops = self._crops(RED, 3, 700) + [colored_region(0, 30, 0, shape=(5, 6))] * 9
        green, red = calibrate_hue_ranges(green_crops, red_crops, balance=True)
        assert red.contains(175.0)
        assert not green.overlaps(red)


class TestDetectors:
    def test_blob_finds_saturated_disc(self):
        image, truth = synth_frame(GREEN, 96, 96, seed=3)
        boxes = BlobDetector().detect(image)
        assert len(boxes) == 1
        box = boxes[0]
        assert box.confidence > 0.5
        # Disc sits inside the housing truth box.
        assert abs(box.cx - truth.cx) < truth.w
        features = pixel_percentages(crop(image, box))
        assert features.p_green > 95.0

    def test_blob_on_grey_image(self):
        grey = np.full((64, 64, 3), 90, dtype=np.uint8)
        assert BlobDetector().detect(grey) == []

    def test_external_detector_passthrough(self):
        box = BoundingBox(0.5, 0.5, 0.2, 0.3, label="red", confidence=0.9)
        detector = ExternalDetector({"frame-1": [box]})
        image = np.zeros((64, 64, 3), dtype=np.uint8)
        assert detector.detect(image, frame_id="frame-1") == [box]

    def test_external_detector_missing_frame(self):
        detector = ExternalDetector({})
        with pytest.raises(MissingDetectionError, match="frame-9"):
            detector.detect(np.zeros((64, 64, 3), dtype=np.uint8), frame_id="frame-9")

    def test_frame_observation_undetected(self):
        grey = np.full((64, 64, 3), 90, dtype=np.uint8)
        features, confidence = frame_observation(grey, BlobDetector())
        assert features == VisionFeatures.none()
        assert confidence is None


class TestBoundingBox:
    def test_out_of_bounds_rejected(self):
        with pytest.raises(ValueError):
            BoundingBox(0.9, 0.9, 0.3, 0.3)

    def test_crop_shape(self):
        image = np.zeros((100, 200, 3), dtype=np.uint8)
        region = crop(image, BoundingBox(0.5, 0.5, 0.1, 0.2))
        assert region.shape[0] == pytest.approx(20, abs=1)
        assert region.shape[1] == pytest.approx(20, abs=1)
