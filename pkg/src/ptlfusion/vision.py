"""Hue-based pedestrian-traffic-light state classification.

Images are (H, W, 3) uint8 RGB arrays. Inside a detector's bounding box we
count pixels whose hue falls in the calibrated red or green range (gated on
saturation and value so grey pixels never vote), convert the counts to
percentages, and compare them: more red than green means red, more green
means green, a tie or no detection at all means unavailable.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import CalibrationError, DatasetError, MissingDetectionError

RED = "red"
GREEN = "green"
UNAVAILABLE = "unavailable"
LABELS = (RED, GREEN)

# Hue gates below which hue carries no usable color information (0-255 scale).
DEFAULT_MIN_SAT = 80
DEFAULT_MIN_VAL = 80


def check_rgb_image(image, name="image"):
    """Validate an (H, W, 3) uint8 RGB array and return it."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} is empty")
    if arr.dtype != np.uint8:
        if np.any(arr < 0) or np.any(arr > 255):
            raise ValueError(f"{name} channels must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


@dataclass(frozen=True)
class BoundingBox:
    """Detector output in normalized center/size coordinates."""

    cx: float
    cy: float
    w: float
    h: float
    label: str | None = None
    confidence: float = 1.0

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box size must be positive, got w={self.w} h={self.h}")
        if (
            self.cx - self.w / 2 < 0
            or self.cx + self.w / 2 > 1
            or self.cy - self.h / 2 < 0
            or self.cy + self.h / 2 > 1
        ):
            raise ValueError(
                f"box ({self.cx}, {self.cy}, {self.w}, {self.h}) exceeds the unit square"
            )
        if not 0 <= self.confidence <= 1:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class HueRange:
    """Closed hue interval on the [0, 180) half-degree scale."""

    lo: float
    hi: float

    def __post_init__(self):
        if not 0 <= self.lo <= self.hi < 180.0001:
            raise ValueError(f"invalid hue range [{self.lo}, {self.hi}]")

    def contains(self, hue):
        return (hue >= self.lo) & (hue <= self.hi)

    def overlaps(self, other):
        return self.lo <= other.hi and other.lo <= self.hi


# Ranges calibrated on the reference footage; used as defaults everywhere.
DEFAULT_GREEN_RANGE = HueRange(75, 100)
DEFAULT_RED_RANGE = HueRange(170, 180)


@dataclass(frozen=True)
class VisionFeatures:
    """Red/green pixel percentages for one frame, or (0, 0) when undetected."""

    p_red: float
    p_green: float
    detected: bool

    @classmethod
    def none(cls):
        return cls(0.0, 0.0, False)

    def as_pair(self):
        return (self.p_red, self.p_green)


def rgb_to_hsv(pixel):
    """Hexcone RGB -> (h in [0,180), s in [0,255], v in [0,255]) for one pixel.

    Achromatic pixels (s == 0) report hue 0 by convention.
    """
    r, g, b = (float(c) for c in pixel)
    maxc = max(r, g, b)
    minc = min(r, g, b)
    delta = maxc - minc
    v = maxc
    s = 0.0 if maxc == 0 else delta / maxc * 255.0
    if delta == 0:
        h = 0.0
    elif maxc == r:
        h = 60.0 * (((g - b) / delta) % 6.0)
    elif maxc == g:
        h = 60.0 * ((b - r) / delta + 2.0)
    else:
        h = 60.0 * ((r - g) / delta + 4.0)
    return (h / 2.0, s, v)


def hsv_to_rgb(h, s, v):
    """Inverse hexcone conversion (h in [0,180), s and v in [0,255])."""
    h6 = (float(h) * 2.0 % 360.0) / 60.0
    s1 = float(s) / 255.0
    c = float(v) * s1
    x = c * (1.0 - abs(h6 % 2.0 - 1.0))
    m = float(v) - c
    sector = int(h6) % 6
    r, g, b = [(c, x, 0), (x, c, 0), (0, c, x), (0, x, c), (x, 0, c), (c, 0, x)][sector]
    return (r + m, g + m, b + m)


def rgb_image_to_hsv(image):
    """Vectorized rgb_to_hsv over an (H, W, 3) image; returns float (h, s, v) planes."""
    image = check_rgb_image(image)
    rgb = image.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=2)
    minc = rgb.min(axis=2)
    delta = maxc - minc
    v = maxc
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(maxc == 0, 0.0, delta / np.where(maxc == 0, 1.0, maxc) * 255.0)
        hue_r = ((g - b) / delta) % 6.0
        hue_g = (b - r) / delta + 2.0
        hue_b = (r - g) / delta + 4.0
    # Same branch priority as the scalar function: r, then g, then b.
    h = np.where(maxc == r, hue_r, np.where(maxc == g, hue_g, hue_b))
    h = np.where(delta == 0, 0.0, 60.0 * h) / 2.0
    return h, s, v


def hue_histogram(region):
    """180-bin hue histogram of a region; bin index is floor(hue)."""
    h, _, _ = rgb_image_to_hsv(region)
    bins = np.floor(h).astype(np.intp).ravel()
    return np.bincount(bins, minlength=180)[:180]


def masked_hue_histogram(region, min_sat=DEFAULT_MIN_SAT, min_val=DEFAULT_MIN_VAL):
    """Hue histogram restricted to pixels passing the saturation/value gates."""
    h, s, v = rgb_image_to_hsv(region)
    keep = (s >= min_sat) & (v >= min_val)
    bins = np.floor(h[keep]).astype(np.intp).ravel()
    return np.bincount(bins, minlength=180)[:180]


def pixel_percentages(
    region,
    red=DEFAULT_RED_RANGE,
    green=DEFAULT_GREEN_RANGE,
    min_sat=DEFAULT_MIN_SAT,
    min_val=DEFAULT_MIN_VAL,
):
    """Red/green pixel percentages inside a detected region.

    Pixels must pass the saturation/value gates before their hue is matched.
    With no counted pixels at all the result is (0, 0): the box was detected
    but offers zero color evidence, which downstream classifies as
    unavailable.
    """
    if red.overlaps(green):
        raise ValueError(f"red {red} and green {green} hue ranges overlap")
    h, s, v = rgb_image_to_hsv(region)
    gated = (s >= min_sat) & (v >= min_val)
    n_red = int(np.count_nonzero(gated & red.contains(h)))
    n_green = int(np.count_nonzero(gated & green.contains(h)))
    total = n_red + n_green
    if total == 0:
        return VisionFeatures(0.0, 0.0, True)
    return VisionFeatures(100.0 * n_red / total, 100.0 * n_green / total, True)


def classify_hue(features):
    """Three-way decision: red, green, or unavailable.

    Unavailable when there was no detection or the percentages tie; otherwise
    whichever color holds the larger share wins.
    """
    if not features.detected or features.p_red == features.p_green:
        return UNAVAILABLE
    return RED if features.p_red > features.p_green else GREEN


def _expand_peak(avg_hist, peak_fraction):
    """Contiguous bin range around the histogram peak above the cutoff."""
    peak = int(np.argmax(avg_hist))
    cutoff = peak_fraction * avg_hist[peak]
    lo = peak
    while lo > 0 and avg_hist[lo - 1] >= cutoff:
        lo -= 1
    hi = peak
    while hi < 179 and avg_hist[hi + 1] >= cutoff:
        hi += 1
    return HueRange(lo, hi)


def calibrate_hue_ranges(
    green_regions,
    red_regions,
    balance=True,
    peak_fraction=0.10,
    min_sat=DEFAULT_MIN_SAT,
    min_val=DEFAULT_MIN_VAL,
):
    """Derive (green, red) hue ranges from labeled bounding-box crops.

    Per class the gated hue histograms are averaged (with the larger class
    truncated to the smaller one's count when ``balance`` is set), then the
    range grows outward from the peak bin while bins stay above
    ``peak_fraction`` of the peak. Overlapping results are an error.
    """
    if not green_regions or not red_regions:
        raise DatasetError("calibration needs at least one region per class")
    if not 0 < peak_fraction <= 1:
        raise ValueError(f"peak_fraction must be in (0, 1], got {peak_fraction}")
    if balance:
        n = min(len(green_regions), len(red_regions))
        green_regions = green_regions[:n]
        red_regions = red_regions[:n]

    ranges = {}
    for name, regions in ((GREEN, green_regions), (RED, red_regions)):
        hists = [masked_hue_histogram(r, min_sat, min_val) for r in regions]
        avg = np.mean(hists, axis=0)
        if avg.max() == 0:
            raise CalibrationError(
                f"no pixels pass the saturation/value gates for the {name} class"
            )
        ranges[name] = _expand_peak(avg, peak_fraction)

    if ranges[GREEN].overlaps(ranges[RED]):
        raise CalibrationError(
            f"calibrated ranges overlap: green {ranges[GREEN]} vs red {ranges[RED]}"
        )
    return ranges[GREEN], ranges[RED]


def crop(image, box):
    """Pixel crop of a normalized bounding box, clamped to at least one pixel."""
    image = check_rgb_image(image)
    height, width = image.shape[:2]
    x0 = int(np.floor((box.cx - box.w / 2) * width))
    x1 = int(np.ceil((box.cx + box.w / 2) * width))
    y0 = int(np.floor((box.cy - box.h / 2) * height))
    y1 = int(np.ceil((box.cy + box.h / 2) * height))
    x0 = max(0, min(x0, width - 1))
    y0 = max(0, min(y0, height - 1))
    x1 = max(x0 + 1, min(x1, width))
    y1 = max(y0 + 1, min(y1, height))
    return image[y0:y1, x0:x1]


class BlobDetector:
    """Stand-in for the learned detector: largest saturated 4-connected region.

    Confidence is the region's pixel count over its bounding-rectangle area,
    so a filled disc scores about pi/4 and speckle noise scores low.
    """

    def __init__(self, min_sat=DEFAULT_MIN_SAT, min_val=DEFAULT_MIN_VAL, min_pixels=9):
        self.min_sat = min_sat
        self.min_val = min_val
        self.min_pixels = min_pixels

    def detect(self, image, frame_id=None):
        image = check_rgb_image(image)
        _, s, v = rgb_image_to_hsv(image)
        mask = (s >= self.min_sat) & (v >= self.min_val)
        if not mask.any():
            return []
        labeled, n_regions = ndimage.label(mask)
        sizes = np.bincount(labeled.ravel())[1:]
        best = int(np.argmax(sizes)) + 1
        if sizes[best - 1] < self.min_pixels:
            return []
        ys, xs = np.nonzero(labeled == best)
        height, width = image.shape[:2]
        y0, y1 = ys.min(), ys.max() + 1
        x0, x1 = xs.min(), xs.max() + 1
        rect_area = (y1 - y0) * (x1 - x0)
        box = BoundingBox(
            cx=(x0 + x1) / 2.0 / width,
            cy=(y0 + y1) / 2.0 / height,
            w=(x1 - x0) / width,
            h=(y1 - y0) / height,
            label="ptl",
            confidence=float(sizes[best - 1] / rect_area),
        )
        return [box]


class ExternalDetector:
    """Serves precomputed detections (e.g. from a learned model) by frame id."""

    def __init__(self, detections):
        self.detections = dict(detections)

    def detect(self, image, frame_id=None):
        if frame_id not in self.detections:
            raise MissingDetectionError(f"no detections recorded for frame {frame_id!r}")
        return list(self.detections[frame_id])


def frame_observation(
    image,
    detector,
    frame_id=None,
    red=DEFAULT_RED_RANGE,
    green=DEFAULT_GREEN_RANGE,
    min_sat=DEFAULT_MIN_SAT,
    min_val=DEFAULT_MIN_VAL,
):
    """Run one frame through detection and pixel counting.

    Returns (VisionFeatures, detection confidence or None). The best-scoring
    box is used when the detector returns several.
    """
    boxes = detector.detect(image, frame_id=frame_id)
    if not boxes:
        return VisionFeatures.none(), None
    box = max(boxes, key=lambda b: b.confidence)
    features = pixel_percentages(crop(image, box), red, green, min_sat, min_val)
    return features, box.confidence
