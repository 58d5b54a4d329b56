"""MFCC feature extraction for pedestrian-traffic-light audio windows.

A clip is framed with a Hann window, each frame goes through FFT power
spectrum -> triangular mel filterbank -> log -> orthonormal DCT-II, and the
clip-level feature is the mean over frames of coefficients c1..cN (c0 carries
only overall volume and is dropped). Delta and delta-delta streams are the
standard regression derivatives of the per-frame coefficient sequence.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

from .errors import ClipTooShortError, ConfigError

DELTA_NONE = "none"
DELTA = "delta"
DELTA_DELTA = "delta_delta"
DELTA_MODES = (DELTA_NONE, DELTA, DELTA_DELTA)

LAYOUT_MFCC = "mfcc"
LAYOUT_MFCC_DELTA = "mfcc+delta"
LAYOUT_MFCC_DELTA_DELTA = "mfcc+delta+deltadelta"
LAYOUT_FUSED = "fused"

_LAYOUT_FOR_MODE = {
    DELTA_NONE: LAYOUT_MFCC,
    DELTA: LAYOUT_MFCC_DELTA,
    DELTA_DELTA: LAYOUT_MFCC_DELTA_DELTA,
}


def feature_length(layout, n_mfcc):
    """Feature dimension implied by a layout tag for a given coefficient count."""
    if layout == LAYOUT_MFCC:
        return n_mfcc
    if layout == LAYOUT_MFCC_DELTA:
        return 2 * n_mfcc
    if layout == LAYOUT_MFCC_DELTA_DELTA:
        return 3 * n_mfcc
    if layout == LAYOUT_FUSED:
        return n_mfcc + 2
    raise ConfigError(f"unknown feature layout {layout!r}")


@dataclass(frozen=True)
class AudioClip:
    """Mono sample buffer plus its sample rate; the unit of audio inference."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).ravel()
        object.__setattr__(self, "samples", samples)
        if self.sample_rate < 8000:
            raise ConfigError(f"sample_rate must be >= 8000 Hz, got {self.sample_rate}")

    @property
    def duration_ms(self):
        return 1000.0 * len(self.samples) / self.sample_rate

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class MfccConfig:
    """Knobs of the MFCC pipeline.

    Defaults are standard speech-processing values; the classifier grids vary
    only ``n_mfcc`` (and ``include_deltas``) on top of them. ``fft_size=None``
    resolves to the next power of two covering the analysis window.
    """

    n_mfcc: int = 24
    analysis_window_ms: float = 25.0
    hop_ms: float = 10.0
    n_mels: int = 40
    fft_size: int | None = None
    log_floor: float = 1e-10
    include_deltas: str = DELTA_NONE
    delta_half_window: int = 2

    def validate(self):
        if not 1 <= self.n_mfcc < self.n_mels:
            raise ConfigError(
                f"n_mfcc must be in [1, n_mels={self.n_mels}), got {self.n_mfcc}"
            )
        if self.analysis_window_ms <= 0 or self.hop_ms <= 0:
            raise ConfigError("analysis_window_ms and hop_ms must be positive")
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be positive")
        if self.include_deltas not in DELTA_MODES:
            raise ConfigError(
                f"include_deltas must be one of {DELTA_MODES}, got {self.include_deltas!r}"
            )
        if self.delta_half_window < 1:
            raise ConfigError("delta_half_window must be >= 1")
        if self.fft_size is not None and (
            self.fft_size < 1 or self.fft_size & (self.fft_size - 1)
        ):
            raise ConfigError(f"fft_size must be a power of two, got {self.fft_size}")

    def window_samples(self, sample_rate):
        return int(round(sample_rate * self.analysis_window_ms / 1000.0))

    def hop_samples(self, sample_rate):
        return max(1, int(round(sample_rate * self.hop_ms / 1000.0)))

    def resolved_fft_size(self, sample_rate):
        win = self.window_samples(sample_rate)
        if self.fft_size is None:
            size = 1
            while size < win:
                size *= 2
            return size
        if self.fft_size < win:
            raise ConfigError(
                f"fft_size {self.fft_size} is smaller than the {win}-sample window"
            )
        return self.fft_size

    @property
    def layout(self):
        return _LAYOUT_FOR_MODE[self.include_deltas]


@dataclass(frozen=True)
class FeatureVector:
    """Ordered feature values plus the layout they were produced under."""

    values: np.ndarray
    layout: str
    n_mfcc: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).ravel()
        object.__setattr__(self, "values", values)
        expected = feature_length(self.layout, self.n_mfcc)
        if len(values) != expected:
            raise ValueError(
                f"layout {self.layout!r} with n_mfcc={self.n_mfcc} implies "
                f"{expected} values, got {len(values)}"
            )

    def __len__(self):
        return len(self.values)


@lru_cache(maxsize=32)
def mel_filterbank(sample_rate, fft_size, n_mels):
    """Triangular mel filters evaluated at FFT bin frequencies.

    Filter edges are n_mels+2 points equally spaced on the mel axis between
    0 Hz and Nyquist; weights are the usual rising/falling ramps.
    """
    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    n_bins = fft_size // 2 + 1
    bin_hz = np.arange(n_bins) * (sample_rate / fft_size)
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    lower = edges[:-2][:, None]
    center = edges[1:-1][:, None]
    upper = edges[2:][:, None]
    rising = (bin_hz[None, :] - lower) / (center - lower)
    falling = (upper - bin_hz[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def hann_window(length):
    """Symmetric Hann window (matches numpy.hanning)."""
    return np.hanning(length)


def mfcc_frame_matrix(clip, cfg):
    """Per-analysis-window MFCCs c1..cN as a (n_frames, n_mfcc) matrix."""
    cfg.validate()
    win = cfg.window_samples(clip.sample_rate)
    if len(clip) < win:
        raise ClipTooShortError(
            f"clip of {clip.duration_ms:.1f} ms is shorter than the "
            f"{cfg.analysis_window_ms:.1f} ms analysis window"
        )
    hop = cfg.hop_samples(clip.sample_rate)
    fft_size = cfg.resolved_fft_size(clip.sample_rate)

    frames = np.lib.stride_tricks.sliding_window_view(clip.samples, win)[::hop]
    spectra = np.fft.rfft(frames * hann_window(win), n=fft_size, axis=1)
    power = spectra.real**2 + spectra.imag**2
    mel_energy = power @ mel_filterbank(clip.sample_rate, fft_size, cfg.n_mels).T
    log_mel = np.log(np.maximum(mel_energy, cfg.log_floor))
    cepstra = scipy.fft.dct(log_mel, type=2, norm="ortho", axis=1)
    return cepstra[:, 1 : cfg.n_mfcc + 1]


def dct2_ortho(x):
    """Orthonormal DCT-II along the last axis (the transform used internally)."""
    return scipy.fft.dct(np.asarray(x, dtype=np.float64), type=2, norm="ortho", axis=-1)


def compute_mfcc(clip, cfg):
    """Clip-level MFCC feature: mean of per-window c1..cN over all windows."""
    frames = mfcc_frame_matrix(clip, cfg)
    return FeatureVector(frames.mean(axis=0), LAYOUT_MFCC, cfg.n_mfcc)


def compute_deltas(mfcc_frames, order=1, half_window=2):
    """Regression deltas of a (n_frames, n_coeffs) coefficient sequence.

    d_t = sum_{n=1..M} n * (c_{t+n} - c_{t-n}) / (2 * sum n^2), with boundary
    frames replicated so the output length equals the input length. order=2
    applies the formula twice (delta-delta).
    """
    if order not in (1, 2):
        raise ConfigError(f"delta order must be 1 or 2, got {order}")
    if half_window < 1:
        raise ConfigError("half_window must be >= 1")
    frames = np.asarray(mfcc_frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ValueError("mfcc_frames must be a 2-D (n_frames, n_coeffs) array")
    if frames.shape[0] < 2 * half_window + 1:
        raise ValueError(
            f"need at least {2 * half_window + 1} frames for half_window="
            f"{half_window}, got {frames.shape[0]}"
        )
    out = frames
    for _ in range(order):
        padded = np.pad(out, ((half_window, half_window), (0, 0)), mode="edge")
        num = np.zeros_like(out)
        for n in range(1, half_window + 1):
            shifted_fwd = padded[half_window + n : half_window + n + len(out)]
            shifted_back = padded[half_window - n : half_window - n + len(out)]
            num += n * (shifted_fwd - shifted_back)
        out = num / (2.0 * sum(n * n for n in range(1, half_window + 1)))
    return out


def clip_features(clip, cfg):
    """Full clip-level feature vector for the configured delta mode.

    Layout is [mean mfcc | mean delta | mean delta-delta] truncated to the
    streams the mode asks for, giving N, 2N or 3N values.
    """
    frames = mfcc_frame_matrix(clip, cfg)
    parts = [frames.mean(axis=0)]
    if cfg.include_deltas in (DELTA, DELTA_DELTA):
        delta = compute_deltas(frames, order=1, half_window=cfg.delta_half_window)
        parts.append(delta.mean(axis=0))
    if cfg.include_deltas == DELTA_DELTA:
        delta2 = compute_deltas(frames, order=2, half_window=cfg.delta_half_window)
        parts.append(delta2.mean(axis=0))
    return FeatureVector(np.concatenate(parts), cfg.layout, cfg.n_mfcc)


def segment_stream(samples, sample_rate, frame_ms):
    """Split a stream into consecutive non-overlapping frame_ms clips.

    The trailing remainder shorter than one frame is discarded; an empty
    stream yields an empty list.
    """
    if frame_ms <= 0:
        raise ConfigError(f"frame_ms must be positive, got {frame_ms}")
    samples = np.asarray(samples, dtype=np.float64).ravel()
    frame_len = int(round(sample_rate * frame_ms / 1000.0))
    if frame_len <= 0:
        raise ConfigError("frame_ms too small for this sample rate")
    n_frames = len(samples) // frame_len
    return [
        AudioClip(samples[i * frame_len : (i + 1) * frame_len], sample_rate)
        for i in range(n_frames)
    ]
