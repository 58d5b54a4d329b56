import numpy as np
import pytest

from ptlfusion.audio import (
    DELTA,
    DELTA_DELTA,
    AudioClip,
    FeatureVector,
    MfccConfig,
    clip_features,
    compute_deltas,
    compute_mfcc,
    dct2_ortho,
    mfcc_frame_matrix,
    segment_stream,
)
from ptlfusion.errors import ClipTooShortError, ConfigError

from oracles import oracle_deltas, oracle_mfcc


def sine_clip(freq, duration_ms=250, sample_rate=44100, amplitude=0.5):
    t = np.arange(int(sample_rate * duration_ms / 1000)) / sample_rate
    return AudioClip(amplitude * np.sin(2 * np.pi * freq * t), sample_rate)


def noise_clip(seed, duration_ms=250, sample_rate=44100, sigma=0.2):
    rng = np.random.default_rng(seed)
    n = int(sample_rate * duration_ms / 1000)
    return AudioClip(rng.normal(0.0, sigma, n), sample_rate)


class TestComputeMfcc:
    def test_zero_clip_gives_zero_vector(self):
        clip = AudioClip(np.zeros(11025), 44100)
        vec = compute_mfcc(clip, MfccConfig(n_mfcc=24))
        assert len(vec) == 24
        assert np.abs(vec.values).max() < 1e-12

    def test_sine_matches_brute_force_oracle(self):
        clip = sine_clip(1000)
        cfg = MfccConfig(n_mfcc=24)
        fast = compute_mfcc(clip, cfg).values
        ref = oracle_mfcc(clip.samples, clip.sample_rate, 24)
        rel = np.abs(fast - ref) / np.maximum(np.abs(ref), 1e-3)
        assert rel.max() <= 1e-6

    def test_amplitude_scaling_invariance(self):
        # Full-band signal keeps every mel channel far above the log floor,
        # so scaling shifts only the excluded c0.
        base = noise_clip(3)
        cfg = MfccConfig(n_mfcc=20)
        reference = compute_mfcc(base, cfg).values
        for alpha in (0.5, 2.0, 10.0):
            scaled = AudioClip(alpha * base.samples, base.sample_rate)
            assert np.abs(compute_mfcc(scaled, cfg).values - reference).max() <= 1e-9

    def test_output_length_matches_config(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            n_mels = int(rng.integers(20, 64))
            cfg = MfccConfig(
                n_mfcc=int(rng.integers(1, n_mels)),
                n_mels=n_mels,
                analysis_window_ms=float(rng.uniform(10, 40)),
                hop_ms=float(rng.uniform(5, 15)),
            )
            clip = noise_clip(int(rng.integers(1_000_000)), duration_ms=300)
            assert len(compute_mfcc(clip, cfg)) == cfg.n_mfcc

    def test_internal_dct_constant_input(self):
        constant = np.full(40, np.log(1e-10))
        out = dct2_ortho(constant)
        assert np.abs(out[1:]).max() < 1e-12

    def test_oracle_equivalence_on_random_clips(self):
        cfg = MfccConfig(n_mfcc=16)
        for seed in range(3):
            clip = noise_clip(100 + seed)
            fast = compute_mfcc(clip, cfg).values
            ref = oracle_mfcc(clip.samples, clip.sample_rate, 16)
            assert np.allclose(fast, ref, rtol=1e-6, atol=1e-9)

    def test_too_short_clip_reported_distinctly(self):
        clip = AudioClip(np.zeros(100), 44100)
        with pytest.raises(ClipTooShortError):
            compute_mfcc(clip, MfccConfig())

    def test_invalid_config_reported_distinctly(self):
        clip = noise_clip(0)
        with pytest.raises(ConfigError):
            compute_mfcc(clip, MfccConfig(n_mfcc=40, n_mels=40))
        with pytest.raises(ConfigError):
            compute_mfcc(clip, MfccConfig(log_floor=0.0))
        with pytest.raises(ConfigError):
            compute_mfcc(clip, MfccConfig(fft_size=100))  # not a power of two
        with pytest.raises(ConfigError):
            compute_mfcc(clip, MfccConfig(fft_size=256))  # smaller than window

    def test_sample_rate_floor(self):
        with pytest.raises(ConfigError):
            AudioClip(np.zeros(100), 4000)


class TestDeltas:
    def test_constant_frames_zero_deltas(self):
        frames = np.ones((9, 5))
        assert np.abs(compute_deltas(frames, order=1)).max() == 0.0
        assert np.abs(compute_deltas(frames, order=2)).max() == 0.0

    def test_linear_ramp_interior_is_one(self):
        # c_t = t with M=2: (1*2 + 2*4) / (2*(1+4)) = 1 away from the edges.
        frames = np.arange(10.0).reshape(-1, 1)
        delta = compute_deltas(frames, order=1, half_window=2)
        assert np.allclose(delta[2:-2], 1.0)

    def test_matches_direct_formula_on_random_frames(self):
        rng = np.random.default_rng(19)
        frames = rng.normal(size=(10, 6))
        for half_window in (1, 2, 3):
            ours = compute_deltas(frames, order=1, half_window=half_window)
            ref = oracle_deltas(frames, half_window)
            assert np.allclose(ours, ref, atol=1e-12)

    def test_order_two_applies_twice(self):
        rng = np.random.default_rng(23)
        frames = rng.normal(size=(12, 4))
        once = compute_deltas(frames, order=1, half_window=2)
        twice = compute_deltas(once, order=1, half_window=2)
        assert np.allclose(compute_deltas(frames, order=2, half_window=2), twice)

    def test_too_few_frames(self):
        with pytest.raises(ValueError, match="frames"):
            compute_deltas(np.ones((4, 3)), order=1, half_window=2)


class TestClipFeatures:
    def test_delta_mode_doubles_feature_count(self):
        clip = noise_clip(5)
        vec = clip_features(clip, MfccConfig(n_mfcc=24, include_deltas=DELTA))
        assert len(vec) == 48
        assert vec.layout == "mfcc+delta"

    def test_delta_delta_triples_feature_count(self):
        clip = noise_clip(6)
        vec = clip_features(clip, MfccConfig(n_mfcc=10, include_deltas=DELTA_DELTA))
        assert len(vec) == 30

    def test_mfcc_part_matches_compute_mfcc(self):
        clip = noise_clip(8)
        cfg = MfccConfig(n_mfcc=12, include_deltas=DELTA)
        assert np.allclose(
            clip_features(clip, cfg).values[:12],
            compute_mfcc(clip, MfccConfig(n_mfcc=12)).values,
        )

    def test_feature_vector_length_validation(self):
        with pytest.raises(ValueError, match="implies"):
            FeatureVector(np.zeros(23), "mfcc", 24)


class TestSegmentStream:
    def test_exact_multiple(self):
        clips = segment_stream(np.zeros(8000), 8000, 250)
        assert len(clips) == 4
        assert all(len(c) == 2000 for c in clips)

    def test_trailing_remainder_discarded(self):
        clips = segment_stream(np.zeros(7920), 8000, 250)  # 990 ms
        assert len(clips) == 3  # 240 ms dropped

    def test_empty_stream(self):
        assert segment_stream(np.array([]), 8000, 250) == []

    def test_concatenation_reproduces_prefix(self):
        rng = np.random.default_rng(2)
        samples = rng.normal(size=10_321)
        clips = segment_stream(samples, 16000, 100)
        joined = np.concatenate([c.samples for c in clips])
        assert np.array_equal(joined, samples[: len(joined)])

    def test_invalid_frame_ms(self):
        with pytest.raises(ConfigError):
            segment_stream(np.zeros(100), 8000, 0)


def test_frame_matrix_shape():
    clip = noise_clip(1)
    frames = mfcc_frame_matrix(clip, MfccConfig(n_mfcc=24))
    assert frames.shape[1] == 24
    assert frames.shape[0] >= 5
