"""Deterministic synthetic corpora of labeled PTL audio and frames.

The generator emulates the acoustic and visual signatures the real system
faces: the red state is a slow 2.0 kHz beacon, the green state a rapid
2.5 kHz tick pattern, frames show a dark housing with a saturated disc, and
the three recording conditions (clean, occluded, moving) respectively add
nothing, a grey occluder, and locomotion artifacts (footstep bursts, motor
noise, signal fading, camera blur/washout). Every output is a pure function
of its arguments, which makes the generator usable as a ground-truth oracle.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioClip
from .dataset_io import Corpus, CorpusItem, save_manifest, write_ppm, write_wav
from .errors import ConfigError, DatasetError
from .vision import GREEN, RED, BoundingBox, hsv_to_rgb

# Acoustic signatures (invented, but shaped like the Melbourne PTL patterns:
# a sparse low-rate red beacon vs a rapid green tick train).
RED_TONE_HZ = 2000.0
RED_PULSE_MS = 50.0
RED_RATE_HZ = 1.0
GREEN_TONE_HZ = 2500.0
GREEN_PULSE_MS = 30.0
GREEN_RATE_HZ = 8.0
TONE_AMPLITUDE = 0.5
TRANSITION_MS = 400.0

FOOTSTEP_RATE_HZ = 2.0
FOOTSTEP_MS = 90.0
FOOTSTEP_BAND_HZ = (100.0, 400.0)
FOOTSTEP_AMPLITUDE = 0.30
MOTOR_AMPLITUDE = 0.10
FADE_KNOT_MS = 250.0
FADE_DEEP_PROB = 0.28

GREEN_HUE = 90.0
RED_HUE = 175.0


def _pulse_train(n, sample_rate, tone_hz, pulse_ms, rate_hz, ramp_ms=4.0):
    """Tone bursts of pulse_ms at rate_hz with raised-cosine on/off ramps."""
    t = np.arange(n) / sample_rate
    period = 1.0 / rate_hz
    phase = t % period
    pulse_s = pulse_ms / 1000.0
    ramp_s = min(ramp_ms / 1000.0, pulse_s / 2)
    envelope = np.zeros(n)
    inside = phase < pulse_s
    rise = inside & (phase < ramp_s)
    fall = inside & (phase > pulse_s - ramp_s)
    flat = inside & ~rise & ~fall
    envelope[flat] = 1.0
    envelope[rise] = 0.5 * (1 - np.cos(np.pi * phase[rise] / ramp_s))
    envelope[fall] = 0.5 * (1 - np.cos(np.pi * (pulse_s - phase[fall]) / ramp_s))
    return TONE_AMPLITUDE * envelope * np.sin(2 * np.pi * tone_hz * t)


def _bandlimited_noise(rng, n, sample_rate, band):
    """White noise restricted to a frequency band via FFT masking."""
    noise = rng.normal(0.0, 1.0, n)
    spectrum = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    spectrum[(freqs < band[0]) | (freqs > band[1])] = 0.0
    out = np.fft.irfft(spectrum, n)
    rms = np.sqrt(np.mean(out**2))
    return out / rms if rms > 0 else out


def _fade_envelope(rng, n, sample_rate, deep_prob=FADE_DEEP_PROB):
    """Slow random fading (mic pointing/odometry wobble while moving).

    Fades are bimodal: most knots stay near full strength, but an occasional
    deep fade buries the tone pattern under the noise floor, which is what
    costs the audio path accuracy while the robot walks.
    """
    knot_len = max(1, int(round(sample_rate * FADE_KNOT_MS / 1000.0)))
    n_knots = n // knot_len + 2
    deep = rng.random(n_knots) < deep_prob
    knots = np.where(
        deep,
        rng.uniform(0.0, 0.06, n_knots),
        rng.uniform(0.55, 1.15, n_knots),
    )
    positions = np.arange(n_knots) * knot_len
    envelope = np.interp(np.arange(n), positions, knots)
    return np.clip(envelope, 0.0, 1.0)


def synth_audio(
    label,
    duration_ms,
    sample_rate=16000,
    snr_db=math.inf,
    motion_noise=False,
    seed=0,
    transition=False,
):
    """Generate one labeled audio stream.

    Red is a 50 ms 2.0 kHz pulse once per second; green a 30 ms 2.5 kHz
    pulse at 8 Hz, optionally preceded by a 400 ms rising chirp modeling the
    red-to-green transition sound. White noise is added at ``snr_db``
    relative to the clean signal power; ``motion_noise`` layers on footstep
    bursts, continuous motor noise and slow signal fading.
    """
    if label not in (RED, GREEN):
        raise DatasetError(f"label must be {RED!r} or {GREEN!r}, got {label!r}")
    if duration_ms < 250:
        raise ConfigError(f"duration_ms must be >= 250, got {duration_ms}")
    if math.isnan(snr_db):
        raise ConfigError("snr_db must be a real value or +inf")
    rng = np.random.default_rng(seed)
    n = int(round(sample_rate * duration_ms / 1000.0))

    if label == RED:
        signal = _pulse_train(n, sample_rate, RED_TONE_HZ, RED_PULSE_MS, RED_RATE_HZ)
    else:
        signal = _pulse_train(
            n, sample_rate, GREEN_TONE_HZ, GREEN_PULSE_MS, GREEN_RATE_HZ
        )
        if transition:
            n_chirp = min(n, int(round(sample_rate * TRANSITION_MS / 1000.0)))
            t = np.arange(n_chirp) / sample_rate
            chirp_span = TRANSITION_MS / 1000.0
            freq = 500.0 + (GREEN_TONE_HZ - 500.0) * t / chirp_span
            signal[:n_chirp] = TONE_AMPLITUDE * np.sin(
                2 * np.pi * np.cumsum(freq) / sample_rate
            )

    # Ambient noise is pinned to the unfaded signal power: fading models the
    # mic turning away from the source, which attenuates the tones but not
    # the surroundings.
    clean_power = float(np.mean(signal**2))
    if motion_noise:
        signal = signal * _fade_envelope(rng, n, sample_rate)
    out = signal.copy()
    if math.isfinite(snr_db) and clean_power > 0:
        sigma = math.sqrt(clean_power / 10.0 ** (snr_db / 10.0))
        out += rng.normal(0.0, sigma, n)

    if motion_noise:
        out += MOTOR_AMPLITUDE * rng.normal(0.0, 1.0, n)
        step_period = int(round(sample_rate / FOOTSTEP_RATE_HZ))
        step_len = int(round(sample_rate * FOOTSTEP_MS / 1000.0))
        for start in range(0, n, step_period):
            stop = min(start + step_len, n)
            if stop - start < 8:
                continue
            burst = _bandlimited_noise(rng, stop - start, sample_rate, FOOTSTEP_BAND_HZ)
            out[start:stop] += FOOTSTEP_AMPLITUDE * burst

    return AudioClip(out, sample_rate)


def synth_frame(
    label,
    width,
    height,
    occlusion_fraction=0.0,
    jitter=3.0,
    seed=0,
    motion_blur=0,
    washout=0.0,
):
    """Generate one labeled frame and its ground-truth housing box.

    The image holds a dark housing rectangle with a saturated disc at the
    class hue (within ±jitter), speckle noise everywhere, and optionally a
    grey occluder covering the top ``occlusion_fraction`` of the housing.
    ``motion_blur`` (horizontal box kernel, px) and ``washout`` (0..1
    desaturation) emulate camera motion.
    """
    if label not in (RED, GREEN):
        raise DatasetError(f"label must be {RED!r} or {GREEN!r}, got {label!r}")
    if width < 64 or height < 64:
        raise ConfigError(f"frame dims must be >= 64x64, got {width}x{height}")
    if not 0 <= occlusion_fraction <= 1:
        raise ConfigError(f"occlusion_fraction must be in [0, 1], got {occlusion_fraction}")
    if not 0 <= washout <= 1:
        raise ConfigError(f"washout must be in [0, 1], got {washout}")
    rng = np.random.default_rng(seed)

    img = np.full((height, width, 3), 72.0)

    hw = int(round(0.36 * width))
    hh = int(round(0.62 * height))
    hx = int(round((0.5 + rng.uniform(-0.05, 0.05)) * width - hw / 2))
    hy = int(round((0.46 + rng.uniform(-0.05, 0.05)) * height - hh / 2))
    hx = max(1, min(hx, width - hw - 1))
    hy = max(1, min(hy, height - hh - 1))
    img[hy : hy + hh, hx : hx + hw] = 16.0

    radius = max(4, int(round(0.32 * hw)))
    cx = hx + hw / 2.0
    cy = hy + (0.28 if label == RED else 0.72) * hh
    hue = (RED_HUE if label == RED else GREEN_HUE) + rng.uniform(-jitter, jitter)
    hue = float(np.clip(hue, 0.0, 179.9))
    color = hsv_to_rgb(hue, 235.0, 230.0)
    yy, xx = np.mgrid[0:height, 0:width]
    disc = (xx - cx) ** 2 + (yy - cy) ** 2 <= radius**2
    img[disc] = color

    if occlusion_fraction > 0:
        occ_h = int(round(occlusion_fraction * hh))
        if occ_h > 0:
            x0 = max(0, hx - 2)
            x1 = min(width, hx + hw + 2)
            img[hy : hy + occ_h, x0:x1] = 126.0

    if motion_blur > 1:
        kernel = int(motion_blur)
        padded = np.pad(img, ((0, 0), (kernel, kernel), (0, 0)), mode="edge")
        csum = np.cumsum(padded, axis=1)
        img = (csum[:, kernel:-kernel] - csum[:, : -2 * kernel]) / kernel
        img = img[:, :width]

    if washout > 0:
        grey = img.mean(axis=2, keepdims=True)
        img = (1.0 - washout) * img + washout * grey

    img += rng.normal(0.0, 5.0, img.shape)
    image = np.clip(img, 0, 255).astype(np.uint8)

    truth = BoundingBox(
        cx=(hx + hw / 2.0) / width,
        cy=(hy + hh / 2.0) / height,
        w=hw / width,
        h=hh / height,
        label=label,
    )
    return image, truth


@dataclass(frozen=True)
class SynthConfig:
    """Corpus shape and degradation knobs for :func:`synth_corpus`."""

    windows_per_condition: int = 100
    conditions: tuple = ("clean", "occluded", "moving")
    snr_db: float = 10.0
    window_ms: float = 250.0
    sample_rate: int = 16000
    fps: float = 30.0
    frame_width: int = 96
    frame_height: int = 96
    hue_jitter: float = 3.0
    green_transition: bool = False
    # Per-condition occlusion ranges (uniformly sampled per window).
    occlusion: dict = field(
        default_factory=lambda: {
            "clean": (0.0, 0.0),
            "occluded": (1.0, 1.0),
            "moving": (0.0, 0.3),
        }
    )
    # Moving-condition camera artifacts: usual mild washout, with a small
    # chance per window of a heavy wash that hides the light entirely.
    washout_base: tuple = (0.0, 0.30)
    washout_heavy: tuple = (0.78, 0.95)
    washout_heavy_prob: float = 0.06
    motion_blur_max: int = 5

    def validate(self):
        if self.windows_per_condition <= 0:
            raise DatasetError(
                f"windows_per_condition must be > 0, got {self.windows_per_condition}"
            )
        if self.window_ms < 250:
            raise ConfigError("window_ms must be >= 250")
        for condition in self.conditions:
            if condition not in self.occlusion:
                raise ConfigError(f"no occlusion range for condition {condition!r}")


def synth_corpus(config, out_dir, seed=0):
    """Generate a corpus on disk and return the loaded manifest view.

    Layout under ``out_dir``: audio/<condition>_<label>.wav stream files,
    frames/<window_id>_f<k>.ppm for every available frame of every window,
    and manifest.txt binding windows to media, labels and condition tags.
    """
    config.validate()
    out_dir = Path(out_dir)
    audio_dir = out_dir / "audio"
    frames_dir = out_dir / "frames"
    audio_dir.mkdir(parents=True, exist_ok=True)
    frames_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    window_samples = int(round(config.sample_rate * config.window_ms / 1000.0))
    frames_per_window = int(np.floor(config.fps * config.window_ms / 1000.0))

    items = []
    for condition in config.conditions:
        occ_lo, occ_hi = config.occlusion[condition]
        n_total = config.windows_per_condition
        counts = {RED: n_total // 2, GREEN: n_total - n_total // 2}
        for label in (RED, GREEN):
            n_windows = counts[label]
            if n_windows == 0:
                continue
            stream_seed = int(rng.integers(2**63))
            stream = synth_audio(
                label,
                duration_ms=n_windows * config.window_ms,
                sample_rate=config.sample_rate,
                snr_db=config.snr_db,
                motion_noise=(condition == "moving"),
                seed=stream_seed,
                transition=(config.green_transition and label == GREEN),
            )
            audio_path = audio_dir / f"{condition}_{label}.wav"
            write_wav(stream, audio_path)

            for w in range(n_windows):
                window_id = f"{condition}-{label}-{w:04d}"
                occlusion = float(rng.uniform(occ_lo, occ_hi))
                if condition == "moving":
                    if rng.random() < config.washout_heavy_prob:
                        washout = float(rng.uniform(*config.washout_heavy))
                    else:
                        washout = float(rng.uniform(*config.washout_base))
                    blur = int(rng.integers(0, config.motion_blur_max + 1))
                else:
                    washout = 0.0
                    blur = 0
                frame_paths = []
                for k in range(frames_per_window):
                    frame_seed = int(rng.integers(2**63))
                    image, _ = synth_frame(
                        label,
                        config.frame_width,
                        config.frame_height,
                        occlusion_fraction=occlusion,
                        jitter=config.hue_jitter,
                        seed=frame_seed,
                        motion_blur=blur,
                        washout=washout,
                    )
                    frame_path = frames_dir / f"{window_id}_f{k}.ppm"
                    write_ppm(image, frame_path)
                    frame_paths.append(str(frame_path))
                items.append(
                    CorpusItem(
                        window_id=window_id,
                        audio_path=str(audio_path),
                        audio_offset=w * window_samples,
                        audio_samples=window_samples,
                        frame_paths=tuple(frame_paths),
                        label=label,
                        condition=condition,
                    )
                )

    corpus = Corpus(
        items=tuple(items),
        fps=config.fps,
        window_ms=config.window_ms,
        sample_rate=config.sample_rate,
        manifest_path=str(out_dir / "manifest.txt"),
    )
    save_manifest(corpus, out_dir / "manifest.txt")
    return corpus
