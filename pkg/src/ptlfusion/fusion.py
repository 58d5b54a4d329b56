"""Synchronized audio-video data points and the two fusion strategies.

A data point is one audio window plus up to four alternating frames from the
same interval. Feature-level fusion concatenates the window's MFCC vector
with the frame-averaged [p_red, p_green] pair and trains one forest on the
result; decision-level fusion sums per-label confidences of the independent
audio and vision paths and takes the argmax.
"""

from dataclasses import dataclass

import numpy as np

from .audio import LAYOUT_FUSED, AudioClip, FeatureVector
from .classifiers import ForestClassifier, Prediction
from .errors import ConfigError, DatasetError
from .validation import as_float_matrix, check_labels_match
from .vision import GREEN, RED, VisionFeatures, classify_hue


@dataclass(frozen=True)
class SyncWindow:
    """One data point: an audio window plus its selected co-temporal frames."""

    window_id: str
    audio: AudioClip
    frame_ids: tuple
    vision: tuple
    detection_confidences: tuple
    label: str | None = None
    condition: str | None = None

    def __post_init__(self):
        ids = tuple(self.frame_ids)
        object.__setattr__(self, "frame_ids", ids)
        object.__setattr__(self, "vision", tuple(self.vision))
        object.__setattr__(
            self, "detection_confidences", tuple(self.detection_confidences)
        )
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ValueError(f"frame ids must be strictly increasing, got {ids}")
        if not len(ids) == len(self.vision) == len(self.detection_confidences):
            raise ValueError("frame_ids, vision and detection_confidences must align")


def select_available(available, max_frames=4, pool=7):
    """Alternating frame indices from an ``available``-frame window."""
    if max_frames < 1 or pool < 1:
        raise ConfigError("max_frames and pool must be >= 1")
    limit = min(int(available), pool)
    return tuple(range(0, limit, 2))[:max_frames]


def select_frames(fps, window_ms, max_frames=4, pool=7):
    """Indices of the alternating frames used from one window.

    Of the frames available in the window, at most ``pool`` are considered
    and every other one is taken, capped at ``max_frames``. At 30 FPS and
    250 ms this is exactly (0, 2, 4, 6).
    """
    if fps <= 0 or window_ms <= 0:
        raise ConfigError(f"fps and window_ms must be positive, got {fps}, {window_ms}")
    available = int(np.floor(fps * window_ms / 1000.0))
    return select_available(available, max_frames, pool)


def average_vision_features(per_frame):
    """Mean (p_red, p_green) over all selected frames.

    Frames without a detection contribute (0, 0) to the average; an empty
    selection yields (0, 0) outright.
    """
    per_frame = list(per_frame)
    if not per_frame:
        return (0.0, 0.0)
    reds = [f.p_red for f in per_frame]
    greens = [f.p_green for f in per_frame]
    return (float(np.mean(reds)), float(np.mean(greens)))


def build_fused_vector(mfcc, vision_pair, n_mfcc=None):
    """Concatenate audio features with the averaged vision pair (audio first)."""
    if isinstance(mfcc, FeatureVector):
        if n_mfcc is None:
            n_mfcc = mfcc.n_mfcc
        values = mfcc.values
    else:
        values = np.asarray(mfcc, dtype=np.float64).ravel()
        if n_mfcc is None:
            n_mfcc = len(values)
    if len(values) != n_mfcc:
        raise ValueError(f"expected {n_mfcc} audio features, got {len(values)}")
    fused = np.concatenate([values, np.asarray(vision_pair, dtype=np.float64)])
    return FeatureVector(fused, LAYOUT_FUSED, n_mfcc)


def pair_fused_training_set(audio_X, audio_y, vision_rows, seed=0):
    """Pair each audio row with a same-label (or no-PTL) vision row.

    ``vision_rows`` holds (VisionFeatures, label) tuples; label ``None``
    marks a no-PTL row, which is encoded (0, 0) and may pair with audio rows
    of every label so the model learns to lean on audio when vision is
    absent. Pairing is uniform and seeded.
    """
    audio_X = as_float_matrix(audio_X, name="audio_X")
    audio_y = check_labels_match(audio_X, audio_y)
    pools = {}
    n_none = 0
    for features, label in vision_rows:
        if label is None:
            pools.setdefault(None, []).append((0.0, 0.0))
            n_none += 1
        else:
            pools.setdefault(label, []).append(
                (float(features.p_red), float(features.p_green))
            )
    audio_labels = set(audio_y)
    vision_labels = set(pools) - {None}
    if audio_labels != vision_labels:
        raise DatasetError(
            f"label sets differ: audio {sorted(audio_labels)} vs "
            f"vision {sorted(vision_labels)}"
        )
    rng = np.random.default_rng(seed)
    none_pool = pools.get(None, [])
    fused = np.empty((len(audio_X), audio_X.shape[1] + 2))
    for i, label in enumerate(audio_y):
        pool = pools[label] + none_pool
        pair = pool[int(rng.integers(len(pool)))]
        fused[i, :-2] = audio_X[i]
        fused[i, -2:] = pair
    return fused, audio_y


def fusion_train(
    audio_X,
    audio_y,
    vision_rows,
    seed=0,
    n_trees=100,
    max_depth=16,
    labels=(RED, GREEN),
):
    """Train the feature-level fusion forest on paired audio+vision rows."""
    fused_X, fused_y = pair_fused_training_set(audio_X, audio_y, vision_rows, seed=seed)
    model = ForestClassifier(
        n_trees=n_trees, max_depth=max_depth, seed=seed, labels=list(labels)
    )
    return model.fit(fused_X, fused_y)


def decision_level_fuse(frame_votes, audio_prediction):
    """Sum vision and audio confidences per label and take the argmax.

    ``frame_votes`` holds (hue label, detection confidence) pairs for the
    frames that produced a detection; each frame's confidence is credited to
    its own hue label and per-label credits are averaged over the frames
    voting for that label. Frames whose hue evidence tied ("unavailable")
    credit nothing. With no detections at all, only audio confidences decide.
    Red wins exact ties.
    """
    if not isinstance(audio_prediction, Prediction):
        raise TypeError("audio_prediction must be a Prediction")
    credits = {}
    for label, confidence in frame_votes:
        if label in (RED, GREEN):
            credits.setdefault(label, []).append(float(confidence))
    totals = {}
    ordered = [RED, GREEN] + [
        l for l in audio_prediction.confidences if l not in (RED, GREEN)
    ]
    for label in ordered:
        total = audio_prediction.confidences.get(label, 0.0)
        if label in credits:
            total += float(np.mean(credits[label]))
        totals[label] = total
    winner = None
    for label, total in totals.items():
        if winner is None or total > totals[winner]:
            winner = label
    return winner


def vision_only_label(per_frame):
    """Window-level hue decision: classify the frame-averaged percentages."""
    avg_red, avg_green = average_vision_features(per_frame)
    detected = any(f.detected for f in per_frame)
    return classify_hue(VisionFeatures(avg_red, avg_green, detected))
