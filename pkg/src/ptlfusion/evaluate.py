"""Per-condition accuracy evaluation, the classifier grid search, reports.

An evaluation run consumes SyncWindows (audio + selected frames with their
vision observations), classifies each with the chosen pipeline, and scores
against the window truth labels; "unavailable" outputs count as incorrect.
The grid search reproduces the classifier-by-feature-count comparison over
audio frame lengths, MFCC counts and the two classifiers.
"""

import time
from dataclasses import dataclass

import numpy as np

from .audio import (
    DELTA_DELTA,
    DELTA_NONE,
    DELTA_MODES,
    DELTA,
    AudioClip,
    MfccConfig,
    clip_features,
    segment_stream,
)
from .classifiers import ForestClassifier, KnnClassifier
from .dataset_io import window_audio
from .errors import DatasetError
from .fusion import (
    SyncWindow,
    average_vision_features,
    build_fused_vector,
    decision_level_fuse,
    select_frames,
    vision_only_label,
)
from .vision import (
    DEFAULT_GREEN_RANGE,
    DEFAULT_MIN_SAT,
    DEFAULT_MIN_VAL,
    DEFAULT_RED_RANGE,
    GREEN,
    RED,
    UNAVAILABLE,
    BlobDetector,
    classify_hue,
    frame_observation,
)
from . import dataset_io

MODES = ("vision", "audio", "feature", "decision")

GRID_N_MFCC = (10, 12, 14, 16, 18, 20, 24, 28)
GRID_FRAME_MS = (250.0, 500.0, 750.0, 1000.0)

_DELTA_STREAMS = {DELTA_NONE: 1, DELTA: 2, DELTA_DELTA: 3}


# ---------------------------------------------------------------------------
# Window assembly


def build_sync_windows(
    corpus,
    detector=None,
    green_range=DEFAULT_GREEN_RANGE,
    red_range=DEFAULT_RED_RANGE,
    min_sat=DEFAULT_MIN_SAT,
    min_val=DEFAULT_MIN_VAL,
    max_frames=4,
    pool=7,
):
    """Turn corpus items into SyncWindows with per-frame vision observations."""
    if detector is None:
        detector = BlobDetector(min_sat=min_sat, min_val=min_val)
    frame_ids = select_frames(corpus.fps, corpus.window_ms, max_frames, pool)
    audio_cache = {}
    windows = []
    for item in corpus.items:
        clip = window_audio(item, _cache=audio_cache)
        vision = []
        confidences = []
        for k in frame_ids:
            if k >= len(item.frame_paths):
                continue
            frame_id = _frame_id(item.frame_paths[k])
            image = dataset_io.read_image(item.frame_paths[k])
            features, confidence = frame_observation(
                image,
                detector,
                frame_id=frame_id,
                red=red_range,
                green=green_range,
                min_sat=min_sat,
                min_val=min_val,
            )
            vision.append(features)
            confidences.append(confidence)
        used = frame_ids[: len(vision)]
        windows.append(
            SyncWindow(
                window_id=item.window_id,
                audio=clip,
                frame_ids=used,
                vision=tuple(vision),
                detection_confidences=tuple(confidences),
                label=item.label,
                condition=item.condition,
            )
        )
    return windows


def _frame_id(path):
    name = str(path).replace("\\", "/").rsplit("/", 1)[-1]
    return name.rsplit(".", 1)[0]


# ---------------------------------------------------------------------------
# Pipelines: each maps a SyncWindow to a label


def make_pipeline(mode, model=None, mfcc_cfg=None):
    """Build the window-classification function for one of the four modes."""
    if mode not in MODES:
        raise DatasetError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "vision":
        return lambda window: vision_only_label(window.vision)
    if model is None:
        raise DatasetError(f"mode {mode!r} requires a trained model")
    cfg = mfcc_cfg if mfcc_cfg is not None else MfccConfig()

    if mode == "audio":
        def classify(window):
            return model.predict_one(clip_features(window.audio, cfg).values).label

    elif mode == "feature":
        def classify(window):
            mfcc = clip_features(window.audio, cfg)
            fused = build_fused_vector(
                mfcc.values, average_vision_features(window.vision), cfg.n_mfcc
            )
            return model.predict_one(fused.values).label

    else:  # decision
        def classify(window):
            audio_pred = model.predict_one(clip_features(window.audio, cfg).values)
            votes = [
                (classify_hue(features), confidence)
                for features, confidence in zip(
                    window.vision, window.detection_confidences
                )
                if confidence is not None
            ]
            return decision_level_fuse(votes, audio_pred)

    return classify


# ---------------------------------------------------------------------------
# Accuracy evaluation


@dataclass(frozen=True)
class EvalResult:
    """Accuracy summary for one pipeline over one window set."""

    method: str
    n_windows: int
    per_label_accuracy: dict
    overall_accuracy: float
    unavailable: int
    mean_ms: float


@dataclass(frozen=True)
class EvaluationReport:
    """Rows for the method-comparison table."""

    rows: tuple
    labels: tuple = (GREEN, RED)


def evaluate(classify_fn, windows, method="pipeline"):
    """Score a pipeline over labeled windows; unavailable counts as wrong."""
    windows = list(windows)
    if not windows:
        raise DatasetError("no windows to evaluate (empty filtered corpus?)")
    totals = {}
    correct = {}
    unavailable = 0
    started = time.perf_counter()
    for window in windows:
        if window.label is None:
            raise DatasetError(f"window {window.window_id} carries no truth label")
        predicted = classify_fn(window)
        totals[window.label] = totals.get(window.label, 0) + 1
        if predicted == window.label:
            correct[window.label] = correct.get(window.label, 0) + 1
        if predicted == UNAVAILABLE:
            unavailable += 1
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    per_label = {
        label: correct.get(label, 0) / totals[label] for label in sorted(totals)
    }
    overall = sum(correct.values()) / len(windows)
    return EvalResult(
        method=method,
        n_windows=len(windows),
        per_label_accuracy=per_label,
        overall_accuracy=overall,
        unavailable=unavailable,
        mean_ms=elapsed_ms / len(windows),
    )


def evaluate_corpus(corpus, mode, condition="all", model=None, mfcc_cfg=None, windows=None):
    """Convenience wrapper: filter by condition, build windows, evaluate."""
    if windows is None:
        windows = build_sync_windows(corpus.filter_condition(condition))
    else:
        windows = [
            w for w in windows if condition in (None, "all") or w.condition == condition
        ]
    classify = make_pipeline(mode, model=model, mfcc_cfg=mfcc_cfg)
    return evaluate(classify, windows, method=mode)


# ---------------------------------------------------------------------------
# Grid search


@dataclass(frozen=True)
class GridCell:
    classifier: str
    frame_ms: float
    n_mfcc: int
    delta_mode: str
    accuracy: float
    n_train: int
    n_test: int


def _grid_sort_key(cell):
    return (
        0 if cell.classifier == "rf" else 1,
        cell.frame_ms,
        cell.n_mfcc,
    )


@dataclass(frozen=True)
class GridReport:
    cells: tuple

    @property
    def best(self):
        """Highest-accuracy cell; ties resolve to the first in sorted order."""
        return _sorted_grid_cells(self)[0]


def corpus_audio_streams(corpus, test_fraction=0.30):
    """Per-label (train, test) streams: windows concatenated in manifest
    order, split by time so test audio never overlaps training audio."""
    if not 0 < test_fraction < 1:
        raise DatasetError(f"test_fraction must be in (0, 1), got {test_fraction}")
    cache = {}
    by_label = {}
    sample_rate = corpus.sample_rate
    for item in corpus.items:
        clip = window_audio(item, _cache=cache)
        by_label.setdefault(item.label, []).append(clip.samples)
    train, test = {}, {}
    for label in sorted(by_label):
        stream = np.concatenate(by_label[label])
        cut = int(round(len(stream) * (1.0 - test_fraction)))
        train[label] = AudioClip(stream[:cut], sample_rate)
        test[label] = AudioClip(stream[cut:], sample_rate)
    return train, test


def _stream_features(streams, frame_ms, cfg):
    X, y = [], []
    for label in sorted(streams):
        clips = segment_stream(streams[label].samples, streams[label].sample_rate, frame_ms)
        for clip in clips:
            X.append(clip_features(clip, cfg).values)
            y.append(label)
    if not X:
        raise DatasetError(f"streams too short for frame_ms={frame_ms}")
    return np.asarray(X), np.asarray(y, dtype=object)


def grid_search(
    train_streams,
    test_streams,
    classifiers=("rf", "knn"),
    n_mfcc_values=GRID_N_MFCC,
    frame_ms_values=GRID_FRAME_MS,
    delta_mode=DELTA_NONE,
    seed=0,
    n_trees=100,
    max_depth=16,
    knn_k=5,
):
    """Accuracy of every (classifier, frame length, MFCC count) cell.

    Features are extracted once per frame length at the largest MFCC count
    and sliced per cell, which is exact because cepstral coefficients and
    their deltas do not depend on how many higher-order ones are kept.
    """
    if delta_mode not in DELTA_MODES:
        raise DatasetError(f"delta_mode must be one of {DELTA_MODES}")
    if not train_streams or not test_streams:
        raise DatasetError("train and test streams must be non-empty")
    if set(train_streams) != set(test_streams):
        raise DatasetError("train and test streams carry different label sets")
    n_max = max(n_mfcc_values)
    n_streams = _DELTA_STREAMS[delta_mode]
    cells = []
    for frame_ms in frame_ms_values:
        cfg = MfccConfig(n_mfcc=n_max, include_deltas=delta_mode)
        X_train, y_train = _stream_features(train_streams, frame_ms, cfg)
        X_test, y_test = _stream_features(test_streams, frame_ms, cfg)
        for n_mfcc in n_mfcc_values:
            cols = np.concatenate(
                [np.arange(k * n_max, k * n_max + n_mfcc) for k in range(n_streams)]
            )
            Xtr = X_train[:, cols]
            Xte = X_test[:, cols]
            for name in classifiers:
                try:
                    if name == "rf":
                        model = ForestClassifier(
                            n_trees=n_trees,
                            max_depth=max_depth,
                            seed=seed,
                            labels=[RED, GREEN],
                        )
                    elif name == "knn":
                        model = KnnClassifier(k=knn_k, labels=[RED, GREEN])
                    else:
                        raise DatasetError(f"unknown classifier {name!r}")
                    model.fit(Xtr, y_train)
                    accuracy = float(np.mean(model.predict(Xte) == y_test))
                except Exception as exc:
                    raise DatasetError(
                        f"grid cell (classifier={name}, frame_ms={frame_ms}, "
                        f"n_mfcc={n_mfcc}, delta={delta_mode}) failed: {exc}"
                    ) from exc
                cells.append(
                    GridCell(
                        classifier=name,
                        frame_ms=float(frame_ms),
                        n_mfcc=int(n_mfcc),
                        delta_mode=delta_mode,
                        accuracy=accuracy,
                        n_train=len(Xtr),
                        n_test=len(Xte),
                    )
                )
    return GridReport(cells=tuple(cells))


# ---------------------------------------------------------------------------
# Report emission


def _sorted_grid_cells(report):
    return sorted(report.cells, key=lambda c: (-c.accuracy,) + _grid_sort_key(c))


def emit_report(report, fmt="csv"):
    """Render an EvaluationReport or GridReport as CSV or markdown text.

    Timing is intentionally not emitted so that reports from identical seeds
    are byte-identical.
    """
    if fmt not in ("csv", "md", "markdown"):
        raise DatasetError(f"format must be csv or md, got {fmt!r}")
    if isinstance(report, GridReport):
        header = ["classifier", "frame_ms", "n_mfcc", "delta_mode", "accuracy"]
        rows = [
            [
                c.classifier,
                f"{c.frame_ms:g}",
                str(c.n_mfcc),
                c.delta_mode,
                f"{c.accuracy:.4f}",
            ]
            for c in _sorted_grid_cells(report)
        ]
    elif isinstance(report, EvaluationReport):
        header = ["method"] + [f"{label}_accuracy" for label in report.labels] + [
            "overall_accuracy"
        ]
        rows = []
        for row in report.rows:
            cells = [row.method]
            for label in report.labels:
                value = row.per_label_accuracy.get(label)
                cells.append("-" if value is None else f"{value:.4f}")
            cells.append(f"{row.overall_accuracy:.4f}")
            rows.append(cells)
    else:
        raise TypeError(f"cannot emit {type(report).__name__}")

    if fmt == "csv":
        lines = [",".join(header)] + [",".join(row) for row in rows]
        return "\n".join(lines) + "\n"
    lines = ["| " + " | ".join(header) + " |"]
    lines.append("|" + "|".join([" --- "] * len(header)) + "|")
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"
