"""Command-line interface for the whole pipeline.

Subcommands: synth, calibrate-hue, train-audio, train-fusion, classify,
evaluate, grid-search. Exit codes: 0 success, 1 usage error, 2 data/format
error, 3 internal invariant violation. All randomness flows from --seed.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from .audio import DELTA_DELTA, DELTA_NONE, DELTA, MfccConfig, clip_features, segment_stream
from .classifiers import ForestClassifier, KnnClassifier
from .dataset_io import load_manifest, read_detections, read_image, read_wav, window_audio
from .errors import ConfigError, DataError, UsageError
from .evaluate import (
    EvaluationReport,
    build_sync_windows,
    corpus_audio_streams,
    emit_report,
    evaluate,
    grid_search,
    make_pipeline,
)
from .fusion import (
    average_vision_features,
    build_fused_vector,
    decision_level_fuse,
    fusion_train,
    select_available,
)
from .model_io import load_model_file, save_model_file
from .synth import SynthConfig, synth_corpus
from .vision import (
    DEFAULT_GREEN_RANGE,
    DEFAULT_MIN_SAT,
    DEFAULT_MIN_VAL,
    DEFAULT_RED_RANGE,
    GREEN,
    RED,
    BlobDetector,
    ExternalDetector,
    HueRange,
    calibrate_hue_ranges,
    classify_hue,
    crop,
    frame_observation,
)

_DELTA_FLAGS = {
    "none": DELTA_NONE,
    "d": DELTA,
    "delta": DELTA,
    "dd": DELTA_DELTA,
    "delta_delta": DELTA_DELTA,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _hue_range(text):
    try:
        lo, hi = text.split(":")
        return HueRange(float(lo), float(hi))
    except (ValueError, TypeError) as exc:
        raise UsageError(f"hue range must be LO:HI, got {text!r}") from exc


def build_parser():
    parser = _Parser(prog="ptlfusion", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--windows-per-condition", type=int, default=100)
    p.add_argument("--snr-db", type=float, default=10.0)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window-ms", type=float, default=250.0)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--frame-size", type=int, default=96, help="frame width and height")
    p.add_argument("--green-transition", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate-hue", help="derive hue ranges from a corpus")
    p.add_argument("--corpus", required=True, help="manifest path")
    p.add_argument("--peak-fraction", type=float, default=0.10)
    p.add_argument("--balance", action="store_true")
    p.add_argument("--min-sat", type=float, default=DEFAULT_MIN_SAT)
    p.add_argument("--min-val", type=float, default=DEFAULT_MIN_VAL)
    p.set_defaults(func=cmd_calibrate_hue)

    p = sub.add_parser("train-audio", help="train the audio-only classifier")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", choices=("rf", "knn"), default="rf")
    p.add_argument("--n-mfcc", type=int, default=24)
    p.add_argument("--frame-ms", type=float, default=250.0)
    p.add_argument("--delta", choices=sorted(_DELTA_FLAGS), default="none")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=16)
    p.add_argument("--knn-k", type=int, default=5)
    p.set_defaults(func=cmd_train_audio)

    p = sub.add_parser("train-fusion", help="train the feature-level fusion model")
    p.add_argument("--audio-corpus", required=True)
    p.add_argument("--vision-corpus", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--n-mfcc", type=int, default=24)
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=16)
    p.set_defaults(func=cmd_train_fusion)

    p = sub.add_parser("classify", help="classify one window")
    p.add_argument("--model", help="trained model file (not needed for --mode vision)")
    p.add_argument("--window", required=True, help="window WAV file")
    p.add_argument("--frames", nargs="*", default=[], help="window frame images in order")
    p.add_argument("--detections", help="precomputed detections file")
    p.add_argument("--mode", choices=("audio", "vision", "feature", "decision"), required=True)
    p.add_argument("--green-range", type=_hue_range, default=DEFAULT_GREEN_RANGE)
    p.add_argument("--red-range", type=_hue_range, default=DEFAULT_RED_RANGE)
    p.add_argument("--min-sat", type=float, default=DEFAULT_MIN_SAT)
    p.add_argument("--min-val", type=float, default=DEFAULT_MIN_VAL)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="score a pipeline over a corpus")
    p.add_argument("--model", help="trained model file (not needed for --mode vision)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--condition", choices=("clean", "occluded", "moving", "all"), default="all")
    p.add_argument("--mode", choices=("audio", "vision", "feature", "decision"), required=True)
    p.add_argument("--report", choices=("csv", "md"), default="md")
    p.add_argument("--detections", help="precomputed detections file")
    p.add_argument("--out", help="also write the report to this file")
    p.add_argument("--green-range", type=_hue_range, default=DEFAULT_GREEN_RANGE)
    p.add_argument("--red-range", type=_hue_range, default=DEFAULT_RED_RANGE)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grid-search", help="classifier x MFCC x frame-length grid")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta", choices=sorted(_DELTA_FLAGS), default="none")
    p.add_argument("--test-fraction", type=float, default=0.30)
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=16)
    p.add_argument("--knn-k", type=int, default=5)
    p.set_defaults(func=cmd_grid_search)

    return parser


# ---------------------------------------------------------------------------
# Shared helpers


def _audio_training_rows(corpus, frame_ms, cfg):
    """Per-label streams re-segmented at frame_ms, one feature row per clip."""
    cache = {}
    by_label = {}
    for item in corpus.items:
        clip = window_audio(item, _cache=cache)
        by_label.setdefault(item.label, []).append(clip.samples)
    X, y = [], []
    for label in sorted(by_label):
        stream = np.concatenate(by_label[label])
        for clip in segment_stream(stream, corpus.sample_rate, frame_ms):
            X.append(clip_features(clip, cfg).values)
            y.append(label)
    if not X:
        raise DataError(f"corpus audio too short for frame_ms={frame_ms}")
    return np.asarray(X), np.asarray(y, dtype=object)


def _vision_training_rows(corpus, green_range=DEFAULT_GREEN_RANGE, red_range=DEFAULT_RED_RANGE):
    """Per-frame vision rows; frames without a detection become no-PTL rows."""
    rows = []
    for window in build_sync_windows(corpus, green_range=green_range, red_range=red_range):
        for features, confidence in zip(window.vision, window.detection_confidences):
            if confidence is None:
                rows.append((features, None))
            else:
                rows.append((features, window.label))
    return rows


def _mfcc_config_from_metadata(metadata):
    return MfccConfig(
        n_mfcc=int(metadata.get("n_mfcc", 24)),
        include_deltas=metadata.get("delta", DELTA_NONE),
    )


def _load_classify_inputs(args):
    clip = read_wav(args.window)
    frames = [read_image(p) for p in args.frames]
    frame_ids = [Path(p).stem for p in args.frames]
    return clip, frames, frame_ids


def _window_observations(args, frames, frame_ids):
    if args.detections:
        detector = ExternalDetector(read_detections(args.detections))
    else:
        detector = BlobDetector(min_sat=args.min_sat, min_val=args.min_val)
    selected = select_available(len(frames))
    observations = []
    for k in selected:
        observations.append(
            frame_observation(
                frames[k],
                detector,
                frame_id=frame_ids[k],
                red=args.red_range,
                green=args.green_range,
                min_sat=args.min_sat,
                min_val=args.min_val,
            )
        )
    return observations


def _print_decision(label, confidences):
    parts = " ".join(f"{name}={value:.4f}" for name, value in confidences.items())
    print(f"label: {label}")
    print(f"confidences: {parts}")


def _clip_for_model(clip, metadata):
    frame_ms = float(metadata.get("frame_ms", 0) or 0)
    if frame_ms > 0 and clip.duration_ms > frame_ms:
        clips = segment_stream(clip.samples, clip.sample_rate, frame_ms)
        if clips:
            return clips[0]
    return clip


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(args):
    config = SynthConfig(
        windows_per_condition=args.windows_per_condition,
        snr_db=args.snr_db,
        fps=args.fps,
        window_ms=args.window_ms,
        sample_rate=args.sample_rate,
        frame_width=args.frame_size,
        frame_height=args.frame_size,
        green_transition=args.green_transition,
    )
    corpus = synth_corpus(config, args.out, seed=args.seed)
    print(f"wrote {len(corpus.items)} windows to {corpus.manifest_path}")
    return 0


def cmd_calibrate_hue(args):
    corpus = load_manifest(args.corpus)
    detector = BlobDetector(min_sat=args.min_sat, min_val=args.min_val)
    regions = {RED: [], GREEN: []}
    for item in corpus.items:
        if item.label not in regions:
            continue
        for k in select_available(len(item.frame_paths)):
            image = read_image(item.frame_paths[k])
            boxes = detector.detect(image)
            if boxes:
                regions[item.label].append(crop(image, boxes[0]))
    green, red = calibrate_hue_ranges(
        regions[GREEN],
        regions[RED],
        balance=args.balance,
        peak_fraction=args.peak_fraction,
        min_sat=args.min_sat,
        min_val=args.min_val,
    )
    print(f"green: {green.lo:g}-{green.hi:g}")
    print(f"red: {red.lo:g}-{red.hi:g}")
    return 0


def cmd_train_audio(args):
    corpus = load_manifest(args.corpus)
    delta = _DELTA_FLAGS[args.delta]
    cfg = MfccConfig(n_mfcc=args.n_mfcc, include_deltas=delta)
    X, y = _audio_training_rows(corpus, args.frame_ms, cfg)
    if args.model == "rf":
        model = ForestClassifier(
            n_trees=args.n_trees,
            max_depth=args.max_depth,
            seed=args.seed,
            labels=[RED, GREEN],
        )
    else:
        model = KnnClassifier(k=args.knn_k, labels=[RED, GREEN])
    model.fit(X, y)
    metadata = {
        "mode": "audio",
        "n_mfcc": str(args.n_mfcc),
        "delta": delta,
        "frame_ms": repr(float(args.frame_ms)),
    }
    save_model_file(args.out, model, metadata)
    print(f"trained {args.model} on {len(X)} clips -> {args.out}")
    return 0


def cmd_train_fusion(args):
    audio_corpus = load_manifest(args.audio_corpus)
    vision_corpus = load_manifest(args.vision_corpus)
    cfg = MfccConfig(n_mfcc=args.n_mfcc)
    X, y = _audio_training_rows(audio_corpus, audio_corpus.window_ms, cfg)
    vision_rows = _vision_training_rows(vision_corpus)
    model = fusion_train(
        X,
        y,
        vision_rows,
        seed=args.seed,
        n_trees=args.n_trees,
        max_depth=args.max_depth,
    )
    metadata = {
        "mode": "fused",
        "n_mfcc": str(args.n_mfcc),
        "delta": DELTA_NONE,
        "frame_ms": repr(float(audio_corpus.window_ms)),
    }
    save_model_file(args.out, model, metadata)
    print(f"trained fusion forest on {len(X)} windows -> {args.out}")
    return 0


def cmd_classify(args):
    if args.mode != "vision" and not args.model:
        raise UsageError(f"--mode {args.mode} requires --model")
    clip, frames, frame_ids = _load_classify_inputs(args)

    if args.mode == "vision":
        observations = _window_observations(args, frames, frame_ids)
        avg_red, avg_green = average_vision_features([f for f, _ in observations])
        detected = any(f.detected for f, _ in observations)
        from .vision import VisionFeatures

        label = classify_hue(VisionFeatures(avg_red, avg_green, detected))
        _print_decision(label, {RED: avg_red / 100.0, GREEN: avg_green / 100.0})
        return 0

    model, metadata = load_model_file(args.model)
    cfg = _mfcc_config_from_metadata(metadata)
    clip = _clip_for_model(clip, metadata)

    if args.mode == "audio":
        prediction = model.predict_one(clip_features(clip, cfg).values)
        _print_decision(prediction.label, prediction.confidences)
        return 0

    observations = _window_observations(args, frames, frame_ids)
    if args.mode == "feature":
        if metadata.get("mode") != "fused":
            raise UsageError("--mode feature needs a model trained by train-fusion")
        mfcc = clip_features(clip, cfg)
        fused = build_fused_vector(
            mfcc.values,
            average_vision_features([f for f, _ in observations]),
            cfg.n_mfcc,
        )
        prediction = model.predict_one(fused.values)
        _print_decision(prediction.label, prediction.confidences)
        return 0

    # decision-level fusion
    audio_pred = model.predict_one(clip_features(clip, cfg).values)
    votes = [
        (classify_hue(features), confidence)
        for features, confidence in observations
        if confidence is not None
    ]
    label = decision_level_fuse(votes, audio_pred)
    totals = dict(audio_pred.confidences)
    for vote_label, confidence in votes:
        if vote_label in totals:
            totals[vote_label] += confidence
    norm = sum(totals.values()) or 1.0
    _print_decision(label, {k: v / norm for k, v in totals.items()})
    return 0


def cmd_evaluate(args):
    if args.mode != "vision" and not args.model:
        raise UsageError(f"--mode {args.mode} requires --model")
    corpus = load_manifest(args.corpus).filter_condition(args.condition)
    detector = None
    if args.detections:
        detector = ExternalDetector(read_detections(args.detections))
    windows = build_sync_windows(
        corpus,
        detector=detector,
        green_range=args.green_range,
        red_range=args.red_range,
    )
    model, metadata = (None, {})
    if args.model:
        model, metadata = load_model_file(args.model)
    cfg = _mfcc_config_from_metadata(metadata) if metadata else None
    classify = make_pipeline(args.mode, model=model, mfcc_cfg=cfg)
    result = evaluate(classify, windows, method=args.mode)
    report = EvaluationReport(rows=(result,))
    text = emit_report(report, args.report)
    sys.stdout.write(text)
    print(
        f"unavailable: {result.unavailable}  mean_ms_per_window: {result.mean_ms:.2f}",
        file=sys.stderr,
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return 0


def cmd_grid_search(args):
    corpus = load_manifest(args.corpus)
    train_streams, test_streams = corpus_audio_streams(corpus, args.test_fraction)
    report = grid_search(
        train_streams,
        test_streams,
        delta_mode=_DELTA_FLAGS[args.delta],
        seed=args.seed,
        n_trees=args.n_trees,
        max_depth=args.max_depth,
        knn_k=args.knn_k,
    )
    text = emit_report(report, "csv")
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    best = report.best
    print(
        f"best: classifier={best.classifier} frame_ms={best.frame_ms:g} "
        f"n_mfcc={best.n_mfcc} accuracy={best.accuracy:.4f}"
    )
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args) or 0
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # invariant violations and bugs
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
