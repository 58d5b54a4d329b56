"""Audio-visual pedestrian traffic light state classification.

Vision counts red/green pixels by hue inside detector boxes, audio turns
250 ms windows into MFCC vectors for a random forest or k-NN, and the two
modalities combine through feature-level or decision-level fusion over
synchronized windows.
"""

from .audio import (
    DELTA,
    DELTA_DELTA,
    DELTA_MODES,
    DELTA_NONE,
    AudioClip,
    FeatureVector,
    MfccConfig,
    clip_features,
    compute_deltas,
    compute_mfcc,
    segment_stream,
)
from .classifiers import ForestClassifier, KnnClassifier, Prediction
from .dataset_io import (
    Corpus,
    CorpusItem,
    load_manifest,
    parse_yolo_annotation,
    read_detections,
    read_image,
    read_wav,
    save_manifest,
    split_dataset,
    write_detections,
    write_ppm,
    write_wav,
)
from .errors import (
    CalibrationError,
    ClipTooShortError,
    ConfigError,
    DataError,
    DatasetError,
    FormatError,
    MissingDetectionError,
    ModelFormatError,
    ModelVersionError,
    PtlError,
    UsageError,
)
from .evaluate import (
    EvalResult,
    EvaluationReport,
    GridCell,
    GridReport,
    build_sync_windows,
    corpus_audio_streams,
    emit_report,
    evaluate,
    evaluate_corpus,
    grid_search,
    make_pipeline,
)
from .fusion import (
    SyncWindow,
    average_vision_features,
    build_fused_vector,
    decision_level_fuse,
    fusion_train,
    pair_fused_training_set,
    select_available,
    select_frames,
    vision_only_label,
)
from .model_io import load_model_file, model_load, model_save, save_model_file
from .synth import SynthConfig, synth_audio, synth_corpus, synth_frame
from .vision import (
    DEFAULT_GREEN_RANGE,
    DEFAULT_RED_RANGE,
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

__version__ = "0.1.0"
