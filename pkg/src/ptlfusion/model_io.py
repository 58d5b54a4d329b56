"""Versioned binary serialization for trained classifiers.

Layout (all integers little-endian):

    magic  b"PTLM"
    u8     format version (currently 1)
    u8     model kind (1 = forest, 2 = knn)
    u32    feature dimension
    u16    label count, then per label: u16 byte length + UTF-8 text
    u16    metadata entry count, then per entry (sorted by key):
           u16 + key bytes, u16 + value bytes
    ...    kind-specific payload

Forest payload: n_trees u32, max_depth i32 (-1 = unlimited), max_features
i32 (-2 = sqrt, -1 = all, else count), bootstrap u8, min_samples_split u32,
seed i64, then per tree: node count u32 followed by the flat node arrays
(feature i32, threshold f64, left i32, right i32, leaf distributions f64).

Knn payload: k u32, row count u32, training matrix f64, label indices u16.

Serialization is canonical, so identically trained models produce identical
bytes; round-trips preserve predictions exactly.
"""

import struct

import numpy as np

from .classifiers import ForestClassifier, KnnClassifier, _Tree
from .errors import ModelFormatError, ModelVersionError

MAGIC = b"PTLM"
FORMAT_VERSION = 1
KIND_FOREST = 1
KIND_KNN = 2

_SOURCE = "model payload"


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, size, what):
        end = self.pos + size
        if end > len(self.data):
            raise ModelFormatError(
                _SOURCE, f"truncated while reading {what}", where=f"byte {self.pos}"
            )
        chunk = self.data[self.pos : end]
        self.pos = end
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt), what))

    def text(self, what):
        (length,) = self.unpack("H", what)
        return self.take(length, what).decode("utf-8")

    def array(self, dtype, count, what):
        raw = self.take(np.dtype(dtype).itemsize * count, what)
        return np.frombuffer(raw, dtype=dtype).copy()

    def done(self):
        if self.pos != len(self.data):
            raise ModelFormatError(
                _SOURCE,
                f"{len(self.data) - self.pos} trailing bytes after payload",
                where=f"byte {self.pos}",
            )


def _pack_text(value):
    raw = value.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def _encode_max_features(value):
    if value == "sqrt":
        return -2
    if value is None:
        return -1
    return int(value)


def _decode_max_features(code):
    if code == -2:
        return "sqrt"
    if code == -1:
        return None
    return code


def model_save(model, metadata=None):
    """Serialize a fitted classifier (plus optional string metadata) to bytes."""
    if isinstance(model, ForestClassifier):
        kind = KIND_FOREST
    elif isinstance(model, KnnClassifier):
        kind = KIND_KNN
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    if not hasattr(model, "classes_"):
        raise RuntimeError("model must be fitted before serialization")

    parts = [MAGIC, struct.pack("<BB", FORMAT_VERSION, kind)]
    parts.append(struct.pack("<IH", model.n_features_in_, len(model.classes_)))
    for label in model.classes_:
        parts.append(_pack_text(label))
    metadata = dict(metadata or {})
    parts.append(struct.pack("<H", len(metadata)))
    for key in sorted(metadata):
        parts.append(_pack_text(key))
        parts.append(_pack_text(str(metadata[key])))

    if kind == KIND_FOREST:
        parts.append(
            struct.pack(
                "<IiiBIq",
                model.n_trees,
                -1 if model.max_depth is None else model.max_depth,
                _encode_max_features(model.max_features),
                1 if model.bootstrap else 0,
                model.min_samples_split,
                model.seed,
            )
        )
        for tree in model.trees_:
            parts.append(struct.pack("<I", len(tree.feature)))
            parts.append(tree.feature.astype("<i4").tobytes())
            parts.append(tree.threshold.astype("<f8").tobytes())
            parts.append(tree.left.astype("<i4").tobytes())
            parts.append(tree.right.astype("<i4").tobytes())
            parts.append(tree.dist.astype("<f8").tobytes())
    else:
        parts.append(struct.pack("<II", model.k, len(model._X)))
        parts.append(model._X.astype("<f8").tobytes())
        parts.append(model._y_idx.astype("<u2").tobytes())
    return b"".join(parts)


def model_load(data):
    """Inverse of :func:`model_save`; returns (model, metadata)."""
    reader = _Reader(bytes(data))
    magic = reader.take(4, "magic")
    if magic != MAGIC:
        raise ModelFormatError(_SOURCE, f"bad magic {magic!r}", where="byte 0")
    version, kind = reader.unpack("BB", "header")
    if version != FORMAT_VERSION:
        raise ModelVersionError(
            _SOURCE,
            f"unsupported format version {version} (expected {FORMAT_VERSION})",
            where="byte 4",
        )
    n_features, n_labels = reader.unpack("IH", "header")
    classes = [reader.text("label") for _ in range(n_labels)]
    (n_meta,) = reader.unpack("H", "metadata")
    metadata = {}
    for _ in range(n_meta):
        key = reader.text("metadata key")
        metadata[key] = reader.text("metadata value")

    if kind == KIND_FOREST:
        n_trees, max_depth, max_features, bootstrap, min_split, seed = reader.unpack(
            "IiiBIq", "forest header"
        )
        model = ForestClassifier(
            n_trees=n_trees,
            max_depth=None if max_depth == -1 else max_depth,
            max_features=_decode_max_features(max_features),
            bootstrap=bool(bootstrap),
            min_samples_split=min_split,
            seed=seed,
            labels=classes,
        )
        trees = []
        for t in range(n_trees):
            (n_nodes,) = reader.unpack("I", f"tree {t} size")
            feature = reader.array("<i4", n_nodes, f"tree {t} features")
            threshold = reader.array("<f8", n_nodes, f"tree {t} thresholds")
            left = reader.array("<i4", n_nodes, f"tree {t} left links")
            right = reader.array("<i4", n_nodes, f"tree {t} right links")
            dist = reader.array("<f8", n_nodes * n_labels, f"tree {t} distributions")
            trees.append(
                _Tree(feature, threshold, left, right, dist.reshape(n_nodes, n_labels))
            )
        model.classes_ = classes
        model.n_features_in_ = n_features
        model.trees_ = trees
    elif kind == KIND_KNN:
        k, n_rows = reader.unpack("II", "knn header")
        X = reader.array("<f8", n_rows * n_features, "knn matrix").reshape(
            n_rows, n_features
        )
        y_idx = reader.array("<u2", n_rows, "knn labels").astype(np.intp)
        model = KnnClassifier(k=k, labels=classes)
        model.classes_ = classes
        model._X = X
        model._y_idx = y_idx
        model.n_features_in_ = n_features
    else:
        raise ModelFormatError(_SOURCE, f"unknown model kind {kind}", where="byte 5")
    reader.done()
    return model, metadata


def save_model_file(path, model, metadata=None):
    with open(path, "wb") as fh:
        fh.write(model_save(model, metadata))


def load_model_file(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ModelFormatError(str(path), f"cannot read model file: {exc}") from exc
    return model_load(data)
