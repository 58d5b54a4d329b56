"""Bit-exact readers and writers for audio, images, annotations and corpora.

Formats are deliberately minimal: PCM16 RIFF/WAVE for audio, binary PPM (P6)
for frames, line-oriented text for YOLO annotations, detections and corpus
manifests. Every parser reports the byte offset or line number of the first
defect it finds.
"""

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .audio import AudioClip
from .errors import DatasetError, FormatError, MissingDetectionError
from .vision import BoundingBox

CONDITIONS = ("clean", "occluded", "moving")

YOLO_CLASS_TO_LABEL = {0: "red", 1: "green"}
LABEL_TO_YOLO_CLASS = {"red": 0, "green": 1}


# ---------------------------------------------------------------------------
# WAV (RIFF PCM16)


def read_wav(path):
    """Read a PCM16 RIFF/WAVE file into a normalized mono AudioClip.

    Samples are scaled by 1/32768; stereo is downmixed by channel mean.
    """
    path = str(path)
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise FormatError(path, f"cannot read: {exc}") from exc

    def fail(message, offset):
        raise FormatError(path, message, where=f"byte {offset}")

    if len(data) < 12:
        fail("file too small for a RIFF header", 0)
    if data[0:4] != b"RIFF":
        fail(f"bad RIFF magic {data[0:4]!r}", 0)
    if data[8:12] != b"WAVE":
        fail(f"bad WAVE tag {data[8:12]!r}", 8)

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (chunk_size,) = struct.unpack("<I", data[pos + 4 : pos + 8])
        body_start = pos + 8
        if body_start + chunk_size > len(data):
            fail(f"chunk {chunk_id!r} overruns the file", pos)
        body = data[body_start : body_start + chunk_size]
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                fail("fmt chunk shorter than 16 bytes", pos)
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif chunk_id == b"data":
            payload = (body, body_start)
        pos = body_start + chunk_size + (chunk_size & 1)

    if fmt is None:
        fail("missing fmt chunk", len(data))
    if payload is None:
        fail("missing data chunk", len(data))
    audio_format, channels, sample_rate, _, _, bits = fmt
    if audio_format != 1 or bits != 16:
        fail(
            f"unsupported encoding (format {audio_format}, {bits}-bit); "
            "only PCM16 is supported",
            12,
        )
    if channels < 1:
        fail("fmt chunk declares zero channels", 12)
    body, body_start = payload
    if len(body) == 0:
        fail("empty data chunk", body_start)
    if len(body) % (2 * channels):
        fail("data chunk size is not a whole number of frames", body_start)
    samples = np.frombuffer(body, dtype="<i2").astype(np.float64) / 32768.0
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    return AudioClip(samples, sample_rate)


def write_wav(clip, path):
    """Write a mono PCM16 WAV; out-of-range samples saturate at full scale."""
    scaled = np.round(np.asarray(clip.samples, dtype=np.float64) * 32768.0)
    pcm = np.clip(scaled, -32768, 32767).astype("<i2")
    body = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(body),
        b"WAVE",
        b"fmt ",
        16,
        1,
        1,
        clip.sample_rate,
        clip.sample_rate * 2,
        2,
        16,
        b"data",
        len(body),
    )
    with open(path, "wb") as fh:
        fh.write(header + body)


# ---------------------------------------------------------------------------
# PPM images (binary P6, maxval 255); PNG optionally via Pillow


def _read_ppm(path, data):
    pos = 0

    def fail(message):
        raise FormatError(path, message, where=f"byte {pos}")

    def skip_separators():
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                return

    def read_token():
        nonlocal pos
        skip_separators()
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            fail("unexpected end of header")
        return data[start:pos]

    if data[0:2] != b"P6":
        raise FormatError(path, f"bad magic {data[0:2]!r}, expected P6", where="byte 0")
    pos = 2
    try:
        width = int(read_token())
        height = int(read_token())
        maxval = int(read_token())
    except ValueError:
        fail("non-numeric header field")
    if width <= 0 or height <= 0:
        fail(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        fail(f"unsupported maxval {maxval}; only 255 is supported")
    pos += 1  # single whitespace byte after maxval
    expected = width * height * 3
    body = data[pos : pos + expected]
    if len(body) < expected:
        raise FormatError(
            path,
            f"truncated pixel data: expected {expected} bytes, found {len(body)}",
            where=f"byte {pos}",
        )
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3).copy()


def read_image(path):
    """Read a binary PPM (P6) image; .png works when Pillow is installed."""
    path = str(path)
    if path.lower().endswith(".png"):
        try:
            from PIL import Image
        except ImportError as exc:
            raise FormatError(
                path, "PNG support requires the optional Pillow dependency"
            ) from exc
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise FormatError(path, f"cannot read: {exc}") from exc
    return _read_ppm(path, data)


def write_ppm(image, path):
    image = np.asarray(image, dtype=np.uint8)
    height, width = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (width, height))
        fh.write(image.tobytes())


# ---------------------------------------------------------------------------
# YOLO annotations


def parse_yolo_annotation(text, path="<annotation>"):
    """Parse "class cx cy w h" lines (class 0 = red, 1 = green)."""
    boxes = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        where = f"line {lineno}"
        if len(fields) != 5:
            raise FormatError(path, f"expected 5 fields, got {len(fields)}", where=where)
        try:
            class_id = int(fields[0])
            cx, cy, w, h = (float(f) for f in fields[1:])
        except ValueError as exc:
            raise FormatError(path, f"non-numeric field: {exc}", where=where) from exc
        if class_id not in YOLO_CLASS_TO_LABEL:
            raise FormatError(path, f"unknown class id {class_id}", where=where)
        try:
            boxes.append(
                BoundingBox(cx, cy, w, h, label=YOLO_CLASS_TO_LABEL[class_id])
            )
        except ValueError as exc:
            raise FormatError(path, str(exc), where=where) from exc
    return boxes


def read_yolo_annotation(path):
    path = str(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise FormatError(path, f"cannot read: {exc}") from exc
    return parse_yolo_annotation(text, path=path)


# ---------------------------------------------------------------------------
# Detections file: one record per frame id


def write_detections(detections, path):
    """Write {frame_id: [BoundingBox, ...]} as line-oriented text.

    Format: header line "ptl-detections 1", then one tab-separated line per
    frame id: the id followed by one "label,confidence,cx,cy,w,h" group per
    box (label "-" when absent). Floats use repr so round-trips are exact.
    """
    lines = ["ptl-detections 1"]
    for frame_id in detections:
        if "\t" in frame_id or "\n" in frame_id:
            raise ValueError(f"frame id {frame_id!r} contains separator characters")
        groups = [
            ",".join(
                [
                    box.label if box.label is not None else "-",
                    repr(float(box.confidence)),
                    repr(float(box.cx)),
                    repr(float(box.cy)),
                    repr(float(box.w)),
                    repr(float(box.h)),
                ]
            )
            for box in detections[frame_id]
        ]
        lines.append("\t".join([frame_id] + groups))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_detections(path):
    """Inverse of :func:`write_detections`."""
    path = str(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise FormatError(path, f"cannot read: {exc}") from exc
    if not lines or lines[0] != "ptl-detections 1":
        raise FormatError(path, "missing 'ptl-detections 1' header", where="line 1")
    detections = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        frame_id = fields[0]
        where = f"line {lineno}"
        if frame_id in detections:
            raise FormatError(path, f"duplicate frame id {frame_id!r}", where=where)
        boxes = []
        for group in fields[1:]:
            parts = group.split(",")
            if len(parts) != 6:
                raise FormatError(
                    path, f"expected 6 comma fields per box, got {len(parts)}", where=where
                )
            label = None if parts[0] == "-" else parts[0]
            try:
                confidence, cx, cy, w, h = (float(p) for p in parts[1:])
                boxes.append(
                    BoundingBox(cx, cy, w, h, label=label, confidence=confidence)
                )
            except ValueError as exc:
                raise FormatError(path, str(exc), where=where) from exc
        detections[frame_id] = boxes
    return detections


def lookup_detections(detections, frame_id):
    if frame_id not in detections:
        raise MissingDetectionError(f"no detections recorded for frame {frame_id!r}")
    return detections[frame_id]


# ---------------------------------------------------------------------------
# Corpus manifest


@dataclass(frozen=True)
class CorpusItem:
    """One synchronized window: audio span, frame files, truth, condition."""

    window_id: str
    audio_path: str
    audio_offset: int  # samples into the referenced file
    audio_samples: int
    frame_paths: tuple
    label: str
    condition: str


@dataclass(frozen=True)
class Corpus:
    """Loaded manifest: immutable window list plus recording parameters."""

    items: tuple
    fps: float
    window_ms: float
    sample_rate: int
    manifest_path: str = ""

    def filter_condition(self, condition):
        if condition in (None, "all"):
            return self
        return replace(
            self, items=tuple(i for i in self.items if i.condition == condition)
        )

    def labels(self):
        return sorted({i.label for i in self.items})


MANIFEST_HEADER = "ptl-corpus 1"


def save_manifest(corpus, path):
    """Write a corpus manifest (paths stored relative to the manifest)."""
    base = Path(path).resolve().parent
    lines = [
        MANIFEST_HEADER,
        f"fps {repr(float(corpus.fps))}",
        f"window_ms {repr(float(corpus.window_ms))}",
        f"sample_rate {corpus.sample_rate}",
        f"windows {len(corpus.items)}",
    ]
    for item in corpus.items:
        frames = ",".join(_relative_to(p, base) for p in item.frame_paths)
        lines.append(
            "\t".join(
                [
                    item.window_id,
                    item.label,
                    item.condition,
                    _relative_to(item.audio_path, base),
                    str(item.audio_offset),
                    str(item.audio_samples),
                    frames or "-",
                ]
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _relative_to(p, base):
    p = Path(p)
    try:
        return p.resolve().relative_to(base).as_posix()
    except ValueError:
        return p.as_posix()


def load_manifest(path):
    """Parse a manifest and verify every referenced file exists."""
    path = str(path)
    base = Path(path).resolve().parent
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise FormatError(path, f"cannot read: {exc}") from exc
    if not lines or lines[0] != MANIFEST_HEADER:
        raise FormatError(path, f"missing '{MANIFEST_HEADER}' header", where="line 1")

    header = {}
    for lineno, line in enumerate(lines[1:5], start=2):
        parts = line.split(" ", 1)
        if len(parts) != 2:
            raise FormatError(path, "malformed header line", where=f"line {lineno}")
        header[parts[0]] = parts[1]
    for key in ("fps", "window_ms", "sample_rate", "windows"):
        if key not in header:
            raise FormatError(path, f"missing header field {key!r}", where="line 2-5")
    try:
        fps = float(header["fps"])
        window_ms = float(header["window_ms"])
        sample_rate = int(header["sample_rate"])
        n_windows = int(header["windows"])
    except ValueError as exc:
        raise FormatError(path, f"bad header value: {exc}", where="line 2-5") from exc

    items = []
    seen = set()
    for lineno, line in enumerate(lines[5:], start=6):
        if not line.strip():
            continue
        fields = line.split("\t")
        where = f"line {lineno}"
        if len(fields) != 7:
            raise FormatError(path, f"expected 7 fields, got {len(fields)}", where=where)
        window_id, label, condition, audio_rel, offset, n_samples, frames = fields
        if window_id in seen:
            raise FormatError(path, f"duplicate window id {window_id!r}", where=where)
        seen.add(window_id)
        if condition not in CONDITIONS:
            raise FormatError(path, f"unknown condition {condition!r}", where=where)
        try:
            offset = int(offset)
            n_samples = int(n_samples)
        except ValueError as exc:
            raise FormatError(path, f"bad integer field: {exc}", where=where) from exc
        audio_path = str((base / audio_rel).resolve())
        if not Path(audio_path).is_file():
            raise FormatError(path, f"missing audio file {audio_rel!r}", where=where)
        frame_paths = []
        if frames != "-":
            for rel in frames.split(","):
                frame_path = str((base / rel).resolve())
                if not Path(frame_path).is_file():
                    raise FormatError(path, f"missing frame file {rel!r}", where=where)
                frame_paths.append(frame_path)
        items.append(
            CorpusItem(
                window_id=window_id,
                audio_path=audio_path,
                audio_offset=offset,
                audio_samples=n_samples,
                frame_paths=tuple(frame_paths),
                label=label,
                condition=condition,
            )
        )
    if len(items) != n_windows:
        raise FormatError(
            path, f"header declares {n_windows} windows, found {len(items)}"
        )
    return Corpus(
        items=tuple(items),
        fps=fps,
        window_ms=window_ms,
        sample_rate=sample_rate,
        manifest_path=path,
    )


def window_audio(item, _cache=None):
    """Load the audio span for one corpus item."""
    if _cache is not None and item.audio_path in _cache:
        clip = _cache[item.audio_path]
    else:
        clip = read_wav(item.audio_path)
        if _cache is not None:
            _cache[item.audio_path] = clip
    span = clip.samples[item.audio_offset : item.audio_offset + item.audio_samples]
    if len(span) != item.audio_samples:
        raise DatasetError(
            f"window {item.window_id}: audio span [{item.audio_offset}, "
            f"{item.audio_offset + item.audio_samples}) exceeds file length {len(clip)}"
        )
    return AudioClip(span, clip.sample_rate)


# ---------------------------------------------------------------------------
# Splits


def split_dataset(items, test_fraction=0.30, seed=0, label_of=None):
    """Seeded, label-stratified partition into (train, test).

    Per label the item order is shuffled and round(fraction * n) items go to
    the test side, keeping per-label proportions within one item.
    """
    if not 0 < test_fraction < 1:
        raise DatasetError(f"test_fraction must be in (0, 1), got {test_fraction}")
    items = list(items)
    if label_of is None:
        label_of = lambda item: item.label
    by_label = {}
    for idx, item in enumerate(items):
        by_label.setdefault(label_of(item), []).append(idx)
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for label in sorted(by_label):
        indices = np.array(by_label[label])
        rng.shuffle(indices)
        n_test = int(round(test_fraction * len(indices)))
        n_test = min(max(n_test, 0), len(indices))
        test_idx.extend(indices[:n_test])
        train_idx.extend(indices[n_test:])
    return [items[i] for i in train_idx], [items[i] for i in test_idx]
