"""Dataset manifests, P6 image decoding, preprocessing, and the feature cache.

The ingestion format is binary PPM (P6, maxval 255): bit-exactly specifiable
and decodable without third-party codecs. Preprocessing resizes to 224x224
with bilinear interpolation on half-pixel centers, then normalizes each
channel to (pixel/255 - mean) / std in channel-planar float32 layout.

Feature caches use the DFFC container: magic ``DFFC``, u32 version (=1),
u64 n_rows, u64 n_cols (always 2048), n_rows little-endian i32 labels, then
n_rows x n_cols little-endian float32 values, row-major.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    FormatError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from .resnet50 import FEATURE_DIM, INPUT_SIZE, SentimentLabel

DFFC_MAGIC = b"DFFC"
DFFC_VERSION = 1

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: SentimentLabel


@dataclass(frozen=True)
class DatasetStats:
    negative: int
    neutral: int
    positive: int

    @property
    def total(self) -> int:
        return self.negative + self.neutral + self.positive

    def count(self, label: SentimentLabel) -> int:
        return (self.negative, self.neutral, self.positive)[label.value]


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """8-bit RGB raster, pixels in row-major [height, width, 3] layout."""

    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3 or self.pixels.dtype != np.uint8:
            raise ValueError(
                f"pixels must be uint8 with shape [h, w, 3], got "
                f"{self.pixels.dtype} {tuple(self.pixels.shape)}"
            )

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class PreprocessConfig:
    target_size: tuple[int, int] = (INPUT_SIZE, INPUT_SIZE)
    channel_mean: tuple[float, float, float] = IMAGENET_MEAN
    channel_std: tuple[float, float, float] = IMAGENET_STD

    def __post_init__(self):
        if tuple(self.target_size) != (INPUT_SIZE, INPUT_SIZE):
            raise ValueError(f"target_size is fixed at {INPUT_SIZE}x{INPUT_SIZE}")
        if len(self.channel_mean) != 3 or len(self.channel_std) != 3:
            raise ValueError("channel_mean and channel_std must have 3 entries")
        if any(s <= 0 for s in self.channel_std):
            raise ValueError("channel_std must be strictly positive")


def parse_manifest(text: str) -> list[ManifestEntry]:
    """Parse a ``path,label`` CSV; blank lines ignored, labels case-insensitive."""
    rows = csv.reader(io.StringIO(text))
    entries = []
    header = None
    for line_no, row in enumerate(rows, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if header is None:
            header = [cell.strip().lower() for cell in row]
            if header != ["path", "label"]:
                raise FormatError(
                    f"line {line_no}: manifest header must be 'path,label', got {','.join(header)!r}"
                )
            continue
        if len(row) != 2:
            raise FormatError(f"line {line_no}: expected 2 columns, got {len(row)}")
        path, token = row[0].strip(), row[1]
        if not path:
            raise FormatError(f"line {line_no}: empty path")
        try:
            label = SentimentLabel.parse(token)
        except ValueError as exc:
            raise FormatError(f"line {line_no}: {exc}") from None
        entries.append(ManifestEntry(path=path, label=label))
    if header is None:
        raise FormatError("manifest is empty; expected a 'path,label' header row")
    return entries


def load_manifest(path) -> list[ManifestEntry]:
    """Read a manifest file, resolving relative paths against its directory."""
    path = Path(path)
    entries = parse_manifest(path.read_text(encoding="utf-8"))
    base = path.parent
    return [
        ManifestEntry(path=str((base / e.path)) if not Path(e.path).is_absolute() else e.path,
                      label=e.label)
        for e in entries
    ]


def dataset_stats(entries: list[ManifestEntry]) -> DatasetStats:
    counts = [0, 0, 0]
    for entry in entries:
        counts[entry.label.value] += 1
    return DatasetStats(*counts)


def decode_ppm(data: bytes) -> ImageBuffer:
    """Decode binary P6 with maxval 255; ``#`` comments allowed in the header."""
    if data[:2] != b"P6":
        raise BadMagicError(f"expected P6 magic, found {data[:2]!r}")
    pos = 2

    def next_token() -> bytes:
        nonlocal pos
        while pos < len(data):
            ch = data[pos : pos + 1]
            if ch == b"#":
                while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif ch.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TruncatedPayloadError("P6 header ended before width/height/maxval")
        return data[start:pos]

    fields = [next_token() for _ in range(3)]
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError:
        raise FormatError(f"non-numeric P6 header fields: {fields}") from None
    if width < 1 or height < 1:
        raise FormatError(f"invalid P6 dimensions {width}x{height}")
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    expected = width * height * 3
    payload = data[pos : pos + expected]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"P6 payload short: expected {expected} bytes, found {len(payload)}"
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).copy()
    return ImageBuffer(pixels=pixels)


def encode_ppm(img: ImageBuffer) -> bytes:
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes(order="C")


def resize_bilinear(img: ImageBuffer, target: tuple[int, int] = (INPUT_SIZE, INPUT_SIZE)) -> ImageBuffer:
    """Bilinear resize on half-pixel centers, channels independent.

    Source coordinate for destination index d is (d + 0.5) * scale - 0.5,
    clamped into range; results round half-up to the nearest 8-bit value.
    An equal-size resize is the identity.
    """
    th, tw = target
    if th < 1 or tw < 1:
        raise ValueError(f"target size must be positive, got {target}")
    sh, sw = img.height, img.width
    if (sh, sw) == (th, tw):
        return ImageBuffer(pixels=img.pixels.copy())

    def axis_coords(src_extent, dst_extent):
        scale = src_extent / dst_extent
        coords = (np.arange(dst_extent, dtype=np.float64) + 0.5) * scale - 0.5
        coords = np.clip(coords, 0.0, src_extent - 1.0)
        lo = np.floor(coords).astype(np.int64)
        hi = np.minimum(lo + 1, src_extent - 1)
        frac = coords - lo
        return lo, hi, frac

    y0, y1, fy = axis_coords(sh, th)
    x0, x1, fx = axis_coords(sw, tw)
    src = img.pixels.astype(np.float64)
    top = src[y0][:, x0] * (1 - fx)[None, :, None] + src[y0][:, x1] * fx[None, :, None]
    bottom = src[y1][:, x0] * (1 - fx)[None, :, None] + src[y1][:, x1] * fx[None, :, None]
    blended = top * (1 - fy)[:, None, None] + bottom * fy[:, None, None]
    pixels = np.floor(blended + 0.5).astype(np.uint8)
    return ImageBuffer(pixels=pixels)


def normalize(img: ImageBuffer, config: PreprocessConfig | None = None) -> np.ndarray:
    """(pixel/255 - mean) / std per channel; interleaved RGB -> planar float32."""
    config = config or PreprocessConfig()
    th, tw = config.target_size
    if (img.height, img.width) != (th, tw):
        raise ValueError(
            f"normalize expects a {th}x{tw} image, got {img.height}x{img.width}"
        )
    mean = np.asarray(config.channel_mean, dtype=np.float32)
    std = np.asarray(config.channel_std, dtype=np.float32)
    planar = img.pixels.astype(np.float32).transpose(2, 0, 1) / np.float32(255.0)
    return np.ascontiguousarray((planar - mean[:, None, None]) / std[:, None, None])


def preprocess_image(data: bytes, config: PreprocessConfig | None = None) -> np.ndarray:
    """decode -> resize -> normalize, producing one [3, 224, 224] tensor."""
    return normalize(resize_bilinear(decode_ppm(data)), config)


@dataclass(eq=False)
class FeatureCache:
    """Extracted feature rows with aligned labels; always 2048 columns."""

    values: np.ndarray  # [n, 2048] float32
    labels: np.ndarray  # [n] int32

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int32).reshape(-1)
        if self.values.ndim != 2 or self.values.shape[1] != FEATURE_DIM:
            raise FormatError(
                f"feature cache must have {FEATURE_DIM} columns, got shape "
                f"{tuple(self.values.shape)}"
            )
        if self.labels.shape[0] != self.values.shape[0]:
            raise FormatError(
                f"label count {self.labels.shape[0]} != row count {self.values.shape[0]}"
            )

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]


def write_feature_cache(cache: FeatureCache) -> bytes:
    buf = io.BytesIO()
    buf.write(DFFC_MAGIC)
    buf.write(struct.pack("<I", DFFC_VERSION))
    buf.write(struct.pack("<Q", cache.n_rows))
    buf.write(struct.pack("<Q", FEATURE_DIM))
    buf.write(cache.labels.astype("<i4").tobytes())
    buf.write(cache.values.astype("<f4").tobytes(order="C"))
    return buf.getvalue()


def read_feature_cache(data: bytes) -> FeatureCache:
    view = memoryview(data)
    pos = 0

    def take(count: int, what: str) -> memoryview:
        nonlocal pos
        if pos + count > len(view):
            raise TruncatedPayloadError(f"feature cache truncated while reading {what}")
        chunk = view[pos : pos + count]
        pos += count
        return chunk

    magic = bytes(take(4, "magic"))
    if magic != DFFC_MAGIC:
        raise BadMagicError(f"expected magic {DFFC_MAGIC!r}, found {magic!r}")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != DFFC_VERSION:
        raise UnsupportedVersionError(f"unsupported feature-cache version {version}")
    (n_rows,) = struct.unpack("<Q", take(8, "row count"))
    (n_cols,) = struct.unpack("<Q", take(8, "column count"))
    if n_cols != FEATURE_DIM:
        raise FormatError(f"feature cache must have {FEATURE_DIM} columns, header says {n_cols}")
    labels = np.frombuffer(take(4 * n_rows, "labels"), dtype="<i4").copy()
    values = (
        np.frombuffer(take(4 * n_rows * n_cols, "feature values"), dtype="<f4")
        .reshape(n_rows, n_cols)
        .copy()
    )
    if pos != len(view):
        raise FormatError(f"{len(view) - pos} trailing bytes after feature data")
    return FeatureCache(values=values, labels=labels)
