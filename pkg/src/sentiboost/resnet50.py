"""Modified ResNet50: assembly, weight container, feature tap, 3-class head.

The network is the canonical 50-layer residual architecture with the
thousand-class head replaced by a small sentiment head:

* stem: 7x7/2 conv (pad 3) -> batch norm -> ReLU -> 3x3/2 max pool (pad 1)
* four bottleneck stages with repeats (3, 4, 6, 3); bottleneck expansion 4
* global average pool producing the 2048-wide feature vector
* dense head 2048 -> num_classes, softmax for probabilities

Parameter names follow one canonical scheme, the single source of truth for
container validation:

    stem.conv.weight, stem.bn.{gamma,beta,mean,var}
    stage{s}.block{b}.conv{1,2,3}.weight        s in 1..4, b in 1..repeats
    stage{s}.block{b}.bn{1,2,3}.{gamma,beta,mean,var}
    stage{s}.block{b}.proj.conv.weight, stage{s}.block{b}.proj.bn.*
    head.fc.weight, head.fc.bias

Weight files use the DFWS container (see ``write_weight_store``), whose header
flag records where stride-2 downsampling sits inside the first block of a
stage: 0 = in the 3x3 conv (default), 1 = in the leading 1x1 conv.
"""

from __future__ import annotations

import enum
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ArchitectureError,
    BadMagicError,
    DuplicateNameError,
    FormatError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from .tensor_ops import (
    BatchNormParams,
    Conv2dSpec,
    as_f32,
    batchnorm_infer,
    conv2d,
    dense,
    global_avg_pool,
    maxpool2d,
    relu,
    softmax,
)

DFWS_MAGIC = b"DFWS"
DFWS_VERSION = 1

STRIDE_IN_3X3 = 0
STRIDE_IN_1X1 = 1

STAGE_REPEATS = (3, 4, 6, 3)
FEATURE_DIM = 2048
STEM_CHANNELS = 64
INPUT_SIZE = 224


class SentimentLabel(enum.IntEnum):
    NEGATIVE = 0
    NEUTRAL = 1
    POSITIVE = 2

    @classmethod
    def parse(cls, token: str) -> "SentimentLabel":
        try:
            return cls[token.strip().upper()]
        except KeyError:
            raise ValueError(
                f"unknown sentiment label {token!r}; expected one of "
                "negative, neutral, positive"
            ) from None


CLASS_NAMES = tuple(label.name.lower() for label in SentimentLabel)


@dataclass(frozen=True)
class NetworkConfig:
    stage_repeats: tuple[int, ...] = STAGE_REPEATS
    num_classes: int = 3
    feature_dim: int = FEATURE_DIM

    def __post_init__(self):
        if tuple(self.stage_repeats) != STAGE_REPEATS:
            raise ValueError(f"stage_repeats must be {STAGE_REPEATS}, got {tuple(self.stage_repeats)}")
        if self.feature_dim != FEATURE_DIM:
            raise ValueError(f"feature_dim must be {FEATURE_DIM}, got {self.feature_dim}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")


@dataclass(frozen=True)
class BottleneckSpec:
    in_channels: int
    mid_channels: int
    out_channels: int
    stride: int
    has_projection: bool

    def __post_init__(self):
        if self.out_channels != 4 * self.mid_channels:
            raise ValueError(
                f"bottleneck expansion violated: out={self.out_channels}, mid={self.mid_channels}"
            )
        expected = self.stride != 1 or self.in_channels != self.out_channels
        if self.has_projection != expected:
            raise ValueError(
                "has_projection must be set exactly when stride != 1 or channels change"
            )


def bottleneck_specs(config: NetworkConfig) -> list[list[BottleneckSpec]]:
    """Per-stage block specs; stage s has mid width 64 * 2**(s-1)."""
    stages = []
    in_channels = STEM_CHANNELS
    for s, repeats in enumerate(config.stage_repeats, start=1):
        mid = STEM_CHANNELS * 2 ** (s - 1)
        out = 4 * mid
        blocks = []
        for b in range(1, repeats + 1):
            stride = 2 if (b == 1 and s > 1) else 1
            has_projection = b == 1  # stage 1 changes width, stages 2-4 also stride
            blocks.append(BottleneckSpec(in_channels, mid, out, stride, has_projection))
            in_channels = out
        stages.append(blocks)
    return stages


def architecture_manifest(config: NetworkConfig) -> dict[str, tuple[int, ...]]:
    """Canonical parameter name -> required shape for the whole network."""
    manifest: dict[str, tuple[int, ...]] = {}

    def add_bn(prefix: str, channels: int):
        for part in ("gamma", "beta", "mean", "var"):
            manifest[f"{prefix}.{part}"] = (channels,)

    manifest["stem.conv.weight"] = (STEM_CHANNELS, 3, 7, 7)
    add_bn("stem.bn", STEM_CHANNELS)
    for s, blocks in enumerate(bottleneck_specs(config), start=1):
        for b, spec in enumerate(blocks, start=1):
            prefix = f"stage{s}.block{b}"
            manifest[f"{prefix}.conv1.weight"] = (spec.mid_channels, spec.in_channels, 1, 1)
            add_bn(f"{prefix}.bn1", spec.mid_channels)
            manifest[f"{prefix}.conv2.weight"] = (spec.mid_channels, spec.mid_channels, 3, 3)
            add_bn(f"{prefix}.bn2", spec.mid_channels)
            manifest[f"{prefix}.conv3.weight"] = (spec.out_channels, spec.mid_channels, 1, 1)
            add_bn(f"{prefix}.bn3", spec.out_channels)
            if spec.has_projection:
                manifest[f"{prefix}.proj.conv.weight"] = (spec.out_channels, spec.in_channels, 1, 1)
                add_bn(f"{prefix}.proj.bn", spec.out_channels)
    manifest["head.fc.weight"] = (config.feature_dim, config.num_classes)
    manifest["head.fc.bias"] = (config.num_classes,)
    return manifest


@dataclass
class WeightStore:
    """Named tensors parsed from (or destined for) a DFWS container."""

    entries: dict[str, np.ndarray] = field(default_factory=dict)
    downsample_convention: int = STRIDE_IN_3X3

    def add(self, name: str, tensor: np.ndarray):
        if name in self.entries:
            raise DuplicateNameError(f"duplicate tensor name {name!r}")
        self.entries[name] = as_f32(tensor)

    def get(self, name: str) -> np.ndarray:
        try:
            return self.entries[name]
        except KeyError:
            raise KeyError(f"weight store has no tensor named {name!r}") from None

    def names(self) -> list[str]:
        return list(self.entries)

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def write_weight_store(store: WeightStore) -> bytes:
    """Serialize to DFWS bytes (little-endian, no padding between records)."""
    if store.downsample_convention not in (STRIDE_IN_3X3, STRIDE_IN_1X1):
        raise FormatError(
            f"unknown downsample convention {store.downsample_convention}"
        )
    buf = io.BytesIO()
    buf.write(DFWS_MAGIC)
    buf.write(struct.pack("<I", DFWS_VERSION))
    buf.write(struct.pack("<B", store.downsample_convention))
    buf.write(struct.pack("<I", len(store.entries)))
    for name, tensor in store.entries.items():
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", tensor.ndim))
        for extent in tensor.shape:
            buf.write(struct.pack("<Q", extent))
        buf.write(as_f32(tensor).tobytes(order="C"))
    return buf.getvalue()


def load_weights(container: bytes) -> WeightStore:
    """Parse a DFWS container; validation against a manifest is separate."""
    view = memoryview(container)
    pos = 0

    def take(count: int, what: str) -> memoryview:
        nonlocal pos
        if pos + count > len(view):
            raise TruncatedPayloadError(f"container truncated while reading {what}")
        chunk = view[pos : pos + count]
        pos += count
        return chunk

    magic = bytes(take(4, "magic"))
    if magic != DFWS_MAGIC:
        raise BadMagicError(f"expected magic {DFWS_MAGIC!r}, found {magic!r}")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != DFWS_VERSION:
        raise UnsupportedVersionError(f"unsupported container version {version}")
    (convention,) = struct.unpack("<B", take(1, "downsample convention"))
    if convention not in (STRIDE_IN_3X3, STRIDE_IN_1X1):
        raise FormatError(f"unknown downsample convention flag {convention}")
    (count,) = struct.unpack("<I", take(4, "tensor count"))

    store = WeightStore(downsample_convention=convention)
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = bytes(take(name_len, "tensor name")).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, f"rank of {name!r}"))
        shape = tuple(
            struct.unpack("<Q", take(8, f"extent of {name!r}"))[0] for _ in range(rank)
        )
        numel = 1
        for extent in shape:
            numel *= extent
        payload = take(4 * numel, f"data of {name!r}")
        tensor = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
        store.add(name, tensor)
    if pos != len(view):
        raise FormatError(f"{len(view) - pos} trailing bytes after last tensor")
    return store


def load_weights_file(path) -> WeightStore:
    with open(path, "rb") as fh:
        return load_weights(fh.read())


@dataclass
class ArchitectureReport:
    """Findings from checking a weight store against the manifest."""

    missing: list[str] = field(default_factory=list)
    unexpected: list[str] = field(default_factory=list)
    shape_mismatches: list[tuple[str, tuple, tuple]] = field(default_factory=list)
    stage_conv_counts: tuple[int, ...] = ()

    @property
    def ok(self) -> bool:
        return not (self.missing or self.unexpected or self.shape_mismatches)

    def summary(self) -> str:
        if self.ok:
            return "all parameters present with expected shapes"
        parts = []
        if self.missing:
            parts.append(f"{len(self.missing)} missing ({', '.join(self.missing[:3])}...)"
                         if len(self.missing) > 3 else f"missing: {', '.join(self.missing)}")
        if self.unexpected:
            parts.append(f"unexpected: {', '.join(self.unexpected[:5])}")
        if self.shape_mismatches:
            first = self.shape_mismatches[0]
            parts.append(
                f"{len(self.shape_mismatches)} shape mismatches "
                f"(e.g. {first[0]}: expected {first[1]}, found {first[2]})"
            )
        return "; ".join(parts)


def validate_architecture(
    store: WeightStore, config: NetworkConfig, strict: bool = False
) -> ArchitectureReport:
    """Compare store contents against the manifest; optionally raise on findings.

    stage_conv_counts reports the number of main-path convolution layers per
    stage (3 per bottleneck, projections not counted): (9, 12, 18, 9) for
    repeats (3, 4, 6, 3).
    """
    manifest = architecture_manifest(config)
    report = ArchitectureReport(
        stage_conv_counts=tuple(3 * r for r in config.stage_repeats)
    )
    for name, shape in manifest.items():
        if name not in store:
            report.missing.append(name)
        elif tuple(store.get(name).shape) != shape:
            report.shape_mismatches.append((name, shape, tuple(store.get(name).shape)))
    for name in store.names():
        if name not in manifest:
            report.unexpected.append(name)
    if strict and not report.ok:
        raise ArchitectureError(report)
    return report


def _bn_params(store: WeightStore, prefix: str) -> BatchNormParams:
    return BatchNormParams(
        gamma=store.get(f"{prefix}.gamma"),
        beta=store.get(f"{prefix}.beta"),
        running_mean=store.get(f"{prefix}.mean"),
        running_var=store.get(f"{prefix}.var"),
    )


@dataclass(frozen=True)
class BottleneckParams:
    spec: BottleneckSpec
    conv1: np.ndarray
    bn1: BatchNormParams
    conv2: np.ndarray
    bn2: BatchNormParams
    conv3: np.ndarray
    bn3: BatchNormParams
    proj_conv: np.ndarray | None = None
    proj_bn: BatchNormParams | None = None


def bottleneck_forward(x: np.ndarray, params: BottleneckParams, convention: int) -> np.ndarray:
    """One residual unit: 1x1 -> 3x3 -> 1x1 plus shortcut, ReLU after the add."""
    spec = params.spec
    s1, s2 = (1, spec.stride) if convention == STRIDE_IN_3X3 else (spec.stride, 1)
    y = conv2d(x, params.conv1, Conv2dSpec(spec.mid_channels, spec.in_channels, 1, 1, stride=s1))
    y = relu(batchnorm_infer(y, params.bn1))
    y = conv2d(y, params.conv2, Conv2dSpec(spec.mid_channels, spec.mid_channels, 3, 3, stride=s2, padding=1))
    y = relu(batchnorm_infer(y, params.bn2))
    y = conv2d(y, params.conv3, Conv2dSpec(spec.out_channels, spec.mid_channels, 1, 1))
    y = batchnorm_infer(y, params.bn3)
    if spec.has_projection:
        shortcut = conv2d(
            x,
            params.proj_conv,
            Conv2dSpec(spec.out_channels, spec.in_channels, 1, 1, stride=spec.stride),
        )
        shortcut = batchnorm_infer(shortcut, params.proj_bn)
    else:
        shortcut = x
    return relu(y + shortcut)


class ResNet50:
    """Immutable inference model; build via ``build_model``."""

    def __init__(self, store: WeightStore, config: NetworkConfig):
        validate_architecture(store, config, strict=True)
        self.config = config
        self.downsample_convention = store.downsample_convention
        self.stem_conv = store.get("stem.conv.weight")
        self.stem_bn = _bn_params(store, "stem.bn")
        self.stages: list[list[BottleneckParams]] = []
        for s, blocks in enumerate(bottleneck_specs(config), start=1):
            stage = []
            for b, spec in enumerate(blocks, start=1):
                prefix = f"stage{s}.block{b}"
                stage.append(
                    BottleneckParams(
                        spec=spec,
                        conv1=store.get(f"{prefix}.conv1.weight"),
                        bn1=_bn_params(store, f"{prefix}.bn1"),
                        conv2=store.get(f"{prefix}.conv2.weight"),
                        bn2=_bn_params(store, f"{prefix}.bn2"),
                        conv3=store.get(f"{prefix}.conv3.weight"),
                        bn3=_bn_params(store, f"{prefix}.bn3"),
                        proj_conv=store.get(f"{prefix}.proj.conv.weight") if spec.has_projection else None,
                        proj_bn=_bn_params(store, f"{prefix}.proj.bn") if spec.has_projection else None,
                    )
                )
            self.stages.append(stage)
        self.head_weight = store.get("head.fc.weight")
        self.head_bias = store.get("head.fc.bias")

    def _check_batch(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch)
        if batch.ndim != 4 or batch.shape[1:] != (3, INPUT_SIZE, INPUT_SIZE):
            raise ValueError(
                f"expected batch of shape (N, 3, {INPUT_SIZE}, {INPUT_SIZE}), "
                f"got {tuple(batch.shape)}"
            )
        return as_f32(batch)

    def extract_features(self, batch: np.ndarray) -> np.ndarray:
        """Global-average-pool activations, one 2048-wide row per image."""
        x = self._check_batch(batch)
        x = conv2d(x, self.stem_conv, Conv2dSpec(STEM_CHANNELS, 3, 7, 7, stride=2, padding=3))
        x = relu(batchnorm_infer(x, self.stem_bn))
        x = maxpool2d(x, kernel=3, stride=2, padding=1)
        for stage in self.stages:
            for block in stage:
                x = bottleneck_forward(x, block, self.downsample_convention)
        return global_avg_pool(x)

    def predict_logits(self, batch: np.ndarray) -> np.ndarray:
        return dense(self.extract_features(batch), self.head_weight, self.head_bias)

    def predict_proba(self, batch: np.ndarray) -> np.ndarray:
        return softmax(self.predict_logits(batch))


def build_model(store: WeightStore, config: NetworkConfig | None = None) -> ResNet50:
    return ResNet50(store, config or NetworkConfig())


def synthetic_weight_store(
    config: NetworkConfig | None = None,
    seed: int = 0,
    scale: float = 0.05,
    convention: int = STRIDE_IN_3X3,
) -> WeightStore:
    """Random small weights with near-identity batch norms.

    Useful for smoke tests and demos when no converted pretrained checkpoint
    is available; activations stay finite through the full 50-layer stack.
    """
    rng = np.random.default_rng(seed)
    store = WeightStore(downsample_convention=convention)
    for name, shape in architecture_manifest(config or NetworkConfig()).items():
        if name.endswith(".gamma"):
            tensor = np.ones(shape)
        elif name.endswith((".beta", ".mean")) or name == "head.fc.bias":
            tensor = np.zeros(shape)
        elif name.endswith(".var"):
            tensor = np.ones(shape)
        else:
            tensor = rng.normal(scale=scale, size=shape)
        store.add(name, tensor)
    return store
