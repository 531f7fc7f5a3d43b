"""Tests for manifests, PPM decoding, preprocessing, and the feature cache."""

import struct

import numpy as np
import pytest

from sentiboost.errors import (
    BadMagicError,
    FormatError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from sentiboost.ingest import (
    DFFC_MAGIC,
    FeatureCache,
    ImageBuffer,
    ManifestEntry,
    PreprocessConfig,
    dataset_stats,
    decode_ppm,
    encode_ppm,
    load_manifest,
    normalize,
    parse_manifest,
    preprocess_image,
    read_feature_cache,
    resize_bilinear,
    write_feature_cache,
)
from sentiboost.resnet50 import SentimentLabel


def synth_manifest(negative, neutral, positive):
    lines = ["path,label"]
    for i in range(negative):
        lines.append(f"neg_{i}.ppm,negative")
    for i in range(neutral):
        lines.append(f"neu_{i}.ppm,neutral")
    for i in range(positive):
        lines.append(f"pos_{i}.ppm,positive")
    return "\n".join(lines) + "\n"


class TestManifest:
    def test_smallest_valid(self):
        entries = parse_manifest("path,label\na.ppm,positive\n")
        assert entries == [ManifestEntry("a.ppm", SentimentLabel.POSITIVE)]

    def test_case_insensitive_label(self):
        entries = parse_manifest("path,label\na.ppm,POSITIVE\n")
        assert entries[0].label is SentimentLabel.POSITIVE

    def test_unknown_label_names_line(self):
        with pytest.raises(FormatError, match="line 2"):
            parse_manifest("path,label\na.ppm,happy\n")

    def test_missing_column_names_line(self):
        with pytest.raises(FormatError, match="line 3"):
            parse_manifest("path,label\na.ppm,negative\nb.ppm\n")

    def test_blank_lines_ignored(self):
        entries = parse_manifest("path,label\n\na.ppm,negative\n\n\nb.ppm,neutral\n")
        assert len(entries) == 2

    def test_bad_header(self):
        with pytest.raises(FormatError, match="header"):
            parse_manifest("file,sentiment\na.ppm,negative\n")

    def test_empty_document(self):
        with pytest.raises(FormatError, match="empty"):
            parse_manifest("")

    def test_relative_paths_resolved(self, tmp_path):
        manifest = tmp_path / "data" / "set.csv"
        manifest.parent.mkdir()
        manifest.write_text("path,label\nimg/a.ppm,negative\n")
        entries = load_manifest(manifest)
        assert entries[0].path == str(tmp_path / "data" / "img" / "a.ppm")


class TestDatasetStats:
    def test_first_dataset_counts(self):
        stats = dataset_stats(parse_manifest(synth_manifest(520, 90, 122)))
        assert (stats.negative, stats.neutral, stats.positive) == (520, 90, 122)
        assert stats.total == 732

    def test_second_dataset_counts(self):
        stats = dataset_stats(parse_manifest(synth_manifest(1912, 2023, 7780)))
        assert (stats.negative, stats.neutral, stats.positive) == (1912, 2023, 7780)
        assert stats.total == 11715

    def test_combined_totals(self):
        combined = dataset_stats(
            parse_manifest(synth_manifest(520 + 1912, 90 + 2023, 122 + 7780))
        )
        assert (combined.negative, combined.neutral, combined.positive) == (2432, 2113, 7902)
        assert combined.total == 12447

    def test_empty_manifest_all_zero(self):
        stats = dataset_stats([])
        assert (stats.negative, stats.neutral, stats.positive, stats.total) == (0, 0, 0, 0)

    def test_total_equals_entry_count(self):
        entries = parse_manifest(synth_manifest(7, 3, 5))
        assert dataset_stats(entries).total == len(entries)


class TestPpm:
    def test_single_pixel(self):
        img = decode_ppm(b"P6\n1 1\n255\n" + bytes([255, 0, 0]))
        assert (img.width, img.height) == (1, 1)
        np.testing.assert_array_equal(img.pixels[0, 0], [255, 0, 0])

    def test_header_comments_skipped(self):
        data = b"P6\n# a comment\n2 1\n# another\n255\n" + bytes([1, 2, 3, 4, 5, 6])
        img = decode_ppm(data)
        assert (img.width, img.height) == (2, 1)
        np.testing.assert_array_equal(img.pixels[0, 1], [4, 5, 6])

    def test_truncated_payload(self):
        with pytest.raises(TruncatedPayloadError, match="payload short"):
            decode_ppm(b"P6\n2 2\n255\n" + bytes(5))

    def test_wrong_magic(self):
        with pytest.raises(BadMagicError):
            decode_ppm(b"P5\n1 1\n255\n\x00")

    def test_unsupported_maxval(self):
        with pytest.raises(FormatError, match="maxval"):
            decode_ppm(b"P6\n1 1\n65535\n" + bytes(6))

    def test_encode_decode_round_trip(self):
        rng = np.random.default_rng(80)
        pixels = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
        img = ImageBuffer(pixels=pixels)
        decoded = decode_ppm(encode_ppm(img))
        np.testing.assert_array_equal(decoded.pixels, pixels)


class TestResize:
    def test_equal_size_is_identity(self):
        rng = np.random.default_rng(81)
        pixels = rng.integers(0, 256, size=(224, 224, 3), dtype=np.uint8)
        out = resize_bilinear(ImageBuffer(pixels=pixels))
        assert out.pixels.tobytes() == pixels.tobytes()

    def test_two_by_two_average(self):
        pixels = np.zeros((2, 2, 3), dtype=np.uint8)
        pixels[..., 0] = [[10, 20], [30, 40]]
        out = resize_bilinear(ImageBuffer(pixels=pixels), target=(1, 1))
        assert out.pixels[0, 0, 0] == 25

    def test_constant_image_stays_constant(self):
        for size in ((3, 5), (100, 40), (300, 300)):
            pixels = np.full((*size, 3), 77, dtype=np.uint8)
            out = resize_bilinear(ImageBuffer(pixels=pixels))
            assert (out.height, out.width) == (224, 224)
            assert np.all(out.pixels == 77)

    def test_values_stay_in_source_range(self):
        rng = np.random.default_rng(82)
        pixels = rng.integers(40, 200, size=(17, 31, 3), dtype=np.uint8)
        out = resize_bilinear(ImageBuffer(pixels=pixels))
        for c in range(3):
            assert out.pixels[..., c].min() >= pixels[..., c].min()
            assert out.pixels[..., c].max() <= pixels[..., c].max()

    def test_deterministic(self):
        rng = np.random.default_rng(83)
        pixels = rng.integers(0, 256, size=(50, 90, 3), dtype=np.uint8)
        a = resize_bilinear(ImageBuffer(pixels=pixels))
        b = resize_bilinear(ImageBuffer(pixels=pixels))
        assert a.pixels.tobytes() == b.pixels.tobytes()


class TestNormalize:
    def test_unit_scaling(self):
        pixels = np.full((224, 224, 3), 255, dtype=np.uint8)
        cfg = PreprocessConfig(channel_mean=(0.0, 0.0, 0.0), channel_std=(1.0, 1.0, 1.0))
        tensor = normalize(ImageBuffer(pixels=pixels), cfg)
        assert tensor.shape == (3, 224, 224)
        np.testing.assert_allclose(tensor, 1.0)

    def test_mean_pixel_maps_to_zero(self):
        cfg = PreprocessConfig(channel_mean=(0.4, 0.5, 0.6), channel_std=(0.2, 0.2, 0.2))
        pixels = np.zeros((224, 224, 3), dtype=np.uint8)
        pixels[..., 0] = 102  # 255 * 0.4
        tensor = normalize(ImageBuffer(pixels=pixels), cfg)
        np.testing.assert_allclose(tensor[0], 0.0, atol=1e-6)

    def test_inverse_transform_recovers_scaled_pixels(self):
        rng = np.random.default_rng(84)
        pixels = rng.integers(0, 256, size=(224, 224, 3), dtype=np.uint8)
        cfg = PreprocessConfig()
        tensor = normalize(ImageBuffer(pixels=pixels), cfg)
        mean = np.asarray(cfg.channel_mean, dtype=np.float64)[:, None, None]
        std = np.asarray(cfg.channel_std, dtype=np.float64)[:, None, None]
        recovered = tensor.astype(np.float64) * std + mean
        expected = pixels.astype(np.float64).transpose(2, 0, 1) / 255.0
        np.testing.assert_allclose(recovered, expected, atol=1e-6)

    def test_wrong_size_rejected(self):
        pixels = np.zeros((100, 100, 3), dtype=np.uint8)
        with pytest.raises(ValueError, match="224"):
            normalize(ImageBuffer(pixels=pixels))

    def test_preprocess_chain_deterministic(self):
        rng = np.random.default_rng(85)
        pixels = rng.integers(0, 256, size=(60, 80, 3), dtype=np.uint8)
        blob = encode_ppm(ImageBuffer(pixels=pixels))
        a = preprocess_image(blob)
        b = preprocess_image(blob)
        assert a.tobytes() == b.tobytes()
        assert a.shape == (3, 224, 224)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="fixed"):
            PreprocessConfig(target_size=(128, 128))
        with pytest.raises(ValueError, match="positive"):
            PreprocessConfig(channel_std=(0.1, 0.0, 0.1))


class TestFeatureCache:
    def test_round_trip_bit_exact(self):
        rng = np.random.default_rng(86)
        cache = FeatureCache(
            values=rng.normal(size=(5, 2048)).astype(np.float32),
            labels=rng.integers(0, 3, size=5).astype(np.int32),
        )
        loaded = read_feature_cache(write_feature_cache(cache))
        assert loaded.values.tobytes() == cache.values.tobytes()
        assert loaded.labels.tobytes() == cache.labels.tobytes()

    def test_declared_rows_exceed_payload(self):
        header = DFFC_MAGIC + struct.pack("<I", 1) + struct.pack("<Q", 100) + struct.pack("<Q", 2048)
        with pytest.raises(TruncatedPayloadError):
            read_feature_cache(header + bytes(64))

    def test_wrong_column_count_rejected(self):
        header = DFFC_MAGIC + struct.pack("<I", 1) + struct.pack("<Q", 1) + struct.pack("<Q", 16)
        with pytest.raises(FormatError, match="2048"):
            read_feature_cache(header + bytes(4 + 64))

    def test_bad_magic(self):
        with pytest.raises(BadMagicError):
            read_feature_cache(b"XXXX" + bytes(20))

    def test_unsupported_version(self):
        blob = DFFC_MAGIC + struct.pack("<I", 2) + struct.pack("<Q", 0) + struct.pack("<Q", 2048)
        with pytest.raises(UnsupportedVersionError):
            read_feature_cache(blob)

    def test_trailing_bytes(self):
        cache = FeatureCache(values=np.zeros((1, 2048), dtype=np.float32), labels=np.zeros(1, dtype=np.int32))
        with pytest.raises(FormatError, match="trailing"):
            read_feature_cache(write_feature_cache(cache) + b"\x00")

    def test_invariant_enforced_on_construction(self):
        with pytest.raises(FormatError, match="2048"):
            FeatureCache(values=np.zeros((2, 16), dtype=np.float32), labels=np.zeros(2, dtype=np.int32))
        with pytest.raises(FormatError, match="label count"):
            FeatureCache(values=np.zeros((2, 2048), dtype=np.float32), labels=np.zeros(3, dtype=np.int32))
