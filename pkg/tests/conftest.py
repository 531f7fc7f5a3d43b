import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from sentiboost.ingest import FeatureCache, ImageBuffer, encode_ppm, write_feature_cache
from sentiboost.resnet50 import synthetic_weight_store, write_weight_store


@pytest.fixture(scope="session")
def weights_file(tmp_path_factory):
    """Synthetic DFWS container on disk (full ResNet50 parameter set)."""
    path = tmp_path_factory.mktemp("weights") / "resnet50.dfws"
    path.write_bytes(write_weight_store(synthetic_weight_store(seed=7)))
    return path


@pytest.fixture(scope="session")
def image_manifest(tmp_path_factory):
    """Four small PPM images plus a path,label manifest next to them."""
    root = tmp_path_factory.mktemp("images")
    rng = np.random.default_rng(14)
    rows = ["path,label"]
    labels = ["negative", "neutral", "positive", "negative"]
    for i, label in enumerate(labels):
        pixels = rng.integers(0, 256, size=(24, 32, 3), dtype=np.uint8)
        name = f"img_{i}.ppm"
        (root / name).write_bytes(encode_ppm(ImageBuffer(pixels=pixels)))
        rows.append(f"{name},{label}")
    manifest = root / "manifest.csv"
    manifest.write_text("\n".join(rows) + "\n")
    return manifest


def make_separable_cache(n_per_class=20, seed=90):
    """2048-wide cache whose first two columns separate three blobs."""
    rng = np.random.default_rng(seed)
    values = np.zeros((3 * n_per_class, 2048), dtype=np.float32)
    centers = [(0.0, 0.0), (6.0, 0.0), (0.0, 6.0)]
    labels = np.repeat([0, 1, 2], n_per_class).astype(np.int32)
    for i, label in enumerate(labels):
        cx, cy = centers[label]
        values[i, 0] = cx + rng.normal(scale=0.4)
        values[i, 1] = cy + rng.normal(scale=0.4)
    return FeatureCache(values=values, labels=labels)


@pytest.fixture(scope="session")
def separable_cache_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cache") / "blobs.dffc"
    path.write_bytes(write_feature_cache(make_separable_cache()))
    return path
