"""Acceptance suite: one test per exit criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines and timings. Criterion 10 (full-scale reproduction of published
accuracies) needs external assets and is skipped unless SENTIBOOST_ASSETS is
set; its deviation is reported, never asserted.
"""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from sentiboost.cli import main as cli_main
from sentiboost.gbm import (
    GBMConfig,
    Leaf,
    Split,
    fit,
    grow_tree,
    load_model,
    predict_margin,
    save_model,
    softmax_grad_hess,
)
from sentiboost.ingest import FeatureCache, read_feature_cache, write_feature_cache
from sentiboost.metrics import (
    auc_ovr,
    cross_validate,
    roc_curve_ovr,
    stratified_kfold,
    trapezoid_area,
)
from sentiboost.resnet50 import (
    NetworkConfig,
    build_model,
    load_weights,
    synthetic_weight_store,
    validate_architecture,
    write_weight_store,
)
from sentiboost.tensor_ops import Conv2dSpec, conv2d, conv_out_extent

from oracles import (
    auc_pairwise,
    best_split_enumeration,
    conv2d_reference,
    grad_hess_finite_diff,
    multiclass_log_loss,
)


def _report_pass(criterion: int, detail: str, elapsed: float):
    print(f"\n[PASS] criterion {criterion}: {detail} ({elapsed:.1f}s)")


@pytest.fixture(scope="module")
def synth_model():
    store = synthetic_weight_store(seed=7)
    return store, build_model(store)


def test_c01_convolution_matches_naive_loops():
    start = time.time()
    rng = np.random.default_rng(101)
    checked = 0
    while checked < 50:
        n = int(rng.integers(1, 3))
        cin = int(rng.integers(1, 4))
        cout = int(rng.integers(1, 5))
        kh = int(rng.integers(1, 6))
        kw = int(rng.integers(1, 6))
        h = int(rng.integers(1, 17))
        w = int(rng.integers(1, 17))
        stride = 1 if checked % 2 == 0 else int(rng.integers(1, 4))
        padding = int(rng.integers(0, 3))
        if conv_out_extent(h, kh, stride, padding) < 1:
            continue
        if conv_out_extent(w, kw, stride, padding) < 1:
            continue
        x = rng.normal(size=(n, cin, h, w)).astype(np.float32)
        weight = rng.normal(size=(cout, cin, kh, kw)).astype(np.float32)
        bias = rng.normal(size=cout).astype(np.float32) if rng.integers(0, 2) else None
        spec = Conv2dSpec(cout, cin, kh, kw, stride=stride, padding=padding,
                          has_bias=bias is not None)
        out = conv2d(x, weight, spec, bias=bias)
        ref = conv2d_reference(x, weight, stride=stride, padding=padding, bias=bias)
        assert out.shape == ref.shape
        assert np.max(np.abs(out - ref)) <= 1e-5
        checked += 1
    elapsed = time.time() - start
    assert elapsed < 30.0
    _report_pass(1, "conv2d matched the six-loop reference on 50 random draws within 1e-5", elapsed)


def test_c02_gradient_hessian_finite_differences():
    start = time.time()
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(3, 12))
        margins = rng.normal(scale=0.8, size=(n, 3))
        labels = rng.integers(0, 3, size=n)
        g, h = softmax_grad_hess(margins, labels)
        g_fd, h_fd = grad_hess_finite_diff(margins, labels, step=1e-3)
        worst = max(
            worst,
            float(np.max(np.abs(g - g_fd) / np.maximum(np.abs(g_fd), 1e-12))),
            float(np.max(np.abs(h - h_fd) / np.maximum(np.abs(h_fd), 1e-12))),
        )
    elapsed = time.time() - start
    assert worst <= 1e-4
    assert elapsed < 5.0
    _report_pass(2, f"grad/hess matched finite differences on 20 matrices (worst rel {worst:.2e})", elapsed)


def test_c03_depth_one_split_matches_enumeration():
    start = time.time()
    rng = np.random.default_rng(103)
    for trial in range(100):
        n = int(rng.integers(2, 51))
        d = int(rng.integers(1, 11))
        X = rng.normal(size=(n, d)).astype(np.float32)
        if trial % 4 == 0:
            X = np.round(X)  # heavy ties
        g = rng.normal(size=n)
        h = rng.uniform(0.0, 2.0, size=n)
        cfg = GBMConfig(
            lambda_l2=float(rng.choice([0.0, 1.0])),
            alpha_l1=float(rng.choice([0.0, 0.2])),
            gamma_min_gain=float(rng.choice([0.0, 0.05])),
            min_child_weight=float(rng.choice([0.0, 1.0])),
            max_depth=1,
        )
        tree = grow_tree(X, g, h, cfg)
        expected = best_split_enumeration(X, g, h, cfg)
        if expected is None:
            assert isinstance(tree, Leaf), f"trial {trial}: expected no split"
            continue
        feature, threshold, _, wl, wr = expected
        assert isinstance(tree, Split), f"trial {trial}: expected a split"
        assert tree.feature_index == feature
        assert tree.threshold == threshold
        assert tree.left == Leaf(weight=float(np.float32(wl)))
        assert tree.right == Leaf(weight=float(np.float32(wr)))
    elapsed = time.time() - start
    assert elapsed < 30.0
    _report_pass(3, "depth-1 trees matched exhaustive threshold enumeration on 100 instances", elapsed)


def test_c04_training_loss_non_increasing():
    start = time.time()
    rng = np.random.default_rng(104)
    config = GBMConfig(n_rounds=50)
    for trial in range(20):
        n = int(rng.integers(30, 301))
        d = int(rng.integers(3, 13))
        X = rng.normal(size=(n, d)).astype(np.float32)
        y = rng.integers(0, 3, size=n)
        model = fit(X, y, config)
        losses = np.array(model.train_loss)
        assert len(losses) == 51
        worst_rise = float(np.max(np.diff(losses)))
        assert worst_rise <= 1e-7, f"trial {trial}: loss rose by {worst_rise}"
        # spot-check the recorded history against independent recomputation
        margins = predict_margin(model, X, num_rounds=50)
        assert multiclass_log_loss(margins, y) == pytest.approx(losses[-1], abs=1e-9)
    elapsed = time.time() - start
    assert elapsed < 60.0
    _report_pass(4, "training log loss non-increasing over 50 rounds on 20 datasets", elapsed)


def test_c05_synthetic_end_to_end_cv_accuracy():
    start = time.time()
    rng = np.random.default_rng(105)
    centers = np.zeros((3, 16))
    centers[1, 0] = 4.0  # pairwise separation 4 sigma (unit-variance blobs)
    centers[2, 1] = 4.0
    X = np.concatenate([rng.normal(c, 1.0, size=(100, 16)) for c in centers]).astype(np.float32)
    y = np.repeat([0, 1, 2], 100)
    result = cross_validate(X, y, GBMConfig(), k=10, seed=0, dataset="blobs-4sigma")
    accuracy = result.mean["accuracy"]
    elapsed = time.time() - start
    assert accuracy >= 0.95, f"10-fold CV accuracy {accuracy:.3f} below the 0.95 floor"
    assert elapsed < 60.0
    _report_pass(5, f"Gaussian-blob 10-fold CV accuracy {accuracy:.3f} >= 0.95 at defaults", elapsed)


def test_c06_auc_matches_pairwise_counting():
    start = time.time()
    rng = np.random.default_rng(106)
    for trial in range(200):
        n = int(rng.integers(2, 201))
        if trial % 2 == 0:
            scores = rng.choice(np.linspace(0.0, 1.0, 7), size=n)  # guaranteed ties
        else:
            scores = rng.normal(size=n)
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[rng.integers(0, n)] = 1 - labels[0]
        expected = auc_pairwise(scores, labels == 1)
        assert auc_ovr(scores, labels, 1) == expected, f"trial {trial}"
        curve = roc_curve_ovr(scores, labels, 1)
        assert abs(trapezoid_area(curve) - expected) <= 1e-9, f"trial {trial}"
    elapsed = time.time() - start
    _report_pass(6, "AUC matched brute-force pair counting exactly on 200 score sets", elapsed)


def test_c07_stratification_arithmetic():
    start = time.time()
    labels = np.concatenate([np.zeros(520), np.ones(90), np.full(122, 2)]).astype(int)
    folds = stratified_kfold(labels, k=10, seed=0)
    for f in range(10):
        in_fold = labels[folds == f]
        assert (in_fold == 0).sum() == 52
        assert (in_fold == 1).sum() == 9
        assert (in_fold == 2).sum() in (12, 13)

    rng = np.random.default_rng(107)
    for _ in range(100):
        k = int(rng.integers(2, 11))
        n = int(rng.integers(k, 400))
        labels = rng.integers(0, int(rng.integers(2, 6)), size=n)
        folds = stratified_kfold(labels, k=k, seed=int(rng.integers(0, 10_000)))
        assert folds.shape == (n,)
        assert set(np.unique(folds)) <= set(range(k))
        for cls in np.unique(labels):
            per_fold = np.array([((folds == f) & (labels == cls)).sum() for f in range(k)])
            assert per_fold.sum() == (labels == cls).sum()
            assert per_fold.max() - per_fold.min() <= 1
    elapsed = time.time() - start
    _report_pass(7, "fold counts exact for (520, 90, 122) and spread <= 1 on 100 random draws", elapsed)


def test_c08_architecture_audit(synth_model):
    start = time.time()
    store, model = synth_model
    report = validate_architecture(store, NetworkConfig())
    assert report.ok
    assert report.stage_conv_counts == (9, 12, 18, 9)
    rng = np.random.default_rng(108)
    for batch_size in (1, 3):
        batch = rng.normal(size=(batch_size, 3, 224, 224)).astype(np.float32)
        feats = model.extract_features(batch)
        assert feats.shape == (batch_size, 2048)
    elapsed = time.time() - start
    _report_pass(8, "stage conv counts (9, 12, 18, 9); features are exactly 2048-wide", elapsed)


def test_c09_determinism_and_round_trips(tmp_path, weights_file, image_manifest):
    start = time.time()

    # extract twice -> byte-identical DFFC
    caches = []
    for name in ("a.dffc", "b.dffc"):
        out = tmp_path / name
        assert cli_main(
            ["extract", "--weights", str(weights_file), "--manifest", str(image_manifest),
             "--cache", str(out), "--seed", "5"]
        ) == 0
        caches.append(out.read_bytes())
    assert caches[0] == caches[1]

    # train twice with a fixed seed -> byte-identical DFGB
    rng = np.random.default_rng(109)
    values = np.zeros((30, 2048), dtype=np.float32)
    values[:, :4] = rng.normal(size=(30, 4))
    labels = rng.integers(0, 3, size=30).astype(np.int32)
    cache_path = tmp_path / "train.dffc"
    cache_path.write_bytes(write_feature_cache(FeatureCache(values=values, labels=labels)))
    models = []
    for name in ("m1.dfgb", "m2.dfgb"):
        out = tmp_path / name
        assert cli_main(
            ["train", "--cache", str(cache_path), "--model", str(out),
             "--n-rounds", "3", "--seed", "5"]
        ) == 0
        models.append(out.read_bytes())
    assert models[0] == models[1]

    # container round trips are bit-exact
    store = synthetic_weight_store(seed=3)
    blob = write_weight_store(store)
    assert write_weight_store(load_weights(blob)) == blob

    cache_blob = cache_path.read_bytes()
    assert write_feature_cache(read_feature_cache(cache_blob)) == cache_blob

    model = fit(values[:, :4], labels, GBMConfig(n_rounds=3))
    model_blob = save_model(model)
    assert save_model(load_model(model_blob)) == model_blob
    probe = rng.normal(size=(7, 4)).astype(np.float32)
    assert (
        predict_margin(load_model(model_blob), probe).tobytes()
        == predict_margin(model, probe).tobytes()
    )
    elapsed = time.time() - start
    _report_pass(9, "extract/train reruns byte-identical; DFWS/DFFC/DFGB round trips bit-exact", elapsed)


@pytest.mark.skipif(
    "SENTIBOOST_ASSETS" not in os.environ,
    reason="full-scale check needs converted pretrained weights and dataset manifests "
    "(set SENTIBOOST_ASSETS to a directory with weights.dfws and <name>.csv manifests)",
)
def test_c10_optional_published_accuracy_reproduction(tmp_path):
    """Asset-gated: reports deviation from the published accuracies, never fails on it."""
    assets = Path(os.environ["SENTIBOOST_ASSETS"])
    weights = assets / "weights.dfws"
    published = {"gaped": 0.98, "combined": 0.86}
    for name, target in published.items():
        manifest = assets / f"{name}.csv"
        if not manifest.exists():
            print(f"\n[INFO] criterion 10: manifest {manifest} not provided; skipping {name}")
            continue
        cache = tmp_path / f"{name}.dffc"
        report_path = tmp_path / f"{name}.json"
        assert cli_main(
            ["extract", "--weights", str(weights), "--manifest", str(manifest),
             "--cache", str(cache)]
        ) == 0
        assert cli_main(
            ["cv", "--cache", str(cache), "--report", str(report_path),
             "--k-folds", "10", "--dataset", name, "--no-figures"]
        ) == 0
        accuracy = json.loads(report_path.read_text())["accuracy"]
        deviation = (accuracy - target) * 100
        within = "within" if abs(deviation) <= 5 else "OUTSIDE"
        print(
            f"\n[INFO] criterion 10: {name} 10-fold CV accuracy {accuracy:.3f} vs published "
            f"{target:.2f} ({deviation:+.1f} points, {within} the +/-5 point band)"
        )
