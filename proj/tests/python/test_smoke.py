import itertools
import math

import numpy as np
import pytest

import pycohere


def brute_force_cost(cost):
    n = cost.shape[0]
    return min(sum(cost[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


def test_hungarian_matches_brute_force():
    rng = np.random.default_rng(3)
    for n in range(2, 6):
        cost = rng.integers(0, 50, size=(n, n)).astype(float)
        cols, total = pycohere.hungarian(cost)
        assert sorted(cols) == list(range(n))
        assert total == brute_force_cost(cost)
        assert total == sum(cost[i, c] for i, c in enumerate(cols))


def test_hdbscan_separates_two_blobs():
    rng = np.random.default_rng(4)
    a = rng.normal(0.0, 0.1, size=(80, 3))
    b = rng.normal(0.0, 0.1, size=(80, 3)) + np.array([5.0, 0.0, 0.0])
    labels = np.array(pycohere.hdbscan(np.vstack([a, b])))
    assert len(set(labels[:80])) == 1
    assert len(set(labels[80:])) == 1
    assert labels[0] != labels[80]
    assert (labels >= 0).all()


def test_merge_depth_example():
    merged = pycohere.merge_depth([0.5, 0.5], 1)
    assert merged[0] == pytest.approx(2 / 3, abs=1e-15)
    assert merged[1] == pytest.approx(1 / 3, abs=1e-15)


def test_merge_depth_rejects_bad_bin():
    with pytest.raises(ValueError, match="OutOfBounds|BadIndex"):
        pycohere.merge_depth([0.5, 0.5], 3)


def test_transfer_center_follows_ego_motion():
    prev = np.eye(4)
    curr = np.eye(4)
    curr[0, 3] = 1.0  # the ego advanced one meter along x
    moved = pycohere.transfer_center(np.array([10.0, 2.0, 1.0]), prev, curr)
    assert np.allclose(moved, [9.0, 2.0, 1.0], atol=1e-12)


def test_ema_closed_form():
    theta = [1.0, -2.0, 0.5]
    target = [0.0, 0.0, 0.0]
    for _ in range(200):
        target = pycohere.ema_update(target, theta, 0.99)
    gap = math.dist(target, theta) / math.dist([0.0, 0.0, 0.0], theta)
    assert gap == pytest.approx(0.99**200, abs=1e-10)


def test_contrastive_gradient_against_differences():
    rng = np.random.default_rng(5)
    online = rng.normal(size=(6, 8))
    instance_of = [0, 0, 1, 1, 2, 2]
    targets = rng.normal(size=(3, 8))
    targets /= np.linalg.norm(targets, axis=1, keepdims=True)
    background = rng.normal(size=(4, 8))
    background /= np.linalg.norm(background, axis=1, keepdims=True)
    loss, grad = pycohere.contrastive_loss(online, instance_of, targets, background, 0.1)
    assert np.isfinite(loss)
    h = 1e-6
    numeric = np.zeros_like(online)
    for idx in np.ndindex(online.shape):
        up = online.copy()
        down = online.copy()
        up[idx] += h
        down[idx] -= h
        numeric[idx] = (pycohere.contrastive_loss(up, instance_of, targets, background, 0.1)[0]
                        - pycohere.contrastive_loss(down, instance_of, targets, background, 0.1)[0]) / (2 * h)
    scale = max(np.abs(grad).max(), np.abs(numeric).max())
    assert np.abs(grad - numeric).max() <= 1e-5 * scale


def test_gradient_report():
    passed, err = pycohere.check_gradients(1, 10)
    assert passed
    assert err <= 1e-5


def test_default_scene_tracks_cleanly():
    out = pycohere.track_default_scene(seed=42, frames=6)
    metrics = out["metrics"]
    assert metrics["purity"] == 1.0
    assert metrics["id_switches"] == 0
    assert metrics["recall"] >= 0.95
    again = pycohere.track_default_scene(seed=42, frames=6, threads=2)
    assert again["tracks"] == out["tracks"]
