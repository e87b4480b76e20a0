import numpy as np
import pytest

from vdfhcd.detection import (
    ConstantScoresError,
    SegmentationError,
    VdfConfig,
    compute_dis,
    fuse_levels,
    iterate_detection,
    kmeans2_threshold,
    map_to_pixels,
    otsu_threshold,
    preprocess,
    run_vdf_hcd,
    segment_scores,
    split_separation,
    with_overrides,
)
from vdfhcd.imaging import RasterImage
from vdfhcd.segmentation import SegmentMap
from vdfhcd.synthgen import SceneSpec, generate_pair

SMALL = dict(height=80, width=80)


@pytest.fixture(scope="module")
def small_pair():
    return generate_pair(SceneSpec(seed=0, **SMALL))


@pytest.fixture(scope="module")
def small_pre(small_pair):
    return preprocess(small_pair.image_a, small_pair.image_b, VdfConfig(n=200))


def vertex_truth(seg, gt):
    return np.bincount(seg.labels.ravel(), weights=gt.ravel()) / seg.sizes > 0.5


def test_otsu_examples():
    thr, changed = otsu_threshold(np.array([0, 0, 0, 1, 1, 1.0]))
    assert 0 < thr <= 1
    assert list(changed) == [3, 4, 5]
    with pytest.raises(ConstantScoresError):
        otsu_threshold(np.full(5, 2.0))


def otsu_bruteforce(scores, bins=256):
    s = (scores - scores.min()) / np.ptp(scores)
    idx = np.minimum((s * bins).astype(int), bins - 1)
    best_t, best = 0, -1.0
    for t in range(bins - 1):
        lo, hi = s[idx <= t], s[idx > t]
        if lo.size == 0 or hi.size == 0:
            continue
        # class means measured on bin centers
        c_lo = (idx[idx <= t] + 0.5) / bins
        c_hi = (idx[idx > t] + 0.5) / bins
        w0, w1 = lo.size / s.size, hi.size / s.size
        between = w0 * w1 * (c_lo.mean() - c_hi.mean()) ** 2
        if between > best + 1e-15:
            best_t, best = t, between
    return np.flatnonzero(idx > best_t)


@pytest.mark.parametrize("seed", range(4))
def test_otsu_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    scores = np.concatenate([rng.normal(0.2, 0.05, 300), rng.normal(0.7, 0.1, 60)])
    _, changed = otsu_threshold(scores)
    np.testing.assert_array_equal(changed, otsu_bruteforce(scores))


def test_kmeans_examples():
    _, changed = kmeans2_threshold(np.array([0, 0, 10, 10.0]))
    assert list(changed) == [2, 3]
    _, changed = kmeans2_threshold(np.full(4, 3.0))
    assert changed.size == 0


@pytest.mark.parametrize("seed", range(4))
def test_kmeans_matches_best_split(seed):
    rng = np.random.default_rng(seed)
    scores = np.concatenate([rng.normal(0, 1, 80), rng.normal(6, 1.5, 30)])
    _, changed = kmeans2_threshold(scores, seed=seed)
    order = np.sort(scores)
    sse = [((order[:i] - order[:i].mean()) ** 2).sum() + ((order[i:] - order[i:].mean()) ** 2).sum()
           for i in range(1, order.size)]
    cut = order[int(np.argmin(sse)) + 1]
    np.testing.assert_array_equal(changed, np.flatnonzero(scores >= cut))


def test_separation_guard():
    rng = np.random.default_rng(0)
    noise = rng.normal(0, 1, 500)
    _, changed = segment_scores(noise, "otsu", min_separation=5.0)
    assert changed.size == 0
    assert segment_scores(noise, "otsu")[1].size > 0
    signal = np.concatenate([noise, rng.normal(20, 1, 40)])
    _, changed = segment_scores(signal, "otsu", min_separation=5.0)
    np.testing.assert_array_equal(changed, np.arange(500, 540))
    assert split_separation(signal, changed) > 15
    assert split_separation(signal, []) == 0.0


def test_constant_scores_segment_to_empty():
    assert segment_scores(np.zeros(6), "otsu")[1].size == 0


def test_fuse_levels():
    fused = fuse_levels(np.array([-1.0, 0.0, 2.0]), np.array([0.0, 4.0, 4.0]))
    # clamped and scaled: [0, 0, 1] + [0, 1, 1] = [0, 1, 2]
    np.testing.assert_allclose(fused, [0, 0.5, 1])
    assert fused.min() == 0 and fused.max() == 1


def test_map_to_pixels():
    seg = SegmentMap(np.array([[0, 0, 1], [2, 2, 1]]))
    assert map_to_pixels(seg, np.arange(3)).all()
    np.testing.assert_array_equal(map_to_pixels(seg, {1}), [[False, False, True], [False, False, True]])
    np.testing.assert_array_equal(map_to_pixels(seg, np.array([], dtype=int)), np.zeros((2, 3), bool))
    singles = SegmentMap(np.arange(6).reshape(2, 3))
    vals = np.linspace(0, 1, 6)
    np.testing.assert_array_equal(map_to_pixels(singles, vals), vals.reshape(2, 3))
    with pytest.raises(ValueError):
        map_to_pixels(seg, np.ones(4))


def test_map_to_pixels_matches_pixel_loop(rng):
    labels = rng.integers(0, 5, size=(7, 9))
    labels[0, :5] = np.arange(5)
    seg = SegmentMap(labels)
    vals = rng.random(5)
    out = map_to_pixels(seg, vals)
    for (i, j), lab in np.ndenumerate(labels):
        assert out[i, j] == vals[lab]


def test_compute_dis_zero_difference(small_pair):
    img = small_pair.image_a
    pre = preprocess(img, img, VdfConfig(n=150))
    lv = compute_dis(pre.X, pre.Y, pre.g_t1, pre.g_t2, np.arange(pre.seg.segment_count), VdfConfig(n=150))
    assert np.abs(lv.forward).max() < 1e-12 and np.abs(lv.backward).max() < 1e-12


def test_identical_images_give_empty_change(small_pair):
    res = run_vdf_hcd(small_pair.image_a, small_pair.image_a, VdfConfig(n=150))
    assert res.changed.size == 0 and not res.change_map.any()


def test_first_iteration_is_unrestricted(small_pre):
    cfg = VdfConfig(n=200)
    hist = iterate_detection(small_pre, cfg)
    from vdfhcd.filtering import change_level
    from vdfhcd.graph import to_shift_operator

    filt = cfg.filter()
    s1, s2 = to_shift_operator(small_pre.g_t1), to_shift_operator(small_pre.g_t2)
    fx = change_level(s1, s2, small_pre.dist_x, filt)
    fy = change_level(s2, s1, small_pre.dist_y, filt)
    np.testing.assert_allclose(hist[0].levels.forward, fx, atol=1e-12)
    np.testing.assert_allclose(hist[0].levels.backward, fy, atol=1e-12)


def test_changed_vertices_score_higher(small_pair, small_pre):
    n = small_pre.seg.segment_count
    lv = compute_dis(small_pre.X, small_pre.Y, small_pre.g_t1, small_pre.g_t2, np.arange(n), VdfConfig(n=200))
    truth = vertex_truth(small_pre.seg, small_pair.gt)
    assert lv.fused[truth].mean() >= 3 * lv.fused[~truth].mean()


def test_state_partition_and_early_stop(small_pre):
    cfg = VdfConfig(n=200, iterations=10)
    hist = iterate_detection(small_pre, cfg)
    n = small_pre.seg.segment_count
    for st in hist:
        assert np.union1d(st.changed, st.unchanged).size == n
        assert np.intersect1d(st.changed, st.unchanged).size == 0
    last = hist[-1]
    assert last.converged
    # one more pass from the converged set reproduces it
    again = compute_dis(small_pre.X, small_pre.Y, small_pre.g_t1, small_pre.g_t2, last.unchanged, cfg)
    _, changed = segment_scores(again.fused, cfg.threshold, cfg.seed, cfg.min_separation)
    np.testing.assert_array_equal(changed, last.changed)


def test_collapse_guard_keeps_previous_sets(small_pre):
    cfg = VdfConfig(n=200, max_changed_fraction=0.0)
    hist = iterate_detection(small_pre, cfg)
    assert len(hist) == 1 and hist[0].collapsed
    assert hist[0].changed.size == 0


def test_deterministic(small_pair):
    cfg = VdfConfig(n=200)
    a = run_vdf_hcd(small_pair.image_a, small_pair.image_b, cfg)
    b = run_vdf_hcd(small_pair.image_a, small_pair.image_b, cfg)
    np.testing.assert_array_equal(a.levels.fused, b.levels.fused)
    np.testing.assert_array_equal(a.change_map, b.change_map)


def test_patch_mode_runs(small_pair):
    res = run_vdf_hcd(small_pair.image_a, small_pair.image_b, VdfConfig(segmentation="patch", patch_size=8))
    assert res.seg.segment_count == 100
    assert res.change_map.shape == small_pair.gt.shape


def test_degenerate_segmentation():
    img = RasterImage(np.random.default_rng(0).random((8, 8)))
    with pytest.raises(SegmentationError, match="lower K"):
        run_vdf_hcd(img, img, VdfConfig(segmentation="patch", patch_size=4, k=5))


def test_config_validation_and_overrides():
    with pytest.raises(ValueError):
        VdfConfig(threshold="median")
    with pytest.raises(ValueError):
        VdfConfig(operator="bogus")
    cfg = with_overrides(VdfConfig(), order=2, k=None)
    assert cfg.order == 2 and cfg.k is None
    assert VdfConfig().resolved_k(1000) == 31
    with pytest.raises(ValueError):
        run_vdf_hcd(RasterImage(np.zeros((4, 4))), RasterImage(np.zeros((4, 5))), VdfConfig())
