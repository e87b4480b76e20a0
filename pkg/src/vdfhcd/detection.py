"""Iterative vertex-domain-filter change detection on an image pair.

Each round builds the change levels of both images, fuses and thresholds
them, and removes the vertices found changed from the neighbor sets of the
next round's graphs so that changed areas stop feeding their neighbors.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .filtering import PolynomialFilter, change_level, fit_lowpass_coeffs
from .graph import KnnGraph, OperatorKind, build_knn_graph, distance_matrix, restrict_graph, to_shift_operator
from .imaging import RasterImage, normalize_channels
from .segmentation import SegmentMap, cosegment_intersect, extract_features, slic_segment, tile_patches

logger = logging.getLogger(__name__)


class ConstantScoresError(ValueError):
    """Raised by Otsu thresholding when every score is equal."""


class SegmentationError(ValueError):
    pass


@dataclass(frozen=True)
class VdfConfig:
    """Parameters of a detection run.

    ``k=None`` means ``floor(sqrt(N))`` for the vertex count actually produced
    by the segmentation.
    """

    n: int = 5000
    k: int | None = None
    order: int = 4
    cutoff: float = 0.9
    iterations: int = 5
    operator: str = "wavg"
    weight_scheme: str = "binary"
    segmentation: str = "superpixel"
    patch_size: int = 8
    threshold: str = "otsu"
    compactness: float = 10.0
    min_segment_size: int = 10
    grid_points: int = 201
    max_changed_fraction: float = 0.5
    min_separation: float = 5.0
    isolated: str = "keep"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.segmentation not in ("superpixel", "patch"):
            raise ValueError(f"unknown segmentation mode {self.segmentation!r}")
        if self.threshold not in ("otsu", "kmeans", "kmeans2"):
            raise ValueError(f"unknown threshold method {self.threshold!r}")
        if self.min_separation < 0:
            raise ValueError("min_separation must be >= 0")
        if self.isolated not in ("self-loop", "keep", "refill"):
            raise ValueError(f"unknown isolated-vertex rule {self.isolated!r}")
        OperatorKind.parse(self.operator)

    def resolved_k(self, n_vertices: int) -> int:
        return self.k if self.k is not None else max(1, math.isqrt(n_vertices))

    def filter(self) -> PolynomialFilter:
        return fit_lowpass_coeffs(self.order, self.cutoff, self.grid_points)


@dataclass
class ChangeLevels:
    forward: np.ndarray
    backward: np.ndarray
    fused: np.ndarray


@dataclass
class DetectionState:
    iteration: int
    unchanged: np.ndarray
    changed: np.ndarray
    levels: ChangeLevels
    threshold: float
    converged: bool = False
    collapsed: bool = False


@dataclass
class Preprocessed:
    seg: SegmentMap
    X: np.ndarray
    Y: np.ndarray
    dist_x: np.ndarray
    dist_y: np.ndarray
    g_t1: KnnGraph
    g_t2: KnnGraph


@dataclass
class DetectionResult:
    levels: ChangeLevels
    change_map: np.ndarray
    history: list = field(default_factory=list)
    seg: SegmentMap | None = None
    config: VdfConfig | None = None

    @property
    def changed(self) -> np.ndarray:
        return self.history[-1].changed

    def pixel_levels(self) -> dict:
        return {
            "fX": map_to_pixels(self.seg, self.levels.forward),
            "fY": map_to_pixels(self.seg, self.levels.backward),
            "fused": map_to_pixels(self.seg, self.levels.fused),
        }


def _unit_scale(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    lo, hi = v.min(), v.max()
    return (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)


def fuse_levels(forward, backward) -> np.ndarray:
    """Clamp both levels at 0, scale each to [0, 1], sum, and rescale to [0, 1]."""
    return _unit_scale(_unit_scale(np.maximum(forward, 0.0)) + _unit_scale(np.maximum(backward, 0.0)))


def compute_dis(X, Y, g_t1: KnnGraph, g_t2: KnnGraph, unchanged, cfg: VdfConfig,
                filt: PolynomialFilter | None = None, dist_x=None, dist_y=None) -> ChangeLevels:
    """Forward and backward change levels with changed vertices cut from the opposite graph.

    The forward level compares ``X`` on the pre-event graph against the
    post-event graph restricted to ``unchanged``; the backward level does the
    same for ``Y`` with the roles swapped.
    """
    filt = cfg.filter() if filt is None else filt
    dist_x = distance_matrix(X) if dist_x is None else dist_x
    dist_y = distance_matrix(Y) if dist_y is None else dist_y
    kind = OperatorKind.parse(cfg.operator)

    def op(g, name):
        return to_shift_operator(g, kind, cfg.weight_scheme, source=name)

    s_t1 = op(g_t1, "t1")
    s_t2 = op(g_t2, "t2")
    s_t2n = op(restrict_graph(g_t2, unchanged, cfg.isolated), "t2-n")
    s_t1n = op(restrict_graph(g_t1, unchanged, cfg.isolated), "t1-n")
    fx = change_level(s_t1, s_t2n, dist_x, filt, workers=cfg.workers)
    fy = change_level(s_t2, s_t1n, dist_y, filt, workers=cfg.workers)
    return ChangeLevels(fx, fy, fuse_levels(fx, fy))


def otsu_threshold(scores, bins: int = 256) -> tuple[float, np.ndarray]:
    """Otsu threshold over a histogram of min-max scaled scores.

    Returns the threshold in score units (the lower edge of the first
    "changed" bin) and the indices of changed vertices.
    """
    scores = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    lo, hi = scores.min(), scores.max()
    if hi <= lo:
        raise ConstantScoresError("all scores are equal")
    scaled = (scores - lo) / (hi - lo)
    idx = np.minimum((scaled * bins).astype(np.int64), bins - 1)
    hist = np.bincount(idx, minlength=bins).astype(float)
    prob = hist / hist.sum()
    centers = (np.arange(bins) + 0.5) / bins
    w0 = np.cumsum(prob)[:-1]
    mu0_sum = np.cumsum(prob * centers)[:-1]
    mu_total = np.sum(prob * centers)
    w1 = 1.0 - w0
    valid = (w0 > 0) & (w1 > 0)
    between = np.zeros(bins - 1)
    between[valid] = (mu_total * w0[valid] - mu0_sum[valid]) ** 2 / (w0[valid] * w1[valid])
    t = int(np.argmax(between))
    changed = np.flatnonzero(idx > t)
    return float(lo + (t + 1) / bins * (hi - lo)), changed


def kmeans2_threshold(scores, seed: int = 0, max_iter: int = 100) -> tuple[float, np.ndarray]:
    """Two-means clustering of scalar scores, centers initialized at min and max.

    The initialization is deterministic; ``seed`` is accepted for interface
    symmetry with randomized initializations. Returns the midpoint between
    the final centers and the indices of the higher cluster.
    """
    scores = np.asarray(scores, dtype=float)
    lo, hi = scores.min(), scores.max()
    if hi <= lo:
        return float(hi), np.array([], dtype=np.int64)
    c0, c1 = lo, hi
    assign = scores > 0.5 * (c0 + c1)
    for _ in range(max_iter):
        c0 = scores[~assign].mean()
        c1 = scores[assign].mean()
        new = scores > 0.5 * (c0 + c1)
        if np.array_equal(new, assign) or new.all() or not new.any():
            break
        assign = new
    return float(0.5 * (c0 + c1)), np.flatnonzero(assign)


def split_separation(scores, changed) -> float:
    """Gap between the two sides of a split in robust units of the low side.

    ``(median(high) - median(low)) / (1.4826 * MAD(low))``; infinite when the
    low side has no spread but the medians differ, 0 for an empty side.
    """
    scores = np.asarray(scores, dtype=float)
    mask = np.zeros(scores.size, dtype=bool)
    mask[np.asarray(changed, dtype=np.int64)] = True
    if mask.all() or not mask.any():
        return 0.0
    low, high = scores[~mask], scores[mask]
    center = np.median(low)
    gap = np.median(high) - center
    spread = 1.4826 * np.median(np.abs(low - center))
    if spread <= 0:
        return math.inf if gap > 0 else 0.0
    return float(gap / spread)


def segment_scores(scores, method: str = "otsu", seed: int = 0,
                   min_separation: float = 0.0) -> tuple[float, np.ndarray]:
    """Split scores into unchanged and changed vertices.

    A split whose sides are closer than ``min_separation`` robust units (see
    ``split_separation``) is noise being cut in two, so no vertex is marked.
    """
    if method == "otsu":
        try:
            thr, changed = otsu_threshold(scores)
        except ConstantScoresError:
            return float(np.max(scores)), np.array([], dtype=np.int64)
    else:
        thr, changed = kmeans2_threshold(scores, seed=seed)
    if min_separation > 0 and split_separation(scores, changed) < min_separation:
        return thr, np.array([], dtype=np.int64)
    return thr, changed


def map_to_pixels(seg: SegmentMap, vertex_values) -> np.ndarray:
    """Paint every pixel with its segment's value.

    ``vertex_values`` is either an N-vector of floats or booleans, or a
    collection of integer vertex indices (a changed set), for which a boolean
    mask is returned.
    """
    n = seg.segment_count
    if isinstance(vertex_values, (set, frozenset)):
        vertex_values = sorted(vertex_values)
    values = np.asarray(vertex_values)
    if values.dtype.kind in "iu" or (values.size == 0 and n > 0):
        mask = np.zeros(n, dtype=bool)
        idx = values.astype(np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ValueError("vertex index out of range")
        mask[idx] = True
        return mask[seg.labels]
    if values.shape != (n,):
        raise ValueError(f"expected {n} vertex values, got shape {values.shape}")
    return values[seg.labels]


def preprocess(img_x: RasterImage, img_y: RasterImage, cfg: VdfConfig) -> Preprocessed:
    """Segment the pair, extract features and build both KNN graphs."""
    if img_x.shape != img_y.shape:
        raise ValueError(f"images are not co-registered: {img_x.shape} vs {img_y.shape}")
    img_x = normalize_channels(img_x)
    img_y = normalize_channels(img_y)
    if cfg.segmentation == "patch":
        seg, X = tile_patches(img_x, cfg.patch_size)
        _, Y = tile_patches(img_y, cfg.patch_size)
    else:
        seg_x = slic_segment(img_x, cfg.n, cfg.compactness)
        seg_y = slic_segment(img_y, cfg.n, cfg.compactness)
        seg = cosegment_intersect(seg_x, seg_y, cfg.min_segment_size)
        X = extract_features(img_x, seg)
        Y = extract_features(img_y, seg)
    n = seg.segment_count
    k = cfg.resolved_k(n)
    if n < k + 1:
        raise SegmentationError(
            f"segmentation produced {n} vertices, too few for K={k}; lower K or raise N"
        )
    dist_x = distance_matrix(X)
    dist_y = distance_matrix(Y)
    g_t1 = build_knn_graph(X, k, dist_x)
    g_t2 = build_knn_graph(Y, k, dist_y)
    logger.info("preprocessed: %d vertices, K=%d", n, k)
    return Preprocessed(seg, X, Y, dist_x, dist_y, g_t1, g_t2)


def iterate_detection(pre: Preprocessed, cfg: VdfConfig) -> list[DetectionState]:
    """Run the change-elimination loop on preprocessed inputs; returns the state history."""
    n = pre.seg.segment_count
    filt = cfg.filter()
    everything = np.arange(n)
    unchanged = everything
    prev_changed = np.array([], dtype=np.int64)
    history: list[DetectionState] = []
    for it in range(1, cfg.iterations + 1):
        levels = compute_dis(pre.X, pre.Y, pre.g_t1, pre.g_t2, unchanged, cfg, filt, pre.dist_x, pre.dist_y)
        thr, changed = segment_scores(levels.fused, cfg.threshold, cfg.seed, cfg.min_separation)
        if changed.size > cfg.max_changed_fraction * n:
            # Violates the sparse-change prior; keep the previous sets and stop.
            logger.warning("iteration %d marked %d/%d vertices changed; stopping", it, changed.size, n)
            kept = history[-1].levels if history else levels
            history.append(DetectionState(it, unchanged, prev_changed, kept, thr, converged=True, collapsed=True))
            break
        converged = np.array_equal(changed, prev_changed)
        history.append(
            DetectionState(it, np.setdiff1d(everything, changed), changed, levels, thr, converged)
        )
        logger.info("iteration %d: %d changed vertices, threshold %.4g", it, changed.size, thr)
        if converged:
            break
        prev_changed = changed
        unchanged = np.setdiff1d(everything, changed)
    return history


def run_vdf_hcd(img_x: RasterImage, img_y: RasterImage, cfg: VdfConfig | None = None) -> DetectionResult:
    """Detect changes between two co-registered heterogeneous images.

    Returns the final change levels, the pixel-level change mask and the
    per-iteration history.
    """
    cfg = VdfConfig() if cfg is None else cfg
    pre = preprocess(img_x, img_y, cfg)
    history = iterate_detection(pre, cfg)
    final = history[-1]
    cm = map_to_pixels(pre.seg, final.changed)
    return DetectionResult(levels=final.levels, change_map=cm, history=history, seg=pre.seg, config=cfg)


def with_overrides(cfg: VdfConfig, **changes) -> VdfConfig:
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})
