"""Vertex partitions of an image pair and per-vertex feature matrices.

A ``SegmentMap`` assigns every pixel to exactly one of ``N`` segments; segment
``i`` becomes vertex ``i`` of both graphs, so the same map must be used to
extract features from the pre- and post-event images.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from skimage.measure import label as connected_regions

from .imaging import RasterImage, read_matrix, write_matrix


@dataclass(frozen=True)
class SegmentMap:
    """Partition of an image grid into labeled segments.

    Attributes
    ----------
    labels : ndarray of int, shape (height, width)
        Segment index per pixel, compacted to ``0 .. segment_count - 1``.
    """

    labels: np.ndarray
    _pixel_lists: list = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValueError(f"labels must be 2-D, got shape {labels.shape}")
        object.__setattr__(self, "labels", labels.astype(np.int64, copy=False))

    @property
    def segment_count(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.segment_count)

    @property
    def pixel_lists(self) -> list[np.ndarray]:
        """(row, col) coordinates of each segment's pixels, in raster order."""
        if self._pixel_lists is None:
            flat = self.labels.ravel()
            order = np.argsort(flat, kind="stable")
            bounds = np.cumsum(np.bincount(flat, minlength=self.segment_count))[:-1]
            rows, cols = np.divmod(order, self.labels.shape[1])
            coords = np.stack([rows, cols], axis=1)
            object.__setattr__(self, "_pixel_lists", np.split(coords, bounds))
        return self._pixel_lists

    def validate(self) -> None:
        """Raise ValueError unless labels are compact and every segment is nonempty."""
        if self.labels.min() < 0:
            raise ValueError("negative segment label")
        if np.any(self.sizes == 0):
            raise ValueError("segment labels are not compact (empty segment)")

    def save(self, path):
        return write_matrix(self.labels.astype(np.float64), path)

    @classmethod
    def load(cls, path) -> "SegmentMap":
        arr = read_matrix(path)[:, :, 0]
        return cls(arr.astype(np.int32))


def compact_labels(labels) -> np.ndarray:
    """Relabel to ``0..n-1`` in order of first appearance in raster order."""
    flat = np.asarray(labels).ravel()
    _, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inverse].reshape(np.shape(labels))


def _axis_bins(length: int, p: int) -> list[np.ndarray]:
    # p contiguous index groups covering 0..length-1; repeats indices when length < p.
    bins = []
    for k in range(p):
        lo = k * length // p
        hi = max((k + 1) * length // p, lo + 1)
        bins.append(np.arange(lo, min(hi, length)))
    return bins


def tile_patches(img: RasterImage, p: int) -> tuple[SegmentMap, np.ndarray]:
    """Split an image into non-overlapping p-by-p patches.

    Remainder rows and columns are absorbed into the last patch row and
    column. Each patch is vectorized into ``p * p * C`` values; an enlarged
    edge patch is first area-averaged down to ``p x p``.

    Returns
    -------
    seg : SegmentMap
    features : ndarray, shape (N, p * p * C)
    """
    if p < 1:
        raise ValueError("patch size must be >= 1")
    h, w, c = img.data.shape
    if p > h and p > w:
        raise ValueError(f"patch size {p} exceeds both image dimensions {h}x{w}")
    n_rows = max(1, h // p)
    n_cols = max(1, w // p)
    row_idx = np.minimum(np.arange(h) // p, n_rows - 1)
    col_idx = np.minimum(np.arange(w) // p, n_cols - 1)
    labels = row_idx[:, None] * n_cols + col_idx[None, :]

    features = np.empty((n_rows * n_cols, p * p * c))
    for r in range(n_rows):
        r0, r1 = r * p, (h if r == n_rows - 1 else (r + 1) * p)
        for q in range(n_cols):
            c0, c1 = q * p, (w if q == n_cols - 1 else (q + 1) * p)
            block = img.data[r0:r1, c0:c1]
            if block.shape[:2] != (p, p):
                rb = _axis_bins(block.shape[0], p)
                cb = _axis_bins(block.shape[1], p)
                block = np.array(
                    [[block[np.ix_(ri, ci)].mean(axis=(0, 1)) for ci in cb] for ri in rb]
                )
            features[r * n_cols + q] = block.ravel()
    return SegmentMap(labels), features


def _lowest_gradient_shift(data, cy, cx):
    h, w, _ = data.shape
    best = None
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            y, x = cy + dy, cx + dx
            if not (0 < y < h - 1 and 0 < x < w - 1):
                continue
            g = np.sum((data[y + 1, x] - data[y - 1, x]) ** 2) + np.sum(
                (data[y, x + 1] - data[y, x - 1]) ** 2
            )
            if best is None or g < best[0] - 1e-12 or (dy == dx == 0 and g <= best[0]):
                best = (g, y, x)
    return (best[1], best[2]) if best is not None else (cy, cx)


def slic_segment(
    img: RasterImage,
    target_n: int,
    compactness: float = 10.0,
    n_iter: int = 10,
    color_scale: float = 100.0,
) -> SegmentMap:
    """Simple linear iterative clustering superpixels.

    Centers start on a regular grid with spacing ``S = sqrt(H * W / target_n)``
    and are refined by local k-means under the distance
    ``d_color + (compactness / S) * d_xy``. Colors are multiplied by
    ``color_scale`` first, so ``compactness`` keeps its conventional meaning
    for [0, 1] data. Disconnected fragments are merged afterwards into the
    largest adjacent segment.
    """
    if target_n < 1:
        raise ValueError("target_n must be >= 1")
    if compactness <= 0:
        raise ValueError("compactness must be > 0")
    h, w, _ = img.data.shape
    if target_n > h * w:
        raise ValueError(f"target_n={target_n} exceeds pixel count {h * w}")
    data = img.data * color_scale
    step = math.sqrt(h * w / target_n)
    ny = max(1, min(h, round(h / step)))
    nx = max(1, min(w, round(w / step)))

    centers = []
    for i in range(ny):
        for j in range(nx):
            cy = min(h - 1, int((i + 0.5) * h / ny))
            cx = min(w - 1, int((j + 0.5) * w / nx))
            cy, cx = _lowest_gradient_shift(data, cy, cx)
            centers.append(np.concatenate([[cy, cx], data[cy, cx]]))
    centers = np.array(centers, dtype=float)

    radius = int(math.ceil(step))
    spatial_weight = compactness / step
    yy, xx = np.mgrid[0:h, 0:w]
    labels = np.full((h, w), -1, dtype=np.int64)
    for _ in range(n_iter):
        best = np.full((h, w), np.inf)
        labels.fill(-1)
        for k, center in enumerate(centers):
            cy, cx = center[0], center[1]
            y0, y1 = max(0, int(cy) - radius), min(h, int(cy) + radius + 1)
            x0, x1 = max(0, int(cx) - radius), min(w, int(cx) + radius + 1)
            if y0 >= y1 or x0 >= x1:
                continue
            window = data[y0:y1, x0:x1]
            d_color = np.sqrt(np.sum((window - center[2:]) ** 2, axis=2))
            d_xy = np.sqrt((yy[y0:y1, x0:x1] - cy) ** 2 + (xx[y0:y1, x0:x1] - cx) ** 2)
            d = d_color + spatial_weight * d_xy
            sub = best[y0:y1, x0:x1]
            closer = d < sub
            sub[closer] = d[closer]
            labels[y0:y1, x0:x1][closer] = k
        assigned = labels >= 0
        lab = labels[assigned]
        counts = np.bincount(lab, minlength=len(centers))
        alive = counts > 0
        feats = np.column_stack([yy[assigned], xx[assigned], data[assigned]])
        sums = np.stack(
            [np.bincount(lab, weights=feats[:, t], minlength=len(centers)) for t in range(feats.shape[1])],
            axis=1,
        )
        centers[alive] = sums[alive] / counts[alive, None]

    # Pixels no window reached get a fresh label and are handled as orphans.
    labels[labels < 0] = labels.max() + 1
    return SegmentMap(enforce_connectivity(labels))


def _boundary_counts(labels: np.ndarray) -> dict[tuple[int, int], int]:
    a = np.concatenate([labels[:, :-1].ravel(), labels[:-1, :].ravel()])
    b = np.concatenate([labels[:, 1:].ravel(), labels[1:, :].ravel()])
    diff = a != b
    a, b = a[diff], b[diff]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    pairs, counts = np.unique(np.stack([lo, hi], axis=1), axis=0, return_counts=True)
    return {(int(u), int(v)): int(c) for (u, v), c in zip(pairs, counts)}


class _RegionMerger:
    """Union-find over regions with running sizes and shared-boundary lengths."""

    def __init__(self, labels: np.ndarray):
        self.labels = labels
        n = int(labels.max()) + 1
        self.parent = np.arange(n)
        self.size = np.bincount(labels.ravel(), minlength=n).astype(np.int64)
        self.adj: list[dict[int, int]] = [dict() for _ in range(n)]
        for (u, v), c in _boundary_counts(labels).items():
            self.adj[u][v] = c
            self.adj[v][u] = c

    def find(self, u: int) -> int:
        root = u
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[u] != root:
            self.parent[u], u = root, self.parent[u]
        return root

    def merge(self, u: int, v: int) -> None:
        """Merge root ``u`` into root ``v``."""
        for w, c in self.adj[u].items():
            if w == v:
                continue
            self.adj[v][w] = self.adj[v].get(w, 0) + c
            self.adj[w][v] = self.adj[w].get(v, 0) + c
            del self.adj[w][u]
        self.adj[v].pop(u, None)
        self.adj[u] = {}
        self.parent[u] = v
        self.size[v] += self.size[u]

    def relabeled(self) -> np.ndarray:
        roots = np.array([self.find(u) for u in range(len(self.parent))])
        return compact_labels(roots[self.labels])


def enforce_connectivity(labels) -> np.ndarray:
    """Keep the largest connected piece of each label; merge the rest.

    Every other piece (an orphan) joins the adjacent region with the most
    pixels. Returns compacted labels.
    """
    labels = np.asarray(labels)
    comps = connected_regions(labels + 1, background=0, connectivity=1) - 1
    n_comp = int(comps.max()) + 1
    comp_label = np.empty(n_comp, dtype=np.int64)
    comp_label[comps.ravel()] = labels.ravel()
    comp_size = np.bincount(comps.ravel(), minlength=n_comp)

    # The main component of each label is its largest (lowest index on ties).
    order = np.lexsort((np.arange(n_comp), -comp_size, comp_label))
    is_main = np.zeros(n_comp, dtype=bool)
    first = np.ones(n_comp, dtype=bool)
    first[1:] = comp_label[order[1:]] != comp_label[order[:-1]]
    is_main[order[first]] = True
    if is_main.all():
        return compact_labels(comps)

    merger = _RegionMerger(comps)
    orphan = ~is_main
    heap = [(int(comp_size[u]), u) for u in np.flatnonzero(orphan)]
    heapq.heapify(heap)
    while heap:
        size, u = heapq.heappop(heap)
        if merger.find(u) != u or merger.size[u] != size or not orphan[u]:
            continue
        if not merger.adj[u]:
            orphan[u] = False
            continue
        target = max(merger.adj[u], key=lambda w: (merger.size[w], -w))
        merger.merge(u, target)
        if orphan[target]:
            heapq.heappush(heap, (int(merger.size[target]), target))
    return merger.relabeled()


def merge_small_segments(labels, min_size: int) -> np.ndarray:
    """Merge segments smaller than ``min_size`` into the neighbor sharing the longest boundary."""
    labels = compact_labels(labels)
    if min_size <= 1:
        return labels
    merger = _RegionMerger(labels)
    heap = [(int(s), u) for u, s in enumerate(merger.size) if s < min_size]
    heapq.heapify(heap)
    while heap:
        size, u = heapq.heappop(heap)
        if merger.find(u) != u or merger.size[u] != size or not merger.adj[u]:
            continue
        target = max(merger.adj[u], key=lambda w: (merger.adj[u][w], -w))
        merger.merge(u, target)
        if merger.size[target] < min_size:
            heapq.heappush(heap, (int(merger.size[target]), target))
    return merger.relabeled()


def intersect_labels(a, b) -> np.ndarray:
    """Label pixels by their (a-label, b-label) pair, compacted."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    return compact_labels(a * (int(b.max()) + 1) + b)


def cosegment_intersect(a: SegmentMap, b: SegmentMap, min_size: int = 10) -> SegmentMap:
    """Intersect two segmentations into a co-segmentation of the image pair.

    Every output segment is the set of pixels sharing one label in ``a`` and
    one in ``b``. Fragments smaller than ``min_size`` pixels are merged into
    the neighboring segment with which they share the longest boundary.
    """
    if a.shape != b.shape:
        raise ValueError(f"segmentations differ in size: {a.shape} vs {b.shape}")
    return SegmentMap(merge_small_segments(intersect_labels(a.labels, b.labels), min_size))


def extract_features(img: RasterImage, seg: SegmentMap) -> np.ndarray:
    """Per-segment mean, median and population variance of every channel.

    Returns an array of shape (N, 3 * C) laid out as
    ``[mean_0, median_0, var_0, mean_1, ...]``.
    """
    if img.shape != seg.shape:
        raise ValueError(f"image {img.shape} and segmentation {seg.shape} differ in size")
    flat = seg.labels.ravel()
    n = seg.segment_count
    counts = np.bincount(flat, minlength=n).astype(float)
    if np.any(counts == 0):
        raise ValueError("segmentation has empty segments")
    starts = np.concatenate([[0], np.cumsum(counts[:-1])]).astype(np.int64)
    lo_mid = starts + (counts.astype(np.int64) - 1) // 2
    hi_mid = starts + counts.astype(np.int64) // 2

    out = np.empty((n, 3 * img.channels))
    for ch in range(img.channels):
        values = img.data[:, :, ch].ravel()
        mean = np.bincount(flat, weights=values, minlength=n) / counts
        var = np.bincount(flat, weights=(values - mean[flat]) ** 2, minlength=n) / counts
        ordered = values[np.lexsort((values, flat))]
        median = 0.5 * (ordered[lo_mid] + ordered[hi_mid])
        out[:, 3 * ch] = mean
        out[:, 3 * ch + 1] = median
        out[:, 3 * ch + 2] = var
    return out
