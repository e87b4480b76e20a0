"""Synthetic heterogeneous image pairs with exact change masks.

Both images are rendered from one piecewise-constant land-cover map. Image A
maps each class to a mean vector; image B maps the classes through a
permutation, a random rotation and a monotone nonlinearity into a different
number of channels. Pixel values of the two images are therefore unrelated
while their region structure is shared, except inside one connected change
region whose class is replaced before rendering B.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import binary_dilation, gaussian_filter
from scipy.spatial import cKDTree

from .imaging import RasterImage, write_image, write_mask

MIN_CLASS_SEPARATION = 0.3


@dataclass(frozen=True)
class SceneSpec:
    height: int = 200
    width: int = 200
    n_classes: int = 6
    seed: int = 0
    change_fraction: float = 0.1
    noise_sigma: float = 0.05
    modality_a_channels: int = 3
    modality_b_channels: int = 4
    cells_per_class: int = 3
    speckle: bool = False

    def __post_init__(self):
        if self.height < 2 or self.width < 2:
            raise ValueError("scene must be at least 2x2 pixels")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if not 0.0 <= self.change_fraction < 0.5:
            raise ValueError("change_fraction must lie in [0, 0.5)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.modality_a_channels < 1 or self.modality_b_channels < 1:
            raise ValueError("channel counts must be >= 1")


@dataclass
class SyntheticPair:
    image_a: RasterImage
    image_b: RasterImage
    gt: np.ndarray
    classes_t1: np.ndarray
    classes_t2: np.ndarray
    means_a: np.ndarray
    means_b: np.ndarray
    spec: SceneSpec

    def __iter__(self):
        # Unpacks as (image_a, image_b, gt).
        return iter((self.image_a, self.image_b, self.gt))


def _separated_means(rng, n, channels, attempts=2000):
    best, best_gap = None, -1.0
    for _ in range(attempts):
        means = rng.uniform(0.1, 0.9, size=(n, channels))
        gap = _min_gap(means)
        if gap >= MIN_CLASS_SEPARATION:
            return means
        if gap > best_gap:
            best, best_gap = means, gap
    return best


def _min_gap(means):
    d = np.sqrt(((means[:, None, :] - means[None, :, :]) ** 2).sum(-1))
    return d[np.triu_indices(len(means), 1)].min()


def _modality_b_means(rng, means_a, channels, attempts=200):
    n, ca = means_a.shape
    for _ in range(attempts):
        perm = rng.permutation(n)
        base = means_a[perm]
        if channels > ca:
            base = np.hstack([base, rng.uniform(0.1, 0.9, size=(n, channels - ca))])
        q, _ = np.linalg.qr(rng.normal(size=(base.shape[1], base.shape[1])))
        mixed = (base - base.mean(axis=0)) @ q
        mixed = mixed[:, :channels]
        squashed = 1.0 / (1.0 + np.exp(-6.0 * mixed))
        lo, hi = squashed.min(axis=0), squashed.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        means = 0.1 + 0.8 * (squashed - lo) / span
        if _min_gap(means) >= MIN_CLASS_SEPARATION:
            return means
    return _separated_means(rng, n, channels)


def class_map(spec: SceneSpec, rng) -> np.ndarray:
    """Voronoi cells over random seeds with smoothly warped borders."""
    h, w = spec.height, spec.width
    n_cells = spec.n_classes * spec.cells_per_class
    seeds = rng.uniform([0, 0], [h, w], size=(n_cells, 2))
    cell_class = np.arange(n_cells) % spec.n_classes
    rng.shuffle(cell_class)
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    scale = max(h, w)
    warp_y = gaussian_filter(rng.normal(size=(h, w)), sigma=scale / 12, mode="wrap")
    warp_x = gaussian_filter(rng.normal(size=(h, w)), sigma=scale / 12, mode="wrap")
    amp = scale / 25 / max(warp_y.std(), warp_x.std(), 1e-12)
    pts = np.column_stack([(yy + amp * warp_y).ravel(), (xx + amp * warp_x).ravel()])
    _, nearest = cKDTree(seeds).query(pts)
    return cell_class[nearest].reshape(h, w)


def change_region(spec: SceneSpec, rng) -> np.ndarray:
    """Connected blob of ``round(change_fraction * H * W)`` pixels grown around a random center."""
    h, w = spec.height, spec.width
    count = int(round(spec.change_fraction * h * w))
    mask = np.zeros((h, w), dtype=bool)
    if count == 0:
        return mask
    if count > h * w // 2:
        raise ValueError("cannot place a change region that large")
    radius = np.sqrt(count / np.pi)
    cy = rng.uniform(min(radius, h / 2), max(h - radius, h / 2))
    cx = rng.uniform(min(radius, w / 2), max(w - radius, w / 2))
    aspect = rng.uniform(0.6, 1.6)
    theta = rng.uniform(0, np.pi)
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    dy, dx = yy - cy, xx - cx
    u = dy * np.cos(theta) + dx * np.sin(theta)
    v = -dy * np.sin(theta) + dx * np.cos(theta)
    rough = gaussian_filter(rng.normal(size=(h, w)), sigma=max(radius / 4, 1.0))
    rough *= 0.15 * radius / max(rough.std(), 1e-12)
    priority = np.sqrt((u * aspect) ** 2 + (v / aspect) ** 2) + rough

    start = (min(h - 1, int(cy)), min(w - 1, int(cx)))
    queued = np.zeros((h, w), dtype=bool)
    queued[start] = True
    heap = [(priority[start], start)]
    taken = 0
    while heap and taken < count:
        _, (y, x) = heapq.heappop(heap)
        mask[y, x] = True
        taken += 1
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if 0 <= ny < h and 0 <= nx < w and not queued[ny, nx]:
                queued[ny, nx] = True
                heapq.heappush(heap, (priority[ny, nx], (ny, nx)))
    if taken < count:
        raise ValueError("cannot place a connected change region of the requested size")
    return mask


def _render(classes, means, sigma, rng, speckle=False):
    img = means[classes]
    if speckle:
        looks = 4.0
        img = img * rng.gamma(looks, 1.0 / looks, size=img.shape)
    if sigma > 0:
        img = img + rng.normal(scale=sigma, size=img.shape)
    return RasterImage(np.clip(img, 0.0, 1.0))


def generate_pair(spec: SceneSpec) -> SyntheticPair:
    """Render a pre/post image pair and its change mask from ``spec``.

    The change region takes a class absent from the region and its border
    where one exists; otherwise it takes an extra class that appears nowhere
    else in the scene.
    """
    rng = np.random.default_rng(spec.seed)
    k = spec.n_classes
    means_a = _separated_means(rng, k + 1, spec.modality_a_channels)
    means_b = _modality_b_means(rng, means_a, spec.modality_b_channels)

    classes_t1 = class_map(spec, rng)
    region = change_region(spec, rng)
    classes_t2 = classes_t1.copy()
    if region.any():
        nearby = np.bincount(
            classes_t1[binary_dilation(region, iterations=2)], minlength=k
        )
        absent = np.flatnonzero(nearby[:k] == 0)
        new_class = int(rng.choice(absent)) if absent.size else k
        classes_t2[region] = new_class

    image_a = _render(classes_t1, means_a, spec.noise_sigma, rng, spec.speckle)
    image_b = _render(classes_t2, means_b, spec.noise_sigma, rng)
    gt = classes_t1 != classes_t2
    return SyntheticPair(image_a, image_b, gt, classes_t1, classes_t2, means_a, means_b, spec)


def write_pair(pair: SyntheticPair, out_dir) -> dict:
    """Write ``t1``, ``t2`` (PNG when 1 or 3 channels, else ``.fmat``), ``gt.png`` and ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, img in (("t1", pair.image_a), ("t2", pair.image_b)):
        suffix = ".png" if img.channels in (1, 3) else ".fmat"
        # 16-bit grayscale keeps more of the noise texture than 8-bit.
        depth = 16 if img.channels == 1 else 8
        paths[name] = str(write_image(img, out / f"{name}{suffix}", bit_depth=depth))
    paths["gt"] = str(write_mask(pair.gt, out / "gt.png"))
    manifest = {"spec": asdict(pair.spec), "files": paths, "changed_pixels": int(pair.gt.sum())}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest
