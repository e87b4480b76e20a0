"""Raster I/O for change detection inputs and outputs.

Images are held as float arrays of shape (height, width, channels). Masks are
boolean arrays of shape (height, width). Three on-disk formats are handled:
PNG/TIFF through Pillow, and a float matrix sidecar (``.fmat``) for multiband
data that PNG cannot carry::

    rows cols channels\\n
    <rows*cols*channels little-endian float64 values, row-major>
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

SIDECAR_SUFFIXES = (".fmat", ".mat64")

# Color code for change maps, keyed by (predicted, truth).
TP_COLOR = (255, 255, 255)
FP_COLOR = (255, 0, 0)
TN_COLOR = (0, 0, 0)
FN_COLOR = (0, 255, 0)


class ImageFormatError(ValueError):
    """Raised for unreadable, empty or unsupported raster files."""


@dataclass(frozen=True)
class RasterImage:
    """Multichannel raster with float samples.

    Attributes
    ----------
    data : ndarray, shape (height, width, channels)
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise ValueError(f"expected a (H, W, C) array, got shape {data.shape}")
        if data.size == 0:
            raise ValueError("zero-sized image")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    def select_bands(self, bands) -> "RasterImage":
        return RasterImage(self.data[:, :, list(bands)])


def _is_sidecar(path: Path) -> bool:
    return path.suffix.lower() in SIDECAR_SUFFIXES


def read_matrix(path) -> np.ndarray:
    """Read a float matrix sidecar file into an array of shape (rows, cols, channels)."""
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").split()
        if len(header) != 3:
            raise ImageFormatError(f"{path}: malformed sidecar header {header!r}")
        rows, cols, channels = (int(v) for v in header)
        count = rows * cols * channels
        if count == 0:
            raise ImageFormatError(f"{path}: zero-sized image")
        values = np.frombuffer(fh.read(), dtype="<f8")
    if values.size != count:
        raise ImageFormatError(
            f"{path}: header declares {count} values but file holds {values.size}"
        )
    return values.reshape(rows, cols, channels).astype(float)


def write_matrix(array, path) -> Path:
    """Write an array (2-D or 3-D) as a float matrix sidecar file."""
    path = Path(path)
    arr = np.asarray(array, dtype="<f8")
    if arr.ndim == 2:
        arr = arr[:, :, None]
    rows, cols, channels = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"{rows} {cols} {channels}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(arr).tobytes())
    return path


def load_image(path) -> RasterImage:
    """Load a raster, scaling integer samples to [0, 1] by the format maximum.

    8- and 16-bit grayscale or RGB PNG/TIFF files are divided by 255 or
    65535. Sidecar matrices are returned as stored.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    if _is_sidecar(path):
        return RasterImage(read_matrix(path))
    try:
        with Image.open(path) as im:
            im.load()
            arr = np.array(im)
    except (OSError, Image.UnidentifiedImageError) as exc:
        raise ImageFormatError(f"{path}: unreadable image ({exc})") from exc
    if arr.size == 0:
        raise ImageFormatError(f"{path}: zero-sized image")
    if arr.dtype == np.uint8:
        scale = 255.0
    elif arr.dtype in (np.uint16, np.int32) and arr.max(initial=0) <= 65535:
        # Pillow exposes 16-bit grayscale as I;16 or I (int32).
        scale = 65535.0
    elif arr.dtype == bool:
        scale = 1.0
    else:
        raise ImageFormatError(f"{path}: unsupported sample type {arr.dtype}")
    return RasterImage(arr.astype(float) / scale)


def write_image(img, path, bit_depth: int = 8) -> Path:
    """Write a RasterImage (values in [0, 1]) as PNG/TIFF, or as a sidecar matrix.

    Values are quantized by rounding ``v * max_sample``. Only 1- or
    3-channel images can be written as PNG/TIFF.
    """
    path = Path(path)
    data = img.data if isinstance(img, RasterImage) else np.asarray(img, dtype=float)
    if data.ndim == 2:
        data = data[:, :, None]
    if _is_sidecar(path):
        return write_matrix(data, path)
    if data.shape[2] not in (1, 3):
        raise ImageFormatError(
            f"{data.shape[2]}-channel data cannot be stored as {path.suffix}; use .fmat"
        )
    if bit_depth == 8:
        samples = np.rint(np.clip(data, 0, 1) * 255).astype(np.uint8)
    elif bit_depth == 16:
        if data.shape[2] != 1:
            raise ImageFormatError("16-bit output is supported for grayscale only")
        samples = np.rint(np.clip(data, 0, 1) * 65535).astype(np.uint16)
    else:
        raise ImageFormatError(f"unsupported bit depth {bit_depth}")
    if samples.shape[2] == 1:
        samples = samples[:, :, 0]
    Image.fromarray(samples).save(path)
    return path


def normalize_channels(img: RasterImage) -> RasterImage:
    """Min-max scale every channel to [0, 1]; constant channels become zero."""
    data = img.data
    lo = data.min(axis=(0, 1), keepdims=True)
    hi = data.max(axis=(0, 1), keepdims=True)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (data - lo) / safe, 0.0)
    return RasterImage(out)


def minmax_scale(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    lo, hi = values.min(), values.max()
    if hi <= lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def write_difference_image(scores, path) -> Path:
    """Write a per-pixel score field as an 8-bit grayscale PNG after min-max scaling."""
    return write_image(minmax_scale(scores), path)


def load_mask(path) -> np.ndarray:
    """Load a ground-truth or change mask; any nonzero sample counts as changed."""
    img = load_image(path)
    return img.data[:, :, 0] > 0


def write_mask(mask, path) -> Path:
    return write_image(np.asarray(mask, dtype=float), path)


def change_map_colors(cm, gt) -> np.ndarray:
    """Return the (H, W, 3) uint8 color coding of ``cm`` against ``gt``."""
    cm = np.asarray(cm, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if cm.shape != gt.shape:
        raise ValueError(f"change map {cm.shape} and ground truth {gt.shape} differ in size")
    rgb = np.zeros(cm.shape + (3,), dtype=np.uint8)
    rgb[cm & gt] = TP_COLOR
    rgb[cm & ~gt] = FP_COLOR
    rgb[~cm & ~gt] = TN_COLOR
    rgb[~cm & gt] = FN_COLOR
    return rgb


def write_change_map(cm, gt, path) -> Path:
    """Write the color-coded change map: TP white, FP red, TN black, FN green."""
    path = Path(path)
    Image.fromarray(change_map_colors(cm, gt)).save(path)
    return path
