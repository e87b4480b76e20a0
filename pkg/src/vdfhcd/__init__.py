"""Change detection between heterogeneous images with polynomial graph filters."""

__version__ = "0.1.0"

from .detection import (
    ChangeLevels,
    DetectionResult,
    DetectionState,
    VdfConfig,
    compute_dis,
    fuse_levels,
    kmeans2_threshold,
    map_to_pixels,
    otsu_threshold,
    run_vdf_hcd,
)
from .filtering import LeakageError, PolynomialFilter, change_level, first_order_di, fit_lowpass_coeffs
from .graph import KnnGraph, OperatorKind, ShiftOperator, build_knn_graph, distance_matrix, restrict_graph, to_shift_operator
from .imaging import RasterImage, load_image, load_mask, write_image
from .metrics import confusion, oa_fm_kc, roc_pr_curves
from .segmentation import SegmentMap, cosegment_intersect, extract_features, slic_segment, tile_patches
from .synthgen import SceneSpec, generate_pair

__all__ = [name for name in dir() if not name.startswith("_")]
