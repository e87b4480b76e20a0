"""Superpixels on each image, intersected so both share one vertex set."""

from vdfhcd.segmentation import cosegment_intersect, extract_features, slic_segment
from vdfhcd.synthgen import SceneSpec, generate_pair

img_a, img_b, gt = generate_pair(SceneSpec(seed=1))

seg_a = slic_segment(img_a, target_n=800)
seg_b = slic_segment(img_b, target_n=800)
seg = cosegment_intersect(seg_a, seg_b, min_size=10)
print(f"SLIC on A: {seg_a.segment_count} segments, on B: {seg_b.segment_count}")
print(f"intersection after merging small pieces: {seg.segment_count} vertices")
print(f"smallest vertex {seg.sizes.min()} px, largest {seg.sizes.max()} px")

# Mean, median and variance per channel, for each vertex.
X, Y = extract_features(img_a, seg), extract_features(img_b, seg)
print("feature matrices", X.shape, Y.shape)
