"""Render a synthetic heterogeneous pair and look at what changed.

Image A and image B see the same class map through different sensors, so
their pixel values cannot be compared directly. Only the ground truth ties
them together.
"""

import sys
from pathlib import Path

import numpy as np

from vdfhcd.synthgen import SceneSpec, generate_pair, write_pair

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/synthetic")
pair = generate_pair(SceneSpec(seed=0))

print("image A", pair.image_a.data.shape, "image B", pair.image_b.data.shape)
print(f"changed pixels: {pair.gt.mean():.3f} of the scene")
moved = np.unique(np.c_[pair.classes_t1[pair.gt], pair.classes_t2[pair.gt]], axis=0)
print("class transitions in the change region:", moved.tolist())

manifest = write_pair(pair, out)
print("wrote", ", ".join(manifest["files"].values()))
