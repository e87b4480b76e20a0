"""Map scores and curves on a small hand-made case."""

import numpy as np

from vdfhcd.metrics import ConfusionCounts, oa_fm_kc, roc_pr_curves

s = oa_fm_kc(ConfusionCounts(tp=50, fp=10, tn=930, fn=10))
print(f"OA {s.oa:.4f}  Fm {s.fm:.4f}  Kc {s.kc:.4f}")

# Kappa can rise with an extra false positive when the map is worse than chance.
for fp in (3, 4):
    print(f"tp=0 fp={fp} tn=3 fn=1 -> Kc {oa_fm_kc(ConfusionCounts(0, fp, 3, 1)).kc:+.4f}")

scores = np.array([0.9, 0.8, 0.8, 0.4, 0.3, 0.1])
gt = np.array([1, 1, 0, 1, 0, 0], bool)
c = roc_pr_curves(scores, gt)
print("fpr", c.fpr.round(3).tolist())
print("tpr", c.tpr.round(3).tolist())
print(f"AUR {c.aur:.3f}  AUP {c.aup:.3f}")
