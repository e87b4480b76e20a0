"""Accuracy of change maps and difference images against ground truth."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MapScores:
    """Overall accuracy, F1 measure and Cohen's kappa of a binary change map.

    ``fm_undefined`` is set when there are no positives in either map (Fm is
    then reported as 1); ``kc_undefined`` when chance agreement is 1 (Kc is
    reported as 0).
    """

    oa: float
    fm: float
    kc: float
    pre: float
    fm_undefined: bool = False
    kc_undefined: bool = False


def confusion(cm, gt) -> ConfusionCounts:
    cm = np.asarray(cm, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if cm.shape != gt.shape:
        raise ValueError(f"change map {cm.shape} and ground truth {gt.shape} differ in size")
    return ConfusionCounts(
        tp=int(np.sum(cm & gt)),
        fp=int(np.sum(cm & ~gt)),
        tn=int(np.sum(~cm & ~gt)),
        fn=int(np.sum(~cm & gt)),
    )


def oa_fm_kc(c: ConfusionCounts) -> MapScores:
    total = c.total
    if total <= 0:
        raise ValueError("no pixels to evaluate")
    oa = (c.tp + c.tn) / total
    pre = ((c.tp + c.fn) * (c.tp + c.fp) + (c.tn + c.fp) * (c.tn + c.fn)) / total**2
    denom = 2 * c.tp + c.fp + c.fn
    fm_undefined = denom == 0
    fm = 1.0 if fm_undefined else 2 * c.tp / denom
    kc_undefined = pre >= 1.0
    kc = 0.0 if kc_undefined else (oa - pre) / (1 - pre)
    return MapScores(oa=oa, fm=fm, kc=kc, pre=pre, fm_undefined=fm_undefined, kc_undefined=kc_undefined)


@dataclass(frozen=True)
class Curves:
    """ROC and precision-recall curves of a score field.

    ``thresholds[t]`` is the score at which the ``t``-th point (after the
    origin) is reached, predicting changed where ``score >= threshold``.
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    recall: np.ndarray
    precision: np.ndarray
    aur: float
    aup: float

    def write_csv(self, roc_path, pr_path) -> None:
        thr = np.concatenate([[np.inf], self.thresholds])
        with open(roc_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "fpr", "tpr"])
            w.writerows(zip(thr, self.fpr, self.tpr))
        with open(pr_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "recall", "precision"])
            w.writerows(zip(thr, self.recall, self.precision))


def roc_pr_curves(scores, gt) -> Curves:
    """Sweep every distinct score as a threshold, highest first.

    Equal scores enter together as one step. The ROC curve starts at (0, 0)
    and the PR curve at (recall 0, precision 1); areas use the trapezoid rule.
    """
    scores = np.asarray(scores, dtype=float).ravel()
    gt = np.asarray(gt, dtype=bool).ravel()
    if scores.shape != gt.shape:
        raise ValueError("scores and ground truth differ in size")
    n_pos = int(gt.sum())
    n_neg = gt.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ground truth must contain both changed and unchanged pixels")

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = gt[order]
    last_of_group = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[last_of_group]
    fp = (last_of_group + 1) - tp
    thresholds = s[last_of_group]

    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    recall = tpr
    precision = np.r_[1.0, tp / (tp + fp)]
    aur = float(np.trapezoid(tpr, fpr))
    aup = float(np.trapezoid(precision, recall))
    return Curves(thresholds, fpr, tpr, recall, precision, aur, aup)


def write_report(values: dict, path) -> Path:
    """Flat ``key=value`` text report, one entry per line."""
    path = Path(path)
    with open(path, "w") as fh:
        for key, value in values.items():
            fh.write(f"{key}={value}\n")
    return path


def read_report(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#") and "=" in line:
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def score_report(scores: MapScores, counts: ConfusionCounts) -> dict:
    out = asdict(counts)
    out.update(asdict(scores))
    return out
