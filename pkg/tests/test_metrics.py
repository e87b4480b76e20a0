import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vdfhcd.metrics import ConfusionCounts, confusion, oa_fm_kc, read_report, roc_pr_curves, write_report


def test_hand_case():
    # Values from direct substitution into the OA/Fm/PRE/Kc formulas.
    s = oa_fm_kc(ConfusionCounts(tp=50, fp=10, tn=930, fn=10))
    assert s.oa == pytest.approx(0.98, abs=1e-12)
    assert s.fm == pytest.approx(100 / 120, abs=1e-12)
    assert s.pre == pytest.approx(0.8872, abs=1e-12)
    assert s.kc == pytest.approx((0.98 - 0.8872) / (1 - 0.8872), abs=1e-12)
    assert s.kc == pytest.approx(0.8227, abs=1e-4)


def test_confusion_examples():
    gt = np.zeros(20, bool)
    gt[:7] = True
    assert confusion(gt, gt) == ConfusionCounts(7, 0, 13, 0)
    c = confusion(~gt, gt)
    assert c.tp == 0 and c.tn == 0


def test_perfect_and_all_negative():
    s = oa_fm_kc(ConfusionCounts(5, 0, 5, 0))
    assert (s.oa, s.fm, s.kc) == (1.0, 1.0, 1.0)
    assert oa_fm_kc(ConfusionCounts(0, 0, 5, 5)).fm == 0.0


def test_undefined_flags():
    s = oa_fm_kc(ConfusionCounts(0, 0, 10, 0))
    assert s.fm == 1.0 and s.fm_undefined
    assert s.kc == 0.0 and s.kc_undefined


@settings(max_examples=50, deadline=None)
@given(arrays(bool, 40), arrays(bool, 40))
def test_confusion_matches_pixel_loop(cm, gt):
    tp = fp = tn = fn = 0
    for c, g in zip(cm, gt):
        if c and g:
            tp += 1
        elif c:
            fp += 1
        elif g:
            fn += 1
        else:
            tn += 1
    counts = confusion(cm, gt)
    assert counts == ConfusionCounts(tp, fp, tn, fn)
    assert counts.total == cm.size


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 50), st.integers(0, 50), st.integers(1, 50), st.integers(0, 50))
def test_extra_false_positive_never_helps(tp, fp, tn, fn):
    before = oa_fm_kc(ConfusionCounts(tp, fp, tn, fn))
    after = oa_fm_kc(ConfusionCounts(tp, fp + 1, tn, fn))
    assert after.oa <= before.oa + 1e-12
    assert after.fm <= before.fm + 1e-12
    if before.kc >= 0:
        assert after.kc <= before.kc + 1e-12


def test_extra_false_positive_can_raise_negative_kappa():
    # Below chance agreement the kappa monotonicity breaks; pinned here on purpose.
    before = oa_fm_kc(ConfusionCounts(tp=0, fp=3, tn=3, fn=1))
    after = oa_fm_kc(ConfusionCounts(tp=0, fp=4, tn=3, fn=1))
    assert before.kc < 0
    assert after.kc > before.kc


def _bruteforce_curves(scores, gt):
    fpr, tpr, prec = [0.0], [0.0], [1.0]
    for t in sorted(set(scores), reverse=True):
        pred = scores >= t
        tp = np.sum(pred & gt)
        fp = np.sum(pred & ~gt)
        tpr.append(tp / gt.sum())
        fpr.append(fp / (~gt).sum())
        prec.append(tp / (tp + fp))
    aur = sum((fpr[i + 1] - fpr[i]) * (tpr[i + 1] + tpr[i]) / 2 for i in range(len(fpr) - 1))
    aup = sum((tpr[i + 1] - tpr[i]) * (prec[i + 1] + prec[i]) / 2 for i in range(len(tpr) - 1))
    return np.array(fpr), np.array(tpr), np.array(prec), aur, aup


@pytest.mark.parametrize("seed", range(5))
def test_curves_match_exhaustive_thresholds(seed):
    rng = np.random.default_rng(seed)
    scores = np.round(rng.random(30), 1)  # rounding forces ties
    gt = rng.random(30) < 0.4
    gt[:2] = [True, False]
    c = roc_pr_curves(scores, gt)
    fpr, tpr, prec, aur, aup = _bruteforce_curves(scores, gt)
    np.testing.assert_allclose(c.fpr, fpr)
    np.testing.assert_allclose(c.tpr, tpr)
    np.testing.assert_allclose(c.precision, prec)
    assert c.aur == pytest.approx(aur, abs=1e-12)
    assert c.aup == pytest.approx(aup, abs=1e-12)


def test_curve_edge_cases():
    gt = np.array([0, 0, 1, 1], bool)
    assert roc_pr_curves(np.array([0.1, 0.2, 0.8, 0.9]), gt).aur == 1.0
    assert roc_pr_curves(np.full(4, 0.3), gt).aur == 0.5
    with pytest.raises(ValueError):
        roc_pr_curves(np.zeros(3), np.zeros(3, bool))


@settings(max_examples=40, deadline=None)
@given(arrays(np.int64, 25, elements=st.integers(-50, 50)), arrays(bool, 25))
def test_curve_invariants(ints, gt):
    scores = ints / 10.0
    gt = gt.copy()
    gt[0], gt[1] = True, False
    c = roc_pr_curves(scores, gt)
    assert 0 <= c.aur <= 1 and 0 <= c.aup <= 1
    assert np.all(np.diff(c.fpr) >= 0) and np.all(np.diff(c.tpr) >= 0)
    # strictly increasing transforms change nothing
    t = roc_pr_curves(np.exp(scores) * 3 + 1, gt)
    np.testing.assert_allclose(t.tpr, c.tpr)
    np.testing.assert_allclose(t.precision, c.precision)
    assert t.aur == pytest.approx(c.aur) and t.aup == pytest.approx(c.aup)


def test_csv_and_report(tmp_path):
    c = roc_pr_curves(np.array([0.1, 0.4, 0.35, 0.8]), np.array([0, 0, 1, 1], bool))
    c.write_csv(tmp_path / "roc.csv", tmp_path / "pr.csv")
    lines = (tmp_path / "roc.csv").read_text().splitlines()
    assert lines[0] == "threshold,fpr,tpr"
    assert len(lines) == 1 + c.fpr.size
    assert (tmp_path / "pr.csv").read_text().startswith("threshold,recall,precision")
    write_report({"oa": 0.5, "fm": 1}, tmp_path / "r.txt")
    assert read_report(tmp_path / "r.txt") == {"oa": "0.5", "fm": "1"}
