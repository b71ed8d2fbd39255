"""Segmentation metrics and the low-rank / sparsity interpretability measures.

Ratios whose denominator is zero are reported as ``None`` and skipped when
averaging.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DimensionError, UsageError
from .linalg import as_matrix, l0, svd

THRESHOLD = 0.5
MATCH_RADIUS = 3.0
ROC_THRESHOLDS = 256
EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


def _ratio(num, den):
    return num / den if den else None


def _binary(mask, name):
    m = np.asarray(mask)
    if m.dtype == bool:
        return m
    if not np.isin(m, (0, 1)).all():
        raise UsageError(f"{name} must be binary (0/1 or bool)")
    return m.astype(bool)


def _same_shape(a, b):
    if np.shape(a) != np.shape(b):
        raise DimensionError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


@dataclass(frozen=True)
class ConfusionCounts:
    TP: int = 0
    FP: int = 0
    FN: int = 0
    TN: int = 0

    @property
    def total(self):
        return self.TP + self.FP + self.FN + self.TN

    def __add__(self, other):
        return ConfusionCounts(self.TP + other.TP, self.FP + other.FP,
                               self.FN + other.FN, self.TN + other.TN)

    @classmethod
    def from_masks(cls, pred, gt):
        pred, gt = _binary(pred, "pred_mask"), _binary(gt, "gt_mask")
        _same_shape(pred, gt)
        tp = int(np.count_nonzero(pred & gt))
        fp = int(np.count_nonzero(pred & ~gt))
        fn = int(np.count_nonzero(~pred & gt))
        return cls(tp, fp, fn, pred.size - tp - fp - fn)

    def scores(self):
        tp, fp, fn, tn = self.TP, self.FP, self.FN, self.TN
        return {
            "IoU": _ratio(tp, tp + fp + fn),
            "F1": _ratio(2 * tp, 2 * tp + fp + fn),
            "Acc": _ratio(tp + tn, self.total),
            "Sen": _ratio(tp, tp + fn),
            "Spe": _ratio(tn, tn + fp),
        }


def binarize(prob, threshold=THRESHOLD):
    return np.asarray(prob) >= threshold


def pixel_metrics(pred_mask, gt_mask, prob=None):
    """IoU, F1, Acc, Sen, Spe and MAE for one image.

    MAE uses the probability map ``prob`` when given, else the binary
    prediction.
    """
    counts = ConfusionCounts.from_masks(pred_mask, gt_mask)
    out = counts.scores()
    gt = _binary(gt_mask, "gt_mask").astype(np.float64)
    p = np.asarray(pred_mask, dtype=np.float64) if prob is None else np.asarray(prob, dtype=np.float64)
    _same_shape(p, gt)
    out["MAE"] = float(np.mean(np.abs(p - gt))) if gt.size else None
    return out


# ------------------------------------------------------------ target level

@dataclass(frozen=True)
class TargetCounts:
    gt_targets: int = 0
    detected: int = 0
    false_alarm_pixels: int = 0
    pixels: int = 0

    def __add__(self, other):
        return TargetCounts(self.gt_targets + other.gt_targets, self.detected + other.detected,
                            self.false_alarm_pixels + other.false_alarm_pixels,
                            self.pixels + other.pixels)

    def scores(self):
        return {"Pd": _ratio(self.detected, self.gt_targets),
                "Fa": _ratio(self.false_alarm_pixels, self.pixels)}


def components(mask):
    """8-connected components as ``(labels, count, centroids)``."""
    labels, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if count == 0:
        return labels, 0, np.zeros((0, 2))
    cents = np.array(ndimage.center_of_mass(np.ones_like(labels), labels, range(1, count + 1)))
    return labels, count, cents.reshape(count, 2)


def target_counts(pred_mask, gt_mask, match_radius=MATCH_RADIUS):
    """Component matching behind :func:`target_metrics`.

    A GT component is detected when some predicted component overlaps it or
    has its centroid within ``match_radius`` pixels of the GT centroid. A
    predicted component that matches no GT component is a false alarm and
    contributes its pixels to ``Fa``.
    """
    pred, gt = _binary(pred_mask, "pred_mask"), _binary(gt_mask, "gt_mask")
    _same_shape(pred, gt)
    gl, ng, gc = components(gt)
    pl, npred, pc = components(pred)
    match = np.zeros((ng, npred), dtype=bool)
    if ng and npred:
        dist = np.sqrt(((gc[:, None, :] - pc[None, :, :]) ** 2).sum(-1))
        match = dist <= match_radius
        both = (gl > 0) & (pl > 0)
        match[gl[both] - 1, pl[both] - 1] = True
    detected = int(match.any(axis=1).sum())
    unmatched = np.flatnonzero(~match.any(axis=0)) + 1
    fa_pixels = int(np.isin(pl, unmatched).sum()) if unmatched.size else 0
    return TargetCounts(ng, detected, fa_pixels, pred.size)


def target_metrics(pred_mask, gt_mask, match_radius=MATCH_RADIUS):
    """Probability of detection ``Pd`` and false-alarm pixel rate ``Fa``."""
    return target_counts(pred_mask, gt_mask, match_radius).scores()


# -------------------------------------------------------------------- ROC

def default_thresholds(n=ROC_THRESHOLDS):
    return np.linspace(0.0, 1.0, n)


def roc_curve(prob_map, gt_mask, thresholds=None):
    """``(fpr, tpr)`` with endpoints (0, 0) and (1, 1) included, sorted by FPR.

    A pixel is positive at threshold ``t`` when ``prob >= t``. Returns
    ``None`` when the ground truth has no positives or no negatives.
    """
    prob = np.asarray(prob_map, dtype=np.float64).ravel()
    gt = _binary(gt_mask, "gt_mask").ravel()
    _same_shape(prob, gt)
    pos, neg = int(gt.sum()), int((~gt).sum())
    if pos == 0 or neg == 0:
        return None
    t = default_thresholds() if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    t = np.sort(t)[::-1]
    # Counts of scores >= t via sorted search, one pass per class.
    sp, sn = np.sort(prob[gt]), np.sort(prob[~gt])
    tp = pos - np.searchsorted(sp, t, side="left")
    fp = neg - np.searchsorted(sn, t, side="left")
    fpr = np.concatenate([[0.0], fp / neg, [1.0]])
    tpr = np.concatenate([[0.0], tp / pos, [1.0]])
    return fpr, tpr


def trapezoid_auc(fpr, tpr):
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def roc_auc(prob_map, gt_mask, thresholds=None):
    """ROC points and trapezoidal AUC; ``AUC`` is ``None`` for one-class ground truth."""
    curve = roc_curve(prob_map, gt_mask, thresholds)
    if curve is None:
        return {"fpr": None, "tpr": None, "AUC": None}
    fpr, tpr = curve
    return {"fpr": fpr, "tpr": tpr, "AUC": trapezoid_auc(fpr, tpr)}


# --------------------------------------------------------- interpretability

def singular_spectrum(m):
    """Singular values (non-increasing) and cumulative energy shares ``sum s_i^2``."""
    s = svd(as_matrix(m)).singular_values
    energy = s * s
    total = energy.sum()
    cum = np.cumsum(energy) / total if total > 0 else np.zeros_like(s)
    return s, cum


def low_rankness(stage_outputs):
    """Per-stage ``(singular_values, cumulative_energy)`` pairs."""
    return [singular_spectrum(np.asarray(m)) for m in stage_outputs]


def top_energy_share(m, k=5):
    _, cum = singular_spectrum(m)
    return float(cum[min(k, len(cum)) - 1])


def sparsity_rate(o, zero_tol=1e-6, normalize=False):
    """``l0(O) / (H W)``.

    With ``normalize`` the map is first min-max scaled to [0, 1], so the
    tolerance is relative to its dynamic range. A constant map has rate 0.
    """
    o = as_matrix(o, "o")
    if normalize:
        lo, hi = o.min(), o.max()
        if hi - lo <= 0:
            return 0.0
        o = (o - lo) / (hi - lo)
    return l0(o, zero_tol) / o.size


@dataclass
class InterpretabilityReport:
    singular_values: list = field(default_factory=list)
    cum_energy: list = field(default_factory=list)
    sparsity: list = field(default_factory=list)

    @property
    def stages(self):
        return len(self.singular_values)

    @classmethod
    def from_stages(cls, backgrounds, objects, zero_tol=1e-6, normalize=False):
        lr = low_rankness(backgrounds)
        return cls([s for s, _ in lr], [c for _, c in lr],
                   [sparsity_rate(o, zero_tol, normalize) for o in objects])


# ---------------------------------------------------------------- reporting

def mean_ignoring_none(values):
    vals = [v for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]
    return float(np.mean(vals)) if vals else None


def evaluate(prob_maps, gt_masks, names=None, threshold=THRESHOLD, match_radius=MATCH_RADIUS,
             thresholds=None):
    """Per-image metrics plus an aggregate block.

    The aggregate pixel and target scores come from summed counts over the
    whole set; ``MAE`` and ``AUC`` are means of the per-image values.
    """
    per_image, pix, tgt = [], ConfusionCounts(), TargetCounts()
    for i, (prob, gt) in enumerate(zip(prob_maps, gt_masks)):
        prob = np.asarray(prob, dtype=np.float64)
        gt = _binary(gt, "gt_mask")
        pred = binarize(prob, threshold)
        c = ConfusionCounts.from_masks(pred, gt)
        t = target_counts(pred, gt, match_radius)
        row = {"name": names[i] if names else str(i)}
        row.update(c.scores())
        row["MAE"] = float(np.mean(np.abs(prob - gt)))
        row.update(t.scores())
        row["AUC"] = roc_auc(prob, gt, thresholds)["AUC"]
        row.update({"TP": c.TP, "FP": c.FP, "FN": c.FN, "TN": c.TN})
        per_image.append(row)
        pix, tgt = pix + c, tgt + t
    agg = pix.scores()
    agg.update(tgt.scores())
    agg["MAE"] = mean_ignoring_none([r["MAE"] for r in per_image])
    agg["AUC"] = mean_ignoring_none([r["AUC"] for r in per_image])
    agg.update({"images": len(per_image), "TP": pix.TP, "FP": pix.FP, "FN": pix.FN, "TN": pix.TN})
    return {"images": per_image, "aggregate": agg}


def write_json(path, report):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, allow_nan=False)
        fh.write("\n")


def write_lowrank_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "rank", "singular_value", "cum_energy"])
        for k, (s, cum) in enumerate(zip(report.singular_values, report.cum_energy), start=1):
            for i, (sv, ce) in enumerate(zip(s, cum), start=1):
                w.writerow([k, i, repr(float(sv)), repr(float(ce))])


def write_sparsity_csv(path, rows, columns=("sparsity_rate",)):
    """``rows`` are ``(image, stage, rate, ...)`` tuples, one rate per name in ``columns``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image", "stage", *columns])
        for name, k, *rates in rows:
            w.writerow([name, k, *(repr(float(r)) for r in rates)])
