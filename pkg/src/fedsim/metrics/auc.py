"""ROC AUC via the Mann-Whitney rank statistic, mAUC and bootstrap CIs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import kernels
from ..numerics import stream

log = logging.getLogger(__name__)

MIN_VALID_RESAMPLES = 10


class UndefinedAucError(ValueError):
    """Labels contain a single class, so AUC is undefined."""


def _rank_layout(scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column ascending order and tie-group ids, each shaped (C, n)."""
    order = np.argsort(scores, axis=0, kind="stable").T.copy()
    sorted_scores = np.take_along_axis(scores, order.T, axis=0).T
    change = np.diff(sorted_scores, axis=1) != 0
    groups = np.concatenate([np.zeros((order.shape[0], 1), np.int64), np.cumsum(change, axis=1)], axis=1)
    return order.astype(np.int64), np.ascontiguousarray(groups, dtype=np.int64)


def _as_binary(labels) -> np.ndarray:
    lab = np.asarray(labels)
    if not np.isin(lab, (0, 1)).all():
        raise ValueError("labels must be binary (0/1)")
    return lab.astype(np.uint8)


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), from ranks in O(n log n)."""
    s = np.asarray(scores, dtype=np.float64)
    lab = _as_binary(labels)
    if s.ndim != 1 or s.shape != lab.shape:
        raise ValueError(f"scores {s.shape} and labels {lab.shape} must be equal-length vectors")
    if not np.isfinite(s).all():
        raise ValueError("scores must be finite")
    npos = int(lab.sum())
    if npos == 0 or npos == len(lab):
        raise UndefinedAucError("AUC needs at least one positive and one negative label")
    order, groups = _rank_layout(s[:, None])
    return kernels.auc_weighted(order[0], groups[0], lab[:, None], 0, np.ones(len(s), dtype=np.int64))


def mauc(per_class: Sequence[float]) -> float:
    vals = [float(v) for v in per_class]
    if not vals:
        raise ValueError("mAUC of an empty set of classes")
    # shifted mean: exact when all values agree
    base = vals[0]
    return base + math.fsum(v - base for v in vals) / len(vals)


def _resample_indices(n: int, resamples: int, seed: int) -> np.ndarray:
    return stream(seed, "bootstrap").integers(0, n, size=(resamples, n), dtype=np.int64)


def _percentiles(values: np.ndarray, level: float) -> tuple[float, float]:
    lo, hi = np.quantile(values, [(1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0])
    return float(lo), float(hi)


def bootstrap_ci(
    scores: Sequence[float],
    labels: Sequence[int],
    resamples: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile bootstrap interval for AUC over example-level resamples.

    Resamples that contain only one class are skipped.
    """
    if resamples < 1:
        raise ValueError("resamples must be positive")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    s = np.asarray(scores, dtype=np.float64)
    lab = _as_binary(labels)
    roc_auc(s, lab)  # validates inputs
    order, groups = _rank_layout(s[:, None])
    aucs = kernels.bootstrap_auc(order, groups, lab[:, None], _resample_indices(len(s), resamples, seed))[:, 0]
    valid = aucs[~np.isnan(aucs)]
    if len(valid) < MIN_VALID_RESAMPLES:
        raise ValueError(f"only {len(valid)} resamples had both classes")
    return _percentiles(valid, level)


@dataclass(frozen=True)
class AucReport:
    per_class: np.ndarray  # NaN where the class is undefined in the labels
    mauc: float
    ci_low: np.ndarray | None = None
    ci_high: np.ndarray | None = None
    mauc_ci: tuple[float, float] | None = None

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.per_class)

    def to_dict(self) -> dict:
        def clean(a):
            return None if a is None else [None if math.isnan(v) else float(v) for v in a]

        return {
            "per_class": clean(self.per_class),
            "mauc": self.mauc,
            "ci_low": clean(self.ci_low),
            "ci_high": clean(self.ci_high),
            "mauc_ci": None if self.mauc_ci is None else list(self.mauc_ci),
        }


def evaluate_auc(
    scores: np.ndarray,
    labels: np.ndarray,
    *,
    resamples: int = 0,
    level: float = 0.95,
    seed: int = 0,
) -> AucReport:
    """Per-class one-vs-rest AUC, mAUC, and (if ``resamples``) bootstrap CIs.

    Classes with a single label value are skipped with a warning. CIs for
    every class and for mAUC come from one shared set of resamples, and are
    widened if needed so each interval contains its point estimate.
    """
    scores = np.asarray(scores, dtype=np.float64)
    lab = _as_binary(labels)
    if scores.shape != lab.shape or scores.ndim != 2:
        raise ValueError(f"score matrix {scores.shape} and label matrix {lab.shape} must match")
    npos = lab.sum(axis=0)
    defined = (npos > 0) & (npos < len(lab))
    for c in np.flatnonzero(~defined):
        log.warning("class %d has a single label value in the evaluation set; skipped in mAUC", c)
    if not defined.any():
        raise UndefinedAucError("no class has both positive and negative examples")
    order, groups = _rank_layout(scores)
    per_class = np.full(scores.shape[1], np.nan)
    ones = np.ones(len(lab), dtype=np.int64)
    for c in np.flatnonzero(defined):
        per_class[c] = kernels.auc_weighted(order[c], groups[c], lab, c, ones)
    point = mauc(per_class[defined])
    if not resamples:
        return AucReport(per_class, point)

    cols = np.flatnonzero(defined)
    boot = kernels.bootstrap_auc(order[cols], groups[cols], np.ascontiguousarray(lab[:, cols]),
                                 _resample_indices(len(lab), resamples, seed))
    ci_low = np.full(scores.shape[1], np.nan)
    ci_high = np.full(scores.shape[1], np.nan)
    for j, c in enumerate(cols):
        valid = boot[:, j][~np.isnan(boot[:, j])]
        if len(valid) < MIN_VALID_RESAMPLES:
            raise ValueError(f"class {c}: only {len(valid)} resamples had both classes")
        lo, hi = _percentiles(valid, level)
        ci_low[c], ci_high[c] = min(lo, per_class[c]), max(hi, per_class[c])
    with np.errstate(invalid="ignore"):
        boot_mauc = np.nanmean(boot, axis=1)
    boot_mauc = boot_mauc[~np.isnan(boot_mauc)]
    lo, hi = _percentiles(boot_mauc, level)
    return AucReport(per_class, point, ci_low, ci_high, (min(lo, point), max(hi, point)))


def average_reports(reports: Sequence[AucReport]) -> AucReport:
    """Mean of per-model reports (class-wise, ignoring undefined entries)."""
    if not reports:
        raise ValueError("no reports to average")
    with np.errstate(invalid="ignore"):
        per_class = np.nanmean(np.stack([r.per_class for r in reports]), axis=0)
    defined = ~np.isnan(per_class)
    point = mauc(per_class[defined])
    if any(r.ci_low is None for r in reports):
        return AucReport(per_class, point)
    ci_low = np.nanmean(np.stack([r.ci_low for r in reports]), axis=0)
    ci_high = np.nanmean(np.stack([r.ci_high for r in reports]), axis=0)
    lo = float(np.mean([r.mauc_ci[0] for r in reports]))
    hi = float(np.mean([r.mauc_ci[1] for r in reports]))
    return AucReport(per_class, point, ci_low, ci_high, (min(lo, point), max(hi, point)))
