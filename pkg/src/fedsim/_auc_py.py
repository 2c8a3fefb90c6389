"""Numpy implementation of the rank-statistic kernels (no compiler needed).

Both kernels count, in integers, twice the Mann-Whitney U:
every (positive, negative) pair with the positive scored higher counts 2,
a tied pair counts 1. Weights are example multiplicities, so a bootstrap
resample is just a weight vector over the original rows.
"""

import numpy as np


def _group_sums(w: np.ndarray, starts: np.ndarray) -> np.ndarray:
    return np.add.reduceat(w, starts, axis=-1)


def _auc_from_weights(order, groups, label_col, weights):
    # weights: (..., n) in original row order
    w = weights[..., order]
    lab = label_col[order].astype(np.int64)
    starts = np.flatnonzero(np.r_[True, groups[1:] != groups[:-1]])
    pos_g = _group_sums(w * lab, starts)
    neg_g = _group_sums(w * (1 - lab), starts)
    neg_below = np.cumsum(neg_g, axis=-1) - neg_g
    u2 = (pos_g * (2 * neg_below + neg_g)).sum(axis=-1)
    npos = pos_g.sum(axis=-1)
    nneg = neg_g.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        auc = u2 / (2.0 * npos.astype(np.float64) * nneg.astype(np.float64))
    return np.where((npos > 0) & (nneg > 0), auc, np.nan)


def auc_weighted(order, groups, labels, c, weights):
    return float(_auc_from_weights(order, groups, labels[:, c], np.asarray(weights, dtype=np.int64)))


def bootstrap_auc(order, groups, labels, resample_idx):
    nb, n = resample_idx.shape
    rows = labels.shape[0]
    flat = (resample_idx + rows * np.arange(nb, dtype=np.int64)[:, None]).ravel()
    counts = np.bincount(flat, minlength=nb * rows).reshape(nb, rows)
    out = np.empty((nb, order.shape[0]), dtype=np.float64)
    for c in range(order.shape[0]):
        out[:, c] = _auc_from_weights(order[c], groups[c], labels[:, c], counts)
    return out
