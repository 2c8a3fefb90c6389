"""Synthetic datasets, Dirichlet non-iid partitioning and proxy sets."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .models import TaskMode
from .numerics import stream

log = logging.getLogger(__name__)

MAX_REDRAWS = 100


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    ids: np.ndarray
    mode: TaskMode = TaskMode.MULTICLASS

    def __post_init__(self):
        x, y, ids = self.features, self.labels, self.ids
        if x.ndim != 2 or y.ndim != 2 or ids.ndim != 1:
            raise ValueError("features and labels must be 2-D, ids 1-D")
        if not (len(x) == len(y) == len(ids)):
            raise ValueError(f"row counts differ: {len(x)}, {len(y)}, {len(ids)}")
        if len(ids) < 1:
            raise ValueError("a dataset needs at least one example")
        if len(np.unique(ids)) != len(ids):
            raise ValueError("example ids must be unique")
        if self.mode is TaskMode.MULTICLASS and not np.all(y.sum(axis=1) == 1):
            raise ValueError("every multiclass label row needs exactly one positive")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return self.labels.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.ids[idx], self.mode)

    def label_histogram(self) -> np.ndarray:
        """Per-class positive counts."""
        return self.labels.sum(axis=0).astype(np.int64)

    def partition_keys(self) -> np.ndarray:
        """Class used to bucket each row: its label, or the first positive.

        Multilabel rows with no positive get the extra key ``num_classes``.
        """
        pos = self.labels > 0
        return np.where(pos.any(axis=1), pos.argmax(axis=1), self.num_classes)

    def with_labels(self, labels: np.ndarray) -> "Dataset":
        return Dataset(self.features, np.asarray(labels, dtype=np.float64), self.ids, self.mode)


def concat_datasets(parts: Sequence[Dataset]) -> Dataset:
    order = np.argsort(np.concatenate([p.ids for p in parts]), kind="stable")
    return Dataset(
        np.concatenate([p.features for p in parts])[order],
        np.concatenate([p.labels for p in parts])[order],
        np.concatenate([p.ids for p in parts])[order],
        parts[0].mode,
    )


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic family; train/val/test/proxy share it."""

    num_classes: int = 8
    dim: int = 32
    class_separation: float = 3.0
    mode: TaskMode = TaskMode.MULTICLASS
    positive_rate: float = 0.25  # multilabel only
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 1 or self.dim < 1:
            raise ValueError("num_classes and dim must be positive")
        if self.class_separation < 0:
            raise ValueError("class_separation must be non-negative")
        if not 0 < self.positive_rate < 1:
            raise ValueError("positive_rate must lie in (0, 1)")

    def directions(self) -> np.ndarray:
        """Class directions, shape (num_classes, dim), unit norm.

        Orthonormal when num_classes <= dim, so class means placed at
        ``sep/sqrt(2) * direction`` are exactly ``sep`` apart.
        """
        rng = stream(self.seed, "synthetic-directions")
        if self.num_classes <= self.dim:
            q, _ = np.linalg.qr(rng.normal(size=(self.dim, self.num_classes)))
            return q.T.copy()
        v = rng.normal(size=(self.num_classes, self.dim))
        return v / np.linalg.norm(v, axis=1, keepdims=True)


def sample_synthetic(spec: SyntheticSpec, n: int, split: str, id_offset: int = 0) -> Dataset:
    """Draw ``n`` examples from the family; ``split`` picks an independent stream."""
    if n < 1:
        raise ValueError(f"dataset size must be positive, got {n}")
    rng = stream(spec.seed, f"synthetic-{split}")
    dirs = spec.directions()
    c = spec.num_classes
    if spec.mode is TaskMode.MULTICLASS:
        # balanced: a shuffled, evenly tiled label sequence
        cls = rng.permutation(np.arange(n) % c)
        labels = np.eye(c)[cls]
        centers = dirs * (spec.class_separation / np.sqrt(2.0))
        x = centers[cls] + rng.normal(size=(n, spec.dim))
    else:
        labels = (rng.random((n, c)) < spec.positive_rate).astype(np.float64)
        x = labels @ (dirs * spec.class_separation) + rng.normal(size=(n, spec.dim))
    ids = np.arange(id_offset, id_offset + n, dtype=np.int64)
    return Dataset(x, labels, ids, spec.mode)


def make_synthetic(
    num_classes: int,
    dim: int,
    n: int,
    class_separation: float,
    mode: TaskMode = TaskMode.MULTICLASS,
    seed: int = 0,
) -> Dataset:
    spec = SyntheticSpec(num_classes, dim, class_separation, TaskMode(mode), seed=seed)
    return sample_synthetic(spec, n, "train")


def make_proxy(spec: SyntheticSpec, m: int = 500, id_offset: int = 10**9) -> Dataset:
    """Unlabelled-in-spirit transfer set from its own stream and id range.

    Labels are kept only for diagnostics; distillation never reads them.
    """
    if m < 1:
        raise ValueError(f"proxy size must be positive, got {m}")
    return sample_synthetic(spec, m, "proxy", id_offset=id_offset)


@dataclass(frozen=True)
class PartitionSpec:
    num_clients: int = 3
    alpha: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_clients < 1:
            raise ValueError("num_clients must be at least 1")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


def largest_remainder(proportions: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to ``total``; leftover units go to the largest
    fractional parts, ties to the lower index."""
    quotas = np.asarray(proportions, dtype=np.float64) * total
    counts = np.floor(quotas).astype(np.int64)
    short = total - int(counts.sum())
    if short:
        frac = quotas - counts
        order = np.lexsort((np.arange(len(frac)), -frac))
        counts[order[:short]] += 1
    return counts


@dataclass
class PartitionTrace:
    """What the partitioner drew, for replay and diagnostics."""

    proportions: dict[int, np.ndarray] = field(default_factory=dict)
    counts: dict[int, np.ndarray] = field(default_factory=dict)
    redraws: dict[int, int] = field(default_factory=dict)


def dirichlet_partition(ds: Dataset, spec: PartitionSpec, trace: PartitionTrace | None = None) -> list[Dataset]:
    """Split ``ds`` across clients with per-class Dirichlet(alpha) shares.

    For each class (ascending), that class's rows are shuffled and dealt out
    by largest-remainder counts of a Dirichlet draw. A class with at least K
    rows is re-drawn until every client gets one of its rows. Output shards
    keep the input's row order.
    """
    k = spec.num_clients
    if k > len(ds):
        raise PartitionError(f"{k} clients but only {len(ds)} examples")
    keys = ds.partition_keys()
    rng = stream(spec.seed, "dirichlet-partition")
    owner = np.empty(len(ds), dtype=np.int64)
    for c in np.unique(keys):
        rows = np.flatnonzero(keys == c)
        rows = rows[rng.permutation(len(rows))]
        for attempt in range(MAX_REDRAWS):
            props = rng.dirichlet(np.full(k, spec.alpha))
            counts = largest_remainder(props, len(rows))
            if len(rows) < k or counts.min() >= 1:
                break
        else:
            raise PartitionError(f"class {c}: no draw gave every client an example in {MAX_REDRAWS} attempts")
        if trace is not None:
            trace.proportions[int(c)] = props
            trace.counts[int(c)] = counts
            trace.redraws[int(c)] = attempt
        owner[rows] = np.repeat(np.arange(k), counts)
    shards = []
    for client in range(k):
        idx = np.flatnonzero(owner == client)
        if len(idx) == 0:
            raise PartitionError(f"client {client} received no examples")
        shards.append(ds.subset(idx))
    return shards


@dataclass(frozen=True)
class LabelPrior:
    probs: np.ndarray
    total: int
    mode: TaskMode = TaskMode.MULTICLASS

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        c = len(self.probs)
        if self.mode is TaskMode.MULTICLASS:
            return np.eye(c)[rng.choice(c, size=n, p=self.probs)]
        return (rng.random((n, c)) < self.probs).astype(np.float64)


def estimate_label_prior(
    histograms: Sequence[Sequence[int]],
    mode: TaskMode = TaskMode.MULTICLASS,
    totals: Sequence[int] | None = None,
) -> LabelPrior:
    """Pool per-client label counts into p(y).

    Multiclass: pooled counts normalised to a distribution. Multilabel: pooled
    positive counts divided by the pooled example count (``totals``).
    """
    h = np.asarray(histograms, dtype=np.float64)
    if h.ndim != 2:
        raise ValueError("histograms must be equal-length count vectors")
    if (h < 0).any():
        raise ValueError("label counts must be non-negative")
    pooled = h.sum(axis=0)
    mode = TaskMode(mode)
    if mode is TaskMode.MULTICLASS:
        total = pooled.sum()
        if total <= 0:
            raise ValueError("all label counts are zero")
        return LabelPrior(pooled / total, int(total), mode)
    if totals is None or len(totals) != len(h):
        raise ValueError("multilabel priors need one example total per client")
    n = float(np.sum(totals))
    if n <= 0:
        raise ValueError("all example totals are zero")
    return LabelPrior(np.clip(pooled / n, 0.0, 1.0), int(n), mode)


def write_csv(ds: Dataset, path: Path | str | io.TextIOBase) -> None:
    """``id,x0..x{D-1},y0..y{C-1}``; floats as repr text, which round-trips."""
    header = ["id"] + [f"x{i}" for i in range(ds.dim)] + [f"y{j}" for j in range(ds.num_classes)]

    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(ds)):
            w.writerow(
                [int(ds.ids[i])]
                + [repr(float(v)) for v in ds.features[i]]
                + [str(int(v)) for v in ds.labels[i]]
            )

    if isinstance(path, (str, Path)):
        with open(path, "w", newline="") as fh:
            emit(fh)
    else:
        emit(path)


def read_csv(path: Path | str, mode: TaskMode = TaskMode.MULTICLASS) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    if not header or header[0] != "id":
        raise ValueError(f"{path}: header must start with 'id'")
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    ycols = [i for i, h in enumerate(header) if h.startswith("y")]
    if not rows:
        raise ValueError(f"{path}: no rows")
    arr = np.array(rows, dtype=object)
    return Dataset(
        arr[:, xcols].astype(np.float64),
        arr[:, ycols].astype(np.float64),
        arr[:, 0].astype(np.int64),
        TaskMode(mode),
    )
