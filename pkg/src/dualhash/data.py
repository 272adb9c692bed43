"""Synthetic clustered datasets, similarity pairs, and train/query splits.

Gaussian blobs around class means drawn on a sphere stand in for image
features; the retrieval protocol uses the training rows as the database and
a held-out split as queries.  Labels are multi-hot boolean rows so the
single-label and multi-label similarity rules share one code path.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError
from .numerics import sample_indices

TRAIN, QUERY = "train", "query"


@dataclass(frozen=True)
class Dataset:
    """Feature rows with multi-hot labels and a split tag per row."""

    features: np.ndarray  # (n, d_a) float64
    labels: np.ndarray  # (n, n_classes) bool
    split: np.ndarray  # (n,) str tags

    def __post_init__(self):
        n = self.features.shape[0]
        if self.labels.shape[0] != n or self.split.shape[0] != n:
            raise ConfigError("features, labels, split must have equal row counts")
        if not np.all(self.labels.sum(axis=1) >= 1):
            raise ConfigError("every sample needs at least one label")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def n_classes(self):
        return self.labels.shape[1]

    def rows(self, tag):
        return np.flatnonzero(self.split == tag)

    def subset(self, tag):
        idx = self.rows(tag)
        return self.features[idx], self.labels[idx]


def labels_share(labels_a, labels_b):
    """Similarity rule: 1 when the label sets intersect."""
    return (labels_a & labels_b).any(axis=-1)


def gen_gaussian_clusters(
    rng,
    classes,
    per_class,
    d_a,
    spread,
    per_class_query=0,
    multi_label=False,
    n_label_pool=8,
    max_labels=3,
):
    """Draw per-class Gaussian blobs around unit-sphere means.

    With multi_label=True, class identity is replaced by 1..max_labels tags
    from a pool of n_label_pool, with co-tagged samples sharing a mean
    mixture.  Features are normalized to zero mean / unit variance per
    dimension over the whole set; spread=0 collapses each class to its mean.
    """
    if classes < 2:
        raise ConfigError(f"need at least 2 classes, got {classes}")
    if per_class < 1 or d_a < 1 or spread < 0:
        raise ConfigError("per_class, d_a must be positive and spread nonnegative")

    n_tags = n_label_pool if multi_label else classes
    anchor_means = rng.normal(size=(n_tags, d_a))
    anchor_means /= np.maximum(
        np.linalg.norm(anchor_means, axis=1, keepdims=True), 1e-12
    )

    # one label set + mean per cluster, shared between train and query rows
    cluster_means = np.empty((classes, d_a))
    cluster_labels = np.zeros((classes, n_tags), dtype=bool)
    for c in range(classes):
        if multi_label:
            k = 1 + int(rng.integers(0, max_labels))
            chosen = rng.generator.choice(n_tags, size=k, replace=False)
        else:
            chosen = np.array([c])
        cluster_means[c] = anchor_means[chosen].mean(axis=0)
        cluster_labels[c, chosen] = True

    feats, labs, split = [], [], []
    for tag, count in ((TRAIN, per_class), (QUERY, per_class_query)):
        for c in range(classes):
            if count == 0:
                continue
            noise = rng.normal(size=(count, d_a)) * spread
            feats.append(cluster_means[c][None, :] + noise)
            labs.append(np.repeat(cluster_labels[c][None, :], count, axis=0))
            split.extend([tag] * count)

    X = np.vstack(feats)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    X = (X - mu) / sd
    return Dataset(X, np.vstack(labs), np.asarray(split, dtype=object))


def build_pairs(labels, mode="all", rng=None, per_anchor=5):
    """Similarity pairs (i, j, s) over the given label rows.

    mode='all' enumerates every unordered pair; mode='sampled' draws
    per_anchor distinct partners per anchor (deduplicated).  s = 1 exactly
    when the two label sets intersect.
    """
    n = labels.shape[0]
    if n < 2:
        raise ConfigError("need at least two samples to build pairs")
    if mode == "all":
        ii, jj = np.triu_indices(n, k=1)
    elif mode == "sampled":
        if rng is None:
            raise ConfigError("sampled pair mode needs an rng")
        anchors, partners = [], []
        for i in range(n):
            js = sample_indices(rng, n, min(per_anchor, n - 1))
            for j in js:
                if j != i:
                    anchors.append(i)
                    partners.append(int(j))
        ii = np.asarray(anchors, dtype=np.int64)
        jj = np.asarray(partners, dtype=np.int64)
        lo, hi = np.minimum(ii, jj), np.maximum(ii, jj)
        _, keep = np.unique(lo * n + hi, return_index=True)
        keep.sort()
        ii, jj = ii[keep], jj[keep]
    else:
        raise ConfigError(f"unknown pair mode {mode!r}")
    s = labels_share(labels[ii], labels[jj]).astype(np.float64)
    return ii, jj, s


def save_dataset_csv(ds, features_path, labels_path):
    """Features to one CSV; labels (as bitmask columns) and split to another."""
    np.savetxt(features_path, ds.features, delimiter=",")
    with open(labels_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"label_{c}" for c in range(ds.n_classes)] + ["split"])
        for row, tag in zip(ds.labels, ds.split):
            w.writerow([int(v) for v in row] + [tag])


def load_dataset_csv(features_path, labels_path):
    """Inverse of save_dataset_csv."""
    X = np.loadtxt(features_path, delimiter=",", ndmin=2)
    labs, split = [], []
    with open(labels_path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        n_classes = len(header) - 1
        for row in r:
            labs.append([bool(int(v)) for v in row[:n_classes]])
            split.append(row[-1])
    return Dataset(X, np.asarray(labs, dtype=bool), np.asarray(split, dtype=object))
