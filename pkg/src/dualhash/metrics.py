"""Retrieval evaluation over binary codes: Hamming ranking, mAP and friends,
quantization error, and intra/inter-class distance histograms.

Codes are +-1 matrices; ranking sorts by Hamming distance with ties broken
by ascending database index so every number here is deterministic.
"""

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from .exceptions import ConfigError, DimensionError
from .data import labels_share


def check_codes(H):
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2:
        raise DimensionError("codes must be a matrix")
    if not np.all(np.abs(H) == 1.0):
        raise ConfigError("codes must have +-1 entries")
    return H


def hamming_dist(h1, h2):
    """Number of disagreeing bits: (d - <h1, h2>) / 2."""
    h1 = np.asarray(h1, dtype=np.float64)
    h2 = np.asarray(h2, dtype=np.float64)
    if h1.shape != h2.shape or h1.ndim != 1:
        raise DimensionError("codes must be equal-length vectors")
    if not (np.all(np.abs(h1) == 1.0) and np.all(np.abs(h2) == 1.0)):
        raise ConfigError("codes must have +-1 entries")
    return int(round((h1.size - float(np.dot(h1, h2))) / 2.0))


def hamming_matrix(queries, database):
    """(n_q, n_db) integer Hamming distances via one inner-product GEMM."""
    Q = check_codes(queries)
    D = check_codes(database)
    if Q.shape[1] != D.shape[1]:
        raise DimensionError("query and database code lengths differ")
    d = Q.shape[1]
    return ((d - Q @ D.T) / 2.0).round().astype(np.int64)


def average_precision(relevance, R_q, N=None):
    """AP = sum_k P(k) * rel(k) / min(N, R_q) over the first N ranks.

    relevance is the 0/1 vector down the ranked list.  Queries with no
    relevant database item (R_q = 0) have no defined AP; returns None.
    """
    rel = np.asarray(relevance, dtype=np.float64)
    N = rel.size if N is None else min(N, rel.size)
    if N < 1:
        raise ConfigError("need at least one retrieved item")
    if R_q == 0:
        return None
    rel = rel[:N]
    cum = np.cumsum(rel)
    precision_at = cum / np.arange(1, N + 1)
    return float(np.sum(precision_at * rel) / min(N, R_q))


def _ranked_relevance(q_codes, q_labels, db_codes, db_labels):
    """Per query: the 0/1 relevance vector in ranked order, plus R_q."""
    dist = hamming_matrix(q_codes, db_codes)
    rel_all = np.zeros(dist.shape, dtype=np.float64)
    for qi in range(dist.shape[0]):
        rel_all[qi] = labels_share(q_labels[qi][None, :], db_labels).astype(np.float64)
    order = np.argsort(dist, axis=1, kind="stable")  # ties: lower index first
    ranked = np.take_along_axis(rel_all, order, axis=1)
    return ranked, rel_all.sum(axis=1), dist


def mean_ap(q_codes, q_labels, db_codes, db_labels, top_n=None):
    """Mean AP over queries; queries without relevant items are skipped."""
    ranked, R_qs, _ = _ranked_relevance(q_codes, q_labels, db_codes, db_labels)
    aps = []
    for row, R_q in zip(ranked, R_qs):
        ap = average_precision(row, int(R_q), top_n)
        if ap is not None:
            aps.append(ap)
    return float(np.mean(aps)) if aps else math.nan


def precision_at_topk(q_codes, q_labels, db_codes, db_labels, ks):
    """Mean precision among the top-K ranked results, per K."""
    ranked, _, _ = _ranked_relevance(q_codes, q_labels, db_codes, db_labels)
    out = []
    for K in ks:
        K = min(int(K), ranked.shape[1])
        out.append((K, float(np.mean(ranked[:, :K].sum(axis=1) / K))))
    return out


def precision_within_radius(q_codes, q_labels, db_codes, db_labels, r=2):
    """Mean precision over the Hamming ball of radius r; an empty ball
    contributes 0 (documented convention)."""
    dist = hamming_matrix(q_codes, db_codes)
    vals = []
    for qi in range(dist.shape[0]):
        inside = dist[qi] <= r
        if not np.any(inside):
            vals.append(0.0)
            continue
        rel = labels_share(q_labels[qi][None, :], db_labels[inside])
        vals.append(float(np.mean(rel)))
    return float(np.mean(vals))


def pr_curve(q_codes, q_labels, db_codes, db_labels):
    """Mean precision/recall over queries at every ranking cutoff.

    Queries with no relevant item are skipped; recall reaches 1 at the full
    database depth.
    """
    ranked, R_qs, _ = _ranked_relevance(q_codes, q_labels, db_codes, db_labels)
    keep = R_qs > 0
    if not np.any(keep):
        return []
    ranked = ranked[keep]
    R_qs = R_qs[keep]
    cum = np.cumsum(ranked, axis=1)
    ks = np.arange(1, ranked.shape[1] + 1)
    precision = cum / ks[None, :]
    recall = cum / R_qs[:, None]
    return list(zip(recall.mean(axis=0).tolist(), precision.mean(axis=0).tolist()))


def quantization_error(U):
    """Per-bit mean absolute gap between continuous codes and their signs."""
    U = np.asarray(U, dtype=np.float64)
    sgn = np.where(U >= 0.0, 1.0, -1.0)
    return float(np.mean(np.abs(U - sgn)))


def hamming_histograms(codes, labels):
    """Normalized intra/inter-class Hamming histograms and the separability
    gap E[D_inter] - E[D_intra] over all unordered sample pairs."""
    H = check_codes(codes)
    n, d = H.shape
    if n < 2:
        raise ConfigError("need at least two samples")
    ii, jj = np.triu_indices(n, k=1)
    dist = hamming_matrix(H, H)[ii, jj]
    same = labels_share(labels[ii], labels[jj])
    if not np.any(same) or np.all(same):
        raise ConfigError("need both intra- and inter-class pairs")
    bins = np.arange(d + 2)
    intra, _ = np.histogram(dist[same], bins=bins)
    inter, _ = np.histogram(dist[~same], bins=bins)
    intra = intra / intra.sum()
    inter = inter / inter.sum()
    separability = float(dist[~same].mean() - dist[same].mean())
    return intra, inter, separability


@dataclass
class RetrievalReport:
    """End-of-run retrieval summary; curves are plain lists for JSON/CSV."""

    map: float
    ap_at_topk: list
    ap_at_r2: float
    pr_curve: list
    quant_error: float
    separability: float
    intra_hist: list
    inter_hist: list

    def to_json(self, path=None):
        payload = json.dumps(asdict(self), indent=2)
        if path is not None:
            with open(path, "w") as f:
                f.write(payload + "\n")
        return payload


def evaluate_retrieval(
    U_db, db_labels, U_q, q_labels, top_n=None, topk_grid=None, radius=2
):
    """Binarize continuous codes and produce the full RetrievalReport."""
    db_codes = np.where(np.asarray(U_db) >= 0.0, 1.0, -1.0)
    q_codes = np.where(np.asarray(U_q) >= 0.0, 1.0, -1.0)
    if topk_grid is None:
        n_db = db_codes.shape[0]
        topk_grid = sorted({max(1, n_db // 10 * i) for i in range(1, 11)})
    intra, inter, sep = hamming_histograms(db_codes, db_labels)
    return RetrievalReport(
        map=mean_ap(q_codes, q_labels, db_codes, db_labels, top_n),
        ap_at_topk=precision_at_topk(q_codes, q_labels, db_codes, db_labels, topk_grid),
        ap_at_r2=precision_within_radius(
            q_codes, q_labels, db_codes, db_labels, radius
        ),
        pr_curve=pr_curve(q_codes, q_labels, db_codes, db_labels),
        quant_error=quantization_error(np.asarray(U_db)),
        separability=sep,
        intra_hist=intra.tolist(),
        inter_hist=inter.tolist(),
    )
