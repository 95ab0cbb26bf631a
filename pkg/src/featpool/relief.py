"""Feature screening: best-model labels and multi-class ReliefF ranking."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .features import FeatureCatalog


def label_best_model(log_densities) -> np.ndarray:
    """Index of the model with the highest log density per row (0-based).

    ``np.argmax`` returns the first maximum, so ties go to the lowest index.
    """
    ld = getattr(log_densities, "log_densities", log_densities)
    ld = np.atleast_2d(np.asarray(ld, dtype=float))
    if not np.all(np.isfinite(ld)):
        raise ValueError("density matrix has missing or non-finite cells")
    return np.argmax(ld, axis=1)


def relieff_weights(
    X: np.ndarray,
    labels: np.ndarray,
    k_neighbors: int = 5,
    sample_count: Optional[int] = None,
    seed: int = 0,
) -> np.ndarray:
    """Multi-class ReliefF quality estimates.

    Neighbours are found by Manhattan distance; the per-feature difference is
    ``|a - b| / range``. Rows that are exact duplicates (same features and
    label) are collapsed into one instance carrying a multiplicity, so a row is
    never its own "nearest hit" through a copy. ``sample_count=None`` uses every
    instance as a reference.

    Parameters
    ----------
    X : (n_instances, n_features) array, standardized features
    labels : (n_instances,) class labels
    k_neighbors : hits and misses per class used for each reference instance
    sample_count : number of reference rows drawn (seeded) or None for all
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    n, p = X.shape
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2:
        raise ValueError("ReliefF needs at least two distinct labels")
    prior = dict(zip(classes.tolist(), (counts / n).tolist()))

    # collapse duplicate rows
    keyed = np.column_stack([X, np.searchsorted(classes, labels)])
    uniq, first, inverse, mult = np.unique(
        keyed, axis=0, return_index=True, return_inverse=True, return_counts=True
    )
    # order unique rows by first appearance so tie-breaking follows the input order
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    uniq, mult = uniq[order], mult[order]
    inverse = rank[inverse.reshape(-1)]
    U = uniq[:, :p]
    ulab = classes[uniq[:, p].astype(int)]
    for c in classes:
        if np.count_nonzero(ulab == c) <= k_neighbors:
            raise ValueError(
                f"k_neighbors={k_neighbors} too large: class {c!r} has "
                f"{np.count_nonzero(ulab == c)} distinct instances"
            )

    if sample_count is None or sample_count >= n:
        ref_weight = mult.astype(float)
        m = float(n)
    else:
        rng = np.random.default_rng(seed)
        picked = rng.choice(n, size=sample_count, replace=False)
        ref_weight = np.bincount(inverse[picked], minlength=U.shape[0]).astype(float)
        m = float(sample_count)

    span = X.max(axis=0) - X.min(axis=0)
    scale = np.where(span > 0, span, 1.0)
    W = np.zeros(p)
    for r in np.flatnonzero(ref_weight):
        dist = np.abs(U - U[r]).sum(axis=1)
        dist[r] = np.inf
        own = ulab[r]
        total = np.zeros(p)
        for c in classes:
            idx = np.flatnonzero(ulab == c)
            idx = idx[idx != r]
            # stable sort keeps ties deterministic
            near = idx[np.argsort(dist[idx], kind="stable")[:k_neighbors]]
            diff = (np.abs(U[near] - U[r]) / scale).sum(axis=0) / k_neighbors
            if c == own:
                total -= diff
            else:
                total += prior[c] / (1.0 - prior[own]) * diff
        W += ref_weight[r] * total
    W /= m
    W[span == 0] = 0.0
    return W


def relieff_rank(
    features,
    labels,
    k_neighbors: int = 5,
    sample_count: Optional[int] = None,
    seed: int = 0,
    names: Optional[Sequence[str]] = None,
) -> list:
    """ReliefF weights as ``[(name, weight), ...]`` sorted by decreasing weight."""
    X = getattr(features, "values", features)
    if names is None:
        names = getattr(features, "names", None) or [f"f{j}" for j in range(np.shape(X)[1])]
    w = relieff_weights(X, labels, k_neighbors, sample_count, seed)
    order = sorted(range(len(w)), key=lambda j: (-w[j], j))
    return [(names[j], float(w[j])) for j in order]


def select_top_k(ranked: Sequence, k: int) -> FeatureCatalog:
    if not 1 <= k <= len(ranked):
        raise ValueError(f"k must be between 1 and {len(ranked)}, got {k}")
    return FeatureCatalog(tuple(name for name, _ in ranked[:k]))
