"""Centroid clustering of per-sample path parameters and automatic
selection of the cluster count.

Each sample is summarized by a fixed-length vector of first-arrival
path parameters plus aggregates (samples have variable path counts, so
a fixed summary is required).  Cluster count selection runs the
clusterer over a K range, min-max normalizes the silhouette and
variance-ratio score curves, and picks the K with the best combined
score; ties go to the smaller K.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ClusteringDomainError(ValueError):
    """Raised when clustering preconditions are violated."""


@dataclass(frozen=True)
class FeatureScaler:
    """Per-dimension standardization parameters."""

    mean: np.ndarray
    std: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std


@dataclass
class ClusteringResult:
    k: int
    centroids: np.ndarray            # (K, d)
    labels: np.ndarray               # (M,) int
    silhouette: float
    calinski_harabasz: float
    rng_seed: int
    wcss_history: list[float] = field(default_factory=list)


def path_feature_matrix(samples) -> np.ndarray:
    """Raw (unstandardized) per-sample path summary vectors.

    Columns: first-path arrival angle, first-path departure angle,
    first-path gain magnitude in dB, first-path delay in samples,
    total received-power proxy in dB, path count.
    """
    rows = []
    for s in samples:
        first = s.paths[0]
        power = sum(10.0 ** (-p.pathloss / 10.0) for p in s.paths)
        rows.append([
            first.aoa,
            first.aod,
            20.0 * np.log10(abs(first.complex_gain)),
            float(first.sampled_delay),
            -10.0 * np.log10(power),
            float(len(s.paths)),
        ])
    return np.asarray(rows, dtype=np.float64)


def fit_scaler(features: np.ndarray) -> FeatureScaler:
    """Zero-mean unit-variance scaling; constant columns keep std 1."""
    x = np.asarray(features, dtype=np.float64)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    return FeatureScaler(mean=mean, std=std)


def _squared_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = x[:, np.newaxis, :] - centers[np.newaxis, :, :]
    return np.einsum("mkd,mkd->mk", diff, diff)


def _greedy_plusplus_init(x: np.ndarray, k: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++ seeding: several distance-weighted candidates
    per step, keeping the one that most reduces the potential."""
    m = x.shape[0]
    n_candidates = 2 + int(np.log(k))
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    centers[0] = x[int(rng.integers(m))]
    d2 = np.einsum("md,md->m", x - centers[0], x - centers[0])
    for c in range(1, k):
        total = d2.sum()
        if total > 0.0:
            cand_idx = rng.choice(m, size=n_candidates, p=d2 / total)
        else:
            cand_idx = rng.integers(m, size=n_candidates)
        best_pot, best = np.inf, None
        for ci in cand_idx:
            cd = x - x[int(ci)]
            pot = float(np.minimum(d2, np.einsum("md,md->m", cd, cd)).sum())
            if pot < best_pot:
                best_pot, best = pot, int(ci)
        centers[c] = x[best]
        cd = x - centers[c]
        d2 = np.minimum(d2, np.einsum("md,md->m", cd, cd))
    return centers


def kmeans(features: np.ndarray, k: int, seed: int, max_iter: int = 300,
           tol: float = 1e-6) -> ClusteringResult:
    """Lloyd iterations from a greedy k-means++ start.

    Deterministic for a fixed seed.  An empty cluster is refilled with
    the point currently farthest from its own centroid.  The recorded
    per-iteration cost (after the centroid update) is non-increasing.
    """
    x = np.asarray(features, dtype=np.float64)
    m = x.shape[0]
    if k < 2:
        raise ClusteringDomainError("k must be >= 2")
    if k > m:
        raise ClusteringDomainError(f"k={k} exceeds sample count {m}")
    rng = np.random.default_rng(seed)
    centroids = _greedy_plusplus_init(x, k, rng)

    labels = np.zeros(m, dtype=np.int64)
    wcss_history: list[float] = []
    for _ in range(max_iter):
        d2 = _squared_distances(x, centroids)
        labels = d2.argmin(axis=1)
        point_cost = d2[np.arange(m), labels].copy()

        counts = np.bincount(labels, minlength=k)
        while np.any(counts == 0):
            empty = int(np.argmin(counts))
            donor = int(np.argmax(point_cost))
            counts[labels[donor]] -= 1
            labels[donor] = empty
            counts[empty] += 1
            point_cost[donor] = -1.0  # placed; ineligible this round

        new_centroids = np.zeros_like(centroids)
        for c in range(k):
            new_centroids[c] = x[labels == c].mean(axis=0)
        wcss = float(np.einsum("md,md->", x - new_centroids[labels],
                               x - new_centroids[labels]))
        if wcss_history and wcss > wcss_history[-1] * (1.0 + 1e-12) + 1e-15:
            raise AssertionError(
                f"Lloyd cost increased: {wcss_history[-1]} -> {wcss}")
        wcss_history.append(wcss)
        movement = float(np.sqrt(((new_centroids - centroids) ** 2)
                                 .sum(axis=1)).max())
        centroids = new_centroids
        if movement < tol:
            break

    sil = silhouette(x, labels) if k >= 2 else 0.0
    ch = calinski_harabasz(x, labels)
    return ClusteringResult(k=k, centroids=centroids, labels=labels,
                            silhouette=sil, calinski_harabasz=ch,
                            rng_seed=seed, wcss_history=wcss_history)


def _check_labels(x: np.ndarray, labels: np.ndarray) -> int:
    labels = np.asarray(labels)
    k = int(labels.max()) + 1
    if k < 2:
        raise ClusteringDomainError("need at least two clusters")
    counts = np.bincount(labels, minlength=k)
    if np.any(counts == 0):
        raise ClusteringDomainError("every cluster must be non-empty")
    return k


def silhouette(features: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette value over all samples.

    Singletons contribute 0; a sample with zero intra- and
    inter-cluster distance also contributes 0.
    """
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    k = _check_labels(x, labels)
    m = x.shape[0]
    diff = x[:, np.newaxis, :] - x[np.newaxis, :, :]
    dist = np.sqrt(np.einsum("mnd,mnd->mn", diff, diff))
    counts = np.bincount(labels, minlength=k)

    # mean distance from every sample to every cluster
    sums = np.zeros((m, k))
    for c in range(k):
        sums[:, c] = dist[:, labels == c].sum(axis=1)

    scores = np.zeros(m)
    for i in range(m):
        c = labels[i]
        if counts[c] == 1:
            continue  # singleton
        a = sums[i, c] / (counts[c] - 1)
        b = np.inf
        for other in range(k):
            if other != c:
                b = min(b, sums[i, other] / counts[other])
        denom = max(a, b)
        scores[i] = (b - a) / denom if denom > 0.0 else 0.0
    return float(scores.mean())


def calinski_harabasz(features: np.ndarray, labels: np.ndarray) -> float:
    """Variance-ratio score; returns +inf when the within-cluster
    dispersion vanishes (perfectly tight clusters)."""
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    k = _check_labels(x, labels)
    m = x.shape[0]
    overall = x.mean(axis=0)
    between = 0.0
    within = 0.0
    for c in range(k):
        members = x[labels == c]
        centroid = members.mean(axis=0)
        between += len(members) * float(((centroid - overall) ** 2).sum())
        within += float(((members - centroid) ** 2).sum())
    if within <= 0.0 or m == k:
        return np.inf
    return (between / (k - 1)) / (within / (m - k))


def _minmax(curve: np.ndarray) -> np.ndarray:
    """Min-max normalize a score curve to [0, 1].

    Infinite entries map to 1; a constant curve maps to all zeros so it
    cannot influence the combined selection.
    """
    curve = np.asarray(curve, dtype=np.float64)
    out = np.zeros_like(curve)
    finite = np.isfinite(curve)
    if not finite.any():
        return out
    lo, hi = curve[finite].min(), curve[finite].max()
    if hi > lo:
        out[finite] = (curve[finite] - lo) / (hi - lo)
    out[~finite] = 1.0
    return out


def select_k(features: np.ndarray, k_min: int, k_max: int, seed: int,
             max_iter: int = 300, tol: float = 1e-6) -> ClusteringResult:
    """Pick the cluster count maximizing the summed normalized scores."""
    x = np.asarray(features, dtype=np.float64)
    m = x.shape[0]
    if not (2 <= k_min < k_max <= m - 1):
        raise ClusteringDomainError(
            f"need 2 <= k_min < k_max <= M-1, got {k_min}, {k_max}, M={m}")
    results = [kmeans(x, k, seed, max_iter=max_iter, tol=tol)
               for k in range(k_min, k_max + 1)]
    sil = _minmax(np.array([r.silhouette for r in results]))
    ch = _minmax(np.array([r.calinski_harabasz for r in results]))
    return results[int(np.argmax(sil + ch))]  # argmax ties -> smaller K


def clustering_to_dict(result: ClusteringResult,
                       scaler: FeatureScaler | None = None) -> dict:
    out = {
        "version": 1,
        "K": int(result.k),
        "seed": int(result.rng_seed),
        "labels": [int(v) for v in result.labels],
        "centroids": [[float(v) for v in row] for row in result.centroids],
        "scores": {
            "silhouette": float(result.silhouette),
            "ch": (None if not np.isfinite(result.calinski_harabasz)
                   else float(result.calinski_harabasz)),
        },
    }
    if scaler is not None:
        out["feature_mean"] = [float(v) for v in scaler.mean]
        out["feature_std"] = [float(v) for v in scaler.std]
    return out
