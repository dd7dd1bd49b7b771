"""Fusion of the image-filter labels with the clustering labels into
final regions, plus removal of undersized regions.

Every distinct (filter label, cluster label) pair becomes one region;
pairs are numbered in lexicographic order of their values, which is
stable under sample reordering.  Regions with fewer than ``min_size``
members are aberrations (bad recordings or uniquely placed samples)
and their samples are excluded from training and evaluation entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DROPPED = -1  # sentinel label for samples removed by cleansing


class FusionDomainError(ValueError):
    """Raised when fusion/cleansing preconditions are violated."""


@dataclass
class RegionMap:
    """Per-sample final region labels.

    ``labels[i]`` is the region index of sample i or DROPPED.
    ``pair_table[r]`` is the (filter label, cluster label) pair that
    region r was formed from.
    """

    labels: np.ndarray                  # (M,) int
    pair_table: list[tuple[int, int]]
    min_size: int = 0

    @property
    def num_regions(self) -> int:
        return len(self.pair_table)

    @property
    def kept(self) -> np.ndarray:
        return np.nonzero(self.labels != DROPPED)[0]

    @property
    def dropped(self) -> np.ndarray:
        return np.nonzero(self.labels == DROPPED)[0]


def fuse_labels(cfr_labels, adcam_labels) -> RegionMap:
    """Combine two label sets by enumerating distinct pairs.

    Pairs are sorted lexicographically (filter label ascending, then
    cluster label) and numbered from 0.
    """
    cfr = np.asarray(cfr_labels, dtype=np.int64)
    adcam = np.asarray(adcam_labels, dtype=np.int64)
    if cfr.shape != adcam.shape:
        raise FusionDomainError(
            f"label lengths differ: {cfr.shape} vs {adcam.shape}")
    pairs = sorted({(int(c), int(a)) for c, a in zip(cfr, adcam)})
    index = {pair: r for r, pair in enumerate(pairs)}
    labels = np.array([index[(int(c), int(a))] for c, a in zip(cfr, adcam)],
                      dtype=np.int64)
    return RegionMap(labels=labels, pair_table=pairs)


def cleanse(regions: RegionMap, min_size: int = 3) -> RegionMap:
    """Drop regions with fewer than ``min_size`` members and relabel
    the survivors compactly, preserving their order."""
    labels = regions.labels
    kept_mask = labels != DROPPED
    counts = np.bincount(labels[kept_mask], minlength=regions.num_regions)
    survivors = [r for r in range(regions.num_regions) if counts[r] >= min_size]
    if not survivors:
        raise FusionDomainError("no usable regions: every region is "
                                f"smaller than min_size={min_size}")
    remap = {old: new for new, old in enumerate(survivors)}
    new_labels = np.array(
        [remap.get(int(v), DROPPED) for v in labels], dtype=np.int64)
    return RegionMap(labels=new_labels,
                     pair_table=[regions.pair_table[r] for r in survivors],
                     min_size=min_size)


def regions_to_dict(regions: RegionMap) -> dict:
    return {
        "version": 1,
        "I": regions.num_regions,
        "min_size": regions.min_size,
        "pair_table": [[int(c), int(a)] for c, a in regions.pair_table],
        "labels": [int(v) for v in regions.labels],
        "dropped": [int(v) for v in regions.dropped],
    }


def regions_from_dict(d: dict) -> RegionMap:
    return RegionMap(
        labels=np.asarray(d["labels"], dtype=np.int64),
        pair_table=[(int(c), int(a)) for c, a in d["pair_table"]],
        min_size=int(d["min_size"]),
    )
