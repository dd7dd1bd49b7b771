"""Inference-time region assignment.

Training and the evaluation protocol use known segmentation labels;
this module covers the deployment case where a fresh sample must first
be routed to a region.  The filter category comes from the best
dual-template match against the stored category representatives, the
cluster label from the nearest stored centroid, and the pair is looked
up in the kept-region table.  A pair that was never kept falls back to
the closest kept pair, ranked by (template similarity, centroid
distance) and tie-broken to the lowest region index, so the function is
total.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..clustering import FeatureScaler
from ..matching import TemplatePair, dual_match
from .network import LocalizerModel, forward


@dataclass
class RegionAssigner:
    template_pairs: list[TemplatePair]     # index = filter category
    centroids: np.ndarray                  # (K, d)
    feature_scaler: FeatureScaler
    pair_table: list[tuple[int, int]]      # kept region -> (filter, cluster)

    def assign(self, cfr_image, path_features_raw) -> int:
        sims = np.array([dual_match(p, cfr_image) for p in self.template_pairs])
        cfr_cat = int(np.argmax(sims))
        feats = self.feature_scaler.transform(
            np.asarray(path_features_raw, dtype=np.float64))
        dists = np.sqrt(((self.centroids - feats) ** 2).sum(axis=1))
        cluster = int(np.argmin(dists))
        lookup = {pair: r for r, pair in enumerate(self.pair_table)}
        if (cfr_cat, cluster) in lookup:
            return lookup[(cfr_cat, cluster)]
        return min(
            range(len(self.pair_table)),
            key=lambda r: (-sims[self.pair_table[r][0]],
                           dists[self.pair_table[r][1]], r))

    def to_dict(self) -> dict:
        return {
            "templates": [
                {"t1": p.t1.tolist(), "t2": p.t2.tolist(),
                 "source_index": int(p.source_index)}
                for p in self.template_pairs
            ],
            "centroids": self.centroids.tolist(),
            "feature_mean": self.feature_scaler.mean.tolist(),
            "feature_std": self.feature_scaler.std.tolist(),
            "pair_table": [[int(c), int(a)] for c, a in self.pair_table],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegionAssigner":
        pairs = [
            TemplatePair(t1=np.array(rec["t1"], dtype=np.float64),
                         t2=np.array(rec["t2"], dtype=np.float64),
                         source_index=int(rec["source_index"]))
            for rec in d["templates"]
        ]
        return cls(
            template_pairs=pairs,
            centroids=np.array(d["centroids"], dtype=np.float64),
            feature_scaler=FeatureScaler(
                mean=np.array(d["feature_mean"], dtype=np.float64),
                std=np.array(d["feature_std"], dtype=np.float64)),
            pair_table=[(int(c), int(a)) for c, a in d["pair_table"]],
        )


def build_region_assigner(filter_assignment, clustering_result,
                          feature_scaler: FeatureScaler,
                          regions) -> RegionAssigner:
    """Bundle the stage artifacts a deployed model needs for routing."""
    pairs = [filter_assignment.representatives[c]
             for c in range(filter_assignment.num_categories)]
    return RegionAssigner(
        template_pairs=pairs,
        centroids=np.asarray(clustering_result.centroids, dtype=np.float64),
        feature_scaler=feature_scaler,
        pair_table=list(regions.pair_table),
    )


def predict_region_then_locate(model: LocalizerModel,
                               regions_meta: RegionAssigner,
                               cfr_image, adcam_image,
                               path_features_raw) -> tuple[np.ndarray, int]:
    """Assign a region, then locate: returns (position in meters, region)."""
    region = regions_meta.assign(cfr_image, path_features_raw)
    img = cfr_image.pixels if hasattr(cfr_image, "pixels") else np.asarray(cfr_image)
    adc = adcam_image.pixels if hasattr(adcam_image, "pixels") else np.asarray(adcam_image)
    pos = forward(model, {"cfr": img, "adcam": adc}, region)
    return pos, region
