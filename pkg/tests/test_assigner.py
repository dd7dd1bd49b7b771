"""Inference-time region routing tests."""

import numpy as np
import pytest

from amdnloc.clustering import FeatureScaler
from amdnloc.matching import TemplatePair
from amdnloc.model.assigner import RegionAssigner, predict_region_then_locate
from amdnloc.model.network import ExtractorConfig, LocalizerModel, ModelConfig


def vstripes(h, w, period, phase=0):
    img = np.zeros((h, w))
    img[:, phase::period] = 1.0
    return img


def hstripes(h, w, period, phase=0):
    img = np.zeros((h, w))
    img[phase::period, :] = 1.0
    return img


@pytest.fixture()
def assigner():
    """Two filter categories (vertical / horizontal structure), two
    clusters, three kept regions: (0,0), (0,1), (1,1)."""
    v, h = vstripes(12, 12, 3), hstripes(12, 12, 3)
    pairs = [TemplatePair(t1=v[:3, :4].copy(), t2=v[-3:, -4:].copy(),
                          source_index=0),
             TemplatePair(t1=h[:3, :4].copy(), t2=h[-3:, -4:].copy(),
                          source_index=1)]
    return RegionAssigner(
        template_pairs=pairs,
        centroids=np.array([[0.0, 0.0], [4.0, 4.0]]),
        feature_scaler=FeatureScaler(mean=np.zeros(2), std=np.ones(2)),
        pair_table=[(0, 0), (0, 1), (1, 1)],
    )


class TestAssign:
    def test_exact_pair_lookup(self, assigner):
        img = vstripes(12, 12, 3, 1)
        assert assigner.assign(img, [0.1, -0.2]) == 0
        assert assigner.assign(img, [3.9, 4.2]) == 1
        assert assigner.assign(hstripes(12, 12, 3, 1), [4.0, 4.0]) == 2

    def test_unseen_pair_falls_back_to_best_seen(self, assigner):
        """(1, 0) was never kept: the fallback ranks kept pairs by
        template similarity first, then centroid distance."""
        img = hstripes(12, 12, 3, 1)   # filter category 1
        region = assigner.assign(img, [0.0, 0.0])  # cluster 0
        assert region == 2  # the only kept pair with filter category 1

    def test_fallback_tie_breaks_to_lowest_region(self):
        flat = np.full((12, 12), 0.5)
        pair = TemplatePair(t1=flat[:3, :4].copy(), t2=flat[-3:, -4:].copy(),
                            source_index=0)
        assigner = RegionAssigner(
            template_pairs=[pair],
            centroids=np.array([[0.0], [2.0]]),
            feature_scaler=FeatureScaler(mean=np.zeros(1), std=np.ones(1)),
            pair_table=[(0, 0), (0, 1)],
        )
        # cluster distances tie exactly at the midpoint feature
        assert assigner.assign(flat, [1.0]) == 0

    def test_round_trips_through_dict(self, assigner):
        back = RegionAssigner.from_dict(assigner.to_dict())
        np.testing.assert_array_equal(back.centroids, assigner.centroids)
        assert back.pair_table == assigner.pair_table
        for a, b in zip(back.template_pairs, assigner.template_pairs):
            np.testing.assert_array_equal(a.t1, b.t1)
            np.testing.assert_array_equal(a.t2, b.t2)


class TestPredictRegionThenLocate:
    def test_routes_then_forwards(self, assigner):
        config = ModelConfig(
            branches={"cfr": ExtractorConfig(2, (3,), 3, True, 4),
                      "adcam": ExtractorConfig(1, (3,), 3, True, 4)},
            num_heads=3, init_seed=0)
        model = LocalizerModel(config)
        model.pos_mean = np.array([10.0, 20.0])
        model.pos_std = np.array([2.0, 2.0])
        cfr_img = np.stack([vstripes(12, 12, 3, 1), np.full((12, 12), 0.5)])
        adcam_img = np.zeros((1, 12, 12))
        pos, region = predict_region_then_locate(
            model, assigner, cfr_img, adcam_img, [0.0, 0.0])
        assert region == 0
        from amdnloc.model.network import forward
        expected = forward(model, {"cfr": cfr_img, "adcam": adcam_img}, 0)
        np.testing.assert_array_equal(pos, expected)

    def test_total_function_over_inputs(self, assigner):
        """Every (image, feature) combination yields some kept region."""
        config = ModelConfig(
            branches={"cfr": ExtractorConfig(2, (2,), 3, True, 3),
                      "adcam": ExtractorConfig(1, (2,), 3, True, 3)},
            num_heads=3, init_seed=1)
        model = LocalizerModel(config)
        rng = np.random.default_rng(0)
        for _ in range(10):
            img = np.stack([rng.uniform(0.05, 1.0, (12, 12)),
                            rng.uniform(0.05, 1.0, (12, 12))])
            feats = rng.normal(0, 3, 2)
            pos, region = predict_region_then_locate(
                model, assigner, img, np.zeros((1, 12, 12)), feats)
            assert 0 <= region < 3
            assert np.isfinite(pos).all()
