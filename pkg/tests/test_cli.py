"""Command-line pipeline tests on a miniature configuration."""

import json

import pytest

from amdnloc.cli import main

MINI_CONFIG = {
    "version": 1,
    "scene": {
        "extent": [60.0, 60.0],
        "bs_position": [6.0, 30.0],
        "rng_seed": 99,
        "buildings": [
            {"rect": [18.0, 12.0, 30.0, 26.0], "reflection": 0.85},
            {"rect": [20.0, 36.0, 34.0, 50.0], "reflection": 0.75},
        ],
    },
    "synth": {"num_samples": 48, "max_paths": 12, "retry_budget": 200},
    "meta": {"num_bs_antennas": 8, "num_subcarriers": 16,
             "carrier_frequency": 60.0e9, "bandwidth": 0.25e9},
    "filter": {"tau_in": 0.9, "tau_out": 0.9, "template": [3, 5]},
    "cluster": {"k_min": 2, "k_max": 4, "seed": 0},
    "cleanse": {"min_size": 3},
    "train": {"epochs": 2, "batch_size": 8, "learning_rate": 0.003,
              "seed": 0, "split": [0.70, 0.15, 0.15]},
    "model": {"channels": [2, 4], "kernel_size": 3, "residual": True,
              "feature_length": 6, "dense_hidden": 4},
    "eval": {"baselines": ["res_cfr", "amdnloc"], "grid": [2, 2],
             "cdf_max_m": 20.0, "cdf_step_m": 0.5},
}


def write_config(tmp_path, **overrides):
    cfg = json.loads(json.dumps(MINI_CONFIG))
    for dotted, value in overrides.items():
        section, key = dotted.split(".")
        cfg[section][key] = value
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def run_pipeline(tmp_path, workdir_name="run"):
    cfg = write_config(tmp_path)
    d = tmp_path / workdir_name
    data = str(d / "dataset")
    art = d / "artifacts"
    assert main(["synth", "--config", cfg, "--out", data]) == 0
    assert main(["segment", "--config", cfg, "--data", data,
                 "--out", str(art / "labels_cfr.json")]) == 0
    assert main(["cluster", "--config", cfg, "--data", data,
                 "--out", str(art / "labels_adcam.json")]) == 0
    assert main(["fuse", "--config", cfg,
                 "--cfr", str(art / "labels_cfr.json"),
                 "--adcam", str(art / "labels_adcam.json"),
                 "--out", str(art / "regions.json")]) == 0
    assert main(["train", "--config", cfg, "--data", data,
                 "--regions", str(art / "regions.json"),
                 "--out", str(art / "model.json")]) == 0
    assert main(["eval", "--config", cfg, "--model", str(art / "model.json"),
                 "--data", data, "--report", str(d / "report")]) == 0
    return d


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    return run_pipeline(tmp), tmp


class TestFullPipeline:
    def test_all_stage_artifacts_exist(self, pipeline_dir):
        d, _ = pipeline_dir
        for rel in ("dataset/meta.json", "dataset/cfr.bin",
                    "artifacts/labels_cfr.json", "artifacts/labels_adcam.json",
                    "artifacts/regions.json", "artifacts/model.json",
                    "artifacts/model.bin", "artifacts/model_train_report.csv",
                    "report/report.json", "report/regions_scatter.svg",
                    "report/mse_curves.svg", "report/cdf_curves.svg",
                    "report/amdnloc_cdf.csv", "report/res_cfr_mse_curve.csv"):
            assert (d / rel).exists(), rel

    def test_effective_config_echoed_per_stage(self, pipeline_dir):
        d, _ = pipeline_dir
        for stage, where in (("synth", "dataset"), ("segment", "artifacts"),
                             ("train", "artifacts"), ("eval", "report")):
            path = d / where / f"effective_config_{stage}.json"
            assert path.exists()
            doc = json.loads(path.read_text())
            assert doc["version"] == 1

    def test_routing_assigner_embedded_in_model(self, pipeline_dir):
        d, _ = pipeline_dir
        manifest = json.loads((d / "artifacts" / "model.json").read_text())
        assert "assigner" in manifest["extras"]
        assert "pair_table" in manifest["extras"]

    def test_report_covers_requested_baselines(self, pipeline_dir):
        d, _ = pipeline_dir
        doc = json.loads((d / "report" / "report.json").read_text())
        assert set(doc["methods"]) == {"res_cfr", "amdnloc"}


class TestDeterminism:
    def test_two_runs_byte_identical(self, tmp_path):
        """The whole pipeline is a pure function of config and seeds."""
        a = run_pipeline(tmp_path, "a")
        b = run_pipeline(tmp_path, "b")
        names = [p.relative_to(a) for p in sorted(a.rglob("*")) if p.is_file()]
        assert names
        for rel in names:
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel

    def test_stage_rerun_is_byte_identical(self, pipeline_dir, tmp_path):
        d, tmp = pipeline_dir
        cfg = str(tmp / "config.json")
        out = tmp_path / "labels_again.json"
        assert main(["segment", "--config", cfg,
                     "--data", str(d / "dataset"), "--out", str(out)]) == 0
        assert out.read_bytes() == (d / "artifacts" / "labels_cfr.json").read_bytes()


class TestExitCodes:
    def test_missing_dataset_exits_2(self, tmp_path):
        cfg = write_config(tmp_path)
        rc = main(["segment", "--config", cfg, "--data",
                   str(tmp_path / "nowhere"), "--out",
                   str(tmp_path / "x.json")])
        assert rc == 2

    def test_train_without_regions_exits_2(self, pipeline_dir, tmp_path):
        d, tmp = pipeline_dir
        rc = main(["train", "--config", str(tmp / "config.json"),
                   "--data", str(d / "dataset"),
                   "--regions", str(tmp_path / "missing_regions.json"),
                   "--out", str(tmp_path / "m.json")])
        assert rc == 2

    def test_invalid_config_exits_3(self, tmp_path):
        cfg = write_config(tmp_path, **{"filter.tau_in": 1.7})
        rc = main(["synth", "--config", cfg, "--out", str(tmp_path / "ds")])
        assert rc == 3

    def test_config_violations_listed(self, tmp_path, capsys):
        cfg = write_config(tmp_path, **{"filter.tau_in": 1.7,
                                        "cluster.k_min": 9})
        rc = main(["synth", "--config", cfg, "--out", str(tmp_path / "ds")])
        assert rc == 3
        err = capsys.readouterr().err
        assert "tau_in" in err and "k_min" in err

    def test_threads_flag_does_not_change_synth(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["synth", "--config", cfg, "--threads", "1",
                     "--out", str(tmp_path / "t1")]) == 0
        assert main(["synth", "--config", cfg, "--threads", "4",
                     "--out", str(tmp_path / "t4")]) == 0
        assert (tmp_path / "t1" / "cfr.bin").read_bytes() == \
            (tmp_path / "t4" / "cfr.bin").read_bytes()


class TestPgmDump:
    def test_segment_dump_writes_pgms(self, pipeline_dir, tmp_path):
        d, tmp = pipeline_dir
        dump = tmp_path / "pgms"
        assert main(["segment", "--config", str(tmp / "config.json"),
                     "--data", str(d / "dataset"),
                     "--dump-pgm", str(dump),
                     "--out", str(tmp_path / "seg.json")]) == 0
        assert (dump / "cfr_0.pgm").exists()
        assert (dump / "cfr_47.pgm").exists()
