"""Pipeline configuration: one JSON document drives all six stages.

Every CLI flag overrides the corresponding config key; the effective
(merged) configuration is echoed into each stage's output directory for
provenance.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .channel import DatasetMeta
from .evaluation import BASELINE_NAMES, EvalConfig
from .matching import FilterConfig
from .model.network import ExtractorConfig
from .model.training import TrainConfig
from .scene import Scene

CONFIG_VERSION = 1

DEFAULT_CONFIG = {
    "version": CONFIG_VERSION,
    "scene": None,
    "synth": {"num_samples": 500, "max_paths": 16, "retry_budget": 200},
    "meta": {
        "num_bs_antennas": 64,
        "num_subcarriers": 64,
        "carrier_frequency": 60.0e9,
        "bandwidth": 0.05e9,
    },
    "filter": {"tau_in": 0.95, "tau_out": 0.90, "template": [8, 16]},
    "cluster": {"k_min": 2, "k_max": 12, "seed": 0},
    "cleanse": {"min_size": 3},
    "train": {"epochs": 150, "batch_size": 16, "learning_rate": 0.003,
              "seed": 0, "split": [0.70, 0.15, 0.15]},
    "model": {"channels": [8, 16, 32], "kernel_size": 3, "residual": True,
              "feature_length": 64, "dense_hidden": 32},
    "eval": {"baselines": list(BASELINE_NAMES), "grid": [4, 4],
             "cdf_max_m": 20.0, "cdf_step_m": 0.5},
}


class ConfigError(ValueError):
    """Configuration fails validation; ``violations`` lists every issue."""

    def __init__(self, violations: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(violations))
        self.violations = violations


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


class PipelineConfig:
    def __init__(self, data: dict | None = None):
        self.data = _deep_merge(DEFAULT_CONFIG, data or {})

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        # a bare scene file (extent/buildings/...) is accepted as synth input
        if "buildings" in raw and "scene" not in raw:
            raw = {"scene": raw}
        return cls(raw)

    def override(self, section: str, key: str, value) -> None:
        if value is not None:
            self.data[section][key] = value

    def validate(self) -> list[str]:
        d = self.data
        bad = []
        if d.get("version") != CONFIG_VERSION:
            bad.append(f"version must be {CONFIG_VERSION}")
        syn = d["synth"]
        if syn["num_samples"] < 1:
            bad.append("synth.num_samples must be >= 1")
        if syn["max_paths"] < 1:
            bad.append("synth.max_paths must be >= 1")
        flt = d["filter"]
        if not (0.0 < flt["tau_in"] <= 1.0):
            bad.append("filter.tau_in must be in (0, 1]")
        if not (0.0 < flt["tau_out"] <= 1.0):
            bad.append("filter.tau_out must be in (0, 1]")
        if len(flt["template"]) != 2 or min(flt["template"]) < 1:
            bad.append("filter.template must be two positive integers")
        clu = d["cluster"]
        if not (2 <= clu["k_min"] < clu["k_max"]):
            bad.append("cluster: need 2 <= k_min < k_max")
        if d["cleanse"]["min_size"] < 1:
            bad.append("cleanse.min_size must be >= 1")
        trn = d["train"]
        if trn["epochs"] < 0:
            bad.append("train.epochs must be >= 0")
        if trn["batch_size"] < 1:
            bad.append("train.batch_size must be >= 1")
        if trn["learning_rate"] <= 0:
            bad.append("train.learning_rate must be positive")
        fr = trn["split"]
        if len(fr) != 3 or min(fr) < 0 or abs(sum(fr) - 1.0) > 1e-9:
            bad.append("train.split must be three fractions summing to 1")
        unknown = set(d["eval"]["baselines"]) - set(BASELINE_NAMES)
        if unknown:
            bad.append(f"eval.baselines: unknown methods {sorted(unknown)}")
        if len(d["eval"]["grid"]) != 2 or min(d["eval"]["grid"]) < 1:
            bad.append("eval.grid must be two positive integers")
        return bad

    def require_valid(self) -> None:
        bad = self.validate()
        if bad:
            raise ConfigError(bad)

    # typed views -----------------------------------------------------

    def meta(self) -> DatasetMeta:
        m = self.data["meta"]
        return DatasetMeta(
            num_bs_antennas=int(m["num_bs_antennas"]),
            num_subcarriers=int(m["num_subcarriers"]),
            carrier_frequency=float(m["carrier_frequency"]),
            bandwidth=float(m["bandwidth"]),
            antenna_spacing=m.get("antenna_spacing"),
            scene_extent=tuple(self.data["scene"]["extent"])
            if self.data["scene"] else (250.0, 250.0),
        )

    def scene(self) -> Scene:
        if not self.data["scene"]:
            raise ConfigError(["scene: missing scene description"])
        return Scene.from_dict(self.data["scene"])

    def filter_config(self) -> FilterConfig:
        f = self.data["filter"]
        return FilterConfig(template_height=int(f["template"][0]),
                            template_width=int(f["template"][1]),
                            tau_in=float(f["tau_in"]),
                            tau_out=float(f["tau_out"]))

    def train_config(self) -> TrainConfig:
        t = self.data["train"]
        return TrainConfig(epochs=int(t["epochs"]),
                           batch_size=int(t["batch_size"]),
                           learning_rate=float(t["learning_rate"]),
                           seed=int(t["seed"]),
                           split_fractions=tuple(float(v) for v in t["split"]))

    def eval_config(self) -> EvalConfig:
        m = self.data["model"]
        e = self.data["eval"]
        return EvalConfig(
            train=self.train_config(),
            channels=tuple(int(c) for c in m["channels"]),
            kernel_size=int(m["kernel_size"]),
            residual=bool(m["residual"]),
            feature_length=int(m["feature_length"]),
            dense_hidden=int(m["dense_hidden"]),
            grid=tuple(int(v) for v in e["grid"]),
            cdf_max_m=float(e["cdf_max_m"]),
            cdf_step_m=float(e["cdf_step_m"]),
        )

    def extractor_config(self, in_channels: int) -> ExtractorConfig:
        m = self.data["model"]
        return ExtractorConfig(in_channels=in_channels,
                               channels=tuple(int(c) for c in m["channels"]),
                               kernel_size=int(m["kernel_size"]),
                               residual=bool(m["residual"]),
                               feature_length=int(m["feature_length"]))

    def echo(self, out_dir, stage: str) -> Path:
        """Write the effective config next to the stage outputs."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / f"effective_config_{stage}.json"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.data, fh, sort_keys=True, indent=1)
            fh.write("\n")
        return path
