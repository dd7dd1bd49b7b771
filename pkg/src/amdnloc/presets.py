"""Bundled reference configuration: a 250 m x 250 m four-building scene
sized so the whole pipeline runs on a desktop CPU."""

from importlib import resources
from pathlib import Path

from .config import PipelineConfig


def reference_config_path() -> Path:
    return Path(resources.files("amdnloc") / "data" / "reference_config.json")


def reference_config() -> PipelineConfig:
    return PipelineConfig.from_file(reference_config_path())
