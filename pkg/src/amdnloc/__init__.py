"""Multi-source NLOS fingerprint localization.

Synthesizes multipath channel fingerprints over a procedural urban
scene, segments the scene into irregular regions by fusing a two-stage
matched filter over frequency-response images with centroid clustering
of path parameters, and trains a shared-extractor multi-head regressor
that maps fingerprints to 2-D coordinates.
"""

from . import channel, clustering, dataio, fusion, images, matching, scene
from .channel import DatasetMeta, PropagationPath
from .scene import Building, MultipathSample, Scene

__version__ = "0.1.0"

__all__ = [
    "channel",
    "clustering",
    "dataio",
    "fusion",
    "images",
    "matching",
    "scene",
    "DatasetMeta",
    "PropagationPath",
    "Building",
    "MultipathSample",
    "Scene",
    "__version__",
]
