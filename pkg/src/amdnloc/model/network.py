"""The localization network: per-fingerprint feature extractors, feature
concatenation, and an array of per-region linear regression heads that
share the extractors.

The model is initialized Xavier-uniform from a single seeded generator
in a fixed parameter order, and serializes to a JSON manifest plus a
little-endian float32 blob with named sections; save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .layers import (
    GlobalAvgPool,
    Linear,
    Param,
    ReLU,
    ResidualStage,
    xavier_uniform,
)


class ModelDomainError(ValueError):
    """Raised when a model operation precondition is violated."""


@dataclass(frozen=True)
class ExtractorConfig:
    """Shape of one convolutional feature extractor branch."""

    in_channels: int
    channels: tuple[int, ...] = (8, 16, 32)
    kernel_size: int = 3
    residual: bool = True
    feature_length: int = 64

    def to_dict(self):
        d = asdict(self)
        d["channels"] = list(self.channels)
        d["type"] = "conv"
        return d


@dataclass(frozen=True)
class DenseConfig:
    """Shape of the dense branch used for raw path-parameter inputs."""

    in_dim: int
    hidden: int = 32
    feature_length: int = 64

    def to_dict(self):
        d = asdict(self)
        d["type"] = "dense"
        return d


@dataclass(frozen=True)
class ModelConfig:
    """Branches keyed by input name, plus the head count.

    Branches are always processed in sorted-name order; that fixes the
    initialization draw order and the feature concatenation order the
    same way no matter how the config dict was built or reloaded.
    """

    branches: dict
    num_heads: int
    init_seed: int = 0
    dtype: str = "float32"

    @property
    def branch_order(self) -> list[str]:
        return sorted(self.branches)

    @property
    def fused_length(self) -> int:
        return sum(self.branches[n].feature_length for n in self.branch_order)


class ConvExtractor:
    def __init__(self, name: str, cfg: ExtractorConfig, rng, dtype):
        self.cfg = cfg
        self.stages = []
        cin = cfg.in_channels
        for i, cout in enumerate(cfg.channels):
            self.stages.append(ResidualStage(
                f"{name}.stage{i}", cin, cout, cfg.kernel_size, rng, dtype,
                residual=cfg.residual))
            cin = cout
        self.pool = GlobalAvgPool()
        self.proj = Linear(f"{name}.proj", cin, cfg.feature_length, rng, dtype)

    @property
    def params(self):
        out = []
        for st in self.stages:
            out += st.params
        return out + self.proj.params

    def forward(self, x):
        # inputs arrive (N, C, H, W); the conv stack runs channels-last
        x = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
        for st in self.stages:
            x = st.forward(x)
        return self.proj.forward(self.pool.forward(x))

    def backward(self, g):
        # the first stage sits on raw inputs: its input gradient is never
        # consumed, and skipping the fold is the single biggest saving
        g = self.pool.backward(self.proj.backward(g))
        for i in range(len(self.stages) - 1, 0, -1):
            g = self.stages[i].backward(g)
        self.stages[0].backward(g, need_input_grad=False)
        return None


class DenseExtractor:
    def __init__(self, name: str, cfg: DenseConfig, rng, dtype):
        self.cfg = cfg
        self.fc1 = Linear(f"{name}.fc1", cfg.in_dim, cfg.hidden, rng, dtype)
        self.relu = ReLU()
        self.fc2 = Linear(f"{name}.fc2", cfg.hidden, cfg.feature_length,
                          rng, dtype)

    @property
    def params(self):
        return self.fc1.params + self.fc2.params

    def forward(self, x):
        return self.fc2.forward(self.relu.forward(self.fc1.forward(x)))

    def backward(self, g):
        return self.fc1.backward(self.relu.backward(self.fc2.backward(g)))


class LocalizerModel:
    """Shared extractors + per-region linear heads.

    ``forward_batch`` runs in the standardized coordinate space used
    for training; ``forward`` (module-level) converts back to meters.
    """

    def __init__(self, config: ModelConfig):
        self.config = config
        dtype = np.dtype(config.dtype)
        rng = np.random.default_rng(
            np.random.SeedSequence([int(config.init_seed), 0]))
        self.branches = {}
        for name in config.branch_order:
            bcfg = config.branches[name]
            cls = ConvExtractor if isinstance(bcfg, ExtractorConfig) else DenseExtractor
            self.branches[name] = cls(name, bcfg, rng, dtype)
        fused = config.fused_length
        self.head_w = []
        self.head_b = []
        for i in range(config.num_heads):
            self.head_w.append(Param(
                f"head{i}.w", xavier_uniform((2, fused), fused, 2, rng, dtype)))
            self.head_b.append(Param(f"head{i}.b", np.zeros(2, dtype=dtype)))
        # meters <-> standardized coordinate mapping, set by training
        self.pos_mean = np.zeros(2)
        self.pos_std = np.ones(2)
        self.extras: dict = {}   # split indices, region labels, assigner...

    @property
    def params(self) -> list[Param]:
        out = []
        for branch in self.branches.values():
            out += branch.params
        for w, b in zip(self.head_w, self.head_b):
            out += [w, b]
        return out

    @property
    def num_heads(self) -> int:
        return len(self.head_w)

    def zero_grads(self):
        for p in self.params:
            p.zero_grad()

    def forward_batch(self, inputs: dict, regions: np.ndarray) -> np.ndarray:
        """Standardized-space predictions for a batch.

        ``inputs`` maps branch name to a batch array; ``regions`` holds
        one head index per sample.
        """
        feats = [self.branches[name].forward(inputs[name])
                 for name in self.branches]
        fused = np.concatenate(feats, axis=1)
        self._fused = fused
        self._regions = regions
        preds = np.zeros((fused.shape[0], 2), dtype=fused.dtype)
        for r in np.unique(regions):
            idx = np.nonzero(regions == r)[0]
            preds[idx] = fused[idx] @ self.head_w[r].value.T + self.head_b[r].value
        return preds

    def backward_batch(self, gpreds: np.ndarray):
        """Backpropagate prediction gradients through heads and branches.

        Only the heads whose region appears in the batch are touched;
        the shared extractors accumulate over all samples.
        """
        fused, regions = self._fused, self._regions
        gfused = np.zeros_like(fused)
        for r in np.unique(regions):
            idx = np.nonzero(regions == r)[0]
            self.head_w[r].grad += gpreds[idx].T @ fused[idx]
            self.head_b[r].grad += gpreds[idx].sum(axis=0)
            self.head_w[r].touched = self.head_b[r].touched = True
            gfused[idx] = gpreds[idx] @ self.head_w[r].value
        offset = 0
        for name in self.branches:
            width = self.branches[name].cfg.feature_length
            self.branches[name].backward(gfused[:, offset:offset + width])
            offset += width

    def snapshot(self) -> list[np.ndarray]:
        return [p.value.copy() for p in self.params]

    def restore(self, snap: list[np.ndarray]):
        for p, v in zip(self.params, snap):
            p.value[...] = v

    def standardize_positions(self, pos_m: np.ndarray) -> np.ndarray:
        return (pos_m - self.pos_mean) / self.pos_std

    def to_meters(self, pos_std: np.ndarray) -> np.ndarray:
        return pos_std * self.pos_std + self.pos_mean


def mse_loss(predictions: np.ndarray, targets: np.ndarray) -> float:
    """Mean over samples of the squared Euclidean position error."""
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape:
        raise ModelDomainError(
            f"shape mismatch: {predictions.shape} vs {targets.shape}")
    if predictions.shape[0] == 0:
        raise ModelDomainError("empty batch")
    return float(((predictions - targets) ** 2).sum(axis=1).mean())


def forward(model: LocalizerModel, inputs: dict, region: int) -> np.ndarray:
    """Predicted position in meters for one sample with a known region."""
    if not (0 <= region < model.num_heads):
        raise ModelDomainError(
            f"region {region} outside the kept range [0, {model.num_heads})")
    batch = {name: np.asarray(arr)[np.newaxis].astype(model.config.dtype)
             for name, arr in inputs.items()}
    pred = model.forward_batch(batch, np.array([region]))
    return model.to_meters(pred.astype(np.float64))[0]


# ---------------------------------------------------------------------------
# serialization


def _branch_config_from_dict(d: dict):
    if d["type"] == "conv":
        return ExtractorConfig(
            in_channels=int(d["in_channels"]),
            channels=tuple(int(c) for c in d["channels"]),
            kernel_size=int(d["kernel_size"]),
            residual=bool(d["residual"]),
            feature_length=int(d["feature_length"]),
        )
    return DenseConfig(in_dim=int(d["in_dim"]), hidden=int(d["hidden"]),
                       feature_length=int(d["feature_length"]))


def save_model(model: LocalizerModel, path) -> None:
    """Write <path> (JSON manifest) and the sibling .bin weight blob."""
    path = Path(path)
    blob_path = path.with_suffix(".bin")
    sections = []
    chunks = []
    offset = 0
    for p in model.params:
        data = np.ascontiguousarray(p.value, dtype="<f4").tobytes()
        sections.append({"name": p.name, "shape": list(p.value.shape),
                         "offset": offset, "dtype": "<f4"})
        chunks.append(data)
        offset += len(data)
    manifest = {
        "format_version": 1,
        "model": {
            "branches": {name: cfg.to_dict()
                         for name, cfg in model.config.branches.items()},
            "num_heads": model.config.num_heads,
            "init_seed": model.config.init_seed,
            "dtype": model.config.dtype,
            "fusion": "concat",
        },
        "position_scaler": {"mean": [float(v) for v in model.pos_mean],
                            "std": [float(v) for v in model.pos_std]},
        "extras": model.extras,
        "weights_file": blob_path.name,
        "sections": sections,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    blob_path.write_bytes(b"".join(chunks))


def load_model(path) -> LocalizerModel:
    path = Path(path)
    manifest = json.loads(path.read_text(encoding="utf-8"))
    mdl_info = manifest["model"]
    branches = {name: _branch_config_from_dict(d)
                for name, d in mdl_info["branches"].items()}
    config = ModelConfig(branches=branches,
                         num_heads=int(mdl_info["num_heads"]),
                         init_seed=int(mdl_info["init_seed"]),
                         dtype=mdl_info["dtype"])
    model = LocalizerModel(config)
    raw = (path.parent / manifest["weights_file"]).read_bytes()
    by_name = {p.name: p for p in model.params}
    for sec in manifest["sections"]:
        p = by_name[sec["name"]]
        count = int(np.prod(sec["shape"])) if sec["shape"] else 1
        arr = np.frombuffer(raw, dtype=sec["dtype"], count=count,
                            offset=sec["offset"]).reshape(sec["shape"])
        p.value[...] = arr.astype(p.value.dtype)
    scaler = manifest["position_scaler"]
    model.pos_mean = np.array(scaler["mean"], dtype=np.float64)
    model.pos_std = np.array(scaler["std"], dtype=np.float64)
    model.extras = manifest.get("extras", {})
    return model
