"""Evaluation harness: error metrics, baseline configurations and
report emission.

Baselines span one-extractor/one-head models, the fused two-extractor
single-head model, multi-head variants driven by a fixed rectangular
grid partition (the traditional segmentation), and the full pipeline
with fused irregular regions.  All methods share one canonical
train/val/test split, stratified by the fused regions, so their test
errors are directly comparable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .channel import DatasetMeta  # noqa: E402
from .clustering import fit_scaler  # noqa: E402
from .fusion import DROPPED, RegionMap  # noqa: E402
from .model.network import (  # noqa: E402
    DenseConfig,
    ExtractorConfig,
    LocalizerModel,
    ModelConfig,
    mse_loss,
)
from .model.training import (  # noqa: E402
    TrainConfig,
    build_model_inputs,
    first_path_features,
    predict_meters,
    stratified_split,
    train,
)

import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "amdnloc"

BASELINE_NAMES = (
    "res_cfr",
    "res_adcam",
    "res_cfradcam",
    "res_multi_cfradcam",
    "res_multi_cfrperfectadcam",
    "amdnloc",
)


class EvaluationError(ValueError):
    pass


@dataclass
class EvalDataset:
    """Network inputs and ground truth prepared once for all baselines."""

    inputs: dict                # "cfr" (M,2,H,W), "adcam" (M,1,H,W)
    positions: np.ndarray       # (M, 2) meters
    path4: np.ndarray           # (M, 4) raw first-path parameters
    meta: DatasetMeta

    @classmethod
    def from_samples(cls, samples, meta: DatasetMeta) -> "EvalDataset":
        return cls(
            inputs=build_model_inputs(samples),
            positions=np.stack([s.position for s in samples]),
            path4=first_path_features(samples),
            meta=meta,
        )


@dataclass(frozen=True)
class EvalConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    channels: tuple[int, ...] = (8, 16, 32)
    kernel_size: int = 3
    residual: bool = True
    feature_length: int = 64
    dense_hidden: int = 32
    grid: tuple[int, int] = (4, 4)
    cdf_max_m: float = 20.0
    cdf_step_m: float = 0.5


@dataclass
class EvalReport:
    method: str
    final_test_mse: float            # m^2
    final_test_rmse: float           # m
    cdf_thresholds: np.ndarray
    cdf_fractions: np.ndarray
    per_region: dict
    num_regions: int
    dropped_samples: int
    train_curve: list[float]
    val_curve: list[float]
    predictions: np.ndarray = field(repr=False, default=None)
    targets: np.ndarray = field(repr=False, default=None)

    @property
    def test_errors(self) -> np.ndarray:
        return np.sqrt(((self.predictions - self.targets) ** 2).sum(axis=1))


@dataclass
class EvalSuite:
    reports: list[EvalReport]
    positions: np.ndarray            # all samples, meters
    region_labels: np.ndarray        # fused labels incl. DROPPED
    extent: tuple[float, float]


def error_cdf(errors, thresholds) -> np.ndarray:
    """Fraction of errors at or below each threshold."""
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise EvaluationError("empty error list")
    if np.any(errors < 0):
        raise EvaluationError("errors must be non-negative")
    thresholds = np.asarray(thresholds, dtype=np.float64)
    return np.array([(errors <= t).mean() for t in thresholds])


def cdf_thresholds(errors, max_m: float = 20.0, step_m: float = 0.5) -> np.ndarray:
    """Regular grid extended so the table always terminates at 1.0."""
    grid = np.arange(0.0, max_m + step_m / 2, step_m)
    peak = float(np.max(errors))
    if peak > grid[-1]:
        grid = np.append(grid, peak)
    return grid


def single_region_labels(regions: RegionMap) -> np.ndarray:
    labels = np.where(regions.labels == DROPPED, DROPPED, 0)
    return labels.astype(np.int64)


def grid_region_labels(positions: np.ndarray, extent, grid,
                       base_labels: np.ndarray,
                       train_idx: np.ndarray) -> np.ndarray:
    """Rectangular-cell labels over kept samples, compacted to occupied
    cells; a cell with no training members is merged into the occupied
    cell with the nearest center so every head can be trained."""
    nx, ny = grid
    w, h = extent
    cx = np.clip((positions[:, 0] / w * nx).astype(np.int64), 0, nx - 1)
    cy = np.clip((positions[:, 1] / h * ny).astype(np.int64), 0, ny - 1)
    cells = cy * nx + cx
    labels = np.where(base_labels == DROPPED, DROPPED, cells)

    def compact(lab):
        occupied = sorted(set(int(v) for v in lab if v != DROPPED))
        remap = {c: i for i, c in enumerate(occupied)}
        return (np.array([remap.get(int(v), DROPPED) for v in lab],
                         dtype=np.int64), occupied)

    labels, occupied = compact(labels)
    centers = np.array([((c % nx + 0.5) * w / nx, (c // nx + 0.5) * h / ny)
                        for c in occupied])
    in_train = set(int(v) for v in labels[train_idx])
    for r in range(len(occupied)):
        if r in in_train:
            continue
        candidates = sorted(in_train)
        dists = [float(((centers[r] - centers[c]) ** 2).sum())
                 for c in candidates]
        target = candidates[int(np.argmin(dists))]
        labels[labels == r] = target
    labels, _ = compact(labels)
    return labels


def route_by_stored_fingerprints(dataset: EvalDataset, labels: np.ndarray,
                                 split) -> np.ndarray:
    """Replace val/test labels with the label of the nearest training
    fingerprint (flattened CFR + amplitude images).

    Grid-cell labels are a function of the true position, which a
    deployed system does not have; the traditional method matches the
    measurement against the stored fingerprint database instead, so its
    routing errors propagate into the multi-head lookup.
    """
    train_idx = split[0]
    m = len(labels)
    flat = np.concatenate(
        [dataset.inputs["cfr"].reshape(m, -1),
         dataset.inputs["adcam"].reshape(m, -1)], axis=1).astype(np.float32)
    routed = labels.copy()
    bank = flat[train_idx]
    bank_sq = (bank * bank).sum(axis=1)
    for idx in (split[1], split[2]):
        if len(idx) == 0:
            continue
        queries = flat[idx]
        d2 = ((queries * queries).sum(axis=1)[:, np.newaxis]
              + bank_sq[np.newaxis, :] - 2.0 * (queries @ bank.T))
        routed[idx] = labels[train_idx[np.argmin(d2, axis=1)]]
    return routed


def _conv_branch(config: EvalConfig, in_channels: int) -> ExtractorConfig:
    return ExtractorConfig(in_channels=in_channels, channels=config.channels,
                           kernel_size=config.kernel_size,
                           residual=config.residual,
                           feature_length=config.feature_length)


def _method_setup(name: str, dataset: EvalDataset, regions: RegionMap,
                  config: EvalConfig, train_idx: np.ndarray):
    """Branch configs, inputs and region labels for one baseline."""
    if name not in BASELINE_NAMES:
        raise EvaluationError(f"unknown baseline {name!r}; "
                              f"expected one of {BASELINE_NAMES}")
    inputs = dict(dataset.inputs)
    extras = {}
    if name == "res_cfr":
        branches = {"cfr": _conv_branch(config, 2)}
        labels = single_region_labels(regions)
    elif name == "res_adcam":
        branches = {"adcam": _conv_branch(config, 1)}
        labels = single_region_labels(regions)
    elif name == "res_cfradcam":
        branches = {"cfr": _conv_branch(config, 2),
                    "adcam": _conv_branch(config, 1)}
        labels = single_region_labels(regions)
    elif name == "res_multi_cfradcam":
        branches = {"cfr": _conv_branch(config, 2),
                    "adcam": _conv_branch(config, 1)}
        labels = grid_region_labels(dataset.positions, dataset.meta.scene_extent,
                                    config.grid, regions.labels, train_idx)
    elif name == "res_multi_cfrperfectadcam":
        branches = {"cfr": _conv_branch(config, 2),
                    "pathfeat": DenseConfig(in_dim=4, hidden=config.dense_hidden,
                                            feature_length=config.feature_length)}
        scaler = fit_scaler(dataset.path4[train_idx])
        inputs["pathfeat"] = scaler.transform(dataset.path4).astype(np.float32)
        extras["pathfeat_scaler"] = {"mean": scaler.mean.tolist(),
                                     "std": scaler.std.tolist()}
        labels = grid_region_labels(dataset.positions, dataset.meta.scene_extent,
                                    config.grid, regions.labels, train_idx)
    else:  # amdnloc
        branches = {"cfr": _conv_branch(config, 2),
                    "adcam": _conv_branch(config, 1)}
        labels = regions.labels.copy()
    inputs = {k: inputs[k] for k in branches}
    return branches, inputs, labels, extras


def run_baseline(name: str, dataset: EvalDataset, regions: RegionMap,
                 config: EvalConfig) -> tuple[LocalizerModel, EvalReport]:
    """Train one method on the canonical split and evaluate its test set."""
    split = stratified_split(regions.labels, config.train.split_fractions,
                             config.train.seed)
    branches, inputs, labels, extras = _method_setup(
        name, dataset, regions, config, split[0])
    if name.startswith("res_multi_"):
        labels = route_by_stored_fingerprints(dataset, labels, split)
    num_heads = int(labels[labels != DROPPED].max()) + 1
    model_config = ModelConfig(branches=branches, num_heads=num_heads,
                               init_seed=config.train.seed)
    model, train_report = train(inputs, dataset.positions, labels,
                                model_config, config.train, split=split)
    model.extras.update(extras)
    model.extras["method"] = name
    model.extras["train_curve"] = [float(v) for v in train_report.train_mse]
    model.extras["val_curve"] = [float(v) for v in train_report.val_mse]
    report = _build_report(name, model, inputs, dataset, labels, regions,
                           config, split, train_report.train_mse,
                           train_report.val_mse)
    return model, report


def _build_report(name, model, inputs, dataset, labels, regions, config,
                  split, train_curve, val_curve) -> EvalReport:
    test_idx = split[2]
    preds = predict_meters(model, inputs, labels, test_idx)
    targets = dataset.positions[test_idx]
    test_mse = mse_loss(preds, targets)
    errors = np.sqrt(((preds - targets) ** 2).sum(axis=1))
    thresholds = cdf_thresholds(errors, config.cdf_max_m, config.cdf_step_m)
    fractions = error_cdf(errors, thresholds)

    per_region = {}
    fused_test = regions.labels[test_idx]
    for r in range(regions.num_regions):
        mask = fused_test == r
        if not mask.any():
            continue
        mse_r = mse_loss(preds[mask], targets[mask])
        per_region[int(r)] = {"count": int(mask.sum()), "mse": mse_r,
                              "rmse": float(np.sqrt(mse_r))}
    return EvalReport(
        method=name,
        final_test_mse=test_mse,
        final_test_rmse=float(np.sqrt(test_mse)),
        cdf_thresholds=thresholds,
        cdf_fractions=fractions,
        per_region=per_region,
        num_regions=regions.num_regions,
        dropped_samples=int(len(regions.dropped)),
        train_curve=[float(v) for v in train_curve],
        val_curve=[float(v) for v in val_curve],
        predictions=preds,
        targets=targets,
    )


def evaluate_model(model: LocalizerModel, dataset: EvalDataset,
                   regions: RegionMap, config: EvalConfig,
                   method: str = "amdnloc") -> EvalReport:
    """Report for an already-trained model (no retraining).

    The model must have been trained against the same region map; its
    stored split is reused.
    """
    stored = model.extras.get("region_labels")
    if stored is not None and list(stored) != [int(v) for v in regions.labels]:
        raise EvaluationError(
            "model was trained with a different region map than the one "
            "provided")
    split = tuple(np.array(model.extras["split"][k], dtype=np.int64)
                  for k in ("train", "val", "test"))
    inputs = {k: dataset.inputs[k] for k in model.branches}
    return _build_report(method, model, inputs, dataset, regions.labels,
                         regions, config, split,
                         model.extras.get("train_curve", []),
                         model.extras.get("val_curve", []))


# ---------------------------------------------------------------------------
# report files


def _report_json(suite: EvalSuite) -> dict:
    methods = {}
    for rep in suite.reports:
        methods[rep.method] = {
            "final_test_mse_m2": rep.final_test_mse,
            "final_test_rmse_m": rep.final_test_rmse,
            "cdf": {"thresholds_m": [float(v) for v in rep.cdf_thresholds],
                    "fractions": [float(v) for v in rep.cdf_fractions]},
            "per_region": rep.per_region,
            "mse_curve": {"train": rep.train_curve, "val": rep.val_curve},
        }
    first = suite.reports[0]
    return {
        "version": 1,
        "num_regions": first.num_regions,
        "dropped_samples": first.dropped_samples,
        "methods": methods,
    }


def emit_reports(suite: EvalSuite, out_dir) -> list[str]:
    """Write report.json, per-method curve/CDF tables and the region
    scatter figure.  Re-emitting the same suite is byte-identical."""
    if not suite.reports:
        raise EvaluationError("no reports to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    path = out_dir / "report.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_report_json(suite), fh, sort_keys=True, indent=1)
        fh.write("\n")
    written.append(path.name)

    for rep in suite.reports:
        curve = out_dir / f"{rep.method}_mse_curve.csv"
        lines = ["epoch,train_mse,val_mse"]
        for e, (tr, va) in enumerate(zip(rep.train_curve, rep.val_curve)):
            lines.append(f"{e},{tr!r},{va!r}")
        curve.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(curve.name)

        cdf = out_dir / f"{rep.method}_cdf.csv"
        lines = ["threshold_m,fraction"]
        for t, fr in zip(rep.cdf_thresholds, rep.cdf_fractions):
            lines.append(f"{float(t)!r},{float(fr)!r}")
        cdf.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(cdf.name)

    written.append(_scatter_figure(suite, out_dir / "regions_scatter.svg"))
    return written


def _save_svg(fig, path: Path) -> str:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path.name


def _scatter_figure(suite: EvalSuite, path: Path) -> str:
    fig, ax = plt.subplots(figsize=(6.4, 6.0))
    labels = suite.region_labels
    kept = labels != DROPPED
    sc = ax.scatter(suite.positions[kept, 0], suite.positions[kept, 1],
                    c=labels[kept], cmap="tab20", s=6, linewidths=0)
    if (~kept).any():
        ax.scatter(suite.positions[~kept, 0], suite.positions[~kept, 1],
                   c="0.6", marker="x", s=10, linewidths=0.8)
    ax.set_xlim(0, suite.extent[0])
    ax.set_ylim(0, suite.extent[1])
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title("fused region segmentation")
    fig.colorbar(sc, ax=ax, label="region")
    fig.tight_layout()
    return _save_svg(fig, path)


def render_curve_figures(suite: EvalSuite, out_dir) -> list[str]:
    """Figure renders of the learning curves and the error CDFs."""
    out_dir = Path(out_dir)
    written = []

    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for rep in suite.reports:
        if rep.val_curve:
            ax.plot(np.sqrt(rep.val_curve), label=rep.method, linewidth=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation RMSE [m]")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.set_title("learning curves")
    fig.tight_layout()
    written.append(_save_svg(fig, out_dir / "mse_curves.svg"))

    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for rep in suite.reports:
        ax.plot(rep.cdf_thresholds, rep.cdf_fractions, label=rep.method,
                linewidth=1.2)
    ax.set_xlabel("error [m]")
    ax.set_ylabel("fraction of test samples")
    ax.set_xlim(0, min(20.0, float(max(r.cdf_thresholds[-1]
                                       for r in suite.reports))))
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=8, loc="lower right")
    ax.set_title("test error CDF")
    fig.tight_layout()
    written.append(_save_svg(fig, out_dir / "cdf_curves.svg"))
    return written
