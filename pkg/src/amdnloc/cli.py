"""Command-line pipeline: synth, segment, cluster, fuse, train, eval.

Each stage reads only its documented inputs and writes only its
documented outputs; given the same config and seeds, reruns are
byte-identical.  Exit codes: 0 success, 2 missing upstream artifact,
3 config validation failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .clustering import (
    FeatureScaler,
    clustering_to_dict,
    fit_scaler,
    path_feature_matrix,
    select_k,
)
from .config import ConfigError, PipelineConfig
from .evaluation import (
    EvalDataset,
    EvalSuite,
    emit_reports,
    evaluate_model,
    render_curve_figures,
    run_baseline,
)
from .fusion import (
    RegionMap,
    cleanse,
    fuse_labels,
    regions_from_dict,
    regions_to_dict,
)
from .images import cfr_to_image, dump_pgm
from .matching import (
    TemplatePair,
    assignment_to_dict,
    match_between,
    match_within,
)
from .model.assigner import RegionAssigner
from .model.network import ModelConfig, load_model, save_model
from .model.training import build_model_inputs, train
from .scene import generate_dataset

EXIT_OK = 0
EXIT_MISSING_INPUT = 2
EXIT_BAD_CONFIG = 3


class MissingArtifactError(FileNotFoundError):
    def __init__(self, path, hint: str):
        super().__init__(f"missing {hint}: expected {path}")
        self.path = path


def _require(path, hint: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(path, hint)
    return path


def _load_config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        cfg = PipelineConfig.from_file(_require(args.config, "config file"))
    else:
        cfg = PipelineConfig()
    return cfg


def _dump_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    cfg.override("synth", "num_samples", args.samples)
    if args.seed is not None and cfg.data["scene"]:
        cfg.data["scene"]["rng_seed"] = args.seed
    cfg.require_valid()
    scene = cfg.scene()
    meta = cfg.meta()
    samples = generate_dataset(
        scene, int(cfg.data["synth"]["num_samples"]), meta,
        max_paths=int(cfg.data["synth"]["max_paths"]),
        retry_budget=int(cfg.data["synth"]["retry_budget"]),
        workers=args.threads)
    out = Path(args.out)
    dataio.export_dataset(samples, meta, out)
    cfg.echo(out, "synth")
    nlos = sum(1 for s in samples if s.is_nlos)
    print(f"synth: wrote {len(samples)} samples to {out} "
          f"({nlos} NLOS, {len(samples) - nlos} LOS)")
    return EXIT_OK


def cmd_segment(args) -> int:
    cfg = _load_config(args)
    cfg.override("filter", "tau_in", args.tau_in)
    cfg.override("filter", "tau_out", args.tau_out)
    if args.template:
        a, _, b = args.template.partition("x")
        cfg.data["filter"]["template"] = [int(a), int(b)]
    cfg.require_valid()
    samples, _ = dataio.import_dataset(_require(args.data, "dataset directory"))
    fcfg = cfg.filter_config()
    images = [cfr_to_image(s.cfr) for s in samples]
    if args.dump_pgm:
        dump_dir = Path(args.dump_pgm)
        dump_dir.mkdir(parents=True, exist_ok=True)
        for i, img in enumerate(images):
            dump_pgm(img, dump_dir / f"cfr_{i}.pgm")
    within = match_within(images, fcfg, workers=args.threads)
    assignment = match_between(within, images, fcfg)
    out = Path(args.out)
    _dump_json(assignment_to_dict(assignment, fcfg), out)
    cfg.echo(out.parent, "segment")
    print(f"segment: {within.num_categories} categories -> "
          f"{assignment.num_categories} after merging; wrote {out}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    cfg = _load_config(args)
    cfg.override("cluster", "k_min", args.kmin)
    cfg.override("cluster", "k_max", args.kmax)
    cfg.override("cluster", "seed", args.seed)
    cfg.require_valid()
    samples, _ = dataio.import_dataset(_require(args.data, "dataset directory"))
    features = path_feature_matrix(samples)
    scaler = fit_scaler(features)
    result = select_k(scaler.transform(features),
                      int(cfg.data["cluster"]["k_min"]),
                      int(cfg.data["cluster"]["k_max"]),
                      int(cfg.data["cluster"]["seed"]))
    out = Path(args.out)
    _dump_json(clustering_to_dict(result, scaler), out)
    cfg.echo(out.parent, "cluster")
    print(f"cluster: K={result.k} (silhouette {result.silhouette:.3f}); "
          f"wrote {out}")
    return EXIT_OK


def cmd_fuse(args) -> int:
    cfg = _load_config(args)
    cfg.override("cleanse", "min_size", args.min_size)
    cfg.require_valid()
    cfr = json.loads(_require(args.cfr, "filter labels").read_text())
    adcam = json.loads(_require(args.adcam, "cluster labels").read_text())
    fused = fuse_labels(cfr["labels"], adcam["labels"])
    regions = cleanse(fused, int(cfg.data["cleanse"]["min_size"]))
    out = Path(args.out)
    _dump_json(regions_to_dict(regions), out)
    cfg.echo(out.parent, "fuse")
    print(f"fuse: {fused.num_regions} fused pairs -> {regions.num_regions} "
          f"kept regions, {len(regions.dropped)} samples dropped; wrote {out}")
    return EXIT_OK


def _load_assigner(args, samples, regions):
    """Bundle routing data when the upstream label artifacts are at hand."""
    cfr_path = Path(args.cfr_labels) if args.cfr_labels else \
        Path(args.regions).parent / "labels_cfr.json"
    adcam_path = Path(args.adcam_labels) if args.adcam_labels else \
        Path(args.regions).parent / "labels_adcam.json"
    if not (cfr_path.exists() and adcam_path.exists()):
        return None
    cfr = json.loads(cfr_path.read_text())
    adcam = json.loads(adcam_path.read_text())
    if "feature_mean" not in adcam:
        return None
    a, b = (int(v) for v in cfr["template"])
    pairs = []
    for rec in sorted(cfr["representatives"], key=lambda r: r["category"]):
        chan = cfr_to_image(samples[rec["source_index"]].cfr).magnitude
        pairs.append(TemplatePair(t1=chan[:a, :b].copy(),
                                  t2=chan[-a:, -b:].copy(),
                                  source_index=int(rec["source_index"])))
    return RegionAssigner(
        template_pairs=pairs,
        centroids=np.array(adcam["centroids"], dtype=np.float64),
        feature_scaler=FeatureScaler(
            mean=np.array(adcam["feature_mean"], dtype=np.float64),
            std=np.array(adcam["feature_std"], dtype=np.float64)),
        pair_table=[(int(c), int(k)) for c, k in regions.pair_table],
    )


def cmd_train(args) -> int:
    cfg = _load_config(args)
    cfg.override("train", "epochs", args.epochs)
    cfg.override("train", "learning_rate", args.lr)
    cfg.override("train", "batch_size", args.batch)
    cfg.override("train", "seed", args.seed)
    cfg.require_valid()
    samples, _ = dataio.import_dataset(_require(args.data, "dataset directory"))
    regions = regions_from_dict(json.loads(
        _require(args.regions, "region map (run fuse first)").read_text()))
    inputs = build_model_inputs(samples)
    positions = np.stack([s.position for s in samples])
    model_config = ModelConfig(
        branches={"cfr": cfg.extractor_config(2),
                  "adcam": cfg.extractor_config(1)},
        num_heads=regions.num_regions,
        init_seed=cfg.train_config().seed)
    model, report = train(inputs, positions, regions.labels, model_config,
                          cfg.train_config())
    model.extras["pair_table"] = [[int(c), int(a)] for c, a in regions.pair_table]
    model.extras["min_size"] = int(regions.min_size)
    model.extras["method"] = "amdnloc"
    model.extras["train_curve"] = [float(v) for v in report.train_mse]
    model.extras["val_curve"] = [float(v) for v in report.val_mse]
    assigner = _load_assigner(args, samples, regions)
    if assigner is not None:
        model.extras["assigner"] = assigner.to_dict()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    report.write_csv(out.with_name(out.stem + "_train_report.csv"))
    cfg.echo(out.parent, "train")
    rmse = float(np.sqrt(report.final_test_mse))
    print(f"train: best epoch {report.best_epoch}, "
          f"test MSE {report.final_test_mse:.3f} m^2 (RMSE {rmse:.3f} m); "
          f"wrote {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    if args.baselines:
        cfg.data["eval"]["baselines"] = args.baselines.split(",")
    cfg.require_valid()
    model = load_model(_require(args.model, "trained model (run train first)"))
    samples, meta = dataio.import_dataset(_require(args.data, "dataset directory"))
    if "pair_table" not in model.extras or "region_labels" not in model.extras:
        raise ValueError("model manifest lacks region data; retrain with "
                         "the train stage of this pipeline")
    regions = RegionMap(
        labels=np.array(model.extras["region_labels"], dtype=np.int64),
        pair_table=[(int(c), int(a)) for c, a in model.extras["pair_table"]],
        min_size=int(model.extras.get("min_size", 0)))
    dataset = EvalDataset.from_samples(samples, meta)
    eval_cfg = cfg.eval_config()
    reports = []
    for name in cfg.data["eval"]["baselines"]:
        if name == "amdnloc":
            reports.append(evaluate_model(model, dataset, regions, eval_cfg))
        else:
            _, rep = run_baseline(name, dataset, regions, eval_cfg)
            reports.append(rep)
        print(f"eval: {name}: RMSE {reports[-1].final_test_rmse:.3f} m, "
              f"<=2m fraction "
              f"{float(np.mean(reports[-1].test_errors <= 2.0)):.3f}")
    suite = EvalSuite(reports=reports, positions=dataset.positions,
                      region_labels=regions.labels,
                      extent=meta.scene_extent)
    out = Path(args.report)
    written = emit_reports(suite, out)
    written += render_curve_figures(suite, out)
    cfg.echo(out, "eval")
    print(f"eval: wrote {', '.join(written)} to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amdnloc",
        description="multi-source NLOS fingerprint localization pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="pipeline config JSON")
        p.add_argument("--threads", type=int, default=1,
                       help="worker cap for data-parallel stages "
                            "(never changes results)")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    add_common(p)
    p.add_argument("--out", required=True, help="dataset directory")
    p.add_argument("--samples", type=int, help="number of terminals")
    p.add_argument("--seed", type=int, help="scene RNG seed override")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("segment", help="filter-based image segmentation")
    add_common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--tau-in", type=float, dest="tau_in")
    p.add_argument("--tau-out", type=float, dest="tau_out")
    p.add_argument("--template", help="template size AxB, e.g. 8x16")
    p.add_argument("--dump-pgm", dest="dump_pgm",
                   help="directory for per-sample magnitude-channel PGMs")
    p.add_argument("--out", required=True, help="labels_cfr.json path")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("cluster", help="path-parameter clustering")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--kmin", type=int)
    p.add_argument("--kmax", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="labels_adcam.json path")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("fuse", help="fuse label sets and cleanse regions")
    add_common(p)
    p.add_argument("--cfr", required=True, help="labels_cfr.json")
    p.add_argument("--adcam", required=True, help="labels_adcam.json")
    p.add_argument("--min-size", type=int, dest="min_size")
    p.add_argument("--out", required=True, help="regions.json path")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("train", help="train the multi-head localizer")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--regions", required=True, help="regions.json")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--cfr-labels", dest="cfr_labels",
                   help="labels_cfr.json (for inference-time routing)")
    p.add_argument("--adcam-labels", dest="adcam_labels",
                   help="labels_adcam.json (for inference-time routing)")
    p.add_argument("--out", required=True, help="model manifest path (.json)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="train baselines and emit reports")
    add_common(p)
    p.add_argument("--model", required=True, help="trained model manifest")
    p.add_argument("--data", required=True)
    p.add_argument("--baselines", help="comma-separated method list")
    p.add_argument("--report", required=True, help="report directory")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except Exception as exc:  # categorized fallback
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
