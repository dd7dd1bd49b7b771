"""Training loop: stratified splitting, seeded mini-batch descent with
per-region head updates, and best-validation checkpoint selection.

Loss is minimized in a standardized coordinate space (zero-mean, unit
variance over the training split) while every reported error is
converted back to meters.  All randomness flows from named streams of
the one training seed, so a fixed seed reproduces the run bit-for-bit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..fusion import DROPPED
from ..images import adcam_to_image, cfr_to_image
from .layers import adam_step
from .network import LocalizerModel, ModelConfig, mse_loss

# seed-stream tags: 0 is reserved for weight init inside LocalizerModel
SPLIT_STREAM = 1
SHUFFLE_STREAM = 2


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    batch_size: int = 16
    learning_rate: float = 0.003
    seed: int = 0
    split_fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def to_dict(self):
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "split_fractions": list(self.split_fractions),
        }


@dataclass
class TrainReport:
    train_mse: list[float] = field(default_factory=list)   # m^2 per epoch
    val_mse: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    final_test_mse: float = float("nan")
    best_epoch: int = -1

    def write_csv(self, path) -> None:
        lines = ["epoch,train_mse,val_mse"]
        for e, (tr, va) in enumerate(zip(self.train_mse, self.val_mse)):
            lines.append(f"{e},{tr!r},{va!r}")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def build_model_inputs(samples) -> dict[str, np.ndarray]:
    """Stack per-sample fingerprint images into network input tensors."""
    cfr = np.stack([cfr_to_image(s.cfr).pixels for s in samples])
    adcam = np.stack([adcam_to_image(s.adcam).pixels for s in samples])
    return {"cfr": cfr.astype(np.float32), "adcam": adcam.astype(np.float32)}


def first_path_features(samples) -> np.ndarray:
    """Ground-truth first-arrival parameters: angle of arrival, angle of
    departure, distance, gain magnitude in dB."""
    rows = []
    for s in samples:
        p = s.paths[0]
        rows.append([p.aoa, p.aod, p.distance,
                     20.0 * np.log10(abs(p.complex_gain))])
    return np.asarray(rows, dtype=np.float64)


def stratified_split(region_labels: np.ndarray,
                     fractions: tuple[float, float, float],
                     seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-region shuffled split; every region lands in the train set.

    Dropped samples (sentinel label) are excluded entirely.
    """
    labels = np.asarray(region_labels)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), SPLIT_STREAM]))
    f_train, f_val, _ = fractions
    train, val, test = [], [], []
    for r in range(int(labels.max()) + 1):
        idx = np.nonzero(labels == r)[0]
        if len(idx) == 0:
            continue
        perm = rng.permutation(idx)
        n = len(idx)
        n_train = min(n, max(1, int(round(f_train * n))))
        n_val = min(n - n_train, int(round(f_val * n)))
        train.extend(perm[:n_train])
        val.extend(perm[n_train:n_train + n_val])
        test.extend(perm[n_train + n_val:])
    return (np.sort(np.array(train, dtype=np.int64)),
            np.sort(np.array(val, dtype=np.int64)),
            np.sort(np.array(test, dtype=np.int64)))


def _gather(inputs: dict, idx: np.ndarray) -> dict:
    return {name: arr[idx] for name, arr in inputs.items()}


def train_step(model: LocalizerModel, batch_inputs: dict,
               batch_regions: np.ndarray, batch_targets_std: np.ndarray,
               config: TrainConfig) -> tuple[float, np.ndarray]:
    """One optimizer step on a mini-batch in standardized coordinates.

    Returns the batch loss and the standardized prediction residuals.
    Heads of regions absent from the batch are left untouched.
    """
    preds = model.forward_batch(batch_inputs, batch_regions)
    diff = preds - batch_targets_std
    loss = float((diff.astype(np.float64) ** 2).sum(axis=1).mean())
    if not np.isfinite(loss):
        raise TrainingError("non-finite loss")
    model.zero_grads()
    model.backward_batch((2.0 / len(batch_regions)) * diff)
    adam_step(model.params, config.learning_rate,
              config.beta1, config.beta2, config.eps)
    return loss, diff


def predict_meters(model: LocalizerModel, inputs: dict, regions: np.ndarray,
                   idx: np.ndarray, batch: int = 256) -> np.ndarray:
    """Forward-only predictions in meters for the given sample indices."""
    out = np.zeros((len(idx), 2), dtype=np.float64)
    for lo in range(0, len(idx), batch):
        sel = idx[lo:lo + batch]
        preds = model.forward_batch(_gather(inputs, sel), regions[sel])
        out[lo:lo + len(sel)] = model.to_meters(preds.astype(np.float64))
    return out


def train(inputs: dict, positions_m: np.ndarray, region_labels: np.ndarray,
          model_config: ModelConfig, config: TrainConfig,
          split: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
          ) -> tuple[LocalizerModel, TrainReport]:
    """Train a localizer on the kept samples of a dataset.

    Returns the best-validation checkpoint.  Head i only ever receives
    gradient from samples of region i; the extractors are shared.  A
    preset ``split`` lets several methods share one canonical split.
    """
    labels = np.asarray(region_labels)
    kept = np.nonzero(labels != DROPPED)[0]
    if len(kept) == 0:
        raise TrainingError("no kept samples to train on")
    num_regions = int(labels[kept].max()) + 1
    if model_config.num_heads != num_regions:
        raise TrainingError(
            f"model has {model_config.num_heads} heads but the region map "
            f"holds {num_regions} regions")

    if split is None:
        split = stratified_split(labels, config.split_fractions, config.seed)
    train_idx, val_idx, test_idx = split
    present = np.unique(labels[train_idx])
    missing = sorted(set(range(num_regions)) - set(int(v) for v in present))
    if missing:
        raise TrainingError(
            f"regions {missing} are absent from the training split; "
            "use a different split seed or different fractions")

    model = LocalizerModel(model_config)
    pos = np.asarray(positions_m, dtype=np.float64)
    model.pos_mean = pos[train_idx].mean(axis=0)
    std = pos[train_idx].std(axis=0)
    model.pos_std = np.where(std > 0.0, std, 1.0)
    targets_std = model.standardize_positions(pos).astype(model.config.dtype)

    shuffle_rng = np.random.default_rng(
        np.random.SeedSequence([int(config.seed), SHUFFLE_STREAM]))
    report = TrainReport()
    best_val = np.inf
    best_snap = model.snapshot()

    def split_mse(idx):
        if len(idx) == 0:
            return float("nan")
        preds = predict_meters(model, inputs, labels, idx)
        return mse_loss(preds, pos[idx])

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        perm = shuffle_rng.permutation(train_idx)
        sq_sum, count = 0.0, 0
        for lo in range(0, len(perm), config.batch_size):
            sel = perm[lo:lo + config.batch_size]
            try:
                _, diff = train_step(model, _gather(inputs, sel), labels[sel],
                                     targets_std[sel], config)
            except TrainingError as exc:
                raise TrainingError(
                    f"{exc} at epoch {epoch}, batch offset {lo}") from exc
            sq_sum += float(((diff.astype(np.float64) * model.pos_std) ** 2).sum())
            count += len(sel)
        train_mse = sq_sum / count
        val_mse = split_mse(val_idx)
        if np.isnan(val_mse):
            val_mse = train_mse
        if val_mse < best_val:
            best_val = val_mse
            best_snap = model.snapshot()
            report.best_epoch = epoch
        report.train_mse.append(train_mse)
        report.val_mse.append(val_mse)
        report.epoch_seconds.append(time.perf_counter() - t0)

    model.restore(best_snap)
    report.final_test_mse = split_mse(test_idx)
    model.extras = {
        "split": {"train": [int(v) for v in train_idx],
                  "val": [int(v) for v in val_idx],
                  "test": [int(v) for v in test_idx]},
        "region_labels": [int(v) for v in labels],
        "training": config.to_dict(),
        "best_epoch": int(report.best_epoch),
    }
    return model, report
