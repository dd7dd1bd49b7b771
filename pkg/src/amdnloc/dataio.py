"""Portable on-disk dataset format.

A dataset is a directory holding:

  meta.json      system parameters, sample count, format version
  positions.csv  index,x,y,is_nlos (text; floats use repr round-trip)
  cfr.bin        little-endian float32, row-major, interleaved re/im,
                 shape (M, N_t, N_c, 2)
  adcam.bin      little-endian float32, row-major, shape (M, N_t, N_c)
  paths.json     per-sample path parameter lists

Export followed by import reproduces every numeric payload bit-exactly:
fingerprints are stored at their canonical float32 precision and all
JSON/CSV floats round-trip through Python's shortest-repr formatting.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .channel import DatasetMeta, PropagationPath, make_path
from .scene import MultipathSample

FORMAT_VERSION = 1

META_FILE = "meta.json"
POSITIONS_FILE = "positions.csv"
CFR_FILE = "cfr.bin"
ADCAM_FILE = "adcam.bin"
PATHS_FILE = "paths.json"


class DatasetFormatError(RuntimeError):
    """Dataset directory violates the portable format.

    ``code`` is one of: missing_manifest, malformed_manifest,
    dimension_mismatch, truncated_binary.
    """

    def __init__(self, code: str, message: str):
        super().__init__(f"[{code}] {message}")
        self.code = code


def _dump_json(obj, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _path_record(p: PropagationPath) -> dict:
    return {
        "aoa": p.aoa,
        "aod": p.aod,
        "gain": [p.complex_gain.real, p.complex_gain.imag],
        "delay": p.sampled_delay,
        "pathloss": p.pathloss,
        "distance": p.distance,
    }


def export_dataset(samples: list[MultipathSample], meta: DatasetMeta, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    m = len(samples)
    manifest = dict(meta.to_dict())
    manifest["format_version"] = FORMAT_VERSION
    manifest["num_samples"] = m
    _dump_json(manifest, directory / META_FILE)

    lines = ["index,x,y,is_nlos"]
    for i, s in enumerate(samples):
        lines.append(f"{i},{float(s.position[0])!r},{float(s.position[1])!r},"
                     f"{1 if s.is_nlos else 0}")
    (directory / POSITIONS_FILE).write_text("\n".join(lines) + "\n",
                                            encoding="utf-8", newline="\n")

    cfr = np.stack([s.cfr for s in samples]).astype("<c8")
    (directory / CFR_FILE).write_bytes(cfr.tobytes())
    adcam = np.stack([s.adcam for s in samples]).astype("<f4")
    (directory / ADCAM_FILE).write_bytes(adcam.tobytes())

    _dump_json({"paths": [[_path_record(p) for p in s.paths] for s in samples]},
               directory / PATHS_FILE)


def _read_manifest(directory: Path) -> dict:
    meta_path = directory / META_FILE
    if not meta_path.exists():
        raise DatasetFormatError("missing_manifest",
                                 f"no {META_FILE} in {directory}")
    try:
        manifest = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetFormatError("malformed_manifest",
                                 f"{meta_path}: {exc}") from exc
    required = {"format_version", "num_samples", "num_bs_antennas",
                "num_subcarriers", "carrier_frequency", "bandwidth",
                "antenna_spacing", "scene_extent"}
    missing = required - manifest.keys()
    if missing:
        raise DatasetFormatError("malformed_manifest",
                                 f"{meta_path} missing keys {sorted(missing)}")
    if manifest["format_version"] != FORMAT_VERSION:
        raise DatasetFormatError("malformed_manifest",
                                 f"unsupported format_version "
                                 f"{manifest['format_version']}")
    return manifest


def _read_binary(path: Path, m: int, nt: int, nc: int, itemsize: int,
                 dtype: str) -> np.ndarray:
    if not path.exists():
        raise DatasetFormatError("truncated_binary", f"{path} is missing")
    raw = path.read_bytes()
    expected = m * nt * nc * itemsize
    if len(raw) != expected:
        row_bytes = m * nt * itemsize
        if row_bytes > 0 and len(raw) % row_bytes == 0:
            implied = len(raw) // row_bytes
            raise DatasetFormatError(
                "dimension_mismatch",
                f"{path} holds {implied} columns per row but the manifest "
                f"declares {nc}")
        raise DatasetFormatError(
            "truncated_binary",
            f"{path} holds {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype=dtype).reshape(m, nt, nc).copy()


def import_dataset(directory) -> tuple[list[MultipathSample], DatasetMeta]:
    directory = Path(directory)
    manifest = _read_manifest(directory)
    meta = DatasetMeta.from_dict(manifest)
    m = int(manifest["num_samples"])
    nt, nc = meta.num_bs_antennas, meta.num_subcarriers

    cfr = _read_binary(directory / CFR_FILE, m, nt, nc, 8, "<c8")
    adcam = _read_binary(directory / ADCAM_FILE, m, nt, nc, 4, "<f4")

    pos_path = directory / POSITIONS_FILE
    if not pos_path.exists():
        raise DatasetFormatError("truncated_binary", f"{pos_path} is missing")
    rows = pos_path.read_text(encoding="utf-8").strip().split("\n")[1:]
    if len(rows) != m:
        raise DatasetFormatError(
            "dimension_mismatch",
            f"{pos_path} holds {len(rows)} rows, manifest declares {m}")

    paths_path = directory / PATHS_FILE
    if not paths_path.exists():
        raise DatasetFormatError("truncated_binary", f"{paths_path} is missing")
    try:
        path_lists = json.loads(paths_path.read_text(encoding="utf-8"))["paths"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise DatasetFormatError("malformed_manifest",
                                 f"{paths_path}: {exc}") from exc
    if len(path_lists) != m:
        raise DatasetFormatError(
            "dimension_mismatch",
            f"{paths_path} holds {len(path_lists)} samples, "
            f"manifest declares {m}")

    samples = []
    for i, row in enumerate(rows):
        idx, x, y, nlos = row.split(",")
        del idx
        paths = [
            make_path(aoa=rec["aoa"], aod=rec["aod"],
                      complex_gain=complex(rec["gain"][0], rec["gain"][1]),
                      sampled_delay=rec["delay"], pathloss=rec["pathloss"],
                      distance=rec["distance"], meta=meta)
            for rec in path_lists[i]
        ]
        samples.append(MultipathSample(
            position=np.array([float(x), float(y)], dtype=np.float64),
            paths=paths,
            cfr=cfr[i],
            adcam=adcam[i],
            is_nlos=nlos.strip() == "1",
        ))
    return samples, meta
