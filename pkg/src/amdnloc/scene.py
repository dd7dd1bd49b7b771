"""Procedural urban scene and geometric multipath tracing.

A scene is a rectangular extent with axis-aligned rectangular buildings,
one base station and uniformly scattered mobile terminals.  Paths are
the direct ray (when unobstructed), first-order image-method wall
reflections, and corner diffraction rays.  This is a desk-scale stand-in
for a full ray tracer: gains follow a 1/length law scaled per
interaction, and each sample's strongest path is normalized to unit
magnitude since the fingerprint pipeline only uses relative structure.

Determinism contract: sample i draws all of its randomness from a
generator seeded with SeedSequence([scene.rng_seed, i]), so generating
samples in parallel or in any order yields bit-identical datasets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .channel import (
    SPEED_OF_LIGHT,
    DatasetMeta,
    PropagationPath,
    compute_adcam,
    make_path,
    synthesize_cfr,
)

# Attenuation applied to corner-diffraction rays on top of the 1/length law.
DIFFRACTION_COEFF = 0.25
# Terminals closer than this to the BS are rejected (keeps gains sane).
MIN_BS_DISTANCE = 1.0


class SceneGenerationError(RuntimeError):
    """Raised when a scene cannot supply the requested samples."""


@dataclass(frozen=True)
class Building:
    """Axis-aligned rectangle [x0, x1] x [y0, y1] with a wall reflection
    coefficient in [0, 1]."""

    x0: float
    y0: float
    x1: float
    y1: float
    reflection: float = 0.7

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate building rect {self}")
        if not (0.0 <= self.reflection <= 1.0):
            raise ValueError("reflection coefficient must be in [0, 1]")

    def contains(self, p) -> bool:
        """Closed-rectangle membership (edges count as inside)."""
        return self.x0 <= p[0] <= self.x1 and self.y0 <= p[1] <= self.y1

    def corners(self):
        return (
            (self.x0, self.y0),
            (self.x1, self.y0),
            (self.x1, self.y1),
            (self.x0, self.y1),
        )

    def walls(self):
        """(axis, line coordinate, span lo, span hi, outward sign) per side."""
        return (
            ("x", self.x0, self.y0, self.y1, -1.0),  # left
            ("x", self.x1, self.y0, self.y1, +1.0),  # right
            ("y", self.y0, self.x0, self.x1, -1.0),  # bottom
            ("y", self.y1, self.x0, self.x1, +1.0),  # top
        )


@dataclass(frozen=True)
class Scene:
    extent: tuple[float, float]
    buildings: tuple[Building, ...]
    bs_position: tuple[float, float]
    rng_seed: int

    def __post_init__(self):
        w, h = self.extent
        for b in self.buildings:
            if b.x0 < 0 or b.y0 < 0 or b.x1 > w or b.y1 > h:
                raise ValueError(f"building {b} outside extent {self.extent}")
            if b.contains(self.bs_position):
                raise ValueError("BS position lies inside a building")

    def to_dict(self) -> dict:
        return {
            "extent": list(self.extent),
            "bs_position": list(self.bs_position),
            "rng_seed": self.rng_seed,
            "buildings": [
                {"rect": [b.x0, b.y0, b.x1, b.y1], "reflection": b.reflection}
                for b in self.buildings
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        return cls(
            extent=tuple(float(v) for v in d["extent"]),
            buildings=tuple(
                Building(*(float(v) for v in b["rect"]),
                         reflection=float(b.get("reflection", 0.7)))
                for b in d["buildings"]
            ),
            bs_position=tuple(float(v) for v in d["bs_position"]),
            rng_seed=int(d["rng_seed"]),
        )

    @classmethod
    def from_json(cls, path) -> "Scene":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class MultipathSample:
    """One terminal: ground-truth position, resolved paths and both
    fingerprints.  Fingerprint arrays are stored at the dataset's
    canonical precision (complex64 / float32)."""

    position: np.ndarray            # (2,) float64, meters
    paths: list[PropagationPath]
    cfr: np.ndarray                 # (N_t, N_c) complex64
    adcam: np.ndarray               # (N_t, N_c) float32
    is_nlos: bool


def _segment_hits_rect(a, b, rect: Building) -> bool:
    """True iff segment a-b intersects the closed rectangle.

    Liang-Barsky clipping; touching an edge or corner counts as a hit
    (the conservative blockage convention).
    """
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    t0, t1 = 0.0, 1.0
    for delta, lo, hi, origin in (
        (dx, rect.x0, rect.x1, ax),
        (dy, rect.y0, rect.y1, ay),
    ):
        if delta == 0.0:
            if origin < lo or origin > hi:
                return False
        else:
            ta = (lo - origin) / delta
            tb = (hi - origin) / delta
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
            if t0 > t1:
                return False
    return True


def los_blocked(a, b, scene: Scene) -> bool:
    """True iff the segment a-b is obstructed by any building.

    Touching a building edge counts as blocked.
    """
    return any(_segment_hits_rect(a, b, bld) for bld in scene.buildings)


def _blocked_excluding(a, b, scene: Scene, skip: int) -> bool:
    """Blockage test that ignores one building (the interacting one)."""
    return any(
        _segment_hits_rect(a, b, bld)
        for i, bld in enumerate(scene.buildings)
        if i != skip
    )


def _shrunk(a, b, eps=1e-9):
    """Endpoint b pulled back toward a by a relative epsilon."""
    ax, ay = a
    bx, by = b
    return (bx + (ax - bx) * eps, by + (ay - by) * eps)


def _aoa_at_bs(scene: Scene, toward) -> float:
    """Arrival angle at the BS array measured from the +x array axis.

    A linear array only resolves cos(aoa), so the angle is folded into
    (0, pi); exact endfire is nudged inside the open interval.
    """
    dx = toward[0] - scene.bs_position[0]
    dy = toward[1] - scene.bs_position[1]
    r = math.hypot(dx, dy)
    c = min(1.0 - 1e-12, max(-1.0 + 1e-12, dx / r))
    return math.acos(c)


@dataclass(frozen=True)
class _Candidate:
    kind: str           # "direct" | "reflection" | "corner"
    length: float
    coeff: float        # interaction attenuation (1, wall rho, diffraction)
    bs_adjacent: tuple  # point the BS-side segment heads toward
    mt_adjacent: tuple  # point the MT-side segment heads toward (from MT)
    phase: float


def _candidate_paths(mt, scene: Scene, rng: np.random.Generator):
    """Enumerate direct / reflected / corner rays in a fixed order,
    drawing one phase per candidate so the stream is reproducible."""
    bs = scene.bs_position
    out: list[_Candidate] = []

    def emit(kind, length, coeff, bs_adj, mt_adj):
        out.append(_Candidate(kind, length, coeff, bs_adj, mt_adj,
                              phase=float(rng.uniform(0.0, 2.0 * np.pi))))

    if not los_blocked(bs, mt, scene):
        emit("direct", math.dist(bs, mt), 1.0, mt, bs)

    for bi, bld in enumerate(scene.buildings):
        for axis, line, lo, hi, outward in bld.walls():
            if axis == "x":
                side_bs, side_mt = bs[0] - line, mt[0] - line
            else:
                side_bs, side_mt = bs[1] - line, mt[1] - line
            if side_bs * outward <= 0 or side_mt * outward <= 0:
                continue  # wall face not visible to both endpoints
            if axis == "x":
                image = (2.0 * line - bs[0], bs[1])
                denom = mt[0] - image[0]
                if denom == 0.0:
                    continue
                t = (line - image[0]) / denom
                hit = image[1] + t * (mt[1] - image[1])
            else:
                image = (bs[0], 2.0 * line - bs[1])
                denom = mt[1] - image[1]
                if denom == 0.0:
                    continue
                t = (line - image[1]) / denom
                hit = image[0] + t * (mt[0] - image[0])
            if not (0.0 < t < 1.0 and lo < hit < hi):
                continue
            p = (line, hit) if axis == "x" else (hit, line)
            if _blocked_excluding(bs, p, scene, bi) or _blocked_excluding(p, mt, scene, bi):
                continue
            emit("reflection", math.dist(image, mt), bld.reflection, p, p)

    for bi, bld in enumerate(scene.buildings):
        for corner in bld.corners():
            seg_a = math.dist(bs, corner)
            seg_b = math.dist(corner, mt)
            if seg_a == 0.0 or seg_b == 0.0:
                continue
            if los_blocked(bs, _shrunk(bs, corner), scene):
                continue
            if los_blocked(mt, _shrunk(mt, corner), scene):
                continue
            emit("corner", seg_a + seg_b, DIFFRACTION_COEFF, corner, corner)
    return out


def trace_paths(
    mt,
    scene: Scene,
    meta: DatasetMeta,
    max_paths: int = 16,
    rng: np.random.Generator | None = None,
) -> list[PropagationPath]:
    """Resolve up to ``max_paths`` propagation paths for one terminal.

    Candidates whose delay rounds past the OFDM window are dropped; the
    strongest survivors are kept, the strongest magnitude is scaled to
    1, and the result is sorted by delay.  Raises SceneGenerationError
    when the terminal is fully shadowed.
    """
    if rng is None:
        rng = np.random.default_rng(scene.rng_seed)
    if math.dist(mt, scene.bs_position) < 1e-9:
        raise SceneGenerationError("terminal coincides with the BS")
    bin_length = SPEED_OF_LIGHT * meta.sample_interval
    kept = []
    for cand in _candidate_paths(mt, scene, rng):
        delay = int(math.floor(cand.length / bin_length + 0.5))
        if delay >= meta.num_subcarriers:
            continue
        kept.append((cand, delay))
    if not kept:
        raise SceneGenerationError(f"terminal {tuple(mt)} is fully shadowed")
    kept.sort(key=lambda cd: (-cd[0].coeff / cd[0].length, cd[0].length))
    kept = kept[:max_paths]

    peak = max(c.coeff / c.length for c, _ in kept)
    paths = []
    for cand, delay in kept:
        mag = (cand.coeff / cand.length) / peak
        paths.append(make_path(
            aoa=_aoa_at_bs(scene, cand.bs_adjacent),
            aod=math.atan2(cand.mt_adjacent[1] - mt[1],
                           cand.mt_adjacent[0] - mt[0]),
            complex_gain=mag * complex(math.cos(cand.phase), math.sin(cand.phase)),
            sampled_delay=delay,
            pathloss=-20.0 * math.log10(cand.coeff / cand.length),
            distance=cand.length,
            meta=meta,
        ))
    paths.sort(key=lambda p: (p.sampled_delay, p.distance))
    return paths


def position_valid(p, scene: Scene) -> bool:
    w, h = scene.extent
    if not (0.0 <= p[0] <= w and 0.0 <= p[1] <= h):
        return False
    if math.dist(p, scene.bs_position) < MIN_BS_DISTANCE:
        return False
    return not any(b.contains(p) for b in scene.buildings)


def _sample_rng(scene_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([scene_seed, index]))


def generate_sample(
    scene: Scene,
    meta: DatasetMeta,
    index: int,
    max_paths: int = 16,
    retry_budget: int = 200,
) -> MultipathSample:
    """Draw one valid terminal for slot ``index`` of the dataset."""
    rng = _sample_rng(scene.rng_seed, index)
    w, h = scene.extent
    for _ in range(retry_budget):
        p = (float(rng.uniform(0.0, w)), float(rng.uniform(0.0, h)))
        if not position_valid(p, scene):
            continue
        try:
            paths = trace_paths(p, scene, meta, max_paths=max_paths, rng=rng)
        except SceneGenerationError:
            continue
        cfr = synthesize_cfr(paths, meta)
        adcam = compute_adcam(cfr, meta)
        return MultipathSample(
            position=np.array(p, dtype=np.float64),
            paths=paths,
            cfr=cfr.astype(np.complex64),
            adcam=adcam.astype(np.float32),
            is_nlos=los_blocked(scene.bs_position, p, scene),
        )
    raise SceneGenerationError(
        f"no valid terminal for sample {index} within the retry budget "
        f"of {retry_budget} draws; the scene is too occluded"
    )


def generate_dataset(
    scene: Scene,
    m: int,
    meta: DatasetMeta,
    max_paths: int = 16,
    retry_budget: int = 200,
    workers: int = 1,
) -> list[MultipathSample]:
    """Generate ``m`` samples; byte-identical regardless of ``workers``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if workers <= 1:
        return [
            generate_sample(scene, meta, i, max_paths, retry_budget)
            for i in range(m)
        ]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(generate_sample, scene, meta, i, max_paths, retry_budget)
            for i in range(m)
        ]
        return [f.result() for f in futures]
