"""Two-stage matched filter that segments fingerprint images into
categories of shared translational structure.

Stage one scans the sample list in order: each still-unlabeled image
seeds a category with a pair of corner templates and captures every
later unlabeled image whose dual normalized cross-correlation clears
the within threshold; a seed that captures nothing tries to adopt the
label of an earlier image instead.  Stage two repeatedly merges whole
categories whose representatives match above the between threshold
until the category count is stable.

Similarity is plain (not zero-mean) normalized cross-correlation,
maximized over all template placements that keep the window fully
inside the image.  Both corner templates must agree: the dual score is
the minimum of the two, which suppresses coincidental single-corner
matches.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .images import FingerprintImage


class MatchDomainError(ValueError):
    """Raised when template matching preconditions are violated."""


@dataclass(frozen=True)
class FilterConfig:
    """Template geometry and similarity thresholds for the filter."""

    template_height: int = 8
    template_width: int = 16
    tau_in: float = 0.95
    tau_out: float = 0.90

    def __post_init__(self):
        if self.template_height < 1 or self.template_width < 1:
            raise MatchDomainError("template dimensions must be >= 1")
        if not (0.0 < self.tau_in <= 1.0):
            raise MatchDomainError("tau_in must be in (0, 1]")
        if not (0.0 < self.tau_out <= 1.0):
            raise MatchDomainError("tau_out must be in (0, 1]")


@dataclass(frozen=True)
class TemplatePair:
    """Upper-left and lower-right corner crops of a source image."""

    t1: np.ndarray
    t2: np.ndarray
    source_index: int


@dataclass
class CategoryAssignment:
    """Final per-sample labels plus the category representatives."""

    labels: np.ndarray                     # (M,) int
    num_categories: int
    representatives: dict[int, TemplatePair] = field(default_factory=dict)


def _as_channel(image) -> np.ndarray:
    if isinstance(image, FingerprintImage):
        return image.magnitude
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:
        return arr[0]
    return arr


def extract_template_pair(image, cfg: FilterConfig, source_index: int) -> TemplatePair:
    """Corner crops (upper-left, lower-right) of the magnitude channel."""
    chan = _as_channel(image)
    a, b = cfg.template_height, cfg.template_width
    h, w = chan.shape
    if a > h or b > w:
        raise MatchDomainError(
            f"template {a}x{b} larger than image {h}x{w}")
    return TemplatePair(
        t1=chan[:a, :b].copy(),
        t2=chan[h - a:, w - b:].copy(),
        source_index=source_index,
    )


def _window_energy(stack: np.ndarray, a: int, b: int) -> np.ndarray:
    """Sliding-window sums of squared pixels via a summed-area table."""
    k, h, w = stack.shape
    sat = np.zeros((k, h + 1, w + 1), dtype=np.float64)
    sat[:, 1:, 1:] = (stack.astype(np.float64) ** 2).cumsum(axis=1).cumsum(axis=2)
    win = (sat[:, a:, b:] - sat[:, : h - a + 1, b:]
           - sat[:, a:, : w - b + 1] + sat[:, : h - a + 1, : w - b + 1])
    return np.maximum(win, 0.0)


def _ncc_max_stack(template: np.ndarray, stack: np.ndarray,
                   win_energy: np.ndarray) -> np.ndarray:
    """Best NCC score of one template against each image of a stack."""
    t = np.asarray(template, dtype=np.float64)
    t_energy = float(np.sum(t * t))
    if t_energy <= 0.0:
        raise MatchDomainError("degenerate template: no positive pixel")
    num = fftconvolve(stack.astype(np.float64), t[::-1, ::-1][np.newaxis],
                      mode="valid", axes=(1, 2))
    np.maximum(num, 0.0, out=num)
    den = np.sqrt(t_energy * win_energy)
    sim = np.zeros_like(num)
    np.divide(num, den, out=sim, where=win_energy > 0.0)
    np.clip(sim, 0.0, 1.0, out=sim)
    return sim.max(axis=(1, 2))


def ncc_match(template: np.ndarray, source) -> float:
    """Maximum normalized cross-correlation over all fully-inside shifts.

    Both arrays must be non-negative; all-zero windows are skipped and
    an all-zero template is rejected.
    """
    chan = _as_channel(source)
    t = np.asarray(template, dtype=np.float64)
    if t.shape[0] > chan.shape[0] or t.shape[1] > chan.shape[1]:
        raise MatchDomainError(
            f"template {t.shape} larger than source {chan.shape}")
    stack = chan[np.newaxis]
    win = _window_energy(stack, t.shape[0], t.shape[1])
    return float(_ncc_max_stack(t, stack, win)[0])


def dual_match(pair: TemplatePair, source_image) -> float:
    """Similarity of a template pair to an image: both corners must
    agree, so the score is the minimum of the two NCC maxima."""
    return min(ncc_match(pair.t1, source_image),
               ncc_match(pair.t2, source_image))


class _MatchEngine:
    """Batched dual-match of one template pair against image subsets."""

    def __init__(self, channels: np.ndarray, cfg: FilterConfig, workers: int = 1):
        self.channels = channels
        self.cfg = cfg
        self.workers = max(1, int(workers))
        a, b = cfg.template_height, cfg.template_width
        if a > channels.shape[1] or b > channels.shape[2]:
            raise MatchDomainError(
                f"template {a}x{b} larger than images "
                f"{channels.shape[1]}x{channels.shape[2]}")
        self.win_energy = _window_energy(channels, a, b)

    def dual_scores(self, pair: TemplatePair, indices: np.ndarray) -> np.ndarray:
        if len(indices) == 0:
            return np.zeros(0)
        if self.workers == 1 or len(indices) < 64:
            return self._dual_chunk(pair, indices)
        chunks = np.array_split(indices, self.workers)
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            parts = list(pool.map(lambda c: self._dual_chunk(pair, c), chunks))
        return np.concatenate([p for p in parts if len(p)])

    def _dual_chunk(self, pair: TemplatePair, indices: np.ndarray) -> np.ndarray:
        if len(indices) == 0:
            return np.zeros(0)
        stack = self.channels[indices]
        win = self.win_energy[indices]
        s1 = _ncc_max_stack(pair.t1, stack, win)
        s2 = _ncc_max_stack(pair.t2, stack, win)
        return np.minimum(s1, s2)


def match_within(images: list, cfg: FilterConfig, workers: int = 1) -> CategoryAssignment:
    """First-stage pass assigning every image a category label.

    Deterministic in list order; a fresh category number is consumed
    only when a new category is actually created, so the output labels
    are already contiguous in order of first appearance.
    """
    m = len(images)
    if m < 1:
        raise MatchDomainError("need at least one image")
    channels = np.stack([_as_channel(img) for img in images])
    engine = _MatchEngine(channels, cfg, workers)

    sentinel = m + 1  # any value > M works; labels never reach it
    labels = np.full(m, sentinel, dtype=np.int64)
    representatives: dict[int, TemplatePair] = {}
    class_num = 0

    for i in range(m):
        if labels[i] != sentinel:
            continue
        pair = extract_template_pair(channels[i], cfg, i)
        later = np.nonzero(labels[i + 1:] == sentinel)[0] + i + 1
        captured = later[engine.dual_scores(pair, later) >= cfg.tau_in]
        if len(captured) > 0:
            labels[i] = class_num
            labels[captured] = class_num
            representatives[class_num] = pair
            class_num += 1
            continue
        earlier = np.arange(i)
        adopted = False
        if len(earlier) > 0:
            scores = engine.dual_scores(pair, earlier)
            hits = np.nonzero(scores >= cfg.tau_in)[0]
            if len(hits) > 0:
                labels[i] = labels[earlier[hits[0]]]
                adopted = True
        if not adopted:
            labels[i] = class_num
            representatives[class_num] = pair
            class_num += 1

    return CategoryAssignment(labels=labels, num_categories=class_num,
                              representatives=representatives)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        lo, hi = (ra, rb) if ra < rb else (rb, ra)
        self.parent[hi] = lo  # lower-numbered category keeps its identity
        return True


def match_between(assignment: CategoryAssignment, images: list,
                  cfg: FilterConfig) -> CategoryAssignment:
    """Second-stage merge of categories whose representatives agree.

    Every ordered pair of original categories is compared with its own
    templates; agreements above the threshold are united, so chains of
    pairwise-similar categories collapse transitively.  Full passes
    repeat until the category count is stable.  A merged category is
    represented by its lowest-numbered constituent.
    """
    n = assignment.num_categories
    channels = np.stack([_as_channel(img) for img in images])
    uf = _UnionFind(n)
    reps = dict(assignment.representatives)
    memo: dict[tuple[int, int], float] = {}

    def score(i: int, j: int) -> float:
        if (i, j) not in memo:
            memo[(i, j)] = dual_match(reps[i], channels[reps[j].source_index])
        return memo[(i, j)]

    prev_count = n + 1
    while prev_count != len({uf.find(c) for c in range(n)}):
        prev_count = len({uf.find(c) for c in range(n)})
        for i in range(n):
            for j in range(n):
                if i == j or uf.find(i) == uf.find(j):
                    continue
                if score(i, j) >= cfg.tau_out:
                    uf.union(i, j)

    roots = sorted({uf.find(c) for c in range(n)})
    remap = {root: new for new, root in enumerate(roots)}
    labels = np.array([remap[uf.find(int(c))] for c in assignment.labels],
                      dtype=np.int64)
    representatives = {remap[r]: reps[r] for r in roots}
    return CategoryAssignment(labels=labels, num_categories=len(roots),
                              representatives=representatives)


def run_filter(images: list, cfg: FilterConfig, workers: int = 1) -> CategoryAssignment:
    """Both filter stages in sequence."""
    within = match_within(images, cfg, workers=workers)
    return match_between(within, images, cfg)


def assignment_to_dict(assignment: CategoryAssignment, cfg: FilterConfig) -> dict:
    return {
        "version": 1,
        "tau_in": cfg.tau_in,
        "tau_out": cfg.tau_out,
        "template": [cfg.template_height, cfg.template_width],
        "labels": [int(v) for v in assignment.labels],
        "representatives": [
            {"category": int(c), "source_index": int(p.source_index)}
            for c, p in sorted(assignment.representatives.items())
        ],
    }
