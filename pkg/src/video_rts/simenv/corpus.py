"""Synthetic video-QA corpus with planted per-frame evidence.

Easy samples spread the answer's evidence over the whole video, so any budget
sees a clear winner. Hard samples confine the answer's evidence to a short
window that the sparse stride barely touches, and plant distractors that tie
the answer until the budget reaches the sample's resolve level.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..core import LETTERS, McqaSample, SyntheticVideo, derive_seed, frame_indices
from .policy import evidence_counts

COLORS = ("red", "blue", "green", "yellow", "purple", "orange", "black", "white")
OBJECTS = ("cube", "ball", "cup", "key", "book", "lamp", "shoe", "clock", "bottle", "chair")
QUESTION = "Which object appears most often across the video?"


class InfeasibleCorpusError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusConfig:
    n_samples: int = 720
    n_options: int = 4
    total_frames: int = 128
    hard_fraction: float = 0.5
    # Share of hard samples whose tie only breaks at n_max (the rest break one level earlier).
    hard_dense_fraction: float = 0.25
    # Distractors that tie the answer in hard samples until the resolve budget.
    hard_tied_distractors: int = 2
    n_init: int = 32
    n_max: int = 128
    easy_gt_frames: tuple[int, int] = (8, 16)
    distractor_rate: float = 0.6
    frame_rule: str = "uniform"
    max_attempts: int = 2000
    id_prefix: str = "s"

    def __post_init__(self):
        if not 0.0 <= self.hard_fraction <= 1.0:
            raise ValueError("hard_fraction must lie in [0, 1]")
        if not 0.0 <= self.hard_dense_fraction <= 1.0:
            raise ValueError("hard_dense_fraction must lie in [0, 1]")
        if not 2 <= self.n_options <= 26:
            raise ValueError("n_options must lie in 2..26")
        if not 1 <= self.hard_tied_distractors < self.n_options:
            raise ValueError("hard_tied_distractors must lie in 1..n_options-1")
        if not 0 < self.n_init <= self.n_max:
            raise ValueError("need 0 < n_init <= n_max")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")

    @property
    def budgets(self) -> list[int]:
        out, n = [self.n_init], self.n_init
        while n < self.n_max:
            n = min(2 * n, self.n_max)
            out.append(n)
        return out

    @property
    def window_width(self) -> int:
        return max(1, self.total_frames // self.n_init)


def oracle_answer(video: SyntheticVideo, indices: Sequence[int], n_options: int) -> np.ndarray:
    """Point mass on the evidence argmax; uniform over ties (or over all options without evidence)."""
    counts = evidence_counts(video, indices, n_options)
    top = counts == counts.max()
    return top / top.sum()


def _entropy(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def check_sample(video: SyntheticVideo, gt: str, cfg: CorpusConfig) -> bool:
    """Construction guarantees for one sample (see module docstring)."""
    n_options, gi = cfg.n_options, LETTERS.index(gt)
    full = oracle_answer(video, range(video.total_frames), n_options)
    if full[gi] != 1.0:
        return False
    for n in cfg.budgets:
        p = oracle_answer(video, frame_indices(video.total_frames, n, cfg.frame_rule), n_options)
        point = p[gi] == 1.0
        if video.difficulty == "easy" or n >= video.resolve_budget:
            if not point:
                return False
        elif not (p[gi] > 0 and _entropy(p) > 0):
            return False
    return True


def _place_easy(rng, cfg: CorpusConfig, gi: int) -> tuple[list[Optional[str]], None]:
    total, n_options = cfg.total_frames, cfg.n_options
    lo, hi = cfg.easy_gt_frames
    c_gt = int(rng.integers(lo, hi + 1))
    cap = int(np.floor(cfg.distractor_rate * c_gt))
    counts = [c_gt if k == gi else int(rng.integers(0, cap + 1)) for k in range(n_options)]
    if sum(counts) > total:
        raise InfeasibleCorpusError("more evidence frames than video frames")
    labels: list[Optional[str]] = [None] * total
    slots = rng.permutation(total)
    pos = 0
    for k, c in enumerate(counts):
        for s in slots[pos : pos + c]:
            labels[int(s)] = LETTERS[k]
        pos += c
    return labels, None


def _place_hard(rng, cfg: CorpusConfig, gi: int, resolve: int) -> tuple[list[Optional[str]], tuple[int, int]]:
    total, n_options, width = cfg.total_frames, cfg.n_options, cfg.window_width
    budgets = cfg.budgets
    grids = [set(frame_indices(total, n, cfg.frame_rule)) for n in budgets]
    init_grid = grids[0]
    starts = [
        s for s in range(0, total - width + 1)
        if len(init_grid.intersection(range(s, s + width))) == 1
    ]
    if not starts:
        raise InfeasibleCorpusError("no window position meets the sparse-intersection bound")
    start = int(starts[int(rng.integers(len(starts)))])
    window = set(range(start, start + width))
    labels: list[Optional[str]] = [None] * total
    for f in window:
        labels[f] = LETTERS[gi]

    # Visible-at-level pools: frames first seen at budget level j, outside the window.
    seen: set[int] = set()
    pools = []
    for g in grids + [set(range(total))]:
        pools.append(sorted(g - seen - window))
        seen |= g
    gt_visible = [len(window & g) for g in grids] + [width]

    tied = [int(k) for k in rng.permutation([k for k in range(n_options) if k != gi])[: cfg.hard_tied_distractors]]
    free = {j: list(rng.permutation(p)) for j, p in enumerate(pools)}
    for d in tied:
        have = 0
        for j, target in enumerate(gt_visible):
            level_budget = budgets[j] if j < len(budgets) else total + 1
            if level_budget < resolve:
                need = target - have
            else:
                # at least two frames behind the answer from here on; at most one stray frame
                need = min(int(rng.integers(0, 2)), target - 2 - have, len(free[j]))
            need = max(need, 0)
            if need > len(free[j]):
                raise InfeasibleCorpusError("not enough frames to plant the distractor tie")
            for _ in range(need):
                labels[int(free[j].pop())] = LETTERS[d]
            have += need

    # Remaining distractors only show from n_max on, always behind the answer.
    last = len(grids) - 1
    for k in range(n_options):
        if k == gi or k in tied:
            continue
        for _ in range(int(rng.integers(0, min(2, width - 1) + 1))):
            if free[last]:
                labels[int(free[last].pop())] = LETTERS[k]
    return labels, (start, width)


def _options(rng, n_options: int) -> tuple[tuple[str, str], ...]:
    names = [f"{c} {o}" for c in COLORS for o in OBJECTS]
    picks = rng.choice(len(names), size=n_options, replace=False)
    return tuple((LETTERS[k], names[int(i)]) for k, i in enumerate(picks))


def generate_corpus(cfg: CorpusConfig, seed: int = 0) -> tuple[list[McqaSample], dict[str, SyntheticVideo]]:
    """Deterministic corpus; returns the samples and their videos keyed by video id."""
    if cfg.window_width * cfg.n_max / cfg.total_frames < 4 and cfg.hard_fraction > 0:
        raise InfeasibleCorpusError(
            f"window width {cfg.window_width} is seen in fewer than 4 frames at n_max={cfg.n_max}"
        )
    samples, videos = [], {}
    n_hard = int(round(cfg.hard_fraction * cfg.n_samples))
    width = len(str(cfg.n_samples - 1))
    order_rng = np.random.default_rng(derive_seed(seed, "layout"))
    is_hard = np.zeros(cfg.n_samples, dtype=bool)
    is_hard[order_rng.permutation(cfg.n_samples)[:n_hard]] = True
    for i in range(cfg.n_samples):
        rng = np.random.default_rng(derive_seed(seed, "sample", i))
        sid = f"{cfg.id_prefix}{i:0{width}d}"
        gi = int(rng.integers(cfg.n_options))
        gt = LETTERS[gi]
        if is_hard[i]:
            dense = rng.random() < cfg.hard_dense_fraction or len(cfg.budgets) < 3
            resolve = cfg.n_max if dense else cfg.budgets[1] if len(cfg.budgets) > 1 else cfg.n_max
            difficulty = "hard"
        else:
            resolve, difficulty = cfg.n_init, "easy"
        for _ in range(cfg.max_attempts):
            if difficulty == "easy":
                labels, window = _place_easy(rng, cfg, gi)
            else:
                labels, window = _place_hard(rng, cfg, gi, resolve)
            video = SyntheticVideo(
                video_id=f"v-{sid}",
                frame_evidence=tuple(labels),
                difficulty=difficulty,
                evidence_window=window,
                resolve_budget=resolve,
            )
            if check_sample(video, gt, cfg):
                break
        else:
            raise InfeasibleCorpusError(f"could not build a valid {difficulty} sample for {sid}")
        videos[video.video_id] = video
        samples.append(McqaSample(sid, video, QUESTION, _options(rng, cfg.n_options), gt))
    return samples, videos
