"""Difficulty-based curation: rollout-accuracy screening and per-video balanced subsampling."""

from __future__ import annotations

import logging
import warnings
from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .core import McqaSample, SamplingParams, derive_seed, frame_indices, parse_response
from .rewards import accuracy_reward
from .tts import InferenceError, ScheduleSpec, schedule_params

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DifficultyRecord:
    sample_id: str
    k: int
    correct: int

    def __post_init__(self):
        if self.k < 1 or not 0 <= self.correct <= self.k:
            raise ValueError(f"invalid difficulty record {self}")

    @property
    def accuracy(self) -> float:
        return self.correct / self.k

    def to_dict(self) -> dict:
        return {**asdict(self), "accuracy": self.accuracy}

    @classmethod
    def from_dict(cls, d: dict) -> "DifficultyRecord":
        return cls(str(d["sample_id"]), int(d["k"]), int(d["correct"]))


def estimate_difficulty(
    inference,
    sample: McqaSample,
    k: int = 8,
    seed: int = 0,
    n_frames: int = 32,
    params: Union[SamplingParams, None] = None,
    frame_rule: str = "uniform",
) -> DifficultyRecord:
    """k rollouts at the training budget; defaults to the first TTS sampling setting."""
    if k < 1:
        raise ValueError("k must be >= 1")
    params = params or schedule_params(0, ScheduleSpec())
    indices = frame_indices(sample.video.total_frames, n_frames, frame_rule)
    correct = 0
    for j in range(k):
        try:
            raw = inference.generate(sample, indices, params, derive_seed(seed, sample.id, "difficulty", j))
        except InferenceError as exc:
            log.warning("rollout %d for %s failed, counted as incorrect: %s", j, sample.id, exc)
            continue
        correct += int(accuracy_reward(parse_response(raw, sample.n_options), sample.gt_answer))
    return DifficultyRecord(sample.id, k, correct)


def filter_dataset(
    records: Union[Mapping[str, DifficultyRecord], Iterable[DifficultyRecord]],
    dataset: Sequence[McqaSample],
) -> list[McqaSample]:
    """Keeps samples that the model sometimes, but not always, answers correctly."""
    if not isinstance(records, Mapping):
        records = {r.sample_id: r for r in records}
    kept = []
    for s in dataset:
        if s.id not in records:
            raise KeyError(f"no difficulty record for sample {s.id!r}")
        if 0 < records[s.id].correct < records[s.id].k:
            kept.append(s)
    if not kept and dataset:
        warnings.warn("difficulty filter removed every sample", RuntimeWarning, stacklevel=2)
    return kept


def balanced_subsample(dataset: Sequence[McqaSample], target_size: int, seed: int = 0) -> list[McqaSample]:
    """Round-robin over videos so every video contributes (nearly) equally.

    The returned samples keep their original dataset order.
    """
    if target_size > len(dataset):
        raise ValueError(f"target_size {target_size} exceeds dataset size {len(dataset)}")
    if target_size < 0:
        raise ValueError("target_size must be nonnegative")
    groups: "OrderedDict[str, list[int]]" = OrderedDict()
    for i, s in enumerate(dataset):
        groups.setdefault(s.video.video_id, []).append(i)
    rng = np.random.default_rng(derive_seed(seed, "balanced"))
    queues = [list(rng.permutation(idx)) for idx in groups.values()]
    queues = [queues[i] for i in rng.permutation(len(queues))]
    chosen: list[int] = []
    while len(chosen) < target_size:
        for q in queues:
            if q and len(chosen) < target_size:
                chosen.append(int(q.pop(0)))
    return [dataset[i] for i in sorted(chosen)]
