"""Inference adapters for synthetic videos and the accuracy/efficiency evaluator."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Sequence, Union

import numpy as np

from ..core import LETTERS, McqaSample, SamplingParams, SyntheticVideo, render_response
from ..tts import TtsAborted, TtsConfig, TtsTrace, run_fixed, run_tts
from .corpus import oracle_answer
from .policy import ToyPolicy, build_context, sampling_distribution

log = logging.getLogger(__name__)


def _synthetic(sample: McqaSample) -> SyntheticVideo:
    if not isinstance(sample.video, SyntheticVideo):
        raise TypeError(f"sample {sample.id} does not reference a synthetic video")
    return sample.video


class PolicyInference:
    """Serves a toy policy through the generic inference interface."""

    def __init__(self, policy: ToyPolicy):
        self.policy = policy

    def generate(self, sample: McqaSample, frame_indices: Sequence[int], params: SamplingParams, seed: int) -> str:
        context = build_context(_synthetic(sample), frame_indices, self.policy.n_options)
        return self.policy.generate(context, params, np.random.default_rng(seed)).text

    def context_builder(self, n_frames: int, rule: str = "uniform"):
        from ..core import frame_indices

        def build(sample: McqaSample):
            video = _synthetic(sample)
            return build_context(video, frame_indices(video.total_frames, n_frames, rule), self.policy.n_options)

        return build


class OracleInference:
    """Answers by sampling the brute-force evidence oracle (ignores temperature)."""

    def generate(self, sample: McqaSample, frame_indices: Sequence[int], params: SamplingParams, seed: int) -> str:
        p = oracle_answer(_synthetic(sample), frame_indices, sample.n_options)
        k = int(np.random.default_rng(seed).choice(len(p), p=p))
        return render_response("count evidence per option", LETTERS[k])


class UniformInference:
    """Chance-level baseline: a uniformly random letter."""

    def generate(self, sample: McqaSample, frame_indices: Sequence[int], params: SamplingParams, seed: int) -> str:
        k = int(np.random.default_rng(seed).integers(sample.n_options))
        return render_response("guess", LETTERS[k])


@dataclass(frozen=True)
class FixedMode:
    frames: int
    votes: int


Mode = Union[FixedMode, TtsConfig]


@dataclass
class GroupStats:
    count: int
    accuracy: float
    mean_frames: float
    mean_generations: float


@dataclass
class EvalReport:
    accuracy: float
    mean_frames: float
    mean_generations: float
    n_samples: int
    by_difficulty: dict[str, GroupStats]
    errors: dict[str, str] = field(default_factory=dict)
    traces: list[TtsTrace] = field(default_factory=list, repr=False)

    def summary(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("traces")
        return d

    def table(self) -> str:
        rows = [("all", self.n_samples, self.accuracy, self.mean_frames, self.mean_generations)]
        rows += [(k, g.count, g.accuracy, g.mean_frames, g.mean_generations) for k, g in sorted(self.by_difficulty.items())]
        lines = [f"{'subset':<8} {'n':>6} {'accuracy':>9} {'frames':>9} {'gens':>7}"]
        lines += [f"{r[0]:<8} {r[1]:>6d} {r[2]:>9.4f} {r[3]:>9.1f} {r[4]:>7.2f}" for r in rows]
        return "\n".join(lines)


def report_from_traces(
    traces: Sequence[TtsTrace], dataset: Sequence[McqaSample], errors: Optional[dict[str, str]] = None
) -> EvalReport:
    """Scores traces against ground truth. Samples without a trace count as wrong."""
    by_id = {t.sample_id: t for t in traces}
    errors = dict(errors or {})
    groups: dict[str, list[tuple[bool, int, int]]] = {}
    rows = []
    for s in dataset:
        t = by_id.get(s.id)
        if t is None:
            errors.setdefault(s.id, "missing trace")
            row = (False, 0, 0)
        else:
            row = (t.final_answer == s.gt_answer, t.total_frames_processed, t.total_generations)
        rows.append(row)
        diff = getattr(s.video, "difficulty", None)
        if diff:
            groups.setdefault(diff, []).append(row)
    if not rows:
        raise ValueError("empty dataset")

    def stats(rs) -> GroupStats:
        a = np.array(rs, dtype=float)
        return GroupStats(len(rs), float(a[:, 0].mean()), float(a[:, 1].mean()), float(a[:, 2].mean()))

    overall = stats(rows)
    return EvalReport(
        accuracy=overall.accuracy,
        mean_frames=overall.mean_frames,
        mean_generations=overall.mean_generations,
        n_samples=overall.count,
        by_difficulty={k: stats(v) for k, v in groups.items()},
        errors=errors,
        traces=list(traces),
    )


def run_mode(inference, sample: McqaSample, mode: Mode, seed: int) -> TtsTrace:
    if isinstance(mode, FixedMode):
        return run_fixed(inference, sample, mode.frames, mode.votes, seed)
    return run_tts(inference, sample, mode, seed)


def evaluate(
    inference: Any,
    dataset: Sequence[McqaSample],
    mode: Mode,
    seed: int = 0,
    jobs: int = 1,
) -> EvalReport:
    """Runs ``mode`` on every sample. Accepts a ToyPolicy or any inference object."""
    if not dataset:
        raise ValueError("empty dataset")
    if isinstance(inference, ToyPolicy):
        inference = PolicyInference(inference)
    errors: dict[str, str] = {}

    def one(sample: McqaSample) -> Optional[TtsTrace]:
        try:
            return run_mode(inference, sample, mode, seed)
        except TtsAborted as exc:
            log.warning("%s", exc)
            errors[sample.id] = str(exc)
            return exc.trace

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            traces = list(pool.map(one, dataset))
    else:
        traces = [one(s) for s in dataset]
    # aborted samples keep their partial trace but score as wrong
    scored = [t for t in traces if t is not None and t.sample_id not in errors]
    report = report_from_traces(scored, dataset, errors)
    report.traces = [t for t in traces if t is not None]
    return report


def expected_accuracy(policy: ToyPolicy, dataset: Sequence[McqaSample], n_frames: int, params: SamplingParams = SamplingParams()) -> float:
    """Mean probability the option head puts on the ground truth (no sampling noise)."""
    from ..core import frame_indices

    probs = []
    for s in dataset:
        video = _synthetic(s)
        ctx = build_context(video, frame_indices(video.total_frames, n_frames), policy.n_options)
        q = sampling_distribution(policy.option_logits(ctx), params.temperature, params.top_p)
        probs.append(q[LETTERS.index(s.gt_answer)])
    return float(np.mean(probs))
