"""Sparse-to-dense test-time scaling.

Each round draws ``m`` answers at the current frame budget with a per-sample
temperature/top-p schedule. Unanimous non-empty answers end the run; otherwise
the budget doubles up to ``n_max``, where a majority vote decides.
"""

from __future__ import annotations

from collections import Counter
from functools import lru_cache
from concurrent.futures import Executor
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Protocol, Sequence

from .core import McqaSample, SamplingParams, derive_seed, frame_indices, mix_seed, parse_response

CONSENSUS = "consensus"
MAJORITY_VOTE = "majority_vote"


class InferenceError(RuntimeError):
    """A generation could not be obtained from the inference backend."""


class UndecidableError(ValueError):
    """No sampled answer could be parsed, so no vote is possible."""


class TtsAborted(RuntimeError):
    """Inference failed mid-run; ``trace`` holds the completed rounds."""

    def __init__(self, message: str, trace: "TtsTrace"):
        super().__init__(message)
        self.trace = trace


class Inference(Protocol):
    def generate(self, sample: McqaSample, frame_indices: Sequence[int], params: SamplingParams, seed: int) -> str:
        ...


@dataclass(frozen=True)
class ScheduleSpec:
    base_temperature: float = 0.7
    temperature_step: float = 0.1
    base_top_p: float = 0.9
    top_p_step: float = 0.1
    min_top_p: float = 0.5
    max_tokens: int = 1024
    stop_sentinel: str = "</answer>"


@lru_cache(maxsize=4096)
def sampling_schedule(i: int, spec: ScheduleSpec = ScheduleSpec()) -> tuple[float, float]:
    """(temperature, top_p) for the i-th sample of a round."""
    if i < 0:
        raise ValueError("sample index must be nonnegative")
    # round() strips float noise such as 0.7 + 0.1*2 = 0.8999999999999999
    tau = round(spec.base_temperature + spec.temperature_step * i, 10)
    p = round(max(spec.min_top_p, spec.base_top_p - spec.top_p_step * i), 10)
    return tau, p


@lru_cache(maxsize=4096)
def schedule_params(i: int, spec: ScheduleSpec = ScheduleSpec()) -> SamplingParams:
    tau, p = sampling_schedule(i, spec)
    return SamplingParams(tau, p, spec.max_tokens, spec.stop_sentinel)


@dataclass(frozen=True)
class TtsConfig:
    votes: int = 5
    n_init: int = 32
    n_max: int = 128
    schedule: ScheduleSpec = ScheduleSpec()
    frame_rule: str = "uniform"

    def __post_init__(self):
        if self.votes < 1:
            raise ValueError("votes must be >= 1")
        if not 0 < self.n_init <= self.n_max:
            raise ValueError("need 0 < n_init <= n_max")

    @classmethod
    def knowledge(cls, **kw) -> "TtsConfig":
        """Preset for knowledge-style benchmarks (64-frame ceiling)."""
        return cls(**{"n_max": 64, **kw})


# --------------------------------------------------------------------------- voting


def consensus(answers: Sequence[Optional[str]]) -> bool:
    return len(answers) > 0 and None not in answers and len(set(answers)) == 1


def majority_vote(answers: Sequence[Optional[str]]) -> str:
    """Most frequent present answer; ties go to the one sampled first."""
    counts = Counter(a for a in answers if a is not None)
    if not counts:
        raise UndecidableError("no parseable answers to vote on")
    first = {}
    for i, a in enumerate(answers):
        if a is not None and a not in first:
            first[a] = i
    return max(counts, key=lambda a: (counts[a], -first[a]))


def next_budget(budget: int, n_max: int) -> int:
    if budget > n_max:
        raise ValueError("budget already exceeds n_max")
    return min(2 * budget, n_max)


# --------------------------------------------------------------------------- traces


@dataclass(slots=True)
class SampleRecord:
    temperature: float
    top_p: float
    raw: str
    answer: Optional[str]


@dataclass(slots=True)
class RoundRecord:
    budget: int
    frame_indices: list[int]
    samples: list[SampleRecord]
    consensus: bool

    @property
    def answers(self) -> list[Optional[str]]:
        return [s.answer for s in self.samples]


@dataclass(slots=True)
class TtsTrace:
    sample_id: str
    rounds: list[RoundRecord] = field(default_factory=list)
    final_answer: Optional[str] = None
    decided_by: Optional[str] = None
    total_frames_processed: int = 0
    total_generations: int = 0

    @property
    def budgets(self) -> list[int]:
        return [r.budget for r in self.rounds]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TtsTrace":
        rounds = [
            RoundRecord(
                budget=r["budget"],
                frame_indices=list(r["frame_indices"]),
                samples=[SampleRecord(**s) for s in r["samples"]],
                consensus=r["consensus"],
            )
            for r in d["rounds"]
        ]
        return cls(
            sample_id=d["sample_id"],
            rounds=rounds,
            final_answer=d.get("final_answer"),
            decided_by=d.get("decided_by"),
            total_frames_processed=d.get("total_frames_processed", 0),
            total_generations=d.get("total_generations", 0),
        )


# --------------------------------------------------------------------------- controller


def _run_round(
    inference: Inference,
    sample: McqaSample,
    indices: list[int],
    params: Sequence[SamplingParams],
    sample_seed: int,
    round_idx: int,
    executor: Optional[Executor],
) -> list[SampleRecord]:
    n_options = sample.n_options
    base = round_idx << 20

    if executor is None:
        out = []
        for i, p in enumerate(params):
            raw = inference.generate(sample, indices, p, mix_seed(sample_seed, base | i))
            out.append(SampleRecord(p.temperature, p.top_p, raw, parse_response(raw, n_options).answer))
        return out

    def one(i: int) -> SampleRecord:
        p = params[i]
        raw = inference.generate(sample, indices, p, mix_seed(sample_seed, base | i))
        return SampleRecord(p.temperature, p.top_p, raw, parse_response(raw, n_options).answer)

    return list(executor.map(one, range(len(params))))


def run_tts(
    inference: Inference,
    sample: McqaSample,
    config: TtsConfig = TtsConfig(),
    seed: int = 0,
    executor: Optional[Executor] = None,
) -> TtsTrace:
    trace = TtsTrace(sample_id=sample.id)
    total = sample.video.total_frames
    budget = config.n_init
    round_idx = 0
    params = [schedule_params(i, config.schedule) for i in range(config.votes)]
    sample_seed = derive_seed(seed, sample.id)
    while budget <= config.n_max:
        indices = frame_indices(total, budget, config.frame_rule)
        try:
            records = _run_round(inference, sample, indices, params, sample_seed, round_idx, executor)
        except InferenceError as exc:
            raise TtsAborted(f"inference failed for {sample.id} at budget {budget}: {exc}", trace) from exc
        answers = [r.answer for r in records]
        agreed = None not in answers and len(set(answers)) == 1
        trace.rounds.append(RoundRecord(budget, indices, records, agreed))
        trace.total_frames_processed += len(indices) * config.votes
        trace.total_generations += config.votes
        if agreed:
            trace.final_answer, trace.decided_by = answers[0], CONSENSUS
            return trace
        if budget == config.n_max:
            trace.decided_by = MAJORITY_VOTE
            try:
                trace.final_answer = majority_vote(answers)
            except UndecidableError:
                trace.final_answer = None
            return trace
        budget = next_budget(budget, config.n_max)
        round_idx += 1
    raise AssertionError("unreachable: the n_max round always returns")


def run_fixed(
    inference: Inference,
    sample: McqaSample,
    frames: int,
    votes: int,
    seed: int = 0,
    schedule: ScheduleSpec = ScheduleSpec(),
    frame_rule: str = "uniform",
    executor: Optional[Executor] = None,
) -> TtsTrace:
    """Single-round self-consistency at a fixed budget; ``votes=1`` is the plain single pass."""
    config = TtsConfig(votes=votes, n_init=frames, n_max=frames, schedule=schedule, frame_rule=frame_rule)
    return run_tts(inference, sample, config, seed, executor)
