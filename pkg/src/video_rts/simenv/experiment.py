"""End-to-end desk experiment shared by the CLI scripts and the acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

from ..core import McqaSample
from ..datafilter import balanced_subsample, estimate_difficulty, filter_dataset
from ..grpo import GrpoConfig, TrainingReport, train
from ..rewards import RewardWeights
from ..tts import TtsConfig
from .corpus import CorpusConfig, generate_corpus
from .evaluate import EvalReport, FixedMode, PolicyInference, evaluate, expected_accuracy
from .policy import ToyPolicy


@dataclass
class ExperimentConfig:
    seed: int = 0
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    heldout_samples: int = 1000
    heldout_seed: int = 1
    filter_k: int = 8
    train_size: int = 600
    grpo: GrpoConfig = field(default_factory=lambda: GrpoConfig(learning_rate=20.0, epochs=6, max_steps=200))
    rewards: RewardWeights = field(default_factory=RewardWeights)


@dataclass
class Experiment:
    config: ExperimentConfig
    train_set: list[McqaSample]
    heldout: list[McqaSample]
    policy: ToyPolicy
    initial_expected_accuracy: float
    report: Optional[TrainingReport] = None

    def easy(self, dataset: Sequence[McqaSample]) -> list[McqaSample]:
        return [s for s in dataset if s.video.difficulty == "easy"]


def prepare(cfg: ExperimentConfig) -> Experiment:
    """Generates the corpus, filters it with the untrained policy, subsamples."""
    raw, _ = generate_corpus(cfg.corpus, cfg.seed)
    heldout, _ = generate_corpus(
        replace(cfg.corpus, n_samples=cfg.heldout_samples, id_prefix="h"), cfg.heldout_seed
    )
    policy = ToyPolicy.random(cfg.corpus.n_options, seed=cfg.seed)
    inference = PolicyInference(policy)
    records = [
        estimate_difficulty(inference, s, k=cfg.filter_k, seed=cfg.seed, n_frames=cfg.grpo.train_frames)
        for s in raw
    ]
    kept = filter_dataset(records, raw)
    if len(kept) > cfg.train_size:
        kept = balanced_subsample(kept, cfg.train_size, cfg.seed)
    init = expected_accuracy(policy, kept, cfg.grpo.train_frames)
    return Experiment(cfg, kept, heldout, policy, init)


def run_training(exp: Experiment, callback: Optional[Callable] = None) -> Experiment:
    cfg = exp.config
    builder = PolicyInference(exp.policy).context_builder(cfg.grpo.train_frames)
    exp.report = train(exp.policy, exp.train_set, builder, cfg.grpo, cfg.rewards, seed=cfg.seed, callback=callback)
    return exp


def run_modes(
    policy: ToyPolicy,
    dataset: Sequence[McqaSample],
    modes: dict[str, Union[FixedMode, TtsConfig]],
    seed: int = 0,
    jobs: int = 1,
) -> dict[str, EvalReport]:
    return {name: evaluate(policy, dataset, mode, seed=seed, jobs=jobs) for name, mode in modes.items()}


STANDARD_MODES: dict[str, Union[FixedMode, TtsConfig]] = {
    "fixed-sparse": FixedMode(32, 5),
    "fixed-dense": FixedMode(128, 5),
    "tts": TtsConfig(),
}
VOTE_MODES: dict[str, Union[FixedMode, TtsConfig]] = {f"tts-m{m}": TtsConfig(votes=m) for m in (1, 3, 5, 10, 20)}


def format_table(reports: dict[str, EvalReport]) -> str:
    lines = [f"{'mode':<14} {'acc':>7} {'easy':>7} {'hard':>7} {'frames':>8} {'gens':>6}"]
    for name, r in reports.items():
        by = r.by_difficulty
        easy = by["easy"].accuracy if "easy" in by else float("nan")
        hard = by["hard"].accuracy if "hard" in by else float("nan")
        lines.append(
            f"{name:<14} {r.accuracy:>7.4f} {easy:>7.4f} {hard:>7.4f} {r.mean_frames:>8.1f} {r.mean_generations:>6.2f}"
        )
    return "\n".join(lines)
