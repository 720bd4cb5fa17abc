"""Group relative policy optimization over outcome rewards.

The objective is the token-level clipped surrogate with a k3 KL penalty
against a frozen reference policy, averaged per sequence and then over the
group. Gradients are assembled from d(objective)/d(logp_new) per token and the
policy's own log-prob gradients, so any policy exposing ``logprob_grad`` can be
trained.
"""

from __future__ import annotations

import abc
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .core import McqaSample, SamplingParams, derive_seed
from .rewards import RewardWeights, score_text

log = logging.getLogger(__name__)


@dataclass
class Generation:
    """One sampled completion with per-token log-probs under the sampling policy."""

    text: str
    tokens: np.ndarray
    logp: np.ndarray


class PolicyInterface(abc.ABC):
    """A trainable autoregressive policy over token sequences."""

    @abc.abstractmethod
    def sample(self, context: Any, params: SamplingParams, count: int, seed: int) -> list[Generation]:
        """Draw ``count`` completions; member j uses ``derive_seed(seed, j)``."""

    @abc.abstractmethod
    def logprobs(self, context: Any, tokens: np.ndarray, params: SamplingParams) -> np.ndarray:
        ...

    @abc.abstractmethod
    def logprob_grad(
        self, context: Any, tokens: np.ndarray, params: SamplingParams, weights: np.ndarray
    ) -> np.ndarray:
        """Gradient of ``sum_t weights[t] * logp_t`` w.r.t. the flat parameter vector."""

    @property
    @abc.abstractmethod
    def parameters(self) -> np.ndarray:
        ...

    @abc.abstractmethod
    def set_parameters(self, theta: np.ndarray) -> None:
        ...

    @abc.abstractmethod
    def snapshot(self) -> "PolicyInterface":
        ...

    def apply_gradient(self, grad: np.ndarray, learning_rate: float) -> None:
        """Gradient ascent step."""
        self.set_parameters(self.parameters + learning_rate * grad)


@dataclass
class TokenSequence:
    tokens: np.ndarray
    logp_new: np.ndarray
    logp_old: np.ndarray
    logp_ref: np.ndarray

    def __post_init__(self):
        n = len(self.tokens)
        if not (len(self.logp_new) == len(self.logp_old) == len(self.logp_ref) == n):
            raise ValueError(
                f"length mismatch: tokens={n} new={len(self.logp_new)} "
                f"old={len(self.logp_old)} ref={len(self.logp_ref)}"
            )
        if n == 0:
            raise ValueError("empty token sequence")


@dataclass
class RolloutGroup:
    question_id: str
    members: list[TokenSequence]
    rewards: list[float]
    advantages: list[float]
    texts: list[str] = field(default_factory=list)

    def __post_init__(self):
        g = len(self.members)
        if g < 2 or len(self.rewards) != g or len(self.advantages) != g:
            raise ValueError("a rollout group needs at least 2 members with matching rewards/advantages")


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 8
    clip_epsilon: float = 0.2
    kl_beta: float = 0.04
    # 1e-6 is tuned for a 7B transformer; the linear toy policy needs a far larger step.
    learning_rate: float = 1e-2
    batch_size: int = 16
    epochs: int = 1
    std_floor: float = 1e-8
    max_steps: Optional[int] = None
    rollout_temperature: float = 1.0
    rollout_top_p: float = 1.0
    max_tokens: int = 1024
    train_frames: int = 32

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if not 0 < self.clip_epsilon < 1:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if self.kl_beta < 0:
            raise ValueError("kl_beta must be nonnegative")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")

    @classmethod
    def large_model(cls, **overrides) -> "GrpoConfig":
        """Hyperparameters used for the 7B video model."""
        return cls(**{"learning_rate": 1e-6, "batch_size": 16, "kl_beta": 0.04, "epochs": 1, **overrides})

    @property
    def rollout_params(self) -> SamplingParams:
        return SamplingParams(self.rollout_temperature, self.rollout_top_p, self.max_tokens)


# --------------------------------------------------------------------------- math


def group_advantages(rewards: Sequence[float], std_floor: float = 1e-8) -> np.ndarray:
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise ValueError("group_advantages needs at least two rewards")
    centered = r - r.mean()
    std = r.std()  # population std
    if std < std_floor:
        return np.zeros_like(r)
    return centered / std


def kl_per_token(logp_new, logp_ref):
    """k3 estimator ``r - log r - 1`` with ``r = pi_ref / pi_new``."""
    log_r = np.asarray(logp_ref, dtype=np.float64) - np.asarray(logp_new, dtype=np.float64)
    out = np.expm1(log_r) - log_r
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class GroupDiagnostics:
    mean_ratio: float
    clip_fraction: float
    mean_kl: float
    member_objectives: list[float]


def _member_terms(seq: TokenSequence, adv: float, eps: float, beta: float):
    ratio = np.exp(seq.logp_new - seq.logp_old)
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps)
    surrogate = np.minimum(ratio * adv, clipped * adv)
    kl = kl_per_token(seq.logp_new, seq.logp_ref)
    return ratio, clipped, surrogate, np.asarray(kl)


def grpo_objective(group: RolloutGroup, config: GrpoConfig) -> tuple[float, GroupDiagnostics]:
    eps, beta = config.clip_epsilon, config.kl_beta
    per_member, ratios, kls, n_clipped, n_tok = [], [], [], 0, 0
    for seq, adv in zip(group.members, group.advantages):
        ratio, clipped, surrogate, kl = _member_terms(seq, adv, eps, beta)
        per_member.append(float(np.mean(surrogate - beta * kl)))
        ratios.append(ratio)
        kls.append(kl)
        n_clipped += int(np.count_nonzero((ratio > 1 + eps) | (ratio < 1 - eps)))
        n_tok += len(ratio)
    all_r, all_kl = np.concatenate(ratios), np.concatenate(kls)
    diag = GroupDiagnostics(
        mean_ratio=float(all_r.mean()),
        clip_fraction=n_clipped / n_tok,
        mean_kl=float(all_kl.mean()),
        member_objectives=per_member,
    )
    return float(np.mean(per_member)), diag


def objective_logp_grads(group: RolloutGroup, config: GrpoConfig) -> list[np.ndarray]:
    """d(objective)/d(logp_new[i, t]) for every member token."""
    eps, beta = config.clip_epsilon, config.kl_beta
    group_size = len(group.members)
    grads = []
    for seq, adv in zip(group.members, group.advantages):
        ratio, _, _, _ = _member_terms(seq, adv, eps, beta)
        # The clipped branch is the min exactly when the ratio sits outside the
        # band on the side the advantage favours; it is constant there.
        if adv > 0:
            passes = ratio <= 1 + eps
        elif adv < 0:
            passes = ratio >= 1 - eps
        else:
            passes = np.ones_like(ratio, dtype=bool)
        d_surr = np.where(passes, ratio * adv, 0.0)
        r_ref = np.exp(seq.logp_ref - seq.logp_new)
        d_kl = 1.0 - r_ref
        grads.append((d_surr - beta * d_kl) / (group_size * len(ratio)))
    return grads


# --------------------------------------------------------------------------- training


@dataclass
class StepMetrics:
    step: int
    mean_reward: float
    mean_accuracy_reward: float
    mean_format_reward: float
    objective: float
    grad_norm: float
    n_groups: int
    n_degenerate: int
    n_failed: int
    mean_kl: float
    clip_fraction: float
    mean_ratio: float

    @property
    def degenerate_fraction(self) -> float:
        return self.n_degenerate / self.n_groups if self.n_groups else 0.0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class TrainingReport:
    steps: list[StepMetrics]
    initial_parameters: np.ndarray
    final_parameters: np.ndarray

    def metric_series(self, name: str) -> list[float]:
        return [getattr(s, name) for s in self.steps]


ContextBuilder = Callable[[McqaSample], Any]


def _is_degenerate(rewards: Sequence[float]) -> bool:
    return len(set(rewards)) < 2


def train_step(
    policy: PolicyInterface,
    batch: Sequence[McqaSample],
    context_builder: ContextBuilder,
    config: GrpoConfig,
    weights: RewardWeights = RewardWeights(),
    seed: int = 0,
    *,
    ref_policy: Optional[PolicyInterface] = None,
    step: int = 0,
) -> StepMetrics:
    """Sample a group per question, score, normalize, and take one ascent step."""
    if not batch:
        raise ValueError("empty batch")
    ref_policy = ref_policy if ref_policy is not None else policy.snapshot()
    old_policy = policy.snapshot()
    params = config.rollout_params

    totals, fmts, accs = [], [], []
    groups: list[tuple[Any, RolloutGroup]] = []
    n_degenerate = n_failed = 0
    for sample in batch:
        try:
            context = context_builder(sample)
            gens = old_policy.sample(context, params, config.group_size, derive_seed(seed, sample.id))
        except Exception as exc:  # noqa: BLE001 - any generation failure skips the group
            log.warning("generation failed for %s: %s", sample.id, exc)
            n_failed += 1
            continue
        scores = [score_text(g.text, sample.gt_answer, sample.n_options, weights) for g in gens]
        rewards = [s[0] for s in scores]
        totals += rewards
        fmts += [s[1] for s in scores]
        accs += [s[2] for s in scores]
        if _is_degenerate(rewards):
            n_degenerate += 1
            continue
        members = [
            TokenSequence(
                tokens=g.tokens,
                logp_new=policy.logprobs(context, g.tokens, params),
                logp_old=g.logp,
                logp_ref=ref_policy.logprobs(context, g.tokens, params),
            )
            for g in gens
        ]
        adv = group_advantages(rewards, config.std_floor)
        groups.append(
            (context, RolloutGroup(sample.id, members, rewards, list(adv), [g.text for g in gens]))
        )

    grad = np.zeros_like(policy.parameters)
    objective = mean_kl = clip_fraction = 0.0
    mean_ratio = 1.0
    if groups:
        objs, diags = [], []
        for context, group in groups:
            obj, diag = grpo_objective(group, config)
            objs.append(obj)
            diags.append(diag)
            for seq, w in zip(group.members, objective_logp_grads(group, config)):
                grad += policy.logprob_grad(context, seq.tokens, params, w)
        grad /= len(groups)
        objective = float(np.mean(objs))
        mean_kl = float(np.mean([d.mean_kl for d in diags]))
        clip_fraction = float(np.mean([d.clip_fraction for d in diags]))
        mean_ratio = float(np.mean([d.mean_ratio for d in diags]))
        policy.apply_gradient(grad, config.learning_rate)

    def _mean(xs):
        return float(np.mean(xs)) if xs else 0.0

    return StepMetrics(
        step=step,
        mean_reward=_mean(totals),
        mean_accuracy_reward=_mean(accs),
        mean_format_reward=_mean(fmts),
        objective=objective,
        grad_norm=float(np.linalg.norm(grad)),
        n_groups=len(batch),
        n_degenerate=n_degenerate,
        n_failed=n_failed,
        mean_kl=mean_kl,
        clip_fraction=clip_fraction,
        mean_ratio=mean_ratio,
    )


def train(
    policy: PolicyInterface,
    dataset: Sequence[McqaSample],
    context_builder: ContextBuilder,
    config: GrpoConfig,
    weights: RewardWeights = RewardWeights(),
    seed: int = 0,
    callback: Optional[Callable[[StepMetrics], None]] = None,
) -> TrainingReport:
    if not dataset:
        raise ValueError("empty dataset")
    initial = policy.parameters.copy()
    ref_policy = policy.snapshot()
    steps: list[StepMetrics] = []
    n_batches = math.ceil(len(dataset) / config.batch_size)
    for epoch in range(config.epochs):
        order = np.random.default_rng(derive_seed(seed, "shuffle", epoch)).permutation(len(dataset))
        for b in range(n_batches):
            if config.max_steps is not None and len(steps) >= config.max_steps:
                break
            batch = [dataset[i] for i in order[b * config.batch_size : (b + 1) * config.batch_size]]
            k = len(steps)
            metrics = train_step(
                policy, batch, context_builder, config, weights,
                seed=derive_seed(seed, "step", k), ref_policy=ref_policy, step=k,
            )
            steps.append(metrics)
            if callback is not None:
                callback(metrics)
    return TrainingReport(steps=steps, initial_parameters=initial, final_parameters=policy.parameters.copy())
