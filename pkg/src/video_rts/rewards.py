"""Outcome rewards: a binary format reward plus a binary accuracy reward."""

from __future__ import annotations

from dataclasses import dataclass

from .core import ParsedResponse, parse_response


@dataclass(frozen=True)
class RewardWeights:
    w_format: float = 1.0
    w_acc: float = 1.0
    # When set, a malformed response earns no accuracy reward either.
    gate_accuracy_on_format: bool = False

    def __post_init__(self):
        if self.w_format < 0 or self.w_acc < 0:
            raise ValueError("reward weights must be nonnegative")
        if not self.w_format + self.w_acc > 0:
            raise ValueError("reward weights must not both be zero")


def format_reward(parsed: ParsedResponse) -> float:
    return 1.0 if parsed.well_formed_format else 0.0


def accuracy_reward(parsed: ParsedResponse, gt: str) -> float:
    return 1.0 if parsed.answer is not None and parsed.answer == gt else 0.0


def total_reward(parsed: ParsedResponse, gt: str, weights: RewardWeights = RewardWeights()) -> float:
    fmt = format_reward(parsed)
    acc = accuracy_reward(parsed, gt)
    if weights.gate_accuracy_on_format and not fmt:
        acc = 0.0
    return weights.w_format * fmt + weights.w_acc * acc


def score_text(raw: str, gt: str, n_options: int, weights: RewardWeights = RewardWeights()) -> tuple[float, float, float]:
    """Returns (total, format, accuracy) for a raw completion."""
    parsed = parse_response(raw, n_options)
    return total_reward(parsed, gt, weights), format_reward(parsed), accuracy_reward(parsed, gt)
