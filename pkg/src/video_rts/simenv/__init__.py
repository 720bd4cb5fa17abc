"""Synthetic video-QA testbed: corpus, oracle, toy policy, evaluator."""

from .corpus import CorpusConfig, InfeasibleCorpusError, check_sample, generate_corpus, oracle_answer
from .evaluate import (
    EvalReport,
    FixedMode,
    OracleInference,
    PolicyInference,
    UniformInference,
    evaluate,
    expected_accuracy,
    report_from_traces,
)
from .policy import ToyContext, ToyPolicy, build_context, evidence_features, sampling_distribution, toy_generate

__all__ = [
    "CorpusConfig",
    "EvalReport",
    "FixedMode",
    "InfeasibleCorpusError",
    "OracleInference",
    "PolicyInference",
    "ToyContext",
    "ToyPolicy",
    "UniformInference",
    "build_context",
    "check_sample",
    "evaluate",
    "evidence_features",
    "expected_accuracy",
    "generate_corpus",
    "oracle_answer",
    "report_from_traces",
    "sampling_distribution",
    "toy_generate",
]
