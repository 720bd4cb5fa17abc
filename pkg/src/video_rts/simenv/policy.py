"""A tiny autoregressive linear-softmax policy over evidence features.

Every completion has the shape::

    <think> w_1 ... w_L </think><answer> X </answer>

The think words come from a small vocabulary head conditioned on the evidence
features and the previous word; the letter X comes from the option head. Tag
tokens are forced (log-prob 0). Temperature and nucleus truncation apply to
every sampled token, as in a real decoder.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..core import (
    ANSWER_CLOSE,
    ANSWER_OPEN,
    LETTERS,
    THINK_CLOSE,
    THINK_OPEN,
    SamplingParams,
    SyntheticVideo,
    derive_seed,
)
from ..grpo import Generation, PolicyInterface

THINK_VOCAB = ("scan", "count", "compare", "recall", "check", "weigh", "focus", "decide")
TAGS = (THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE)
T_THINK_OPEN, T_THINK_CLOSE, T_ANSWER_OPEN, T_ANSWER_CLOSE = range(4)
WORD0 = len(TAGS)


@dataclass(frozen=True)
class ToyContext:
    """Policy input.

    ``features`` holds the per-option evidence shares plus a bias entry;
    ``option_features`` holds one row per option: (share, density), where
    density is the option's evidence count over the number of frames observed.
    """

    features: np.ndarray
    option_features: np.ndarray

    @property
    def n_options(self) -> int:
        return len(self.features) - 1


def evidence_counts(video: SyntheticVideo, indices: Sequence[int], n_options: int) -> np.ndarray:
    counts = np.zeros(n_options)
    for i in indices:
        label = video.frame_evidence[i]
        if label is not None:
            counts[LETTERS.index(label)] += 1
    return counts


def evidence_features(video: SyntheticVideo, indices: Sequence[int], n_options: int) -> np.ndarray:
    counts = evidence_counts(video, indices, n_options)
    total = counts.sum()
    shares = counts / total if total > 0 else counts
    return np.append(shares, 1.0)


def build_context(video: SyntheticVideo, indices: Sequence[int], n_options: int) -> ToyContext:
    counts = evidence_counts(video, indices, n_options)
    total = counts.sum()
    shares = counts / total if total > 0 else counts
    density = counts / max(len(indices), 1)
    return ToyContext(np.append(shares, 1.0), np.column_stack([shares, density]))


def sampling_distribution(logits: np.ndarray, temperature: float, top_p: float) -> np.ndarray:
    """Tempered softmax renormalized over the smallest top-mass prefix reaching ``top_p``.

    Tokens tied exactly with the last one kept are kept too. Works row-wise on 2-D input.
    """
    z = np.asarray(logits, dtype=np.float64) / temperature
    q = np.exp(z - z.max(axis=-1, keepdims=True))
    q /= q.sum(axis=-1, keepdims=True)
    if top_p < 1.0:
        order = np.argsort(-q, axis=-1, kind="stable")
        csum = np.cumsum(np.take_along_axis(q, order, axis=-1), axis=-1)
        # keep sorted positions up to and including the first one reaching top_p
        keep_sorted = np.concatenate(
            [np.ones(q.shape[:-1] + (1,), dtype=bool), csum[..., :-1] < top_p - 1e-12], axis=-1
        )
        # exact ties with the last kept token stay in, so letter order never breaks a tie
        floor = np.min(np.where(keep_sorted, np.take_along_axis(q, order, axis=-1), np.inf), axis=-1, keepdims=True)
        q = np.where(q >= floor, q, 0.0)
        q /= q.sum(axis=-1, keepdims=True)
    return q


def _draw(q: np.ndarray, rng: np.random.Generator) -> int:
    csum = np.cumsum(q)
    idx = int(np.searchsorted(csum, rng.random() * csum[-1], side="right"))
    idx = min(idx, len(q) - 1)
    while q[idx] == 0.0:  # never land on a truncated token through rounding
        idx -= 1
    return idx


OPTION_HEADS = ("tied", "full")


class ToyPolicy(PolicyInterface):
    """Linear-softmax heads; parameters are one flat vector ``[W | U | T]``.

    W is the option head. With ``option_head="tied"`` it is a (1, 2) row that
    scores every option from its own (share, density) row, so options with
    identical evidence get identical logits. With ``"full"`` it is a (K, K+1)
    matrix over the shared feature vector, free to learn per-letter biases.
    U: (V, K+1) think head, T: (V+1, V) previous-word transition logits (row 0
    is the start state).
    """

    def __init__(
        self,
        n_options: int = 4,
        think_len: int = 8,
        theta: Optional[np.ndarray] = None,
        think_vocab: Sequence[str] = THINK_VOCAB,
        option_head: str = "tied",
    ):
        if option_head not in OPTION_HEADS:
            raise ValueError(f"option_head must be one of {OPTION_HEADS}")
        self.n_options = n_options
        self.think_len = think_len
        self.think_vocab = tuple(think_vocab)
        self.option_head = option_head
        K, V = n_options, len(self.think_vocab)
        w_shape = (1, 2) if option_head == "tied" else (K, K + 1)
        self._shapes = (w_shape, (V, K + 1), (V + 1, V))
        self._sizes = tuple(a * b for a, b in self._shapes)
        self.n_params = sum(self._sizes)
        if theta is None:
            theta = np.zeros(self.n_params)
        self.set_parameters(theta)

    @classmethod
    def random(cls, n_options: int = 4, seed: int = 0, scale: float = 0.01, **kw) -> "ToyPolicy":
        policy = cls(n_options, **kw)
        rng = np.random.default_rng(seed)
        policy.set_parameters(scale * rng.standard_normal(policy.n_params))
        return policy

    # -- parameters

    @property
    def parameters(self) -> np.ndarray:
        return self._theta.copy()

    def set_parameters(self, theta: np.ndarray) -> None:
        theta = np.array(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        self._theta = theta
        a, b, _ = self._sizes
        self.W = theta[:a].reshape(self._shapes[0])
        self.U = theta[a : a + b].reshape(self._shapes[1])
        self.T = theta[a + b :].reshape(self._shapes[2])

    def snapshot(self) -> "ToyPolicy":
        return type(self)(self.n_options, self.think_len, self._theta.copy(), self.think_vocab, self.option_head)

    # -- tokens

    @property
    def letter0(self) -> int:
        return WORD0 + len(self.think_vocab)

    def token_text(self, tok: int) -> str:
        if tok < WORD0:
            return TAGS[tok]
        if tok < self.letter0:
            return self.think_vocab[tok - WORD0]
        return LETTERS[tok - self.letter0]

    def detokenize(self, tokens: Sequence[int]) -> str:
        parts = []
        prev_word = False
        for tok in tokens:
            is_word = WORD0 <= tok < self.letter0
            if is_word and prev_word:
                parts.append(" ")
            parts.append(self.token_text(int(tok)))
            prev_word = is_word
        return "".join(parts)

    def option_logits(self, context: ToyContext) -> np.ndarray:
        if self.option_head == "tied":
            return context.option_features @ self.W[0]
        return self.W @ context.features

    def _think_logits(self, context: ToyContext, prev_row: int) -> np.ndarray:
        return self.U @ context.features + self.T[prev_row]

    # -- sampling

    def generate(self, context: ToyContext, params: SamplingParams, rng: np.random.Generator) -> Generation:
        if context.n_options != self.n_options:
            raise ValueError("context/policy option count mismatch")
        tokens: list[int] = []
        logps: list[float] = []
        text = ""

        def emit(tok: int, lp: float) -> bool:
            nonlocal text
            if tokens and WORD0 <= tok < self.letter0 and WORD0 <= tokens[-1] < self.letter0:
                text += " "
            tokens.append(tok)
            logps.append(lp)
            text += self.token_text(tok)
            return len(tokens) >= params.max_tokens or text.endswith(params.stop_sentinel)

        done = emit(T_THINK_OPEN, 0.0)
        prev_row = 0
        for _ in range(self.think_len):
            if done:
                break
            q = sampling_distribution(self._think_logits(context, prev_row), params.temperature, params.top_p)
            w = _draw(q, rng)
            done = emit(WORD0 + w, float(np.log(q[w])))
            prev_row = w + 1
        for tag in (T_THINK_CLOSE, T_ANSWER_OPEN):
            if not done:
                done = emit(tag, 0.0)
        if not done:
            q = sampling_distribution(self.option_logits(context), params.temperature, params.top_p)
            a = _draw(q, rng)
            done = emit(self.letter0 + a, float(np.log(q[a])))
        if not done:
            emit(T_ANSWER_CLOSE, 0.0)
        return Generation(text=text, tokens=np.array(tokens, dtype=np.int64), logp=np.array(logps))

    def sample(self, context: ToyContext, params: SamplingParams, count: int, seed: int) -> list[Generation]:
        return [
            self.generate(context, params, np.random.default_rng(derive_seed(seed, j)))
            for j in range(count)
        ]

    # -- scoring

    def _walk(self, context: ToyContext, tokens: Sequence[int], params: SamplingParams):
        """Yields (position, head, prev_row, distribution, chosen index) for sampled tokens."""
        think_q = opt_q = None
        prev_row = 0
        for t, tok in enumerate(tokens):
            tok = int(tok)
            if tok < WORD0:
                continue
            if tok < self.letter0:
                if think_q is None:  # one row per previous word
                    logits = self.U @ context.features + self.T
                    think_q = sampling_distribution(logits, params.temperature, params.top_p)
                yield t, "think", prev_row, think_q[prev_row], tok - WORD0
                prev_row = tok - WORD0 + 1
            else:
                if opt_q is None:
                    opt_q = sampling_distribution(self.option_logits(context), params.temperature, params.top_p)
                yield t, "option", None, opt_q, tok - self.letter0

    def logprobs(self, context: ToyContext, tokens: Sequence[int], params: SamplingParams) -> np.ndarray:
        out = np.zeros(len(tokens))
        with np.errstate(divide="ignore"):
            for t, _, _, q, a in self._walk(context, tokens, params):
                out[t] = np.log(q[a])
        return out

    def logprob_grad(
        self, context: ToyContext, tokens: Sequence[int], params: SamplingParams, weights: np.ndarray
    ) -> np.ndarray:
        dW = np.zeros(self._shapes[0])
        dU = np.zeros(self._shapes[1])
        dT = np.zeros(self._shapes[2])
        phi = context.features
        inv_tau = 1.0 / params.temperature
        for t, head, prev_row, q, a in self._walk(context, tokens, params):
            w = weights[t]
            if w == 0.0:
                continue
            g = -q.copy()
            g[a] += 1.0
            g *= w * inv_tau
            if head == "think":
                dU += np.outer(g, phi)
                dT[prev_row] += g
            elif self.option_head == "tied":
                dW[0] += g @ context.option_features
            else:
                dW += np.outer(g, phi)
        return np.concatenate([dW.ravel(), dU.ravel(), dT.ravel()])

    def option_distribution(self, context: ToyContext, params: Optional[SamplingParams] = None) -> np.ndarray:
        params = params or SamplingParams()
        return sampling_distribution(self.option_logits(context), params.temperature, params.top_p)

    # -- checkpoints

    def to_dict(self) -> dict:
        return {
            "format": "video-rts-toy-policy",
            "version": 1,
            "n_options": self.n_options,
            "think_len": self.think_len,
            "think_vocab": list(self.think_vocab),
            "option_head": self.option_head,
            "theta": [float(x) for x in self._theta],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToyPolicy":
        if d.get("format") != "video-rts-toy-policy":
            raise ValueError("not a toy policy checkpoint")
        if d.get("version") != 1:
            raise ValueError(f"unsupported checkpoint version {d.get('version')}")
        return cls(d["n_options"], d["think_len"], np.array(d["theta"]), d["think_vocab"], d.get("option_head", "tied"))


def toy_generate(
    policy: ToyPolicy,
    video: SyntheticVideo,
    question: str,
    indices: Sequence[int],
    params: SamplingParams,
    seed: int,
) -> tuple[str, Generation]:
    """One completion for a synthetic video viewed through ``indices``.

    The question text is not read; the toy policy answers from evidence alone.
    """
    del question
    context = build_context(video, indices, policy.n_options)
    gen = policy.generate(context, params, np.random.default_rng(seed))
    return gen.text, gen
