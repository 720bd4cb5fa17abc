"""Random GRPO groups over the toy policy, for finite-difference checks."""

from dataclasses import dataclass

import numpy as np

from video_rts.core import SamplingParams, SyntheticVideo, frame_indices
from video_rts.grpo import GrpoConfig, RolloutGroup, TokenSequence, grpo_objective, group_advantages, objective_logp_grads
from video_rts.simenv.policy import ToyPolicy, build_context


@dataclass
class Instance:
    policy: ToyPolicy
    context: object
    params: SamplingParams
    config: GrpoConfig
    tokens: list
    logp_old: list
    logp_ref: list
    advantages: np.ndarray

    def group(self, theta=None):
        pol = self.policy
        if theta is not None:
            if not hasattr(self, "_probe"):
                self._probe = pol.snapshot()
            pol = self._probe
            pol.set_parameters(theta)
        members = [
            TokenSequence(tok, pol.logprobs(self.context, tok, self.params), old, ref)
            for tok, old, ref in zip(self.tokens, self.logp_old, self.logp_ref)
        ]
        return RolloutGroup("g", members, list(self.advantages), list(self.advantages))

    def objective(self, theta):
        return grpo_objective(self.group(theta), self.config)[0]

    def analytic(self):
        g = self.group()
        out = np.zeros(self.policy.n_params)
        for seq, w in zip(g.members, objective_logp_grads(g, self.config)):
            out += self.policy.logprob_grad(self.context, seq.tokens, self.params, w)
        return out

    def numeric(self, step=1e-5):
        theta = self.policy.parameters
        out = np.zeros_like(theta)
        for k in range(len(theta)):
            e = np.zeros_like(theta)
            e[k] = step
            out[k] = (self.objective(theta + e) - self.objective(theta - e)) / (2 * step)
        return out

    def margin(self):
        """Smallest distance of any token ratio from a clip boundary."""
        eps = self.config.clip_epsilon
        r = np.concatenate([np.exp(m.logp_new - m.logp_old) for m in self.group().members])
        return float(np.min(np.minimum(np.abs(r - (1 + eps)), np.abs(r - (1 - eps)))))

    def clip_active(self):
        eps = self.config.clip_epsilon
        g = self.group()
        for m, a in zip(g.members, self.advantages):
            r = np.exp(m.logp_new - m.logp_old)
            sampled = m.logp_old != 0
            if (a > 0 and np.any(sampled & (r > 1 + eps))) or (a < 0 and np.any(sampled & (r < 1 - eps))):
                return True
        return False


def random_instance(rng: np.random.Generator, option_head=None) -> Instance:
    n_options = int(rng.integers(2, 5))
    head = option_head or rng.choice(["tied", "full"])
    policy = ToyPolicy.random(n_options, seed=int(rng.integers(1 << 30)), scale=0.7, option_head=head)
    labels = [None] + list("ABCDEFGH"[:n_options])
    video = SyntheticVideo("v", tuple(rng.choice(labels, size=32).tolist()))
    context = build_context(video, frame_indices(32, int(rng.choice([4, 8, 16]))), n_options)
    params = SamplingParams(float(rng.uniform(0.6, 1.4)), float(rng.choice([1.0, 1.0, 0.95])))
    config = GrpoConfig(clip_epsilon=float(rng.choice([0.1, 0.2, 0.3])), kl_beta=float(rng.choice([0.0, 0.04, 0.5])))
    group_size = int(rng.integers(2, 5))
    gens = policy.sample(context, params, group_size, seed=int(rng.integers(1 << 30)))
    tokens = [g.tokens for g in gens]
    sampled = [g.logp != 0 for g in gens]
    # old and ref policies differ from the current one by random per-token shifts
    old = [g.logp + s * rng.normal(0, 0.25, len(g.logp)) for g, s in zip(gens, sampled)]
    ref = [g.logp + s * rng.normal(0, 0.5, len(g.logp)) for g, s in zip(gens, sampled)]
    rewards = rng.integers(0, 3, group_size).astype(float)
    if np.ptp(rewards) == 0:
        rewards[0] += 1
    return Instance(policy, context, params, config, tokens, old, ref, group_advantages(rewards))


def relative_error(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def instances(n, seed=0, min_margin=1e-3):
    """``n`` instances whose ratios stay clear of the clip kinks."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        inst = random_instance(rng)
        if inst.margin() > min_margin:
            out.append(inst)
    return out
