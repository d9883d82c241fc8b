"""Training objectives: mixed-stream NLL, SFT NLL, and the RLHF objective.

The RLHF objective is the token-level clipped surrogate minus a KL penalty:

    mean_t[ min(rho_t * A_t, clip(rho_t, 1-eps, 1+eps) * A_t) ] - beta * mean_t[ KL_t ]

where rho_t are importance ratios against the rollout-time policy and KL_t is
the exact full-vocabulary KL against the frozen reference at each position.
Gradients are assembled per position in logit space and pushed through the
policy's hand-derived backward pass; at the clip boundary the subgradient of
min follows the unclipped branch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DialogueHistory, Rubric
from .errors import EmptyBatch, LengthMismatch
from .policy import PolicyParams, backward_positions, forward_positions
from .toyenv import SupervisedExample

# --- supervised losses --------------------------------------------------------


def _example_nll_and_dz(params: PolicyParams, example: SupervisedExample):
    gen = np.array(example.trace + example.reply, dtype=np.int64)
    fwd = forward_positions(params, example.history, example.rubric, gen)
    nll = -float(fwd.token_logprobs.sum())
    pi = np.exp(fwd.logp)
    dz = pi.copy()
    dz[np.arange(gen.shape[0]), gen] -= 1.0  # d(nll)/dz = pi - onehot
    return fwd, nll, dz


def sequence_nll(params: PolicyParams, example: SupervisedExample) -> float:
    """Total negative log-likelihood of one gold trace + reply."""
    _, nll, _ = _example_nll_and_dz(params, example)
    return nll


def sft_loss(params: PolicyParams, batch: Sequence[SupervisedExample]) -> float:
    """Mean per-sequence total NLL. Under all-zero (uniform) parameters this
    is exactly mean sequence length times log(vocab_size)."""
    if len(batch) == 0:
        raise EmptyBatch("sft batch is empty")
    return float(np.mean([sequence_nll(params, ex) for ex in batch]))


def sft_loss_and_grad(params: PolicyParams, batch: Sequence[SupervisedExample]):
    if len(batch) == 0:
        raise EmptyBatch("sft batch is empty")
    grad = np.zeros_like(params.theta)
    total = 0.0
    scale = 1.0 / len(batch)
    for ex in batch:  # fixed iteration order keeps the reduction deterministic
        fwd, nll, dz = _example_nll_and_dz(params, ex)
        total += nll
        backward_positions(params, fwd, dz * scale, grad)
    return total * scale, grad


def _split_streams(batch: Sequence[SupervisedExample]):
    audio = [ex for ex in batch if ex.has_audio]
    text = [ex for ex in batch if not ex.has_audio]
    if len(batch) == 0 or not audio or not text:
        raise EmptyBatch(
            f"mid-training needs both streams in every batch, got {len(audio)} audio / {len(text)} text"
        )
    return audio, text


def mid_train_loss(
    params: PolicyParams, batch: Sequence[SupervisedExample], mixing_lambda: float
) -> float:
    """Convex mixture of the two stream NLLs:
    lambda * mean(audio-sample NLL) + (1 - lambda) * mean(text-sample NLL)."""
    audio, text = _split_streams(batch)
    audio_mean = float(np.mean([sequence_nll(params, ex) for ex in audio]))
    text_mean = float(np.mean([sequence_nll(params, ex) for ex in text]))
    return mixing_lambda * audio_mean + (1.0 - mixing_lambda) * text_mean


def mid_train_loss_and_grad(
    params: PolicyParams, batch: Sequence[SupervisedExample], mixing_lambda: float
):
    audio, text = _split_streams(batch)
    grad = np.zeros_like(params.theta)
    loss = 0.0
    for subset, weight in ((audio, mixing_lambda), (text, 1.0 - mixing_lambda)):
        scale = weight / len(subset)
        for ex in subset:
            fwd, nll, dz = _example_nll_and_dz(params, ex)
            loss += nll * scale
            if weight != 0.0:
                backward_positions(params, fwd, dz * scale, grad)
    return loss, grad


# --- RLHF objective -----------------------------------------------------------


def importance_ratios(new_logprobs: np.ndarray, old_logprobs: np.ndarray) -> np.ndarray:
    """Per-token probability ratios, computed in log space."""
    new_logprobs = np.asarray(new_logprobs, dtype=np.float64)
    old_logprobs = np.asarray(old_logprobs, dtype=np.float64)
    if new_logprobs.shape != old_logprobs.shape:
        raise LengthMismatch(
            f"logprob arrays differ in shape: {new_logprobs.shape} vs {old_logprobs.shape}"
        )
    return np.exp(new_logprobs - old_logprobs)


def kl_per_token(new_logp: np.ndarray, ref_logp: np.ndarray) -> np.ndarray:
    """Exact KL(pi_theta || pi_ref) per position from full-vocabulary
    log-distribution rows (n, V)."""
    new_logp = np.asarray(new_logp, dtype=np.float64)
    ref_logp = np.asarray(ref_logp, dtype=np.float64)
    if new_logp.shape != ref_logp.shape:
        raise LengthMismatch(f"logp arrays differ in shape: {new_logp.shape} vs {ref_logp.shape}")
    if new_logp.ndim == 1:
        return np.sum(np.exp(new_logp) * (new_logp - ref_logp))
    return np.sum(np.exp(new_logp) * (new_logp - ref_logp), axis=-1)


def clipped_surrogate_terms(
    ratios: np.ndarray, advantages: np.ndarray, clip_epsilon: float
) -> np.ndarray:
    """Per-token min(rho * A, clip(rho) * A)."""
    ratios = np.asarray(ratios, dtype=np.float64)
    advantages = np.asarray(advantages, dtype=np.float64)
    if ratios.shape != advantages.shape:
        raise LengthMismatch(f"shape mismatch: {ratios.shape} vs {advantages.shape}")
    clipped = np.clip(ratios, 1.0 - clip_epsilon, 1.0 + clip_epsilon)
    return np.minimum(ratios * advantages, clipped * advantages)


def rlhf_objective(
    ratios: np.ndarray,
    advantages: np.ndarray,
    kl_values: np.ndarray,
    clip_epsilon: float,
    kl_coeff: float,
) -> float:
    """Scalar objective: mean clipped surrogate minus kl_coeff times mean KL."""
    kl_values = np.asarray(kl_values, dtype=np.float64)
    terms = clipped_surrogate_terms(ratios, advantages, clip_epsilon)
    if terms.shape != kl_values.shape:
        raise LengthMismatch(f"shape mismatch: {terms.shape} vs {kl_values.shape}")
    if terms.size == 0:
        raise EmptyBatch("rlhf objective over zero tokens is undefined")
    return float(terms.mean() - kl_coeff * kl_values.mean())


@dataclass
class Trajectory:
    """One rollout with everything the optimizer needs later.

    old_logprobs are the sampler's stored per-token log-probs (the
    rollout-time policy is theta_old). ref_logp holds the frozen reference's
    full log-distribution rows so per-position KL is exact. The group-relative
    advantage is a scalar, broadcast to every token of the sequence, trace
    included.
    """

    task_id: str
    regime: str
    history: DialogueHistory
    rubric: Rubric | None
    gen: np.ndarray  # (n,) int64, trace then reply
    old_logprobs: np.ndarray  # (n,)
    ref_logp: np.ndarray  # (n, V)
    advantage: float
    reward: float


@dataclass
class RlhfStats:
    """Token-level diagnostics of one objective evaluation."""

    objective: float
    surrogate: float
    mean_kl: float
    clip_fraction: float
    n_tokens: int


def _trajectory_grad(
    params: PolicyParams, traj: Trajectory, n_total: int, clip_epsilon: float, kl_coeff: float
):
    """One trajectory's gradient buffer plus its objective contributions."""
    fwd = forward_positions(params, traj.history, traj.rubric, traj.gen)
    n = traj.gen.shape[0]
    lp_tok = fwd.token_logprobs
    ratios = np.exp(lp_tok - traj.old_logprobs)
    adv = traj.advantage

    surr = clipped_surrogate_terms(ratios, np.full(n, adv), clip_epsilon)
    clipped_off = ((adv > 0) & (ratios > 1.0 + clip_epsilon)) | (
        (adv < 0) & (ratios < 1.0 - clip_epsilon)
    )
    kl = kl_per_token(fwd.logp, traj.ref_logp)

    pi = np.exp(fwd.logp)
    # surrogate part: where the min follows rho * A, d/dz = A * rho * (onehot - pi)
    coef = np.where(clipped_off, 0.0, adv * ratios) / n_total
    dz = -coef[:, None] * pi
    dz[np.arange(n), traj.gen] += coef
    # KL part: d(KL_t)/dz = pi * (logpi - logref - KL_t)
    if kl_coeff != 0.0:
        dz -= (kl_coeff / n_total) * pi * (fwd.logp - traj.ref_logp - kl[:, None])

    grad = np.zeros_like(params.theta)
    backward_positions(params, fwd, dz, grad)
    return grad, float(surr.sum()), float(kl.sum()), int(clipped_off.sum())


def rlhf_batch_stats_and_grad(
    params: PolicyParams,
    trajectories: Sequence[Trajectory],
    clip_epsilon: float,
    kl_coeff: float,
    pool=None,
):
    """Objective diagnostics and the exact gradient over a trajectory batch.

    Per-trajectory gradients are independent buffers reduced in trajectory
    order on the calling thread, never per-shard subtotals, so the result is
    bit-identical with or without a thread pool.
    """
    if len(trajectories) == 0:
        raise EmptyBatch("rlhf batch is empty")
    n_total = int(sum(t.gen.shape[0] for t in trajectories))

    def work(traj: Trajectory):
        return _trajectory_grad(params, traj, n_total, clip_epsilon, kl_coeff)

    results = list(pool.map(work, trajectories)) if pool is not None else [work(t) for t in trajectories]

    grad = np.zeros_like(params.theta)
    surr_sum = 0.0
    kl_sum = 0.0
    clip_count = 0
    for g, surr, kl, clipped in results:
        grad += g
        surr_sum += surr
        kl_sum += kl
        clip_count += clipped
    stats = RlhfStats(
        objective=surr_sum / n_total - kl_coeff * kl_sum / n_total,
        surrogate=surr_sum / n_total,
        mean_kl=kl_sum / n_total,
        clip_fraction=clip_count / n_total,
        n_tokens=n_total,
    )
    return stats, grad
