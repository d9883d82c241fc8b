"""Training stages, rollout collection, evaluation, and experiments.

Stage chaining: mid-training initializes the policy on the mixed audio/text
echo corpus, SFT teaches the trace-then-reply protocol on gold generations,
RLHF then optimizes judged rewards with the clipped surrogate and a KL leash
to the frozen SFT policy. Checkpoints carry a stage tag and RLHF refuses to
start from anything but an SFT checkpoint unless forced.

Determinism contract: every random draw is keyed by (config.seed, step,
task index, member index), rollout results and per-trajectory gradients are
reduced in global sample order on the calling thread, and optimizer state is
plain float64, so identical (config, seed) produce identical metrics and
byte-identical checkpoints for any worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import ModelConfig, RunConfig, config_hash, config_to_dict
from .errors import EmptyBatch, NonFiniteGradient, StageMismatch
from .objectives import (
    Trajectory,
    kl_per_token,
    mid_train_loss_and_grad,
    rlhf_batch_stats_and_grad,
    sft_loss_and_grad,
)
from .policy import (
    Checkpoint,
    PolicyParams,
    forward_positions,
    load_checkpoint,
    param_count,
    sample_generation,
    save_checkpoint,
)
from .rewards import JudgeAuditRecord, RewardModel, RuleBasedJudge, append_audit_records, estimate_advantages, make_reference, phi
from .rng import derive_seed, make_rng
from .toyenv import (
    SupervisedExample,
    TaskInstance,
    effective_rubric,
    generate_task,
    make_mid_example,
    make_sft_example,
    satisfaction_score,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

RLHF_METRIC_FIELDS = ("step", "objective", "surrogate", "mean_kl", "clip_fraction", "mean_reward", "grad_norm")
SUPERVISED_METRIC_FIELDS = ("step", "loss", "grad_norm")

CHECKPOINT_EVERY = 50


# --- optimizer ----------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n))


def adam_ascend(state: AdamState, theta: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    """One Adam step in the direction of grad (gradient ascent)."""
    state.t += 1
    state.m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * grad
    state.v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * grad * grad
    m_hat = state.m / (1.0 - ADAM_BETA1**state.t)
    v_hat = state.v / (1.0 - ADAM_BETA2**state.t)
    return theta + lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def _adaptor_mask_slice(model: ModelConfig) -> slice:
    # adaptor blocks (projection, bias) sit at the tail of the flat vector
    tail = model.d_model * 2 * model.d_enc + model.d_model
    total = param_count(model)
    return slice(total - tail, total)


def _checked_grad(grad: np.ndarray, config: RunConfig) -> np.ndarray:
    if not np.isfinite(grad).all():
        raise NonFiniteGradient("gradient contains NaN or infinity; step aborted")
    if not config.train_adaptor:
        grad = grad.copy()
        grad[_adaptor_mask_slice(config.model)] = 0.0
    return grad


def snapshot_id(params: PolicyParams) -> str:
    return hashlib.sha256(params.theta.tobytes()).hexdigest()[:16]


# --- rollout collection ---------------------------------------------------------


@dataclass
class TrajectoryBatch:
    """All rollouts of one RLHF iteration, with the snapshot ids of the policy
    that sampled them and of the frozen reference."""

    step: int
    trajectories: list[Trajectory]
    policy_snapshot: str
    ref_snapshot: str
    records: list[JudgeAuditRecord]

    @property
    def mean_reward(self) -> float:
        return float(np.mean([t.reward for t in self.trajectories]))


def collect_rollouts(
    params: PolicyParams,
    ref_params: PolicyParams,
    tasks: Sequence[TaskInstance],
    judge: RewardModel,
    config: RunConfig,
    step: int,
    pool: ThreadPoolExecutor | None = None,
) -> TrajectoryBatch:
    """Sample G rollouts per task, judge them, and attach group-relative
    advantages plus the reference distributions needed for exact KL.

    Member seeds depend only on (config.seed, step, task index, member index),
    and results are assembled in that order, so scheduling cannot change the
    batch.
    """
    references = [make_reference(ref_params, task) for task in tasks]
    jobs = [(i, g) for i in range(len(tasks)) for g in range(config.group_size)]

    def roll(job: tuple[int, int]):
        i, g = job
        task = tasks[i]
        gen = sample_generation(
            params,
            task.history,
            task.rubric,
            temperature=config.temperature,
            seed=derive_seed("rollout", config.seed, step, i, g),
        )
        tokens = np.array(gen.tokens, dtype=np.int64)
        ref_logp = forward_positions(ref_params, task.history, task.rubric, tokens).logp
        return gen, tokens, ref_logp

    rolled = list(pool.map(roll, jobs)) if pool is not None else [roll(j) for j in jobs]

    trajectories: list[Trajectory] = []
    records: list[JudgeAuditRecord] = []
    for i, task in enumerate(tasks):
        group = rolled[i * config.group_size : (i + 1) * config.group_size]
        rewards = []
        for gen, _, _ in group:
            judgment = judge.judge(task.history, gen.reply, references[i], task.rubric)
            rewards.append(phi(judgment))
            records.append(
                JudgeAuditRecord(
                    task_id=task.task_id,
                    regime=task.regime,
                    level=judgment.level,
                    scale=judgment.scale,
                    reward=rewards[-1],
                )
            )
        advantages = estimate_advantages(np.array(rewards), config.advantage_mode)
        for g, (gen, tokens, ref_logp) in enumerate(group):
            trajectories.append(
                Trajectory(
                    task_id=task.task_id,
                    regime=task.regime,
                    history=task.history,
                    rubric=task.rubric,
                    gen=tokens,
                    old_logprobs=gen.logprobs,
                    ref_logp=ref_logp,
                    advantage=float(advantages[g]),
                    reward=rewards[g],
                )
            )
    return TrajectoryBatch(
        step=step,
        trajectories=trajectories,
        policy_snapshot=snapshot_id(params),
        ref_snapshot=snapshot_id(ref_params),
        records=records,
    )


# --- one RLHF iteration ----------------------------------------------------------


def rlhf_step(
    params: PolicyParams,
    batch: TrajectoryBatch,
    opt: AdamState,
    config: RunConfig,
    pool: ThreadPoolExecutor | None = None,
    row_offset: int = 0,
) -> tuple[PolicyParams, list[dict]]:
    """Run the inner optimization epochs on one collected batch.

    Ratios always compare against the batch's rollout-time log-probs, so from
    the second epoch on they drift from 1 and the clip becomes active. Raises
    NonFiniteGradient before touching the parameters of the failing epoch.

    The step size is damped by the penalty weight (lr / (1 + kl_coeff)), the
    usual stability bound for a stiff penalty term. Without it a normalized
    optimizer takes lr-sized steps no matter how large kl_coeff is, so the
    policy would orbit the reference at an lr-sized distance instead of
    freezing onto it as the penalty grows.
    """
    step_size = config.learning_rate / (1.0 + config.kl_coeff)
    rows: list[dict] = []
    for epoch in range(config.inner_epochs):
        stats, grad = rlhf_batch_stats_and_grad(
            params, batch.trajectories, config.clip_epsilon, config.kl_coeff, pool
        )
        grad = _checked_grad(grad, config)
        theta = adam_ascend(opt, params.theta, grad, step_size)
        params = PolicyParams(params.model, theta)
        rows.append(
            {
                "step": row_offset + epoch,
                "objective": stats.objective,
                "surrogate": stats.surrogate,
                "mean_kl": stats.mean_kl,
                "clip_fraction": stats.clip_fraction,
                "mean_reward": batch.mean_reward,
                "grad_norm": float(np.linalg.norm(grad)),
            }
        )
    return params, rows


# --- regime scheduling ------------------------------------------------------------


def rubric_quota(rho: float, batch_size: int, step: int) -> int:
    """Deterministic integer quota of rubric tasks in this step's batch.

    Accumulator scheduling: over any window the rubric fraction tracks rho to
    within one task per batch.
    """
    return int(math.floor(rho * batch_size * (step + 1)) - math.floor(rho * batch_size * step))


def batch_regimes(rho: float, batch_size: int, step: int) -> list[str]:
    k = rubric_quota(rho, batch_size, step)
    return ["rubric"] * k + ["pairwise"] * (batch_size - k)


# --- evaluation --------------------------------------------------------------------


@dataclass
class EvalReport:
    """Greedy-decode evaluation on fixed task sets.

    Rewards are the judge's phi-shaped levels against the same references the
    trainer optimizes toward: stored replies for pairwise tasks, greedy
    decodes of a frozen reference policy for rubric tasks. rubric_reward is
    NaN when no reference policy was supplied.
    """

    n_rubric: int
    n_pairwise: int
    satisfaction: float  # mean rubric satisfaction over the rubric set
    win_rate: float  # fraction of pairwise tasks with a positive judgment
    mean_level: float  # mean pairwise judgment level
    rubric_reward: float  # mean phi reward on the rubric set
    pairwise_reward: float  # mean phi reward on the pairwise set

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def build_eval_tasks(config: RunConfig, regime: str) -> list[TaskInstance]:
    return [
        generate_task(
            derive_seed("eval-task", config.seed, regime, i),
            regime,
            config.difficulty,
            audio_prob=config.task_audio_prob,
            audio_frames=config.audio_frames,
            d_enc=config.model.d_enc,
        )
        for i in range(config.eval_tasks)
    ]


def evaluate_policy(
    params: PolicyParams,
    config: RunConfig,
    rubric_tasks: Sequence[TaskInstance],
    pairwise_tasks: Sequence[TaskInstance],
    judge: RewardModel | None = None,
    ref_params: PolicyParams | None = None,
) -> EvalReport:
    judge = judge if judge is not None else RuleBasedJudge(scale=config.ordinal_scale)
    sats = []
    rubric_rewards = []
    for task in rubric_tasks:
        gen = sample_generation(params, task.history, task.rubric, greedy=True)
        sats.append(satisfaction_score(effective_rubric(task), gen.reply))
        if ref_params is not None:
            reference = make_reference(ref_params, task)
            rubric_rewards.append(phi(judge.judge(task.history, gen.reply, reference, task.rubric)))
    wins = []
    levels = []
    pairwise_rewards = []
    for task in pairwise_tasks:
        gen = sample_generation(params, task.history, None, greedy=True)
        judgment = judge.judge(task.history, gen.reply, task.reference_reply, None)
        wins.append(1.0 if judgment.level > 0 else 0.0)
        levels.append(float(judgment.level))
        pairwise_rewards.append(phi(judgment))
    return EvalReport(
        n_rubric=len(rubric_tasks),
        n_pairwise=len(pairwise_tasks),
        satisfaction=float(np.mean(sats)) if sats else float("nan"),
        win_rate=float(np.mean(wins)) if wins else float("nan"),
        mean_level=float(np.mean(levels)) if levels else float("nan"),
        rubric_reward=float(np.mean(rubric_rewards)) if rubric_rewards else float("nan"),
        pairwise_reward=float(np.mean(pairwise_rewards)) if pairwise_rewards else float("nan"),
    )


def mean_kl_to_reference(
    params: PolicyParams,
    ref_params: PolicyParams,
    tasks: Sequence[TaskInstance],
) -> float:
    """Mean per-position exact KL(policy || reference) along the policy's own
    greedy trajectories. Greedy states make the number reproducible, which is
    what a drift diagnostic needs."""
    if not tasks:
        raise EmptyBatch("mean_kl_to_reference needs at least one task")
    totals = []
    for task in tasks:
        gen = sample_generation(params, task.history, task.rubric, greedy=True)
        tokens = np.array(gen.tokens, dtype=np.int64)
        new_logp = forward_positions(params, task.history, task.rubric, tokens).logp
        ref_logp = forward_positions(ref_params, task.history, task.rubric, tokens).logp
        totals.append(kl_per_token(new_logp, ref_logp))
    return float(np.mean(np.concatenate(totals)))


# --- reports and files ----------------------------------------------------------------


@dataclass
class TrainingReport:
    stage: str
    seed: int
    config_hash: str
    config: dict
    n_steps: int
    n_metric_rows: int
    wall_seconds: float
    final_snapshot: str
    initial_eval: dict | None = None
    final_eval: dict | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def write_metrics(rows: Sequence[dict], fields: Sequence[str], path: "str | Path") -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fields))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in fields})


def read_metrics(path: "str | Path") -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {k: (int(v) if k == "step" else float(v)) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]


def save_report(report: TrainingReport, path: "str | Path") -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def _finish_stage(
    out_dir: "str | Path | None",
    stage: str,
    params: PolicyParams,
    rows: Sequence[dict],
    fields: Sequence[str],
    report: TrainingReport,
    audit: Sequence[JudgeAuditRecord] = (),
) -> None:
    if out_dir is None:
        return
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.bin", params, stage)
    write_metrics(rows, fields, out / "metrics.csv")
    save_report(report, out / "report.json")
    if audit:
        append_audit_records(audit, out / "judge_audit.jsonl")


# --- training stages ----------------------------------------------------------------


def train_mid(config: RunConfig, out_dir: "str | Path | None" = None) -> tuple[PolicyParams, TrainingReport]:
    """Mid-training: mixed audio/text echo batches from a fresh init."""
    t0 = time.perf_counter()
    params = PolicyParams.init(config.model, config.seed, config.init_scale)
    opt = AdamState.zeros(params.theta.shape[0])
    rows: list[dict] = []
    for step in range(config.mid_steps):
        batch = [
            make_mid_example(
                derive_seed("mid-example", config.seed, step, i),
                with_audio=(i % 2 == 0),
                audio_frames=config.audio_frames,
                d_enc=config.model.d_enc,
            )
            for i in range(config.mid_batch_size)
        ]
        loss, grad = mid_train_loss_and_grad(params, batch, config.mixing_lambda)
        grad = _checked_grad(grad, config)
        params = PolicyParams(config.model, adam_ascend(opt, params.theta, -grad, config.learning_rate))
        rows.append({"step": step, "loss": loss, "grad_norm": float(np.linalg.norm(grad))})
    report = TrainingReport(
        stage="mid",
        seed=config.seed,
        config_hash=config_hash(config),
        config=config_to_dict(config),
        n_steps=config.mid_steps,
        n_metric_rows=len(rows),
        wall_seconds=time.perf_counter() - t0,
        final_snapshot=snapshot_id(params),
        extra={"first_loss": rows[0]["loss"] if rows else None, "last_loss": rows[-1]["loss"] if rows else None},
    )
    _finish_stage(out_dir, "mid", params, rows, SUPERVISED_METRIC_FIELDS, report)
    return params, report


def build_sft_corpus(config: RunConfig) -> list[SupervisedExample]:
    """Cold-start corpus of ordinary dialogues with gold trace/reply pairs.

    Every example is a plain pairwise-style task: the reply is conditioned on
    the conversation text alone, with no rubric fed to the policy. This stage
    exists to teach interaction form (read the request, restate the key
    tokens in the trace, answer minimally); conditioning on an explicit
    rubric is left for the preference-optimization stage, which mixes both
    regimes and has far more headroom to improve when the rubric pathway
    starts untrained.
    """
    examples = []
    for i in range(config.sft_corpus_size):
        task = generate_task(
            derive_seed("sft-task", config.seed, i),
            "pairwise",
            config.difficulty,
            audio_prob=config.task_audio_prob,
            audio_frames=config.audio_frames,
            d_enc=config.model.d_enc,
        )
        examples.append(make_sft_example(task, config.model.max_trace))
    return examples


def train_sft(
    config: RunConfig,
    start: PolicyParams | None = None,
    start_stage: str | None = None,
    out_dir: "str | Path | None" = None,
    force: bool = False,
) -> tuple[PolicyParams, TrainingReport]:
    """Supervised fine-tuning on gold trace/reply pairs for generated tasks."""
    if start is not None and start_stage is not None and start_stage != "mid" and not force:
        raise StageMismatch(f"sft expects a mid-stage checkpoint, got {start_stage!r} (use force to override)")
    t0 = time.perf_counter()
    params = start.copy() if start is not None else PolicyParams.init(config.model, config.seed, config.init_scale)
    corpus = build_sft_corpus(config)
    opt = AdamState.zeros(params.theta.shape[0])
    rows: list[dict] = []
    for step in range(config.sft_steps):
        rng = make_rng("sft-batch", config.seed, step)
        size = min(config.sft_batch_size, len(corpus))
        batch = [corpus[int(j)] for j in rng.choice(len(corpus), size=size, replace=False)]
        loss, grad = sft_loss_and_grad(params, batch)
        grad = _checked_grad(grad, config)
        params = PolicyParams(config.model, adam_ascend(opt, params.theta, -grad, config.learning_rate))
        rows.append({"step": step, "loss": loss, "grad_norm": float(np.linalg.norm(grad))})
    report = TrainingReport(
        stage="sft",
        seed=config.seed,
        config_hash=config_hash(config),
        config=config_to_dict(config),
        n_steps=config.sft_steps,
        n_metric_rows=len(rows),
        wall_seconds=time.perf_counter() - t0,
        final_snapshot=snapshot_id(params),
        extra={
            "corpus_size": len(corpus),
            "first_loss": rows[0]["loss"] if rows else None,
            "last_loss": rows[-1]["loss"] if rows else None,
        },
    )
    _finish_stage(out_dir, "sft", params, rows, SUPERVISED_METRIC_FIELDS, report)
    return params, report


def train_rlhf(
    config: RunConfig,
    start: PolicyParams | None = None,
    start_stage: str | None = None,
    out_dir: "str | Path | None" = None,
    force: bool = False,
    judge: RewardModel | None = None,
    rho_schedule: Callable[[int], float] | None = None,
) -> tuple[PolicyParams, TrainingReport]:
    """Unified RLHF: judged group rollouts, clipped surrogate, KL to the
    frozen stage-start reference.

    The reference policy is frozen at entry. Task regimes interleave by the
    deterministic quota on rho_rubric (or a caller-supplied schedule). Raises
    StageMismatch when starting from a non-SFT checkpoint without force.
    """
    if start is not None and start_stage is not None and start_stage != "sft" and not force:
        raise StageMismatch(f"rlhf expects an sft-stage checkpoint, got {start_stage!r} (use force to override)")
    t0 = time.perf_counter()
    params = start.copy() if start is not None else PolicyParams.init(config.model, config.seed, config.init_scale)
    ref_params = params.copy()
    judge = judge if judge is not None else RuleBasedJudge(scale=config.ordinal_scale)
    opt = AdamState.zeros(params.theta.shape[0])

    eval_rubric = build_eval_tasks(config, "rubric")
    eval_pairwise = build_eval_tasks(config, "pairwise")
    initial_eval = evaluate_policy(params, config, eval_rubric, eval_pairwise, judge, ref_params)

    pool = ThreadPoolExecutor(max_workers=config.n_workers) if config.n_workers > 1 else None
    rows: list[dict] = []
    audit: list[JudgeAuditRecord] = []
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    try:
        for step in range(config.rlhf_steps):
            rho = rho_schedule(step) if rho_schedule is not None else config.rho_rubric
            regimes = batch_regimes(rho, config.tasks_per_batch, step)
            tasks = [
                generate_task(
                    derive_seed("rlhf-task", config.seed, step, j),
                    regime,
                    config.difficulty,
                    audio_prob=config.task_audio_prob,
                    audio_frames=config.audio_frames,
                    d_enc=config.model.d_enc,
                )
                for j, regime in enumerate(regimes)
            ]
            batch = collect_rollouts(params, ref_params, tasks, judge, config, step, pool)
            audit.extend(batch.records)
            params, step_rows = rlhf_step(
                params, batch, opt, config, pool, row_offset=step * config.inner_epochs
            )
            rows.extend(step_rows)
            if out is not None and (step + 1) % CHECKPOINT_EVERY == 0:
                save_checkpoint(out / "checkpoint.bin", params, "rlhf")
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    final_eval = evaluate_policy(params, config, eval_rubric, eval_pairwise, judge, ref_params)
    report = TrainingReport(
        stage="rlhf",
        seed=config.seed,
        config_hash=config_hash(config),
        config=config_to_dict(config),
        n_steps=config.rlhf_steps,
        n_metric_rows=len(rows),
        wall_seconds=time.perf_counter() - t0,
        final_snapshot=snapshot_id(params),
        initial_eval=initial_eval.to_dict(),
        final_eval=final_eval.to_dict(),
        extra={"ref_snapshot": snapshot_id(ref_params)},
    )
    _finish_stage(out_dir, "rlhf", params, rows, RLHF_METRIC_FIELDS, report, audit)
    return params, report


def run_pipeline(config: RunConfig, out_dir: "str | Path | None" = None) -> tuple[PolicyParams, dict]:
    """Convenience: mid-train, SFT, RLHF in sequence with stage chaining."""
    base = Path(out_dir) if out_dir is not None else None
    mid_params, mid_report = train_mid(config, None if base is None else base / "mid")
    sft_params, sft_report = train_sft(config, mid_params, "mid", None if base is None else base / "sft")
    rlhf_params, rlhf_report = train_rlhf(config, sft_params, "sft", None if base is None else base / "rlhf")
    return rlhf_params, {
        "mid": mid_report.to_dict(),
        "sft": sft_report.to_dict(),
        "rlhf": rlhf_report.to_dict(),
    }


# --- forgetting probe ------------------------------------------------------------------


def forgetting_experiment(
    config: RunConfig,
    seeds: Sequence[int],
    rlhf_steps: int | None = None,
    out_dir: "str | Path | None" = None,
) -> dict:
    """Joint vs decoupled regime training from a common SFT start, per seed.

    Joint interleaves rubric and pairwise batches throughout; decoupled spends
    the first half of the same step budget purely on pairwise preference
    tasks, then switches to purely rubric tasks. Both arms are scored by the
    judge reward each regime's eval set earns against the shared frozen
    references, and the comparison metric is the minimum over the two
    regimes: a regime the decoupled run learned and then abandoned drags its
    minimum down, which is what forgetting looks like.
    """
    steps = config.rlhf_steps if rlhf_steps is None else rlhf_steps
    half = steps // 2
    per_seed = []
    for seed in seeds:
        cfg = dataclasses.replace(config, seed=seed, rlhf_steps=steps)
        mid_params, _ = train_mid(cfg)
        sft_params, _ = train_sft(cfg, mid_params, "mid")
        _, joint_report = train_rlhf(cfg, sft_params, "sft")
        _, dec_report = train_rlhf(
            cfg, sft_params, "sft", rho_schedule=lambda step: 0.0 if step < half else 1.0
        )

        def regime_rewards(report: TrainingReport) -> dict:
            final = report.final_eval
            return {
                "rubric_reward": final["rubric_reward"],
                "pairwise_reward": final["pairwise_reward"],
                "min_reward": min(final["rubric_reward"], final["pairwise_reward"]),
                "satisfaction": final["satisfaction"],
                "win_rate": final["win_rate"],
            }

        joint, dec = regime_rewards(joint_report), regime_rewards(dec_report)
        per_seed.append(
            {
                "seed": seed,
                "joint": joint,
                "decoupled": dec,
                "joint_wins": joint["min_reward"] >= dec["min_reward"],
            }
        )
    n_wins = sum(1 for row in per_seed if row["joint_wins"])
    report = {
        "config_hash": config_hash(config),
        "rlhf_steps_per_arm": steps,
        "seeds": list(seeds),
        "per_seed": per_seed,
        "n_seeds": len(seeds),
        "n_joint_wins": n_wins,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "forgetting_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


# --- checkpoint-driven entry points (used by the CLI) ------------------------------------


def load_start(path: "str | Path | None", config: RunConfig) -> tuple[PolicyParams | None, str | None]:
    if path is None:
        return None, None
    ckpt: Checkpoint = load_checkpoint(path, expected_model=config.model)
    return ckpt.params, ckpt.stage
