"""rlhf_forge: a desk-scale, fully verifiable RLHF alignment pipeline.

A tiny differentiable dialogue policy is taken through mid-training,
supervised fine-tuning, and unified rubric/pairwise RLHF on a synthetic
multi-turn micro-world, with every gradient hand-derived and every training
run bit-reproducible.
"""

from .adaptor import AdaptorParams, FeatureSequence, downsample, synth_features
from .core import (
    BOS,
    EOS,
    TRACE_END,
    TRACE_START,
    Constraint,
    DialogueHistory,
    Forbid,
    Judgment,
    LengthBetween,
    ModelConfig,
    MustInclude,
    Persona,
    Rubric,
    RunConfig,
    StartsWith,
    Turn,
    build_history,
    config_hash,
)
from .objectives import (
    Trajectory,
    importance_ratios,
    kl_per_token,
    mid_train_loss,
    rlhf_objective,
    sft_loss,
)
from .policy import (
    Checkpoint,
    Generation,
    PolicyParams,
    encode_context,
    grad_sequence_logprob,
    load_checkpoint,
    next_token_distribution,
    sample_generation,
    save_checkpoint,
    sequence_logprob,
)
from .rewards import RewardModel, RuleBasedJudge, estimate_advantages, make_reference, phi
from .toyenv import (
    TaskInstance,
    decode_latent_rubric,
    generate_task,
    reference_judge,
    satisfaction_score,
)
from .trainer import (
    EvalReport,
    TrainingReport,
    collect_rollouts,
    evaluate_policy,
    forgetting_experiment,
    mean_kl_to_reference,
    rlhf_step,
    run_pipeline,
    train_mid,
    train_rlhf,
    train_sft,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptorParams",
    "FeatureSequence",
    "downsample",
    "synth_features",
    "BOS",
    "EOS",
    "TRACE_END",
    "TRACE_START",
    "Constraint",
    "DialogueHistory",
    "Forbid",
    "Judgment",
    "LengthBetween",
    "ModelConfig",
    "MustInclude",
    "Persona",
    "Rubric",
    "RunConfig",
    "StartsWith",
    "Turn",
    "build_history",
    "config_hash",
    "Trajectory",
    "importance_ratios",
    "kl_per_token",
    "mid_train_loss",
    "rlhf_objective",
    "sft_loss",
    "Checkpoint",
    "Generation",
    "PolicyParams",
    "encode_context",
    "grad_sequence_logprob",
    "load_checkpoint",
    "next_token_distribution",
    "sample_generation",
    "save_checkpoint",
    "sequence_logprob",
    "RewardModel",
    "RuleBasedJudge",
    "estimate_advantages",
    "make_reference",
    "phi",
    "TaskInstance",
    "decode_latent_rubric",
    "generate_task",
    "reference_judge",
    "satisfaction_score",
    "TrainingReport",
    "collect_rollouts",
    "EvalReport",
    "evaluate_policy",
    "forgetting_experiment",
    "mean_kl_to_reference",
    "rlhf_step",
    "run_pipeline",
    "train_mid",
    "train_rlhf",
    "train_sft",
]
