"""Reward modelling: judge interface, reward shaping, references, advantages.

The reward signal is generated, not learned: a deterministic rule-based judge
compares a policy reply against a reference under the task's constraints and
emits an ordinal level, which phi maps to a scalar reward. Everything here is
regime-aware: rubric tasks judge against a fresh greedy decode of the frozen
reference policy, pairwise tasks against the stored reference reply.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .core import DialogueHistory, Judgment, Rubric
from .errors import DegenerateGroup, ScaleViolation
from .policy import PolicyParams, sample_generation
from .toyenv import TaskInstance, reference_judge


class RewardModel(Protocol):
    """Anything that can rank a reply against a reference.

    rubric is the explicit constraint set for the rubric regime and None for
    pairwise judging, where constraints are latent in the history.
    """

    def judge(
        self,
        history: DialogueHistory,
        reply: Sequence[int],
        reference: Sequence[int],
        rubric: Rubric | None,
    ) -> Judgment: ...


@dataclass(frozen=True)
class RuleBasedJudge:
    """The deterministic reference implementation of RewardModel."""

    scale: int = 3

    def __post_init__(self) -> None:
        if self.scale < 1:
            raise ScaleViolation(f"scale must be >= 1, got {self.scale}")

    def judge(
        self,
        history: DialogueHistory,
        reply: Sequence[int],
        reference: Sequence[int],
        rubric: Rubric | None,
    ) -> Judgment:
        return reference_judge(history, reply, reference, rubric, scale=self.scale)


def phi(judgment: Judgment) -> float:
    """Shape an ordinal level into a scalar reward in [-1, 1].

    Affine in the level, so it is monotone and maps a tie to exactly 0.
    """
    return judgment.level / judgment.scale


def make_reference(ref_params: PolicyParams, task: TaskInstance) -> tuple[int, ...]:
    """The reply the policy is judged against.

    Pairwise tasks carry a stored reference reply; rubric tasks get a greedy
    decode from the frozen reference policy under the same conditioning the
    candidate saw. Returned with its terminal EOS.
    """
    if task.reference_reply is not None:
        return task.reference_reply
    gen = sample_generation(ref_params, task.history, task.rubric, greedy=True)
    return gen.reply


def estimate_advantages(rewards: np.ndarray, mode: str = "group_norm") -> np.ndarray:
    """Group-relative advantages over one task's G rollouts.

    group_norm: (r - mean) / (std + 1e-8) with the population std, so a group
    of (1, -1) maps to (+1, -1). centered: r - mean, no rescaling. A group
    needs at least two members; a fully degenerate (constant-reward) group is
    legal and yields all-zero advantages.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.ndim != 1 or rewards.shape[0] < 2:
        raise DegenerateGroup(f"need a 1-d group of >= 2 rewards, got shape {rewards.shape}")
    centered = rewards - rewards.mean()
    if mode == "centered":
        return centered
    if mode == "group_norm":
        return centered / (rewards.std() + 1e-8)
    raise ValueError(f"unknown advantage mode {mode!r}")


@dataclass(frozen=True)
class JudgeAuditRecord:
    """One judged comparison, as logged during rollout collection."""

    task_id: str
    regime: str
    level: int
    scale: int
    reward: float


def append_audit_records(records: Sequence[JudgeAuditRecord], path: "str | Path") -> None:
    """Append audit records to a line-delimited JSON log."""
    with open(path, "a") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "task_id": rec.task_id,
                        "regime": rec.regime,
                        "level": rec.level,
                        "scale": rec.scale,
                        "reward": rec.reward,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_audit_records(path: "str | Path") -> list[JudgeAuditRecord]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                d = json.loads(line)
                records.append(
                    JudgeAuditRecord(
                        task_id=d["task_id"],
                        regime=d["regime"],
                        level=d["level"],
                        scale=d["scale"],
                        reward=d["reward"],
                    )
                )
    return records
