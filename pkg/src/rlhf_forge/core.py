"""Core data types: tokens, dialogue histories, rubrics, judgments, configs.

Everything downstream (policy, rewards, trainer) speaks these types. All of
them serialize to plain JSON and back losslessly, and RunConfig hashes to a
stable sha256 so every training report can pin the exact configuration that
produced it.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

from .adaptor import FeatureSequence
from .errors import AlternationViolation, EmptyHistory, ScaleViolation

Token = int

# Reserved token ids. The first 12 slots of every vocabulary are fixed:
# control tokens 0-3 and eight persona markers 4-11.
BOS: Token = 0
EOS: Token = 1
TRACE_START: Token = 2
TRACE_END: Token = 3
PERSONA_TOKENS: tuple[Token, ...] = tuple(range(4, 12))
N_RESERVED = 12

USER = "user"
ASSISTANT = "assistant"
_ROLES = (USER, ASSISTANT)


def _check_tokens(text: Sequence[int], what: str) -> tuple[Token, ...]:
    toks = tuple(int(t) for t in text)
    if any(t < 0 for t in toks):
        raise ValueError(f"{what} contains a negative token id")
    return toks


@dataclass(frozen=True)
class Turn:
    """One dialogue turn: a role, an EOS-terminated token sequence, and
    (for user turns only) an optional raw feature sequence."""

    role: str
    text: tuple[Token, ...]
    audio: FeatureSequence | None = None

    def __post_init__(self) -> None:
        if self.role not in _ROLES:
            raise ValueError(f"role must be one of {_ROLES}, got {self.role!r}")
        toks = _check_tokens(self.text, "turn text")
        if len(toks) == 0:
            raise ValueError("turn text must be non-empty")
        if toks[-1] != EOS:
            raise ValueError("turn text must end with EOS")
        if EOS in toks[:-1]:
            raise ValueError("EOS may only appear as the final token of a turn")
        if self.audio is not None and self.role != USER:
            raise ValueError("only user turns may carry audio")
        object.__setattr__(self, "text", toks)

    @property
    def content(self) -> tuple[Token, ...]:
        return self.text[:-1]


@dataclass(frozen=True)
class DialogueHistory:
    """A non-empty sequence of turns, strictly alternating and user-first."""

    turns: tuple[Turn, ...]

    def __post_init__(self) -> None:
        turns = tuple(self.turns)
        if len(turns) == 0:
            raise EmptyHistory("a dialogue history needs at least one turn")
        for i, turn in enumerate(turns):
            expected = USER if i % 2 == 0 else ASSISTANT
            if turn.role != expected:
                raise AlternationViolation(
                    f"turn {i} must have role {expected!r}, got {turn.role!r}"
                )
        object.__setattr__(self, "turns", turns)

    @property
    def n_turns(self) -> int:
        return len(self.turns)


def build_history(turns: Sequence[Turn]) -> DialogueHistory:
    """Validated constructor for DialogueHistory."""
    return DialogueHistory(turns=tuple(turns))


# --- rubric constraints ----------------------------------------------------
#
# The constraint language is closed: exactly these five kinds. token-bearing
# kinds hold a single token id; LengthBetween bounds the reply content length
# (excluding the terminal EOS). Weights are positive integers.


def _check_weight(weight: int) -> None:
    if not isinstance(weight, int) or isinstance(weight, bool) or weight < 1:
        raise ValueError(f"constraint weight must be a positive integer, got {weight!r}")


@dataclass(frozen=True)
class MustInclude:
    token: Token
    weight: int = 1

    def __post_init__(self) -> None:
        _check_weight(self.weight)
        if self.token < 0:
            raise ValueError("token id must be non-negative")


@dataclass(frozen=True)
class Forbid:
    token: Token
    weight: int = 1

    def __post_init__(self) -> None:
        _check_weight(self.weight)
        if self.token < 0:
            raise ValueError("token id must be non-negative")


@dataclass(frozen=True)
class StartsWith:
    token: Token
    weight: int = 1

    def __post_init__(self) -> None:
        _check_weight(self.weight)
        if self.token < 0:
            raise ValueError("token id must be non-negative")


@dataclass(frozen=True)
class Persona:
    token: Token
    weight: int = 1

    def __post_init__(self) -> None:
        _check_weight(self.weight)
        if self.token not in PERSONA_TOKENS:
            raise ValueError(f"persona token must be one of {PERSONA_TOKENS}, got {self.token}")


@dataclass(frozen=True)
class LengthBetween:
    lo: int
    hi: int
    weight: int = 1

    def __post_init__(self) -> None:
        _check_weight(self.weight)
        if not (0 <= self.lo <= self.hi):
            raise ValueError(f"need 0 <= lo <= hi, got lo={self.lo}, hi={self.hi}")


Constraint = Union[MustInclude, Forbid, StartsWith, Persona, LengthBetween]

_CONSTRAINT_KINDS = {
    "must_include": MustInclude,
    "forbid": Forbid,
    "starts_with": StartsWith,
    "persona": Persona,
    "length_between": LengthBetween,
}
_KIND_NAMES = {cls: name for name, cls in _CONSTRAINT_KINDS.items()}


@dataclass(frozen=True)
class Rubric:
    """A non-empty bag of weighted constraints on the reply."""

    constraints: tuple[Constraint, ...]

    def __post_init__(self) -> None:
        cs = tuple(self.constraints)
        if len(cs) == 0:
            raise ValueError("a rubric must contain at least one constraint")
        must = {c.token for c in cs if isinstance(c, MustInclude)}
        forbid = {c.token for c in cs if isinstance(c, Forbid)}
        overlap = must & forbid
        if overlap:
            raise ValueError(f"tokens both required and forbidden: {sorted(overlap)}")
        object.__setattr__(self, "constraints", cs)

    @property
    def total_weight(self) -> int:
        return sum(c.weight for c in self.constraints)


@dataclass(frozen=True)
class Judgment:
    """An ordinal preference level in [-scale, +scale]; 0 is a tie."""

    level: int
    scale: int

    def __post_init__(self) -> None:
        if self.scale < 1:
            raise ScaleViolation(f"scale must be >= 1, got {self.scale}")
        if abs(self.level) > self.scale:
            raise ScaleViolation(f"|level| must be <= {self.scale}, got {self.level}")


# --- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class ModelConfig:
    """Architecture dimensions of the tiny policy."""

    vocab_size: int = 64
    d_enc: int = 16
    d_model: int = 32
    d_hidden: int = 64
    max_trace: int = 16
    max_reply: int = 24

    def __post_init__(self) -> None:
        if self.vocab_size < N_RESERVED + 1:
            raise ValueError(f"vocab_size must be > {N_RESERVED}, got {self.vocab_size}")
        for name in ("d_enc", "d_model", "d_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.max_trace < 2:
            raise ValueError("max_trace must be >= 2 (delimiters alone fill two slots)")
        if self.max_reply < 1:
            raise ValueError("max_reply must be >= 1 (EOS fills one slot)")


@dataclass(frozen=True)
class RunConfig:
    """Everything a training run depends on besides the code itself."""

    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    # RLHF objective
    clip_epsilon: float = 0.2
    kl_coeff: float = 0.05
    group_size: int = 16
    ordinal_scale: int = 3
    temperature: float = 1.0
    advantage_mode: str = "group_norm"  # or "centered"
    # task mixture
    rho_rubric: float = 0.5
    difficulty: int = 1
    tasks_per_batch: int = 8
    audio_frames: int = 6
    task_audio_prob: float = 0.25
    # mid-training
    mixing_lambda: float = 0.5
    mid_steps: int = 120
    mid_batch_size: int = 16
    # supervised fine-tuning
    sft_steps: int = 250
    sft_batch_size: int = 16
    sft_corpus_size: int = 256
    # optimization
    learning_rate: float = 0.005
    init_scale: float = 0.1
    rlhf_steps: int = 200
    inner_epochs: int = 2
    train_adaptor: bool = True
    # execution
    n_workers: int = 1
    eval_tasks: int = 48

    def __post_init__(self) -> None:
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError(f"clip_epsilon must be in (0, 1), got {self.clip_epsilon}")
        if self.kl_coeff < 0.0:
            raise ValueError(f"kl_coeff must be >= 0, got {self.kl_coeff}")
        if self.group_size < 2:
            raise ValueError(f"group_size must be >= 2, got {self.group_size}")
        if self.ordinal_scale < 1:
            raise ValueError(f"ordinal_scale must be >= 1, got {self.ordinal_scale}")
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.advantage_mode not in ("group_norm", "centered"):
            raise ValueError(f"unknown advantage_mode {self.advantage_mode!r}")
        if not 0.0 <= self.rho_rubric <= 1.0:
            raise ValueError(f"rho_rubric must be in [0, 1], got {self.rho_rubric}")
        if not 0.0 <= self.task_audio_prob <= 1.0:
            raise ValueError(f"task_audio_prob must be in [0, 1], got {self.task_audio_prob}")
        if self.difficulty not in (1, 2, 3):
            raise ValueError(f"difficulty must be 1, 2 or 3, got {self.difficulty}")
        if not 0.0 <= self.mixing_lambda <= 1.0:
            raise ValueError(f"mixing_lambda must be in [0, 1], got {self.mixing_lambda}")
        if self.learning_rate < 0.0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.init_scale < 0.0:
            raise ValueError(f"init_scale must be >= 0, got {self.init_scale}")
        if self.inner_epochs < 1:
            raise ValueError(f"inner_epochs must be >= 1, got {self.inner_epochs}")
        if self.n_workers < 1:
            raise ValueError(f"n_workers must be >= 1, got {self.n_workers}")
        for name in (
            "tasks_per_batch",
            "audio_frames",
            "mid_batch_size",
            "sft_batch_size",
            "sft_corpus_size",
            "eval_tasks",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("mid_steps", "sft_steps", "rlhf_steps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


# --- JSON serialization -----------------------------------------------------


def constraint_to_dict(c: Constraint) -> dict:
    d = {"kind": _KIND_NAMES[type(c)]}
    d.update(dataclasses.asdict(c))
    return d


def constraint_from_dict(d: dict) -> Constraint:
    kind = d.get("kind")
    if kind not in _CONSTRAINT_KINDS:
        raise ValueError(f"unknown constraint kind {kind!r}")
    fields = {k: v for k, v in d.items() if k != "kind"}
    return _CONSTRAINT_KINDS[kind](**fields)


def rubric_to_dict(rubric: Rubric) -> dict:
    return {"constraints": [constraint_to_dict(c) for c in rubric.constraints]}


def rubric_from_dict(d: dict) -> Rubric:
    return Rubric(constraints=tuple(constraint_from_dict(c) for c in d["constraints"]))


def turn_to_dict(turn: Turn) -> dict:
    d: dict = {"role": turn.role, "text": list(turn.text)}
    if turn.audio is not None:
        d["audio"] = {"rate": turn.audio.rate, "frames": turn.audio.frames.tolist()}
    else:
        d["audio"] = None
    return d


def turn_from_dict(d: dict) -> Turn:
    audio = d.get("audio")
    feats = None
    if audio is not None:
        import numpy as np

        feats = FeatureSequence(frames=np.array(audio["frames"], dtype=float), rate=audio["rate"])
    return Turn(role=d["role"], text=tuple(d["text"]), audio=feats)


def history_to_dict(history: DialogueHistory) -> dict:
    return {"turns": [turn_to_dict(t) for t in history.turns]}


def history_from_dict(d: dict) -> DialogueHistory:
    return build_history([turn_from_dict(t) for t in d["turns"]])


def config_to_dict(config: RunConfig) -> dict:
    d = dataclasses.asdict(config)
    d["model"] = dataclasses.asdict(config.model)
    return d


def config_from_dict(d: dict) -> RunConfig:
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(d)
    if "model" in kwargs and kwargs["model"] is not None:
        model_known = {f.name for f in dataclasses.fields(ModelConfig)}
        model_unknown = set(kwargs["model"]) - model_known
        if model_unknown:
            raise ValueError(f"unknown model config keys: {sorted(model_unknown)}")
        kwargs["model"] = ModelConfig(**kwargs["model"])
    return RunConfig(**kwargs)


def canonical_json(obj: object) -> str:
    """Stable rendering: sorted keys, no whitespace. Used for hashing."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(canonical_json(config_to_dict(config)).encode("utf-8")).hexdigest()


def save_config(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n")


def load_config(path: str | Path) -> RunConfig:
    return config_from_dict(json.loads(Path(path).read_text()))
