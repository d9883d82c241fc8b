"""Synthetic multi-turn dialogue micro-world.

Tasks are built over the default 64-token vocabulary, carved as: control
tokens 0-3, persona markers 4-11, instruction keywords 12-18, number literals
19-43 (values 0..24), and 20 content tokens 44-63. User turns spell out
constraints in a tiny keyword language (e.g. KW_MUST followed by a content
token), which makes every task's effective rubric mechanically decodable from
its history alone. That is what lets the pairwise judging regime condition on
latent constraints without being handed a rubric.

Difficulty widens the probe: level 1 is a single instruction turn, level 2
plants a persona two turns earlier (continuity), level 3 adds a mid-dialogue
correction that revises an earlier constraint (interaction awareness).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .adaptor import synth_features
from .core import (
    ASSISTANT,
    EOS,
    PERSONA_TOKENS,
    TRACE_END,
    TRACE_START,
    USER,
    Constraint,
    DialogueHistory,
    Forbid,
    Judgment,
    LengthBetween,
    MustInclude,
    Persona,
    Rubric,
    StartsWith,
    Turn,
    build_history,
    history_from_dict,
    history_to_dict,
    rubric_from_dict,
    rubric_to_dict,
)
from .errors import RegimeMismatch
from .rng import derive_seed, make_rng

# keyword tokens of the instruction language
KW_MUST = 12
KW_FORBID = 13
KW_START = 14
KW_LEN = 15
KW_SET_PERSONA = 16
KW_REVISE = 17
KW_ACK = 18

NUM_BASE = 19
NUM_MAX = 24  # literals cover 0..24, enough for any legal reply length
CONTENT_BASE = 44
VOCAB_SIZE = 64
CONTENT_TOKENS = tuple(range(CONTENT_BASE, VOCAB_SIZE))

N_AUDIO_CLASSES = 8

REGIMES = ("rubric", "pairwise")
BEHAVIOR_TAGS = ("continuity", "instruction_following", "naturalness", "interaction_awareness")

DIFFICULTY_TAGS = {
    1: ("instruction_following", "naturalness"),
    2: ("continuity", "instruction_following", "naturalness"),
    3: BEHAVIOR_TAGS,
}


def encode_number(value: int) -> int:
    if not 0 <= value <= NUM_MAX:
        raise ValueError(f"number literal out of range: {value}")
    return NUM_BASE + value


def decode_number(token: int) -> int:
    if not NUM_BASE <= token <= NUM_BASE + NUM_MAX:
        raise ValueError(f"token {token} is not a number literal")
    return token - NUM_BASE


@dataclass(frozen=True)
class TaskInstance:
    """One judgeable dialogue situation.

    rubric is present exactly for the rubric regime; pairwise tasks keep their
    constraints latent in the history and carry a stored reference reply
    instead. difficulty is generator metadata kept for reporting.
    """

    task_id: str
    history: DialogueHistory
    regime: str
    rubric: Rubric | None
    reference_reply: tuple[int, ...] | None
    behavior_tags: tuple[str, ...]
    difficulty: int

    def __post_init__(self) -> None:
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if (self.rubric is None) != (self.regime == "pairwise"):
            raise ValueError("rubric must be present exactly for the rubric regime")
        if (self.reference_reply is None) != (self.regime == "rubric"):
            raise ValueError("reference_reply must be present exactly for the pairwise regime")
        if not self.behavior_tags or any(t not in BEHAVIOR_TAGS for t in self.behavior_tags):
            raise ValueError(f"behavior_tags must be a non-empty subset of {BEHAVIOR_TAGS}")


# --- satisfaction ------------------------------------------------------------


def _content(reply: Sequence[int]) -> tuple[int, ...]:
    toks = tuple(int(t) for t in reply)
    while toks and toks[-1] == EOS:
        toks = toks[:-1]
    return toks


def _satisfied(c: Constraint, content: tuple[int, ...]) -> bool:
    if isinstance(c, MustInclude):
        return c.token in content
    if isinstance(c, Forbid):
        return c.token not in content
    if isinstance(c, StartsWith):
        return len(content) > 0 and content[0] == c.token
    if isinstance(c, Persona):
        return c.token in content
    if isinstance(c, LengthBetween):
        return c.lo <= len(content) <= c.hi
    raise TypeError(f"unknown constraint type {type(c)!r}")


def earned_points(rubric: Rubric, reply: Sequence[int]) -> int:
    """Weighted sum of satisfied constraints (integer points)."""
    content = _content(reply)
    return sum(c.weight for c in rubric.constraints if _satisfied(c, content))


def satisfaction_score(rubric: Rubric, reply: Sequence[int]) -> float:
    """Weight-normalized satisfied fraction in [0, 1]. Trailing EOS tokens are
    not content and are stripped before matching."""
    return earned_points(rubric, reply) / rubric.total_weight


# --- latent rubric decoding ---------------------------------------------------
#
# User turns are scanned in order; assistant turns are the model's own past
# output and never carry instructions. StartsWith, LengthBetween and Persona
# are exclusive kinds (a later phrase replaces the earlier one); MustInclude
# and Forbid accumulate, except that a phrase marked with KW_REVISE replaces
# the most recent accumulated phrase of its kind.


def _parse_phrases(content: Sequence[int]) -> list[tuple[bool, Constraint]]:
    phrases: list[tuple[bool, Constraint]] = []
    i = 0
    n = len(content)
    while i < n:
        tok = content[i]
        revised = False
        if tok == KW_REVISE:
            revised = True
            i += 1
            if i >= n:
                break
            tok = content[i]
        try:
            if tok == KW_MUST and i + 1 < n:
                phrases.append((revised, MustInclude(token=content[i + 1])))
                i += 2
            elif tok == KW_FORBID and i + 1 < n:
                phrases.append((revised, Forbid(token=content[i + 1])))
                i += 2
            elif tok == KW_START and i + 1 < n:
                phrases.append((revised, StartsWith(token=content[i + 1])))
                i += 2
            elif tok == KW_SET_PERSONA and i + 1 < n:
                phrases.append((revised, Persona(token=content[i + 1])))
                i += 2
            elif tok == KW_LEN and i + 2 < n:
                lo = decode_number(content[i + 1])
                hi = decode_number(content[i + 2])
                phrases.append((revised, LengthBetween(lo=lo, hi=hi)))
                i += 3
            else:
                i += 1  # filler token, not a phrase
        except ValueError:
            i += 1  # malformed phrase arguments; skip the keyword
    return phrases


_EXCLUSIVE = (StartsWith, LengthBetween, Persona)


def decode_latent_rubric(history: DialogueHistory) -> Rubric | None:
    """Reconstruct the effective rubric encoded in a history's user turns.

    Returns None when no constraint phrase decodes, which is what makes a
    history unusable for pairwise judging.
    """
    acc: list[Constraint] = []
    for turn in history.turns:
        if turn.role != USER:
            continue
        for revised, constraint in _parse_phrases(turn.content):
            kind = type(constraint)
            if kind in _EXCLUSIVE:
                acc = [c for c in acc if not isinstance(c, kind)]
                acc.append(constraint)
            elif revised:
                last = max((k for k, c in enumerate(acc) if isinstance(c, kind)), default=None)
                if last is None:
                    acc.append(constraint)
                else:
                    acc[last] = constraint
            else:
                acc.append(constraint)
    deduped: list[Constraint] = []
    for c in acc:
        if c not in deduped:
            deduped.append(c)
    if not deduped:
        return None
    return Rubric(constraints=tuple(deduped))


def effective_rubric(task: TaskInstance) -> Rubric:
    """The rubric a task is actually judged by, regardless of regime."""
    if task.rubric is not None:
        return task.rubric
    latent = decode_latent_rubric(task.history)
    if latent is None:
        raise RegimeMismatch(f"task {task.task_id} encodes no decodable constraints")
    return latent


# --- reference judge ----------------------------------------------------------


def reference_judge(
    history: DialogueHistory,
    reply: Sequence[int],
    reference: Sequence[int],
    rubric: Rubric | None = None,
    scale: int = 3,
) -> Judgment:
    """Deterministic ordinal comparison of reply vs reference.

    Rubric route (rubric given): the level is the clamped difference of
    weighted constraint points, ties stay 0. Pairwise route (rubric None): the
    constraints are decoded from the history; an exact points tie breaks
    toward the strictly shorter reply. Antisymmetric under swapping the two
    replies in both routes.
    """
    if rubric is None:
        latent = decode_latent_rubric(history)
        if latent is None:
            raise RegimeMismatch("pairwise judging needs constraints encoded in the history")
        delta = earned_points(latent, reply) - earned_points(latent, reference)
        if delta == 0:
            len_y, len_ref = len(_content(reply)), len(_content(reference))
            delta = 1 if len_y < len_ref else (-1 if len_y > len_ref else 0)
    else:
        delta = earned_points(rubric, reply) - earned_points(rubric, reference)
    level = max(-scale, min(scale, delta))
    return Judgment(level=level, scale=scale)


# --- task generation ----------------------------------------------------------


def _filler(rng: np.random.Generator, avoid: set[int], max_n: int = 2) -> list[int]:
    pool = [t for t in CONTENT_TOKENS if t not in avoid]
    n = int(rng.integers(0, max_n + 1))
    return [int(t) for t in rng.choice(pool, size=n, replace=False)] if n else []


def _phrase(c: Constraint) -> list[int]:
    if isinstance(c, MustInclude):
        return [KW_MUST, c.token]
    if isinstance(c, Forbid):
        return [KW_FORBID, c.token]
    if isinstance(c, StartsWith):
        return [KW_START, c.token]
    if isinstance(c, Persona):
        return [KW_SET_PERSONA, c.token]
    if isinstance(c, LengthBetween):
        return [KW_LEN, encode_number(c.lo), encode_number(c.hi)]
    raise TypeError(f"unknown constraint type {type(c)!r}")


def generate_task(
    seed: int,
    regime: str,
    difficulty: int,
    *,
    audio_prob: float = 0.25,
    audio_frames: int = 6,
    d_enc: int = 16,
) -> TaskInstance:
    """Deterministically build one task. Difficulty 1/2/3 yields an effective
    rubric of 2/4/6 constraints and a history of 1/3/5 turns."""
    if regime not in REGIMES:
        raise ValueError(f"regime must be one of {REGIMES}, got {regime!r}")
    if difficulty not in (1, 2, 3):
        raise ValueError(f"difficulty must be 1, 2 or 3, got {difficulty}")
    rng = make_rng("task", seed, regime, difficulty)

    toks = [int(t) for t in rng.permutation(CONTENT_TOKENS)]
    lo = int(rng.integers(1, 4))
    # a fully-satisfying reply needs up to 1/3/4 distinct tokens by difficulty;
    # keep hi strictly above that so a minimal perfect reply beats a padded one
    needed = {1: 1, 2: 3, 3: 4}[difficulty]
    hi = max(lo + int(rng.integers(2, 6)), needed + 1)
    length_c = LengthBetween(lo=lo, hi=hi)
    persona = int(rng.choice(PERSONA_TOKENS))

    turns: list[Turn] = []
    constraints: list[Constraint] = []  # in decode order

    def user_turn(phrase_constraints: Sequence[Constraint], lead: Sequence[int] = ()) -> Turn:
        text: list[int] = list(lead)
        for c in phrase_constraints:
            text.extend(_phrase(c))
        text.append(EOS)
        audio = None
        if rng.random() < audio_prob:
            audio = synth_features(
                seed=derive_seed("task-audio", seed, len(turns)),
                n_frames=audio_frames,
                class_id=int(rng.integers(0, N_AUDIO_CLASSES)),
                d_enc=d_enc,
            )
        return Turn(role=USER, text=tuple(text), audio=audio)

    def ack_turn() -> Turn:
        return Turn(role=ASSISTANT, text=(KW_ACK, EOS))

    if difficulty == 1:
        kind = rng.choice(["must", "must", "must", "start", "forbid"])
        token_c: Constraint
        if kind == "must":
            token_c = MustInclude(token=toks[0])
        elif kind == "start":
            token_c = StartsWith(token=toks[0])
        else:
            token_c = Forbid(token=toks[0])
        constraints = [length_c, token_c]
        turns = [user_turn(constraints, lead=_filler(rng, avoid={toks[0]}))]
    elif difficulty == 2:
        second: Constraint = Forbid(token=toks[1]) if rng.random() < 0.5 else StartsWith(token=toks[1])
        persona_c = Persona(token=persona)
        turns = [
            user_turn([persona_c], lead=_filler(rng, avoid=set())),
            ack_turn(),
            user_turn([length_c, MustInclude(token=toks[0]), second]),
        ]
        constraints = [persona_c, length_c, MustInclude(token=toks[0]), second]
    else:
        # original instruction, a deliberately sloppy draft, then a correction
        # that replaces the original must-include and adds another
        persona_c = Persona(token=persona)
        original = [length_c, MustInclude(token=toks[0]), Forbid(token=toks[1]), StartsWith(token=toks[2])]
        draft = [int(t) for t in rng.choice(CONTENT_TOKENS, size=hi + 1, replace=True)]
        revise_text = [KW_REVISE] + _phrase(MustInclude(token=toks[3])) + _phrase(MustInclude(token=toks[4])) + [EOS]
        turns = [
            user_turn([persona_c], lead=_filler(rng, avoid=set())),
            ack_turn(),
            user_turn(original),
            Turn(role=ASSISTANT, text=tuple(draft) + (EOS,)),
            Turn(role=USER, text=tuple(revise_text)),
        ]
        constraints = [
            persona_c,
            length_c,
            MustInclude(token=toks[3]),
            Forbid(token=toks[1]),
            StartsWith(token=toks[2]),
            MustInclude(token=toks[4]),
        ]

    history = build_history(turns)
    rubric = Rubric(constraints=tuple(constraints))

    decoded = decode_latent_rubric(history)
    assert decoded is not None and set(decoded.constraints) == set(rubric.constraints), (
        "generator/decoder disagree on the effective rubric"
    )

    reference_reply = None
    if regime == "pairwise":
        reference_reply = tuple(_reference_reply(rubric, rng)) + (EOS,)

    return TaskInstance(
        task_id=f"{regime}-d{difficulty}-{seed & 0xFFFFFFFF:08x}",
        history=history,
        regime=regime,
        rubric=rubric if regime == "rubric" else None,
        reference_reply=reference_reply,
        behavior_tags=DIFFICULTY_TAGS[difficulty],
        difficulty=difficulty,
    )


def _constraint_tokens(rubric: Rubric) -> tuple[list[int], set[int], int | None, int | None]:
    musts: list[int] = []
    forbidden: set[int] = set()
    start: int | None = None
    persona: int | None = None
    for c in rubric.constraints:
        if isinstance(c, MustInclude) and c.token not in musts:
            musts.append(c.token)
        elif isinstance(c, Forbid):
            forbidden.add(c.token)
        elif isinstance(c, StartsWith):
            start = c.token
        elif isinstance(c, Persona):
            persona = c.token
    return musts, forbidden, start, persona


def _length_bounds(rubric: Rubric) -> tuple[int, int]:
    for c in rubric.constraints:
        if isinstance(c, LengthBetween):
            return c.lo, c.hi
    return 1, NUM_MAX


def gold_reply_content(rubric: Rubric) -> tuple[int, ...]:
    """A minimal fully-satisfying reply: required tokens first, padded up to
    the lower length bound with safe filler."""
    musts, forbidden, start, persona = _constraint_tokens(rubric)
    lo, hi = _length_bounds(rubric)
    content: list[int] = []
    if start is not None:
        content.append(start)
    content.extend(t for t in musts if t not in content)
    if persona is not None and persona not in content:
        content.append(persona)
    unsafe = forbidden | set(content)
    pad_pool = [t for t in CONTENT_TOKENS if t not in unsafe]
    while len(content) < lo and pad_pool:
        content.append(pad_pool.pop())
    return tuple(content)


def _reference_reply(rubric: Rubric, rng: np.random.Generator) -> list[int]:
    """A valid but maximally padded reply: satisfies every constraint yet sits
    at the upper length bound, so an equally-satisfying shorter reply wins the
    pairwise tie-break."""
    musts, forbidden, start, persona = _constraint_tokens(rubric)
    _, hi = _length_bounds(rubric)
    content: list[int] = []
    if start is not None:
        content.append(start)
    content.extend(t for t in musts if t not in content)
    if persona is not None and persona not in content:
        content.append(persona)
    pad_pool = [t for t in CONTENT_TOKENS if t not in forbidden and t not in content]
    while len(content) < hi and pad_pool:
        content.append(int(rng.choice(pad_pool)))
        pad_pool = [t for t in pad_pool if t != content[-1]]
    return content


def gold_trace(rubric: Rubric, max_trace: int) -> tuple[int, ...]:
    """Teaching trace: restate the constraint tokens between the delimiters."""
    musts, _, start, persona = _constraint_tokens(rubric)
    body: list[int] = []
    if start is not None:
        body.append(start)
    body.extend(t for t in musts if t not in body)
    if persona is not None and persona not in body:
        body.append(persona)
    body = body[: max_trace - 2]
    return (TRACE_START, *body, TRACE_END)


# --- supervised corpora ---------------------------------------------------------


@dataclass(frozen=True)
class SupervisedExample:
    """A history (plus optional rubric context) with a gold trace and reply."""

    history: DialogueHistory
    rubric: Rubric | None
    trace: tuple[int, ...]
    reply: tuple[int, ...]

    @property
    def has_audio(self) -> bool:
        return any(turn.audio is not None for turn in self.history.turns)


def make_mid_example(seed: int, with_audio: bool, *, audio_frames: int = 6, d_enc: int = 16) -> SupervisedExample:
    """Mid-training sample: echo an attribute of the input.

    Audio stream: the reply names the content token tied to the audio class.
    Text stream: the reply echoes the first content token of the request.
    Both streams share the trace-then-reply shape so the delimiter protocol is
    learned everywhere.
    """
    rng = make_rng("mid-example", seed, with_audio)
    a, b = (int(t) for t in rng.choice(CONTENT_TOKENS, size=2, replace=False))
    if with_audio:
        class_id = int(rng.integers(0, N_AUDIO_CLASSES))
        target = CONTENT_BASE + class_id
        audio = synth_features(seed=derive_seed("mid-audio", seed), n_frames=audio_frames, class_id=class_id, d_enc=d_enc)
        turn = Turn(role=USER, text=(a, b, EOS), audio=audio)
    else:
        target = a
        turn = Turn(role=USER, text=(a, b, EOS))
    return SupervisedExample(
        history=build_history([turn]),
        rubric=None,
        trace=(TRACE_START, target, TRACE_END),
        reply=(target, EOS),
    )


def make_sft_example(task: TaskInstance, max_trace: int) -> SupervisedExample:
    rubric = effective_rubric(task)
    return SupervisedExample(
        history=task.history,
        rubric=task.rubric,
        trace=gold_trace(rubric, max_trace),
        reply=gold_reply_content(rubric) + (EOS,),
    )


# --- task corpora on disk --------------------------------------------------------


def task_to_dict(task: TaskInstance) -> dict:
    return {
        "task_id": task.task_id,
        "regime": task.regime,
        "difficulty": task.difficulty,
        "behavior_tags": list(task.behavior_tags),
        "history": history_to_dict(task.history),
        "rubric": rubric_to_dict(task.rubric) if task.rubric is not None else None,
        "reference_reply": list(task.reference_reply) if task.reference_reply is not None else None,
    }


def task_from_dict(d: dict) -> TaskInstance:
    return TaskInstance(
        task_id=d["task_id"],
        history=history_from_dict(d["history"]),
        regime=d["regime"],
        rubric=rubric_from_dict(d["rubric"]) if d.get("rubric") is not None else None,
        reference_reply=tuple(d["reference_reply"]) if d.get("reference_reply") is not None else None,
        behavior_tags=tuple(d["behavior_tags"]),
        difficulty=d["difficulty"],
    )


def export_tasks(tasks: Sequence[TaskInstance], path: "str | Path") -> None:
    with open(path, "w") as fh:
        for task in tasks:
            fh.write(json.dumps(task_to_dict(task), sort_keys=True) + "\n")


def import_tasks(path: "str | Path") -> list[TaskInstance]:
    tasks = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                tasks.append(task_from_dict(json.loads(line)))
    return tasks
