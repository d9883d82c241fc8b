"""Dialogue micro-world: task generation, constraint scoring against a
brute-force enumeration oracle, latent rubric decoding, and the judge.
"""

import itertools

import numpy as np
import pytest

from rlhf_forge import (
    EOS,
    Forbid,
    LengthBetween,
    MustInclude,
    Persona,
    Rubric,
    StartsWith,
    Turn,
    build_history,
    decode_latent_rubric,
    generate_task,
    reference_judge,
    satisfaction_score,
)
from rlhf_forge.errors import RegimeMismatch, ScaleViolation
from rlhf_forge.rng import make_rng
from rlhf_forge.toyenv import (
    CONTENT_TOKENS,
    PERSONA_TOKENS,
    DIFFICULTY_TAGS,
    KW_REVISE,
    KW_SET_PERSONA,
    NUM_BASE,
    NUM_MAX,
    USER,
    decode_number,
    earned_points,
    effective_rubric,
    encode_number,
    export_tasks,
    gold_reply_content,
    gold_trace,
    import_tasks,
    make_mid_example,
    make_sft_example,
    task_from_dict,
    task_to_dict,
)

MODEL_MAX_TRACE = 16


# ---------------------------------------------------------------- number codec


def test_number_codec_round_trips_the_full_range():
    for v in range(NUM_MAX + 1):
        token = encode_number(v)
        assert NUM_BASE <= token <= NUM_BASE + NUM_MAX
        assert decode_number(token) == v


def test_number_codec_rejects_out_of_range():
    with pytest.raises(ValueError):
        encode_number(NUM_MAX + 1)
    with pytest.raises(ValueError):
        encode_number(-1)
    with pytest.raises(ValueError):
        decode_number(NUM_BASE - 1)
    with pytest.raises(ValueError):
        decode_number(NUM_BASE + NUM_MAX + 1)


# ---------------------------------------------------------------- scoring oracle


def oracle_points(rubric: Rubric, reply) -> int:
    """Independent re-derivation of the scoring contract: strip trailing EOS,
    then award each constraint's weight by its documented rule."""
    content = tuple(reply)
    while content and content[-1] == EOS:
        content = content[:-1]
    points = 0
    for c in rubric.constraints:
        if isinstance(c, MustInclude):
            ok = c.token in content
        elif isinstance(c, Forbid):
            ok = c.token not in content
        elif isinstance(c, StartsWith):
            ok = len(content) > 0 and content[0] == c.token
        elif isinstance(c, Persona):
            ok = c.token in content
        elif isinstance(c, LengthBetween):
            ok = c.lo <= len(content) <= c.hi
        else:
            raise TypeError(c)
        if ok:
            points += c.weight
    return points


# reply alphabet for enumeration: six content tokens plus two persona tokens,
# so every constraint kind can fire
ORACLE_ALPHABET = CONTENT_TOKENS[:6] + PERSONA_TOKENS[:2]


def random_rubric(rng) -> Rubric:
    """A rubric over the enumeration alphabet, mixing every constraint kind."""
    tokens = list(CONTENT_TOKENS[:6])
    rng.shuffle(tokens)
    constraints = [
        MustInclude(tokens[0], weight=int(rng.integers(1, 4))),
        Forbid(tokens[1], weight=int(rng.integers(1, 4))),
    ]
    if rng.random() < 0.7:
        constraints.append(StartsWith(tokens[2]))
    if rng.random() < 0.7:
        lo = int(rng.integers(0, 3))
        constraints.append(LengthBetween(lo, lo + int(rng.integers(0, 3))))
    if rng.random() < 0.7:
        constraints.append(Persona(PERSONA_TOKENS[int(rng.integers(0, 2))], weight=2))
    return Rubric(tuple(constraints))


def test_satisfaction_matches_enumeration_oracle():
    # every reply of content length <= 3 over an 8-token alphabet (585 replies)
    replies = [
        tuple(content) + (EOS,)
        for k in range(4)
        for content in itertools.product(ORACLE_ALPHABET, repeat=k)
    ]
    assert len(replies) == 1 + 8 + 64 + 512
    rng = make_rng("toyenv-oracle")
    for _ in range(20):
        rubric = random_rubric(rng)
        for reply in replies:
            expected = oracle_points(rubric, reply)
            assert earned_points(rubric, reply) == expected
            score = satisfaction_score(rubric, reply)
            assert score == expected / rubric.total_weight
            assert 0.0 <= score <= 1.0


def test_satisfaction_worked_examples():
    one_must = Rubric((MustInclude(44),))
    assert satisfaction_score(one_must, (44, EOS)) == 1.0
    assert satisfaction_score(one_must, (45, EOS)) == 0.0
    two_musts = Rubric((MustInclude(44), MustInclude(46)))
    assert satisfaction_score(two_musts, (EOS,)) == 0.0
    assert satisfaction_score(two_musts, (46, EOS)) == 0.5
    weighted = Rubric((MustInclude(44, weight=3), Forbid(45)))
    assert satisfaction_score(weighted, (EOS,)) == 0.25


# ---------------------------------------------------------------- judge


def test_judge_scores_zero_against_itself():
    task = generate_task(0, "rubric", difficulty=1)
    reply = gold_reply_content(task.rubric) + (EOS,)
    assert reference_judge(task.history, reply, reply, task.rubric).level == 0


def test_judge_counts_weighted_points_difference():
    rubric = Rubric((MustInclude(44), MustInclude(45), MustInclude(46)))
    history = build_history([Turn(USER, (44, EOS))])
    better = (44, 45, 46, EOS)
    worse = (44, EOS)
    assert reference_judge(history, better, worse, rubric).level == 2
    assert reference_judge(history, worse, better, rubric).level == -2


def test_judge_clamps_to_the_scale():
    rubric = Rubric(tuple(MustInclude(t) for t in CONTENT_TOKENS[:5]))
    history = build_history([Turn(USER, (44, EOS))])
    full = tuple(CONTENT_TOKENS[:5]) + (EOS,)
    empty = (EOS,)
    assert reference_judge(history, full, empty, rubric).level == 3
    assert reference_judge(history, full, empty, rubric, scale=2).level == 2
    assert reference_judge(history, empty, full, rubric).level == -3


def test_judge_is_antisymmetric_on_random_pairs():
    rng = make_rng("toyenv-antisym")
    history = build_history([Turn(USER, (44, EOS))])
    for scale in (1, 2, 3):
        for _ in range(300):
            rubric = random_rubric(rng)
            y = tuple(int(t) for t in rng.choice(ORACLE_ALPHABET, size=int(rng.integers(0, 5)))) + (EOS,)
            ref = tuple(int(t) for t in rng.choice(ORACLE_ALPHABET, size=int(rng.integers(0, 5)))) + (EOS,)
            fwd = reference_judge(history, y, ref, rubric, scale=scale)
            bwd = reference_judge(history, ref, y, rubric, scale=scale)
            assert fwd.level == -bwd.level
            assert fwd.scale == scale


def test_judge_level_sign_tracks_points_dominance():
    rng = make_rng("toyenv-dominance")
    history = build_history([Turn(USER, (44, EOS))])
    for _ in range(500):
        rubric = random_rubric(rng)
        y = tuple(int(t) for t in rng.choice(ORACLE_ALPHABET, size=int(rng.integers(0, 5)))) + (EOS,)
        ref = tuple(int(t) for t in rng.choice(ORACLE_ALPHABET, size=int(rng.integers(0, 5)))) + (EOS,)
        delta = oracle_points(rubric, y) - oracle_points(rubric, ref)
        level = reference_judge(history, y, ref, rubric).level
        assert level == max(-3, min(3, delta))


def test_pairwise_judge_breaks_exact_ties_toward_the_shorter_reply():
    task = generate_task(11, "pairwise", difficulty=1)
    latent = decode_latent_rubric(task.history)
    assert latent is not None
    reference = tuple(task.reference_reply)
    shorter = gold_reply_content(latent) + (EOS,)
    assert earned_points(latent, shorter) == earned_points(latent, reference)
    if len(shorter) < len(reference):
        assert reference_judge(task.history, shorter, reference).level == 1
        assert reference_judge(task.history, reference, shorter).level == -1
    assert reference_judge(task.history, reference, reference).level == 0


def test_pairwise_judge_requires_instructions_in_history():
    plain = build_history([Turn(USER, (44, EOS))])
    with pytest.raises(RegimeMismatch):
        reference_judge(plain, (EOS,), (EOS,))


def test_judge_rejects_bad_scale():
    task = generate_task(0, "rubric", difficulty=1)
    with pytest.raises(ScaleViolation):
        reference_judge(task.history, (EOS,), (EOS,), task.rubric, scale=0)


# ---------------------------------------------------------------- task generation


def test_generate_task_is_deterministic():
    a = generate_task(42, "pairwise", difficulty=2, audio_prob=1.0)
    b = generate_task(42, "pairwise", difficulty=2, audio_prob=1.0)
    assert task_to_dict(a) == task_to_dict(b)


def test_generate_task_difficulty_laws():
    for difficulty in (1, 2, 3):
        for seed in range(20):
            task = generate_task(seed, "rubric", difficulty)
            rubric = effective_rubric(task)
            assert len(rubric.constraints) == 2 * difficulty
            assert task.history.n_turns == 2 * difficulty - 1
            assert task.behavior_tags == DIFFICULTY_TAGS[difficulty]
            assert task.difficulty == difficulty


def test_generate_task_regime_field_and_rubric_visibility():
    rubric_task = generate_task(0, "rubric", difficulty=1)
    assert rubric_task.regime == "rubric"
    assert rubric_task.rubric is not None
    pairwise_task = generate_task(0, "pairwise", difficulty=1)
    assert pairwise_task.regime == "pairwise"
    assert pairwise_task.rubric is None
    assert decode_latent_rubric(pairwise_task.history) is not None


def test_generate_task_rejects_bad_arguments():
    with pytest.raises(ValueError):
        generate_task(0, "rubric", difficulty=4)
    with pytest.raises(ValueError):
        generate_task(0, "freeform", difficulty=1)


def test_reference_reply_earns_every_point():
    # pairwise tasks ship a stored reference; rubric tasks are judged against
    # the frozen policy's own decode, so they store none
    for difficulty in (1, 2, 3):
        for seed in range(15):
            task = generate_task(seed, "pairwise", difficulty)
            rubric = effective_rubric(task)
            assert earned_points(rubric, task.reference_reply) == rubric.total_weight
            assert generate_task(seed, "rubric", difficulty).reference_reply is None


def test_latent_decode_matches_the_explicit_rubric():
    # rubric tasks carry the same instructions in the history, so the decoder
    # must recover exactly what the explicit rubric states
    for difficulty in (1, 2, 3):
        for seed in range(15):
            task = generate_task(seed, "rubric", difficulty)
            assert decode_latent_rubric(task.history) == task.rubric


def test_persona_instruction_is_planted_turns_before_the_end():
    for seed in range(20):
        task = generate_task(seed, "rubric", difficulty=2)
        rubric = effective_rubric(task)
        assert any(isinstance(c, Persona) for c in rubric.constraints)
        planted = [
            i
            for i, turn in enumerate(task.history.turns)
            if turn.role == USER and KW_SET_PERSONA in turn.content
        ]
        assert planted
        assert all(i <= task.history.n_turns - 3 for i in planted)


def test_difficulty_three_tasks_contain_a_revision():
    for seed in range(20):
        task = generate_task(seed, "rubric", difficulty=3)
        assert any(
            KW_REVISE in turn.content for turn in task.history.turns if turn.role == USER
        )


def test_audio_probability_bounds():
    with_audio = generate_task(0, "pairwise", difficulty=1, audio_prob=1.0)
    assert any(t.audio is not None for t in with_audio.history.turns if t.role == USER)
    without = generate_task(0, "pairwise", difficulty=1, audio_prob=0.0)
    assert all(t.audio is None for t in without.history.turns)


def test_task_ids_are_distinct_across_seeds():
    ids = {generate_task(s, "rubric", difficulty=1).task_id for s in range(50)}
    assert len(ids) == 50


# ---------------------------------------------------------------- gold targets


def test_gold_reply_satisfies_every_constraint():
    for seed in range(30):
        task = generate_task(seed, "pairwise", difficulty=3)
        rubric = effective_rubric(task)
        reply = gold_reply_content(rubric) + (EOS,)
        assert earned_points(rubric, reply) == rubric.total_weight


def test_gold_trace_respects_the_protocol_and_the_cap():
    from rlhf_forge.policy import validate_generation
    from rlhf_forge import ModelConfig

    model = ModelConfig()
    for seed in range(30):
        task = generate_task(seed, "rubric", difficulty=3)
        trace = gold_trace(effective_rubric(task), model.max_trace)
        validate_generation(model, trace, (EOS,))


# ---------------------------------------------------------------- supervised examples


def test_mid_example_echoes_the_text_attribute():
    ex = make_mid_example(5, with_audio=False)
    assert ex.rubric is None
    assert not ex.has_audio
    first_content = ex.history.turns[0].content[0]
    assert ex.reply == (first_content, EOS)
    assert ex.trace == (2, first_content, 3)


def test_mid_example_audio_reply_names_the_class_token():
    ex = make_mid_example(5, with_audio=True)
    assert ex.has_audio
    assert ex.reply[0] in CONTENT_TOKENS
    again = make_mid_example(5, with_audio=True)
    assert ex.history.turns[0].audio == again.history.turns[0].audio


def test_sft_example_uses_the_gold_pair():
    task = generate_task(9, "pairwise", difficulty=2)
    ex = make_sft_example(task, MODEL_MAX_TRACE)
    assert ex.history == task.history
    assert ex.rubric is None
    rubric = effective_rubric(task)
    assert earned_points(rubric, ex.reply) == rubric.total_weight


# ---------------------------------------------------------------- corpora on disk


def test_task_export_import_round_trip(tmp_path):
    tasks = [
        generate_task(seed, regime, difficulty, audio_prob=0.5)
        for seed, (regime, difficulty) in enumerate(
            [("rubric", 1), ("pairwise", 2), ("rubric", 3), ("pairwise", 1)]
        )
    ]
    path = tmp_path / "tasks.jsonl"
    export_tasks(tasks, path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == len(tasks)
    back = import_tasks(path)
    assert [task_to_dict(t) for t in back] == [task_to_dict(t) for t in tasks]


def test_task_dict_round_trip_preserves_audio():
    task = generate_task(3, "pairwise", difficulty=1, audio_prob=1.0)
    back = task_from_dict(task_to_dict(task))
    original = [t.audio for t in task.history.turns if t.audio is not None]
    restored = [t.audio for t in back.history.turns if t.audio is not None]
    assert len(original) == len(restored) == 1
    assert original[0] == restored[0]
