"""Policy network: gradients against finite differences, sampling laws,
distribution normalization, and the binary checkpoint format.
"""

import math

import numpy as np
import pytest

from rlhf_forge import (
    EOS,
    TRACE_END,
    TRACE_START,
    ModelConfig,
    encode_context,
    generate_task,
    grad_sequence_logprob,
    load_checkpoint,
    next_token_distribution,
    sample_generation,
    save_checkpoint,
    sequence_logprob,
)
from rlhf_forge.errors import CheckpointError, MalformedTrace, PrefixTooLong
from rlhf_forge.policy import PolicyParams, forward_positions, param_count, validate_generation
from rlhf_forge.rng import make_rng

MODEL = ModelConfig()
LOG_V = math.log(MODEL.vocab_size)


def random_instance(seed, regime="rubric", audio_prob=0.0):
    """A (params, history, rubric, generation) tuple for gradient checks."""
    params = PolicyParams.init(MODEL, seed, scale=0.3)
    task = generate_task(seed, regime, difficulty=1, audio_prob=audio_prob)
    gen = sample_generation(params, task.history, task.rubric, seed=seed)
    return params, task.history, task.rubric, gen


# ---------------------------------------------------------------- parameters


def test_param_count_matches_theta_length():
    params = PolicyParams.init(MODEL, 0)
    assert params.theta.shape == (param_count(MODEL),)


def test_named_views_alias_the_flat_vector():
    params = PolicyParams.init(MODEL, 0)
    assert np.shares_memory(params.emb, params.theta)
    assert np.shares_memory(params.proj, params.theta)
    before = params.theta.sum()
    params.emb[5, 0] += 1.0
    assert params.theta.sum() != before


def test_wrong_length_theta_is_rejected():
    with pytest.raises(ValueError):
        PolicyParams(MODEL, np.zeros(param_count(MODEL) - 1))


# ---------------------------------------------------------------- gradients


def test_gradient_matches_finite_differences():
    rng = make_rng("policy-fd")
    eps = 1e-5
    worst = 0.0
    cases = [
        random_instance(0, "rubric"),
        random_instance(1, "pairwise"),
        random_instance(2, "pairwise", audio_prob=1.0),
    ]
    for params, history, rubric, gen in cases:
        grad = grad_sequence_logprob(params, history, gen.trace, gen.reply, rubric)
        coords = rng.choice(params.theta.shape[0], size=20, replace=False)
        for i in coords:
            bumped = params.copy()
            bumped.theta[i] += eps
            hi = sequence_logprob(bumped, history, gen.trace, gen.reply, rubric)
            bumped.theta[i] -= 2 * eps
            lo = sequence_logprob(bumped, history, gen.trace, gen.reply, rubric)
            fd = (hi - lo) / (2 * eps)
            rel = abs(fd - grad[i]) / max(1e-8, abs(fd) + abs(grad[i]))
            worst = max(worst, rel)
    assert worst < 1e-4


def test_unused_embedding_rows_get_zero_gradient():
    params, history, rubric, gen = random_instance(5, "rubric")
    used = {t for turn in history.turns for t in turn.text}
    used |= set(gen.tokens) | {0}
    used |= {c.token for c in rubric.constraints if hasattr(c, "token")}
    grad = grad_sequence_logprob(params, history, gen.trace, gen.reply, rubric)
    d = MODEL.d_model
    emb_grad = grad[: MODEL.vocab_size * d].reshape(MODEL.vocab_size, d)
    unused = sorted(set(range(MODEL.vocab_size)) - used)
    assert unused, "instance unexpectedly touched the whole vocabulary"
    for token in unused:
        assert np.all(emb_grad[token] == 0.0)
    assert any(np.any(emb_grad[t] != 0.0) for t in used)


# ---------------------------------------------------------------- distributions


def test_next_token_distribution_normalizes():
    rng = make_rng("policy-norm")
    task = generate_task(7, "rubric", difficulty=1)
    for trial in range(100):
        params = PolicyParams.init(MODEL, trial, scale=0.5)
        ctx = encode_context(params, task.history, task.rubric)
        n = int(rng.integers(0, 1 + MODEL.max_trace + MODEL.max_reply))
        prefix = rng.integers(0, MODEL.vocab_size, size=n)
        probs = next_token_distribution(params, ctx, prefix)
        assert probs.shape == (MODEL.vocab_size,)
        assert np.all(probs >= 0)
        assert abs(probs.sum() - 1.0) < 1e-9


def test_zero_parameters_give_exactly_uniform():
    params = PolicyParams.zeros(MODEL)
    task = generate_task(7, "pairwise", difficulty=1)
    ctx = encode_context(params, task.history, None)
    for prefix in [(), (0,), (0, 44, 45)]:
        probs = next_token_distribution(params, ctx, prefix)
        np.testing.assert_allclose(probs, np.full(MODEL.vocab_size, 1 / MODEL.vocab_size), atol=1e-12)


def test_prefix_beyond_decode_budget_is_rejected():
    params = PolicyParams.zeros(MODEL)
    ctx = np.zeros(MODEL.d_model)
    with pytest.raises(PrefixTooLong):
        next_token_distribution(params, ctx, [0] * (2 + MODEL.max_trace + MODEL.max_reply))


# ---------------------------------------------------------------- sampling


def test_sampling_is_deterministic_per_seed():
    params, history, rubric, _ = random_instance(3)
    a = sample_generation(params, history, rubric, seed=11)
    b = sample_generation(params, history, rubric, seed=11)
    c = sample_generation(params, history, rubric, seed=12)
    assert a.trace == b.trace and a.reply == b.reply
    np.testing.assert_array_equal(a.logprobs, b.logprobs)
    assert (a.trace, a.reply) != (c.trace, c.reply)


def test_generation_respects_the_delimiter_protocol():
    for seed in range(10):
        params, history, rubric, gen = random_instance(seed)
        validate_generation(MODEL, gen.trace, gen.reply)
        assert len(gen.logprobs) == len(gen.trace) + len(gen.reply)


def test_greedy_zero_parameters_pick_lowest_allowed_ids():
    # uniform distribution everywhere, so greedy resolves every tie toward
    # the lowest id the mask allows: TRACE_END closes the trace immediately
    # and EOS ends the reply immediately
    params = PolicyParams.zeros(MODEL)
    task = generate_task(0, "rubric", difficulty=1)
    gen = sample_generation(params, task.history, task.rubric, greedy=True)
    assert gen.trace == (TRACE_START, TRACE_END)
    assert gen.reply == (EOS,)
    np.testing.assert_allclose(gen.logprobs, -LOG_V, atol=1e-12)


def test_stored_logprobs_are_unmasked_full_vocab_values():
    params, history, rubric, gen = random_instance(4)
    tokens = np.array(gen.tokens, dtype=np.int64)
    fwd = forward_positions(params, history, rubric, tokens)
    per_position = fwd.logp[np.arange(len(tokens)), tokens]
    np.testing.assert_allclose(per_position, gen.logprobs, atol=1e-10)
    rows = np.exp(fwd.logp).sum(axis=1)
    np.testing.assert_allclose(rows, 1.0, atol=1e-9)


def test_sequence_logprob_sums_the_stored_values():
    params, history, rubric, gen = random_instance(6)
    total = sequence_logprob(params, history, gen.trace, gen.reply, rubric)
    assert abs(total - gen.logprobs.sum()) < 1e-10


def test_full_length_generation_under_uniform_policy():
    # 16 trace positions + 24 reply positions, each exactly 1/64
    params = PolicyParams.zeros(MODEL)
    task = generate_task(1, "rubric", difficulty=1)
    trace = (TRACE_START,) + (44,) * (MODEL.max_trace - 2) + (TRACE_END,)
    reply = (45,) * (MODEL.max_reply - 1) + (EOS,)
    total = sequence_logprob(params, task.history, trace, reply, task.rubric)
    assert abs(total - (-40 * LOG_V)) < 1e-9


def test_extending_a_sequence_lowers_its_logprob():
    params = PolicyParams.zeros(MODEL)
    task = generate_task(1, "rubric", difficulty=1)
    short = sequence_logprob(params, task.history, (TRACE_START, 44, TRACE_END), (EOS,), task.rubric)
    long = sequence_logprob(params, task.history, (TRACE_START, 44, 44, TRACE_END), (EOS,), task.rubric)
    assert long < short


def test_validate_generation_rejects_protocol_violations():
    good_reply = (44, EOS)
    for trace in [(), (44, TRACE_END), (TRACE_START, 44), (TRACE_START, EOS, TRACE_END)]:
        with pytest.raises(MalformedTrace):
            validate_generation(MODEL, trace, good_reply)
    good_trace = (TRACE_START, TRACE_END)
    for reply in [(), (44,), (TRACE_START, EOS), (44, 99, EOS)]:
        with pytest.raises(MalformedTrace):
            validate_generation(MODEL, good_trace, reply)
    with pytest.raises(MalformedTrace):
        validate_generation(MODEL, (TRACE_START,) + (44,) * (MODEL.max_trace - 1) + (TRACE_END,), good_reply)
    with pytest.raises(MalformedTrace):
        validate_generation(MODEL, good_trace, (44,) * MODEL.max_reply + (EOS,))


# ---------------------------------------------------------------- context


def test_context_depends_on_rubric_and_audio():
    params = PolicyParams.init(MODEL, 0)
    with_rubric = generate_task(2, "rubric", difficulty=1)
    base = encode_context(params, with_rubric.history, with_rubric.rubric)
    no_rubric = encode_context(params, with_rubric.history, None)
    assert not np.allclose(base, no_rubric)

    audio_task = generate_task(3, "pairwise", difficulty=1, audio_prob=1.0)
    assert any(t.audio is not None for t in audio_task.history.turns)
    with_audio = encode_context(params, audio_task.history, None)
    np.testing.assert_array_equal(with_audio, encode_context(params, audio_task.history, None))


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip_is_byte_identical(tmp_path):
    params = PolicyParams.init(MODEL, 0)
    first = tmp_path / "a.bin"
    second = tmp_path / "b.bin"
    save_checkpoint(first, params, "sft")
    ckpt = load_checkpoint(first)
    assert ckpt.stage == "sft"
    np.testing.assert_array_equal(ckpt.params.theta, params.theta)
    save_checkpoint(second, ckpt.params, ckpt.stage)
    assert first.read_bytes() == second.read_bytes()


def test_checkpoint_rejects_unknown_stage(tmp_path):
    params = PolicyParams.init(MODEL, 0)
    with pytest.raises(ValueError):
        save_checkpoint(tmp_path / "x.bin", params, "warmup")


def test_checkpoint_rejects_corrupt_magic(tmp_path):
    path = tmp_path / "x.bin"
    save_checkpoint(path, PolicyParams.init(MODEL, 0), "mid")
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_rejects_truncation(tmp_path):
    path = tmp_path / "x.bin"
    save_checkpoint(path, PolicyParams.init(MODEL, 0), "mid")
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 16])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_rejects_dimension_mismatch(tmp_path):
    path = tmp_path / "x.bin"
    save_checkpoint(path, PolicyParams.init(MODEL, 0), "mid")
    smaller = ModelConfig(d_model=16, d_hidden=32)
    with pytest.raises(CheckpointError):
        load_checkpoint(path, expected_model=smaller)
