"""Tiny differentiable autoregressive policy with decoupled trace and reply.

The policy is a pooled-context MLP over learned token embeddings, small enough
that every gradient is hand-derived numpy and checkable against finite
differences in milliseconds. One flat float64 parameter vector holds, in
order: token embeddings, the context gate, the prefix gate, the two MLP
layers, and the audio adaptor.

Generation is two phases: an intermediate reasoning trace delimited by
TRACE_START/TRACE_END, then the reply terminated by EOS. The sampler forces
delimiters at phase boundaries and at the hard length caps, but stores the
policy's own (unmasked, temperature-1) log-probability for every emitted
token, so stored log-probs always agree with next_token_distribution.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adaptor import SOURCE_RATE, AdaptorParams, FeatureSequence
from .core import BOS, EOS, TRACE_END, TRACE_START, DialogueHistory, Forbid, LengthBetween, ModelConfig, Rubric
from .errors import CheckpointError, MalformedTrace, PrefixTooLong, RateMismatch
from .rng import make_rng

# Recency decay of the generated-prefix pool: a prefix token of age a (0 = most
# recent) enters the pool with weight GAMMA**a, normalized.
GAMMA = 0.9

STAGES = ("init", "mid", "sft", "rlhf")

_MAGIC = b"RLHF-FORGE-CKPT"
_VERSION = 1
_STAGE_BYTES = 16


def _layout(model: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    v, de, dm, dh = model.vocab_size, model.d_enc, model.d_model, model.d_hidden
    return [
        ("emb", (v, dm)),
        ("w_ctx", (dm,)),
        ("w_prefix", (dm,)),
        ("w1", (dh, dm)),
        ("b1", (dh,)),
        ("w2", (v, dh)),
        ("b2", (v,)),
        ("proj", (dm, 2 * de)),
        ("bias_a", (dm,)),
    ]


def param_count(model: ModelConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape in _layout(model))


def _views(model: ModelConfig, flat: np.ndarray) -> dict[str, np.ndarray]:
    views: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in _layout(model):
        size = int(np.prod(shape))
        views[name] = flat[offset : offset + size].reshape(shape)
        offset += size
    assert offset == flat.shape[0]
    return views


class PolicyParams:
    """Flat float64 parameter vector plus named views into it.

    Instances are cheap wrappers; the trainer treats them as immutable
    snapshots and builds a new instance after every optimizer step.
    """

    def __init__(self, model: ModelConfig, theta: np.ndarray):
        theta = np.ascontiguousarray(theta, dtype=np.float64)
        expected = param_count(model)
        if theta.shape != (expected,):
            raise ValueError(f"theta must have shape ({expected},), got {theta.shape}")
        self.model = model
        self.theta = theta
        v = _views(model, theta)
        self.emb = v["emb"]
        self.w_ctx = v["w_ctx"]
        self.w_prefix = v["w_prefix"]
        self.w1 = v["w1"]
        self.b1 = v["b1"]
        self.w2 = v["w2"]
        self.b2 = v["b2"]
        self.proj = v["proj"]
        self.bias_a = v["bias_a"]

    @property
    def adaptor(self) -> AdaptorParams:
        return AdaptorParams(projection=self.proj, bias=self.bias_a)

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.model, self.theta.copy())

    @classmethod
    def zeros(cls, model: ModelConfig) -> "PolicyParams":
        return cls(model, np.zeros(param_count(model)))

    @classmethod
    def init(cls, model: ModelConfig, seed: int, scale: float = 0.1) -> "PolicyParams":
        rng = make_rng("policy-init", seed)
        theta = scale * rng.standard_normal(param_count(model))
        params = cls(model, theta)
        # gates start near identity so context and prefix signals pass through
        params.w_ctx += 1.0
        params.w_prefix += 1.0
        return params


# --- context encoding --------------------------------------------------------


@dataclass
class ContextCache:
    """Intermediates of encode_context needed for the backward pass."""

    ctx: np.ndarray  # (d_model,)
    text_ids: np.ndarray  # all history text tokens, with multiplicity
    mean_concat: np.ndarray | None  # (2*d_enc,) mean over concatenated frame pairs
    rubric_ids: np.ndarray  # token ids of token-bearing constraints
    rubric_coefs: np.ndarray  # signed weight / total token-bearing weight


def _audio_pairs(x: FeatureSequence) -> np.ndarray:
    if x.rate != SOURCE_RATE:
        raise RateMismatch(f"history audio must be {SOURCE_RATE} Hz, got {x.rate}")
    frames = x.frames
    if frames.shape[0] % 2 == 1:
        frames = np.concatenate([frames, frames[-1:]], axis=0)
    return frames.reshape(-1, 2 * x.dim)


def encode_context_cached(
    params: PolicyParams, history: DialogueHistory, rubric: Rubric | None
) -> ContextCache:
    model = params.model
    text_ids = np.array([t for turn in history.turns for t in turn.text], dtype=np.int64)
    if text_ids.max(initial=0) >= model.vocab_size:
        raise ValueError("history contains token ids outside the vocabulary")
    ctx = params.emb[text_ids].mean(axis=0)

    pair_blocks = [
        _audio_pairs(turn.audio) for turn in history.turns if turn.audio is not None
    ]
    mean_concat = None
    if pair_blocks:
        stacked = np.concatenate(pair_blocks, axis=0)
        if stacked.shape[1] != 2 * model.d_enc:
            raise ValueError("history audio dimensionality does not match d_enc")
        mean_concat = stacked.mean(axis=0)
        # mean of affine-mapped frames == affine map of the mean
        ctx = ctx + params.proj @ mean_concat + params.bias_a

    rubric_ids_list: list[int] = []
    rubric_coefs_list: list[float] = []
    if rubric is not None:
        token_bearing = [c for c in rubric.constraints if not isinstance(c, LengthBetween)]
        total = sum(c.weight for c in token_bearing)
        if total > 0:
            for c in token_bearing:
                if c.token >= model.vocab_size:
                    raise ValueError("rubric token id outside the vocabulary")
                sign = -1.0 if isinstance(c, Forbid) else 1.0
                rubric_ids_list.append(c.token)
                rubric_coefs_list.append(sign * c.weight / total)
    rubric_ids = np.array(rubric_ids_list, dtype=np.int64)
    rubric_coefs = np.array(rubric_coefs_list, dtype=np.float64)
    if rubric_ids.size:
        ctx = ctx + rubric_coefs @ params.emb[rubric_ids]

    return ContextCache(
        ctx=ctx,
        text_ids=text_ids,
        mean_concat=mean_concat,
        rubric_ids=rubric_ids,
        rubric_coefs=rubric_coefs,
    )


def encode_context(
    params: PolicyParams, history: DialogueHistory, rubric: Rubric | None = None
) -> np.ndarray:
    """Pool a dialogue history (text + optional audio) and an optional rubric
    into a single d_model context vector."""
    return encode_context_cached(params, history, rubric).ctx


def _backprop_context(
    params: PolicyParams, cache: ContextCache, dctx: np.ndarray, grad: dict[str, np.ndarray]
) -> None:
    np.add.at(grad["emb"], cache.text_ids, dctx / cache.text_ids.shape[0])
    if cache.mean_concat is not None:
        grad["proj"] += np.outer(dctx, cache.mean_concat)
        grad["bias_a"] += dctx
    if cache.rubric_ids.size:
        np.add.at(grad["emb"], cache.rubric_ids, cache.rubric_coefs[:, None] * dctx[None, :])


# --- per-position forward/backward -------------------------------------------


def _log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _prefix_pools(params: PolicyParams, gen: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Recency-decayed pools over [BOS] + gen[:-1] style prefixes.

    Row i is the pooled prefix right before emitting gen[i]; row 0 pools BOS
    alone. Returns (pools (n, d_model), normalizers (n,))."""
    n = gen.shape[0]
    dm = params.model.d_model
    pools = np.empty((n, dm))
    norms = np.empty(n)
    s = params.emb[BOS].copy()
    w = 1.0
    for i in range(n):
        norms[i] = w
        pools[i] = s / w
        if i + 1 < n:
            s = GAMMA * s + params.emb[gen[i]]
            w = GAMMA * w + 1.0
    return pools, norms


@dataclass
class PositionForward:
    """Cached activations for every generated position of one sequence."""

    gen: np.ndarray  # (n,) token ids, trace then reply
    cache: ContextCache
    pools: np.ndarray  # (n, d_model)
    norms: np.ndarray  # (n,)
    u: np.ndarray  # (n, d_model)
    h: np.ndarray  # (n, d_hidden)
    logp: np.ndarray  # (n, V) log-softmax rows

    @property
    def token_logprobs(self) -> np.ndarray:
        return self.logp[np.arange(self.gen.shape[0]), self.gen]


def forward_positions(
    params: PolicyParams,
    history: DialogueHistory,
    rubric: Rubric | None,
    gen: np.ndarray,
) -> PositionForward:
    cache = encode_context_cached(params, history, rubric)
    pools, norms = _prefix_pools(params, gen)
    u = params.w_ctx[None, :] * cache.ctx[None, :] + params.w_prefix[None, :] * pools
    h = np.tanh(u @ params.w1.T + params.b1[None, :])
    z = h @ params.w2.T + params.b2[None, :]
    return PositionForward(gen=gen, cache=cache, pools=pools, norms=norms, u=u, h=h, logp=_log_softmax(z))


def backward_positions(
    params: PolicyParams, fwd: PositionForward, dz: np.ndarray, grad_flat: np.ndarray
) -> None:
    """Accumulate d(objective)/d(theta) into grad_flat given d(objective)/d(logits).

    dz has shape (n, V): one row per generated position.
    """
    grad = _views(params.model, grad_flat)
    grad["w2"] += dz.T @ fwd.h
    grad["b2"] += dz.sum(axis=0)
    dh = dz @ params.w2
    da = dh * (1.0 - fwd.h * fwd.h)
    grad["w1"] += da.T @ fwd.u
    grad["b1"] += da.sum(axis=0)
    du = da @ params.w1

    du_total = du.sum(axis=0)
    grad["w_ctx"] += du_total * fwd.cache.ctx
    grad["w_prefix"] += (du * fwd.pools).sum(axis=0)
    _backprop_context(params, fwd.cache, params.w_ctx * du_total, grad)

    # prefix pool: pools[i] = s_i / w_i with s_i = GAMMA * s_{i-1} + emb[token],
    # so d/d emb[prefix token k] = sum_{i >= k} GAMMA**(i-k) * ds_i.
    ds = (params.w_prefix[None, :] * du) / fwd.norms[:, None]
    n = fwd.gen.shape[0]
    r = np.empty_like(ds)
    r[n - 1] = ds[n - 1]
    for i in range(n - 2, -1, -1):
        r[i] = ds[i] + GAMMA * r[i + 1]
    prefix_ids = np.concatenate([[BOS], fwd.gen[:-1]])
    np.add.at(grad["emb"], prefix_ids, r)


# --- public decoding interface ------------------------------------------------


def next_token_distribution(
    params: PolicyParams, ctx: np.ndarray, prefix: "list[int] | tuple[int, ...] | np.ndarray"
) -> np.ndarray:
    """Next-token probabilities after the given prefix (BOS anchor included by
    the caller). Sums to one within 1e-9; all-zero parameters give the uniform
    distribution for any prefix."""
    model = params.model
    prefix = np.asarray(prefix, dtype=np.int64)
    max_len = 1 + model.max_trace + model.max_reply
    if prefix.shape[0] > max_len:
        raise PrefixTooLong(f"prefix length {prefix.shape[0]} exceeds {max_len}")
    if prefix.size and (prefix.min() < 0 or prefix.max() >= model.vocab_size):
        raise ValueError("prefix contains token ids outside the vocabulary")
    if prefix.size:
        # same recurrence as the incremental sampler state, bit for bit
        s = params.emb[prefix[0]].copy()
        w = 1.0
        for t in prefix[1:]:
            s = GAMMA * s + params.emb[t]
            w = GAMMA * w + 1.0
        pool = s / w
    else:
        pool = np.zeros(model.d_model)
    u = params.w_ctx * ctx + params.w_prefix * pool
    h = np.tanh(params.w1 @ u + params.b1)
    z = params.w2 @ h + params.b2
    return np.exp(_log_softmax(z))


@dataclass(frozen=True)
class Generation:
    """One decoded generation: trace (with delimiters), reply (with EOS), and
    the policy's unmasked log-probability of every emitted token."""

    trace: tuple[int, ...]
    reply: tuple[int, ...]
    logprobs: np.ndarray

    def __post_init__(self) -> None:
        lp = np.array(self.logprobs, dtype=np.float64)
        if lp.shape != (len(self.trace) + len(self.reply),):
            raise ValueError("logprobs length must equal trace length + reply length")
        lp.setflags(write=False)
        object.__setattr__(self, "logprobs", lp)

    @property
    def tokens(self) -> tuple[int, ...]:
        return self.trace + self.reply

    @property
    def reply_content(self) -> tuple[int, ...]:
        return self.reply[:-1]


def validate_generation(model: ModelConfig, trace: "tuple[int, ...]", reply: "tuple[int, ...]") -> None:
    """Enforce the delimiter protocol; raises MalformedTrace on violation."""
    if len(trace) < 2 or trace[0] != TRACE_START or trace[-1] != TRACE_END:
        raise MalformedTrace("trace must be TRACE_START ... TRACE_END")
    if len(trace) > model.max_trace:
        raise MalformedTrace(f"trace length {len(trace)} exceeds {model.max_trace}")
    body = trace[1:-1]
    if any(t in (BOS, EOS, TRACE_START, TRACE_END) for t in body):
        raise MalformedTrace("trace body may not contain control tokens")
    if len(reply) < 1 or reply[-1] != EOS:
        raise MalformedTrace("reply must end with EOS")
    if len(reply) > model.max_reply:
        raise MalformedTrace(f"reply length {len(reply)} exceeds {model.max_reply}")
    if any(t in (BOS, EOS, TRACE_START, TRACE_END) for t in reply[:-1]):
        raise MalformedTrace("reply content may not contain control tokens")
    if any(t < 0 or t >= model.vocab_size for t in trace + reply):
        raise MalformedTrace("generation contains token ids outside the vocabulary")


class _StepState:
    """Incremental decoding state sharing the exact math of forward_positions."""

    def __init__(self, params: PolicyParams, ctx: np.ndarray):
        self.params = params
        self.ctx = ctx
        self.s = params.emb[BOS].copy()
        self.w = 1.0

    def logprobs(self) -> np.ndarray:
        p = self.params
        u = p.w_ctx * self.ctx + p.w_prefix * (self.s / self.w)
        h = np.tanh(p.w1 @ u + p.b1)
        return _log_softmax(p.w2 @ h + p.b2)

    def push(self, token: int) -> None:
        self.s = GAMMA * self.s + self.params.emb[token]
        self.w = GAMMA * self.w + 1.0


def _draw(logp: np.ndarray, masked: tuple[int, ...], temperature: float, rng, greedy: bool) -> int:
    scores = logp / temperature
    probs = np.exp(scores - scores.max())
    probs[list(masked)] = 0.0
    probs /= probs.sum()
    if greedy:
        return int(np.argmax(probs))  # argmax takes the lowest id on ties
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, rng.random(), side="right"))
    idx = min(idx, probs.shape[0] - 1)
    while probs[idx] == 0.0:  # guard against cumsum round-off at the tail
        idx -= 1
    return idx


def sample_generation(
    params: PolicyParams,
    history: DialogueHistory,
    rubric: Rubric | None = None,
    *,
    temperature: float = 1.0,
    seed: int = 0,
    greedy: bool = False,
) -> Generation:
    """Decode a trace + reply.

    TRACE_START is forced at position 0, TRACE_END at the trace length cap,
    EOS at the reply length cap. Sampling draws from the masked, temperature-
    scaled distribution, but the stored per-token log-probs are always the
    unmasked temperature-1 values, including for forced tokens.
    """
    if temperature <= 0.0:
        raise ValueError("temperature must be > 0")
    model = params.model
    ctx = encode_context(params, history, rubric)
    rng = make_rng("sample-generation", seed)
    state = _StepState(params, ctx)

    trace: list[int] = []
    reply: list[int] = []
    logprobs: list[float] = []

    def emit(token: int, logp: np.ndarray, out: list[int]) -> None:
        out.append(token)
        logprobs.append(float(logp[token]))
        state.push(token)

    trace_mask = (BOS, EOS, TRACE_START)
    reply_mask = (BOS, TRACE_START, TRACE_END)

    logp = state.logprobs()
    emit(TRACE_START, logp, trace)
    while trace[-1] != TRACE_END:
        logp = state.logprobs()
        if len(trace) == model.max_trace - 1:
            emit(TRACE_END, logp, trace)
        else:
            emit(_draw(logp, trace_mask, temperature, rng, greedy), logp, trace)
    while not reply or reply[-1] != EOS:
        logp = state.logprobs()
        if len(reply) == model.max_reply - 1:
            emit(EOS, logp, reply)
        else:
            emit(_draw(logp, reply_mask, temperature, rng, greedy), logp, reply)

    gen = Generation(trace=tuple(trace), reply=tuple(reply), logprobs=np.array(logprobs))
    validate_generation(model, gen.trace, gen.reply)
    return gen


def sequence_logprob(
    params: PolicyParams,
    history: DialogueHistory,
    trace: "tuple[int, ...]",
    reply: "tuple[int, ...]",
    rubric: Rubric | None = None,
) -> float:
    """Total log-probability of a generation, summed over every position
    (forced delimiters included)."""
    validate_generation(params.model, tuple(trace), tuple(reply))
    gen = np.array(tuple(trace) + tuple(reply), dtype=np.int64)
    fwd = forward_positions(params, history, rubric, gen)
    return float(fwd.token_logprobs.sum())


def grad_sequence_logprob(
    params: PolicyParams,
    history: DialogueHistory,
    trace: "tuple[int, ...]",
    reply: "tuple[int, ...]",
    rubric: Rubric | None = None,
) -> np.ndarray:
    """Exact gradient of sequence_logprob with respect to the flat parameters."""
    validate_generation(params.model, tuple(trace), tuple(reply))
    gen = np.array(tuple(trace) + tuple(reply), dtype=np.int64)
    fwd = forward_positions(params, history, rubric, gen)
    pi = np.exp(fwd.logp)
    dz = -pi
    dz[np.arange(gen.shape[0]), gen] += 1.0
    grad = np.zeros_like(params.theta)
    backward_positions(params, fwd, dz, grad)
    return grad


# --- checkpoints --------------------------------------------------------------


@dataclass(frozen=True)
class Checkpoint:
    params: PolicyParams
    stage: str


def save_checkpoint(path: "str | Path", params: PolicyParams, stage: str) -> None:
    """Write the binary checkpoint: magic, version, dims, stage tag, count,
    then the raw little-endian float64 parameters."""
    if stage not in STAGES:
        raise ValueError(f"stage must be one of {STAGES}, got {stage!r}")
    m = params.model
    header = _MAGIC
    header += struct.pack("<I", _VERSION)
    header += struct.pack("<6I", m.vocab_size, m.d_enc, m.d_model, m.d_hidden, m.max_trace, m.max_reply)
    header += stage.encode("ascii").ljust(_STAGE_BYTES, b"\x00")
    header += struct.pack("<Q", params.theta.shape[0])
    body = params.theta.astype("<f8").tobytes()
    Path(path).write_bytes(header + body)


def load_checkpoint(path: "str | Path", expected_model: ModelConfig | None = None) -> Checkpoint:
    raw = Path(path).read_bytes()
    fixed = len(_MAGIC) + 4 + 24 + _STAGE_BYTES + 8
    if len(raw) < fixed:
        raise CheckpointError("checkpoint truncated")
    if raw[: len(_MAGIC)] != _MAGIC:
        raise CheckpointError("bad magic; not a policy checkpoint")
    off = len(_MAGIC)
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != _VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    dims = struct.unpack_from("<6I", raw, off)
    off += 24
    stage_raw = raw[off : off + _STAGE_BYTES]
    off += _STAGE_BYTES
    stage = stage_raw.rstrip(b"\x00").decode("ascii", errors="replace")
    if stage not in STAGES:
        raise CheckpointError(f"unknown stage tag {stage!r}")
    (count,) = struct.unpack_from("<Q", raw, off)
    off += 8
    model = ModelConfig(
        vocab_size=dims[0], d_enc=dims[1], d_model=dims[2], d_hidden=dims[3],
        max_trace=dims[4], max_reply=dims[5],
    )
    if count != param_count(model):
        raise CheckpointError(f"parameter count {count} inconsistent with dims {dims}")
    if len(raw) != fixed + 8 * count:
        raise CheckpointError("checkpoint body length inconsistent with header")
    if expected_model is not None and model != expected_model:
        raise CheckpointError(f"checkpoint dims {model} do not match expected {expected_model}")
    theta = np.frombuffer(raw[off:], dtype="<f8").astype(np.float64)
    return Checkpoint(params=PolicyParams(model, theta), stage=stage)
