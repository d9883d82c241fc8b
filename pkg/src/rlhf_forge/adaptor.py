"""Pseudo-audio front-end: synthetic feature sequences and the 2x downsampler.

The heavy acoustic encoder of a real system is modelled by a fixed generative
process (synth_features) that emits 25 Hz feature frames around a per-class
direction. The only learnable piece is a linear adaptor that concatenates
adjacent frame pairs and projects them, halving the rate to 12.5 Hz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RateMismatch
from .rng import make_rng

SOURCE_RATE = 25.0
TARGET_RATE = 12.5

NOISE_STD = 0.5
CLASS_GAIN = 1.0


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    """A sequence of feature frames at a fixed frame rate.

    frames has shape (n, d) with n >= 1; rate is one of 25.0 (raw) or
    12.5 (downsampled). Instances are immutable: the frame array is copied at
    construction and marked read-only.
    """

    frames: np.ndarray
    rate: float

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureSequence):
            return NotImplemented
        return self.rate == other.rate and np.array_equal(self.frames, other.frames)

    def __post_init__(self) -> None:
        frames = np.array(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError(f"frames must be (n>=1, d), got shape {frames.shape}")
        if not np.isfinite(frames).all():
            raise ValueError("frames must be finite")
        if self.rate not in (SOURCE_RATE, TARGET_RATE):
            raise RateMismatch(f"rate must be {SOURCE_RATE} or {TARGET_RATE}, got {self.rate}")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class AdaptorParams:
    """Affine map from concatenated frame pairs (2*d_enc) to d_model."""

    projection: np.ndarray  # (d_model, 2*d_enc)
    bias: np.ndarray  # (d_model,)

    def __post_init__(self) -> None:
        if self.projection.ndim != 2:
            raise ValueError("projection must be 2-d")
        if self.bias.shape != (self.projection.shape[0],):
            raise ValueError("bias length must match projection rows")
        if self.projection.shape[1] % 2 != 0:
            raise ValueError("projection columns must be 2*d_enc, an even number")


def synth_features(seed: int, n_frames: int, class_id: int, d_enc: int = 16) -> FeatureSequence:
    """Deterministically synthesize a 25 Hz feature sequence.

    Frames are Gaussian noise (std 0.5) around a unit-norm class direction, so
    the class identity is recoverable from the frame mean. Identical arguments
    always produce identical frames.
    """
    if n_frames < 1:
        raise ValueError(f"n_frames must be >= 1, got {n_frames}")
    if class_id < 0:
        raise ValueError(f"class_id must be >= 0, got {class_id}")
    direction = make_rng("feature-class", class_id, d_enc).standard_normal(d_enc)
    direction /= np.linalg.norm(direction)
    noise = make_rng("synth-features", seed, n_frames, class_id, d_enc).standard_normal((n_frames, d_enc))
    frames = CLASS_GAIN * direction[None, :] + NOISE_STD * noise
    return FeatureSequence(frames=frames, rate=SOURCE_RATE)


def downsample(params: AdaptorParams, x: FeatureSequence) -> FeatureSequence:
    """Halve the frame rate by projecting concatenated adjacent frame pairs.

    Output length is ceil(n/2); an odd-length input is padded by repeating its
    final frame. Only 25 Hz input is accepted; output is 12.5 Hz.
    """
    if x.rate != SOURCE_RATE:
        raise RateMismatch(f"downsample expects {SOURCE_RATE} input, got {x.rate}")
    d_enc = x.dim
    if params.projection.shape[1] != 2 * d_enc:
        raise ValueError(
            f"projection expects pairs of {params.projection.shape[1] // 2}-d frames, got {d_enc}-d"
        )
    frames = x.frames
    n = frames.shape[0]
    if n % 2 == 1:
        frames = np.concatenate([frames, frames[-1:]], axis=0)
    pairs = frames.reshape(-1, 2 * d_enc)
    out = pairs @ params.projection.T + params.bias
    assert out.shape[0] == math.ceil(n / 2)
    return FeatureSequence(frames=out, rate=TARGET_RATE)
