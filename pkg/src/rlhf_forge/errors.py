"""Exception types shared across the package.

Collected in one module so that data types (core), the audio front-end
(adaptor) and the policy can raise them without importing each other.
"""

from __future__ import annotations


class AlternationViolation(ValueError):
    """Dialogue turns do not strictly alternate user/assistant starting at user."""


class EmptyHistory(ValueError):
    """A dialogue history must contain at least one turn."""


class ScaleViolation(ValueError):
    """A judgment level fell outside the ordinal scale [-L, +L]."""


class RateMismatch(ValueError):
    """A feature sequence arrived at a rate the consumer does not accept."""


class PrefixTooLong(ValueError):
    """A decoding prefix exceeded the maximum generation length."""


class MalformedTrace(ValueError):
    """A generation violated the trace/reply delimiter protocol."""


class RegimeMismatch(ValueError):
    """Reward inputs are inconsistent with the judging regime.

    Raised when a rubric-regime judgment is requested without a rubric, or a
    pairwise-regime judgment is requested on a history that encodes no latent
    constraints.
    """


class DegenerateGroup(ValueError):
    """Advantage estimation needs at least two samples per group."""


class LengthMismatch(ValueError):
    """Paired per-token arrays must have identical lengths."""


class EmptyBatch(ValueError):
    """A loss over an empty batch is undefined."""


class NonFiniteGradient(RuntimeError):
    """A gradient contained NaN or infinity; the step is aborted."""


class CheckpointError(RuntimeError):
    """A checkpoint file is malformed or inconsistent with expectations."""


class StageMismatch(RuntimeError):
    """A training stage was started from a checkpoint of the wrong stage."""
