"""Shared fixtures. Training tests shrink every budget in the config so a
full stage runs in well under a second; the acceptance tests use the real
defaults and are marked slow via their own module.
"""

import pytest

from rlhf_forge import RunConfig


@pytest.fixture
def small_config():
    """Factory for a RunConfig with tiny step budgets, overridable per test."""

    def make(**overrides) -> RunConfig:
        base = dict(
            seed=0,
            mid_steps=4,
            mid_batch_size=4,
            sft_steps=4,
            sft_batch_size=4,
            sft_corpus_size=8,
            rlhf_steps=2,
            tasks_per_batch=2,
            group_size=2,
            inner_epochs=2,
            eval_tasks=4,
        )
        base.update(overrides)
        return RunConfig(**base)

    return make
