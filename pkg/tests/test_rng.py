"""Seed derivation and stream construction."""

import numpy as np

from rlhf_forge.rng import derive_seed, make_rng


def test_derive_seed_is_deterministic():
    assert derive_seed("stage", 0, 1) == derive_seed("stage", 0, 1)


def test_derive_seed_depends_on_every_part():
    base = derive_seed("stage", 0, 1)
    assert derive_seed("stage", 0, 2) != base
    assert derive_seed("stage", 1, 1) != base
    assert derive_seed("other", 0, 1) != base


def test_derive_seed_is_order_sensitive():
    assert derive_seed("a", "b") != derive_seed("b", "a")


def test_derive_seed_has_no_concatenation_collisions():
    assert derive_seed("ab", "c") != derive_seed("a", "bc")
    assert derive_seed("a", 12) != derive_seed("a1", 2)


def test_derive_seed_fits_in_uint64():
    for parts in [("x",), ("y", 3), ("z", 1, 2, 3), (0,)]:
        seed = derive_seed(*parts)
        assert 0 <= seed < 2**64


def test_make_rng_gives_reproducible_streams():
    a = make_rng("noise", 7).standard_normal(8)
    b = make_rng("noise", 7).standard_normal(8)
    assert np.array_equal(a, b)


def test_make_rng_gives_distinct_streams_per_seed_part():
    a = make_rng("noise", 7).standard_normal(8)
    b = make_rng("noise", 8).standard_normal(8)
    c = make_rng("signal", 7).standard_normal(8)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)
