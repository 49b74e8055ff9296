"""Deterministic PRNG: reference-vector, chunking, and distribution tests."""

import numpy as np
import pytest

from spokesense.errors import ValidationError
from spokesense.rng import Prng, derive_seed, mix64

MASK = (1 << 64) - 1


def splitmix64_reference(seed: int, n: int) -> list[int]:
    """Independent scalar implementation of the classic splitmix64 stream."""
    out = []
    state = seed & MASK
    for _ in range(n):
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


def test_frozen_reference_vectors():
    # First outputs of the published splitmix64 stream for seed 0.
    assert splitmix64_reference(0, 3) == [
        16294208416658607535,
        7960286522194355700,
        487617019471545679,
    ]
    assert list(Prng(0).u64_block(3)) == [
        16294208416658607535,
        7960286522194355700,
        487617019471545679,
    ]


def test_matches_reference_for_many_seeds():
    rng = np.random.RandomState(1)
    for _ in range(25):
        seed = int(rng.randint(0, 1 << 62)) * 4 + int(rng.randint(0, 4))
        n = int(rng.randint(1, 40))
        assert list(Prng(seed).u64_block(n)) == splitmix64_reference(seed, n)


def test_wraparound_seed():
    assert list(Prng(MASK).u64_block(2)) == splitmix64_reference(MASK, 2)


def test_chunk_invariance():
    whole = list(Prng(99).u64_block(64))
    rng = np.random.RandomState(2)
    for _ in range(10):
        p = Prng(99)
        pieces = []
        while len(pieces) < 64:
            k = int(rng.randint(1, 9))
            pieces.extend(p.u64_block(min(k, 64 - len(pieces))))
        assert pieces == whole


def test_scalar_and_block_agree():
    p1, p2 = Prng(7), Prng(7)
    assert [p1.u64() for _ in range(10)] == list(p2.u64_block(10))


def test_uniform_range_and_determinism():
    u = Prng(3).uniform_block(10000)
    assert u.min() > 0.0 and u.max() <= 1.0
    assert np.array_equal(u, Prng(3).uniform_block(10000))
    # mean of U(0,1] over 10k draws: within 5 sigma of 1/2
    assert abs(u.mean() - 0.5) < 5 * (1.0 / np.sqrt(12 * 10000))


def test_gaussian_moments():
    g = Prng(5).gaussian_block(200000)
    assert abs(g.mean()) < 0.02
    assert abs(g.std() - 1.0) < 0.02
    # fourth standardized moment of a Gaussian is 3
    assert abs(np.mean(g**4) - 3.0) < 0.15


def test_gaussian_counter_advance_is_size_only():
    p = Prng(11)
    p.gaussian_block(3)  # consumes 2 * ceil(3/2) = 4 raw draws
    after_odd = p.u64()
    p2 = Prng(11)
    p2.gaussian_block(4)  # also 4 raw draws
    assert p2.u64() == after_odd


def test_below_bounds():
    p = Prng(17)
    draws = [p.below(7) for _ in range(2000)]
    assert min(draws) == 0 and max(draws) == 6
    with pytest.raises(ValidationError):
        p.below(0)


def test_shuffle_is_permutation_and_deterministic():
    items = list(range(30))
    Prng(23).shuffle(items)
    assert sorted(items) == list(range(30))
    items2 = list(range(30))
    Prng(23).shuffle(items2)
    assert items == items2
    assert items != list(range(30))  # astronomically unlikely to be identity


def test_permutation_covers_all_indices():
    perm = Prng(29).permutation(50)
    assert sorted(perm.tolist()) == list(range(50))


def test_mix64_matches_reference_finalizer():
    rng = np.random.RandomState(3)
    for _ in range(50):
        v = int(rng.randint(0, 1 << 62))
        z = (v + 0x9E3779B97F4A7C15) & MASK
        # mix64 applied to the incremented state reproduces draw 0
        assert Prng(v).u64() == mix64(z)


def test_derive_seed_separates_substreams():
    base = 1234
    a = derive_seed(base, "band", 0)
    b = derive_seed(base, "band", 1)
    c = derive_seed(base, "impulse")
    assert len({a, b, c}) == 3
    assert derive_seed(base, "band", 0) == a  # stable
    # different base seeds give different derivations
    assert derive_seed(base + 1, "band", 0) != a


def test_derive_seed_order_matters():
    assert derive_seed(0, "a", "b") != derive_seed(0, "b", "a")
    assert derive_seed(0, 1, 2) != derive_seed(0, 2, 1)


def test_negative_block_size_rejected():
    with pytest.raises(ValidationError):
        Prng(0).u64_block(-1)
