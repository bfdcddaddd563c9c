import numpy as np

from nonconv.rng import replicate_rng, substream_rng


def test_replicate_streams_are_reproducible():
    a = replicate_rng(42, 7).random(16)
    b = replicate_rng(42, 7).random(16)
    assert np.array_equal(a, b)


def test_replicate_streams_differ_across_replicates():
    a = replicate_rng(42, 0).random(16)
    b = replicate_rng(42, 1).random(16)
    assert not np.array_equal(a, b)


def test_replicate_streams_differ_across_master_seeds():
    a = replicate_rng(1, 5).random(16)
    b = replicate_rng(2, 5).random(16)
    assert not np.array_equal(a, b)


def test_substream_domain_is_disjoint_from_replicates():
    # purpose streams must never collide with replicate streams of the
    # same master seed, even for large replicate indices
    sub = substream_rng(0, 3).random(8)
    for j in (0, 3, 2**20 + 3):
        assert not np.array_equal(sub, replicate_rng(0, j).random(8))


def test_substream_purposes_are_independent():
    a = substream_rng(9, 3).random(8)
    b = substream_rng(9, 7).random(8)
    assert not np.array_equal(a, b)
