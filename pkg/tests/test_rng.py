import numpy as np

from betagraph.rng import rng, substream


def test_same_seed_same_stream():
    a = rng(42).random(1000)
    b = rng(42).random(1000)
    assert np.array_equal(a, b)


def test_different_seeds_differ():
    assert not np.array_equal(rng(1).random(100), rng(2).random(100))


def test_permutation_is_bijection():
    p = rng(7).permutation(257)
    assert np.array_equal(np.sort(p), np.arange(257))


def test_normal_stream_mean_clt_bound():
    xs = rng(123).standard_normal(100_000)
    # 3 sigma / sqrt(n) < 0.01; the contract allows 0.02
    assert abs(xs.mean()) < 0.02
    assert abs(xs.std() - 1.0) < 0.02


def test_substreams_independent_and_stable():
    a = substream(5, 0).random(50)
    b = substream(5, 1).random(50)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, substream(5, 0).random(50))


def test_pcg64_bit_generator():
    assert type(rng(0).bit_generator).__name__ == "PCG64"
