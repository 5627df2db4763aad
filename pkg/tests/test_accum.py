import warnings

import numpy as np
import pytest

from flora import projector
from flora.accum import CompressedAccumulator, NaiveAccumulator
from flora.errors import CompressionWarning, ConfigError, DataError, ShapeError, StateError
from flora.matcore import GaussStream, derive_seed


def randn(seed, *shape):
    return GaussStream(seed).next(int(np.prod(shape))).reshape(shape)


def test_init():
    acc = CompressedAccumulator(4, 6, 2, 8, seed=3)
    assert np.array_equal(acc.c, np.zeros((4, 2)))
    assert acc.steps_seen == 0
    assert CompressedAccumulator(4, 6, 2, 8, seed=3).spec == acc.spec
    assert acc.state_size == 4 * 2


def test_state_size_independent_of_tau():
    sizes = {CompressedAccumulator(10, 50, 4, tau, seed=0).state_size for tau in (1, 16, 1000)}
    assert sizes == {40}


def test_bad_config():
    with pytest.raises(ConfigError):
        CompressedAccumulator(2, 2, 0, 1, 0)
    with pytest.raises(ConfigError):
        CompressedAccumulator(2, 2, 1, 0, 0)


def test_rank_above_dim_warns_only():
    with pytest.warns(CompressionWarning):
        acc = CompressedAccumulator(2, 3, 5, 1, 0)
    assert acc.c.shape == (2, 5)


def test_no_warning_when_compressing():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        CompressedAccumulator(2, 8, 3, 1, 0)


def test_errors():
    acc = CompressedAccumulator(2, 3, 2, 1, 0)
    with pytest.raises(ShapeError):
        acc.accumulate(np.zeros((3, 2)))
    with pytest.raises(DataError):
        acc.accumulate(np.array([[0.0, np.inf, 0.0], [0.0, 0.0, 0.0]]))
    acc.accumulate(np.zeros((2, 3)))
    with pytest.raises(StateError):
        acc.accumulate(np.zeros((2, 3)))
    with pytest.raises(ConfigError):
        acc.reconstruct("median")


def test_reconstruct_needs_full_cycle():
    acc = CompressedAccumulator(2, 3, 2, 3, 0)
    acc.accumulate(np.ones((2, 3)))
    with pytest.raises(StateError):
        acc.reconstruct()


def test_zero_gradients():
    acc = CompressedAccumulator(3, 5, 2, 4, 0)
    for _ in range(4):
        acc.accumulate(np.zeros((3, 5)))
    assert np.array_equal(acc.c, np.zeros((3, 2)))


def test_identity_projection_mean():
    g = randn(1, 3, 4)
    with projector.identity_projection():
        acc = CompressedAccumulator(3, 4, 4, 2, 0)
        acc.accumulate(g).accumulate(3 * g)
        assert np.allclose(acc.reconstruct("mean"), 2 * g, rtol=0, atol=1e-15)
        assert np.allclose(acc.reconstruct("sum"), 4 * g, rtol=0, atol=1e-15)


def test_linearity():
    g1, g2 = randn(2, 3, 7), randn(3, 3, 7)
    one = CompressedAccumulator(3, 7, 2, 2, seed=5)
    one.accumulate(g1 + g2)
    two = CompressedAccumulator(3, 7, 2, 2, seed=5)
    two.accumulate(g1).accumulate(g2)
    assert np.max(np.abs(one.c - two.c)) <= 1e-10


def test_sum_is_total_times_gram():
    grads = [randn(derive_seed(4, t), 3, 6) for t in range(5)]
    acc = CompressedAccumulator(3, 6, 4, 5, seed=9)
    for g in grads:
        acc.accumulate(g)
    a = projector.materialize(acc.spec)
    assert np.max(np.abs(acc.reconstruct("sum") - sum(grads) @ a.T @ a)) <= 1e-12


def test_reset_resamples():
    acc = CompressedAccumulator(2, 5, 2, 1, seed=1)
    first_seed = acc.spec.seed
    first = projector.materialize(acc.spec)
    acc.accumulate(np.ones((2, 5)))
    acc.reset()
    assert acc.steps_seen == 0
    assert np.array_equal(acc.c, np.zeros((2, 2)))
    assert acc.spec.seed != first_seed and acc.cycle == 1
    assert not np.array_equal(projector.materialize(acc.spec), first)


def test_replay_is_bit_identical():
    grads = [randn(derive_seed(8, t), 4, 9) for t in range(6)]

    def run():
        acc = CompressedAccumulator(4, 9, 3, 3, seed=21)
        outs = []
        for g in grads:
            acc.accumulate(g)
            if acc.steps_seen == acc.tau:
                outs.append(acc.reconstruct())
                acc.reset()
        return np.concatenate(outs).tobytes()

    assert run() == run()


def test_mean_unbiased_over_5000_seeds():
    grads = [randn(derive_seed(10, t), 4, 16) for t in range(3)]
    true_mean = sum(grads) / 3
    total = np.zeros((4, 16))
    total_sq = np.zeros((4, 16))
    n_seeds = 5000
    for k in range(n_seeds):
        acc = CompressedAccumulator(4, 16, 4, 3, seed=derive_seed(11, k))
        for g in grads:
            acc.accumulate(g)
        y = acc.reconstruct()
        total += y
        total_sq += y * y
    mean = total / n_seeds
    se = np.sqrt((total_sq - n_seeds * mean**2) / (n_seeds - 1) / n_seeds)
    z = np.abs(mean - true_mean) / se
    worst = float(z.max())
    assert worst <= 3.0, f"max z {worst:.2f}"


def test_identical_gradients_reconstruct_near_g():
    g = randn(12, 2, 8)
    total = np.zeros_like(g)
    for k in range(3000):
        acc = CompressedAccumulator(2, 8, 4, 4, seed=derive_seed(13, k))
        for _ in range(4):
            acc.accumulate(g)
        total += acc.reconstruct()
    assert np.max(np.abs(total / 3000 - g)) < 0.1 * np.max(np.abs(g))


def test_naive_accumulator():
    acc = NaiveAccumulator((2, 3), 2)
    g = randn(14, 2, 3)
    acc.accumulate(g).accumulate(3 * g)
    assert np.allclose(acc.reconstruct(), 2 * g)
    assert acc.state_size == 6
    with pytest.raises(StateError):
        acc.accumulate(g)
    acc.reset()
    assert acc.steps_seen == 0
