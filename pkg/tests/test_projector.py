import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flora import projector
from flora.errors import ConfigError, ShapeError
from flora.matcore import GaussStream, derive_seed
from flora.projector import ProjectionSpec, down_project, materialize, reconstruction_error, up_project
from flora.verify import monte_carlo_reconstruction


def randn(seed, *shape):
    return GaussStream(seed).next(int(np.prod(shape))).reshape(shape)


def test_spec_validation():
    with pytest.raises(ConfigError):
        ProjectionSpec(1, 0, 4)
    with pytest.raises(ConfigError):
        ProjectionSpec(1, 2, 0)
    assert ProjectionSpec(-1, 1, 1).seed == 2**64 - 1


def test_materialize_is_deterministic():
    spec = ProjectionSpec(3, 4, 9)
    assert np.array_equal(materialize(spec), materialize(spec))
    assert materialize(spec).shape == (4, 9)


def test_entry_variance():
    a = materialize(ProjectionSpec(10, 256, 512))
    assert 0.9 / 256 <= a.var() <= 1.1 / 256


def test_mean_gram_is_identity():
    total = np.zeros((32, 32))
    for k in range(200):
        a = materialize(ProjectionSpec(derive_seed(1, k), 64, 32))
        total += a.T @ a
    assert np.max(np.abs(total / 200 - np.eye(32))) <= 0.05


def test_zero_in_zero_out():
    spec = ProjectionSpec(4, 3, 8)
    assert np.array_equal(down_project(np.zeros((2, 8)), spec), np.zeros((2, 3)))
    assert np.array_equal(up_project(np.zeros((2, 3)), spec), np.zeros((2, 8)))


def test_shape_errors():
    spec = ProjectionSpec(4, 3, 8)
    with pytest.raises(ShapeError):
        down_project(np.zeros((2, 7)), spec)
    with pytest.raises(ShapeError):
        up_project(np.zeros((2, 4)), spec)


def test_identity_injection():
    g = randn(5, 3, 6)
    spec = ProjectionSpec(0, 6, 6)
    with projector.identity_projection():
        assert np.array_equal(down_project(g, spec), g)
        assert np.array_equal(up_project(down_project(g, spec), spec), g)
        assert reconstruction_error(spec) == 0.0
        with pytest.raises(ShapeError):
            materialize(ProjectionSpec(0, 2, 6))
    assert not np.array_equal(down_project(g, spec), g)


def test_injected_shape_is_checked():
    with projector.injected_projection(lambda spec: np.ones((1, 1))):
        with pytest.raises(ShapeError):
            materialize(ProjectionSpec(0, 2, 3))


def test_row_norms_preserved():
    good = 0
    for k in range(1000):
        g = randn(derive_seed(2, k), 8, 512)
        y = down_project(g, ProjectionSpec(derive_seed(3, k), 128, 512))
        ratios = np.linalg.norm(y, axis=1) / np.linalg.norm(g, axis=1)
        good += bool(np.all((ratios >= 0.5) & (ratios <= 1.5)))
    assert good >= 990


def test_unbiased_over_2000_seeds():
    g = randn(6, 4, 64)
    mean, se = monte_carlo_reconstruction(g, 16, 2000, 77)
    z = np.abs(mean - g) / se
    worst = float(z.max())
    assert worst <= 3.0, f"max z {worst:.2f}"


def test_unbiased_calibrated():
    # sum of z^2 over 256 entries ~ chi^2(256): mean 256, sd ~22.6
    g = randn(8, 4, 64)
    mean, se = monte_carlo_reconstruction(g, 16, 2000, 78)
    z2 = float(np.sum(((mean - g) / se) ** 2))
    assert 256 - 4 * 22.6 <= z2 <= 256 + 4 * 22.6


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**63), n=st.integers(1, 5), m=st.integers(1, 12), r=st.integers(1, 6))
def test_linearity(seed, n, m, r):
    spec = ProjectionSpec(seed, r, m)
    g1, g2 = randn(seed, n, m), randn(seed + 1, n, m)
    lhs = down_project(g1 + g2, spec)
    rhs = down_project(g1, spec) + down_project(g2, spec)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


def test_concentration_rank_small_sample():
    from flora.verify import concentration_rank

    r = concentration_rank(512, 0.01, 0.5)
    assert r == 5907
    errs = [reconstruction_error(ProjectionSpec(derive_seed(9, k), r, 512)) for k in range(10)]
    assert max(errs) <= 0.5


def test_error_decreases_with_rank():
    med = {}
    for r in (16, 256):
        med[r] = np.median([reconstruction_error(ProjectionSpec(derive_seed(4, r, k), r, 256)) for k in range(100)])
    assert med[256] < med[16]
