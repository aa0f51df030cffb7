import numpy as np
import pytest

from gapfilter import ConstantDensity, GridResolutionError, PatternError, solve_filter
from gapfilter.simulation import (
    apply_weights,
    empirical_covariance,
    empirical_mse,
    empirical_mse_weights,
    filter_weights,
    functional_values,
    sample_paths,
    tail_mass,
)
from gapfilter.spectral import zero_density


def within(est, target, k=3.0):
    """Every entry of the estimate lies within ``k`` standard errors of the target."""
    mean, se = np.asarray(est.mean), np.asarray(est.se)
    target = np.broadcast_to(target, mean.shape)
    for part in (np.real, np.imag):
        d, s = np.abs(part(mean) - part(target)), part(se)
        if np.any(d > k * s + 1e-12):
            return False
    return True


def test_white_lag_zero_and_one(white):
    batch = sample_paths(white, 4000, 32, seed=1, grid=256)
    assert within(empirical_covariance(batch, 0), np.eye(1))
    assert within(empirical_covariance(batch, 1), np.zeros((1, 1)))


def test_ar_covariance_at_lag_two(ar_scalar):
    batch = sample_paths(ar_scalar, 4000, 64, seed=2, grid=1024)
    target = ar_scalar.exact_covariance(2)
    assert within(empirical_covariance(batch, 2), target)


def test_vector_covariances(ar_pair):
    batch = sample_paths(ar_pair, 3000, 48, seed=3, grid=1024)
    for lag in range(4):
        assert within(empirical_covariance(batch, lag), ar_pair.exact_covariance(lag), k=4.0)


def test_same_seed_same_paths(ar_pair, noise_pair):
    a = sample_paths(ar_pair, 600, 16, seed=9, grid=256, noise=noise_pair)
    b = sample_paths(ar_pair, 600, 16, seed=9, grid=256, noise=noise_pair, workers=3)
    np.testing.assert_array_equal(a.signal, b.signal)
    np.testing.assert_array_equal(a.noise, b.noise)
    c = sample_paths(ar_pair, 600, 16, seed=10, grid=256)
    assert not np.array_equal(a.signal, c.signal)


def test_prefix_of_a_batch_is_stable(white):
    small = sample_paths(white, 300, 16, seed=4, grid=256)
    large = sample_paths(white, 700, 16, seed=4, grid=256)
    np.testing.assert_array_equal(small.signal, large.signal[:300])


def test_signal_and_noise_are_uncorrelated(white):
    batch = sample_paths(white, 4000, 16, seed=5, grid=256, noise=white)
    cross = np.einsum("pt,pt->p", batch.signal[:, :, 0], batch.noise[:, :, 0].conj()) / 16
    assert abs(cross.mean()) <= 4 * cross.std() / np.sqrt(cross.size)


def test_path_length_needs_fine_grid(white):
    with pytest.raises(GridResolutionError):
        sample_paths(white, 10, 64, grid=256)


def test_time_axis(white):
    batch = sample_paths(white, 2, 8, grid=128)
    assert list(batch.times) == list(range(-8, 0))
    assert batch.column(-1) == 7
    with pytest.raises(PatternError):
        batch.column(0)


def test_functional_and_weights_use_time_positions(scalar_functional):
    x = np.arange(1, 9, dtype=complex)[None, :, None]  # time -8 .. -1
    assert functional_values(scalar_functional, x)[0] == pytest.approx(8 + 5 + 0.5 * 4)
    assert apply_weights({-1: [2.0], -3: [1.0]}, x)[0] == pytest.approx(16 + 6)


def test_noiseless_error_is_tiny(ar_scalar, gap, scalar_functional):
    sol = solve_filter(ar_scalar, zero_density(1), gap, scalar_functional, 24, 1024)
    batch = sample_paths(ar_scalar, 500, 32, seed=6, grid=1024)
    est = empirical_mse(sol, batch)
    assert est.mean <= 1e-10


def test_white_white_error(white, gap):
    from gapfilter import FunctionalSpec

    f = FunctionalSpec(1, {1: [1.0], 4: [1.0]})
    sol = solve_filter(white, white, gap, f, 16, 512)
    batch = sample_paths(white, 4000, 16, seed=7, grid=512, noise=white)
    est = empirical_mse(sol, batch)
    assert abs(est.mean - 1.0) <= 3 * est.se


def test_ar_gap_error(ar_scalar, gap, scalar_functional):
    G = ConstantDensity.identity(1, 0.5)
    sol = solve_filter(ar_scalar, G, gap, scalar_functional, 32, 1024)
    batch = sample_paths(ar_scalar, 4000, 64, seed=8, grid=1024, noise=G)
    assert tail_mass(sol, 64) <= 1e-12
    est = empirical_mse(sol, batch)
    assert abs(est.mean - sol.mse) <= 3 * est.se


def test_optimal_weights_beat_perturbed_ones(ar_scalar, gap, scalar_functional):
    G = ConstantDensity.identity(1, 0.5)
    sol = solve_filter(ar_scalar, G, gap, scalar_functional, 32, 1024)
    batch = sample_paths(ar_scalar, 3000, 48, seed=12, grid=1024, noise=G)
    w = filter_weights(sol, 48)
    base = empirical_mse_weights(w, scalar_functional, batch)
    rng = np.random.default_rng(0)
    scale = np.sqrt(np.mean([abs(v[0]) ** 2 for v in w.values()]))
    for _ in range(20):
        pert = {t: v + 0.3 * scale * rng.standard_normal(1) for t, v in w.items()}
        other = empirical_mse_weights(pert, scalar_functional, batch)
        # same paths on both sides: the paired difference is what matters
        assert other.mean >= base.mean - 3 * base.se


def test_mismatched_noise_shape(white, scalar_functional):
    a = sample_paths(white, 10, 16, grid=128)
    b = sample_paths(white, 10, 8, grid=128)
    from gapfilter import DimensionMismatchError

    with pytest.raises(DimensionMismatchError):
        empirical_mse_weights({-1: [1.0]}, scalar_functional, a, b)
