import numpy as np
import pytest

from gapfilter import ConstantDensity, FunctionalSpec, MissingPattern, fir_mse, oracle_mse, solve_filter
from gapfilter.oracle import build_problem, oracle_convergence
from gapfilter.spectral import zero_density

ONES5 = FunctionalSpec(1, {j: [1.0] for j in range(1, 6)})


def test_white_white_oracle():
    one = ConstantDensity.identity(1)
    for L in (5, 16):
        assert oracle_mse(one, one, MissingPattern(), ONES5, L, 256).mse == pytest.approx(2.5, abs=1e-12)


def test_noiseless_oracle_reproduces_functional(ar_scalar, gap, scalar_functional):
    res = oracle_mse(ar_scalar, zero_density(1), gap, scalar_functional, 16, 1024)
    assert res.mse <= 1e-10
    for j, a in scalar_functional.coefficients.items():
        np.testing.assert_allclose(res.weights[-j], a, atol=1e-8)


def test_gap_times_are_never_solved_for(ar_scalar, gap, scalar_functional):
    res = oracle_mse(ar_scalar, ConstantDensity.identity(1, 0.5), gap, scalar_functional, 16, 1024)
    assert not set(res.weights) & set(gap.missing)
    assert res.ridge == 0.0


def test_gram_is_hermitian_psd(ar_pair, noise_pair, two_gaps, pair_functional):
    gram = build_problem(ar_pair, noise_pair, two_gaps, pair_functional, 16, 1024).gram()
    assert np.abs(gram - gram.conj().T).max() <= 1e-12
    assert np.linalg.eigvalsh(gram).min() > 0


def test_oracle_matches_spectral_solution(ar_scalar, gap):
    G = ConstantDensity.identity(1, 0.5)
    f = FunctionalSpec(1, {1: [1.0], 4: [1.0]})
    spectral = solve_filter(ar_scalar, G, gap, f, 32, 4096).mse
    oracle = oracle_mse(ar_scalar, G, gap, f, 32, 4096).mse
    assert abs(oracle - spectral) / spectral <= 1e-3


def test_fir_error_of_oracle_weights(ar_pair, noise_pair, two_gaps, pair_functional):
    res = oracle_mse(ar_pair, noise_pair, two_gaps, pair_functional, 16, 1024)
    assert fir_mse(ar_pair, noise_pair, pair_functional, res.weights, 1024) == pytest.approx(res.mse, rel=1e-9)
    worse = {t: w * 1.05 for t, w in res.weights.items()}
    assert fir_mse(ar_pair, noise_pair, pair_functional, worse, 1024) > res.mse


def test_window_sequence_is_non_increasing(ar_pair, noise_pair, two_gaps, pair_functional):
    rows = oracle_convergence(ar_pair, noise_pair, two_gaps, pair_functional, [8, 16, 32], 1024)
    assert all(b.mse <= a.mse + 1e-10 for a, b in zip(rows, rows[1:]))
    assert rows[-1].mse >= 0.0


def test_window_sequence_constant_for_white_densities():
    one = ConstantDensity.identity(1)
    rows = oracle_convergence(one, one, MissingPattern(), ONES5, [8, 16, 32], 512)
    assert max(r.mse for r in rows) - min(r.mse for r in rows) <= 1e-12


def test_fully_masked_window_leaves_variance(ar_scalar):
    pattern = MissingPattern.single_gap(1, 40)
    f = FunctionalSpec(1, {42: [1.0]})
    res = oracle_mse(ar_scalar, ConstantDensity.identity(1), pattern, f, 41, 1024)
    assert res.weights == {}
    assert res.mse == pytest.approx(res.variance)
    assert res.variance == pytest.approx(ar_scalar.exact_covariance(0)[0, 0].real, rel=1e-10)
