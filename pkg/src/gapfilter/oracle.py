"""Brute-force time-domain projection used as ground truth for the spectral filter.

The estimate is restricted to the finite window of observations
``y(t) = xi(t) + eta(t)``, ``t in {-1, ..., -L} \\ S``, and solved directly from the
normal equations built out of covariance matrices. Nothing here touches
``(F + G)^{-1}`` or the block operators.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .exceptions import SingularDensityError
from .grid import GridLike, as_grid
from .indices import FunctionalSpec, MissingPattern, observed_indices
from .spectral import CovarianceSequence, SpectralDensity, covariance_sequence

logger = logging.getLogger(__name__)

RIDGE = 1e-12


@dataclass(frozen=True)
class ProjectionProblem:
    """Finite-window projection of ``A xi`` onto the span of observed ``y(t)``."""

    window: int
    observed: tuple[int, ...]
    functional: FunctionalSpec
    signal_cov: CovarianceSequence
    noise_cov: CovarianceSequence

    @property
    def dim(self) -> int:
        return self.functional.dim

    def _blocks(self, rows, cols, cov) -> np.ndarray:
        T = self.dim
        out = np.zeros((len(rows) * T, len(cols) * T), dtype=complex)
        for a, p in enumerate(rows):
            for b, q in enumerate(cols):
                out[a * T:(a + 1) * T, b * T:(b + 1) * T] = cov(p - q)
        return out

    def gram(self) -> np.ndarray:
        """``E[Y Y^*]`` for the stacked observations."""
        obs = self.observed
        return self._blocks(obs, obs, lambda n: self.signal_cov[n] + self.noise_cov[n])

    def target_cross(self) -> np.ndarray:
        """``E[X Y^*]`` with ``X`` the stacked ``xi(-j)`` over the functional support."""
        times = [-j for j in self.functional.coefficients]
        return self._blocks(times, self.observed, lambda n: self.signal_cov[n])

    def target_cov(self) -> np.ndarray:
        times = [-j for j in self.functional.coefficients]
        return self._blocks(times, times, lambda n: self.signal_cov[n])

    def stacked_a(self) -> np.ndarray:
        return np.concatenate(list(self.functional.coefficients.values())) if self.functional.coefficients else np.zeros(0)


@dataclass(frozen=True)
class OracleResult:
    weights: dict  # time t -> T-vector w(t); estimate is sum_t w(t)^T y(t)
    mse: float
    variance: float
    ridge: float  # 0 unless the Gram matrix needed regularisation
    observed: tuple[int, ...]


def build_problem(
    F: SpectralDensity,
    G: SpectralDensity,
    pattern: MissingPattern,
    functional: FunctionalSpec,
    L: int,
    grid: GridLike = None,
) -> ProjectionProblem:
    g = as_grid(grid)
    obs = tuple(observed_indices(pattern, L))
    max_lag = max(L, functional.max_index)
    return ProjectionProblem(
        window=L,
        observed=obs,
        functional=functional,
        signal_cov=covariance_sequence(F, max_lag, g),
        noise_cov=covariance_sequence(G, max_lag, g),
    )


def _factor(gram: np.ndarray):
    try:
        return scipy.linalg.cho_factor(gram, lower=True), 0.0
    except np.linalg.LinAlgError:
        ridge = RIDGE * float(np.trace(gram).real)
        logger.warning("Gram matrix not positive definite; adding ridge %.3e", ridge)
        try:
            return scipy.linalg.cho_factor(gram + ridge * np.eye(gram.shape[0]), lower=True), ridge
        except np.linalg.LinAlgError as exc:
            raise SingularDensityError("observation Gram matrix is ill-conditioned even with ridge") from exc


def solve_problem(prob: ProjectionProblem) -> OracleResult:
    a = prob.stacked_a()
    var = float(np.real(a @ prob.target_cov() @ a.conj())) if a.size else 0.0
    T = prob.dim
    if not prob.observed or a.size == 0:
        return OracleResult({}, max(var, 0.0), var, 0.0, prob.observed)
    factor, ridge = _factor(prob.gram())
    cross_ya = prob.target_cross().conj().T @ a.conj()  # E[Y X^*] conj(a)
    g = scipy.linalg.cho_solve(factor, cross_ya)
    explained = float(np.vdot(cross_ya, g).real)
    w = g.conj().reshape(len(prob.observed), T)
    return OracleResult(
        weights={t: w[i] for i, t in enumerate(prob.observed)},
        mse=max(var - explained, 0.0),
        variance=var,
        ridge=ridge,
        observed=prob.observed,
    )


def oracle_mse(
    F: SpectralDensity,
    G: SpectralDensity,
    pattern: MissingPattern,
    functional: FunctionalSpec,
    L: int,
    grid: GridLike = None,
) -> OracleResult:
    """Optimal weights on the observed window and the resulting error."""
    return solve_problem(build_problem(F, G, pattern, functional, L, grid))


def fir_mse(
    F: SpectralDensity,
    G: SpectralDensity,
    functional: FunctionalSpec,
    weights: Mapping[int, np.ndarray],
    grid: GridLike = None,
) -> float:
    """Exact error of the estimate ``sum_t weights[t]^T y(t)`` for any finite weights."""
    times = sorted(weights)
    span = max([abs(t) for t in times] + [functional.max_index, 1])
    max_lag = 2 * span
    g = as_grid(grid)
    prob = ProjectionProblem(
        window=span,
        observed=tuple(times),
        functional=functional,
        signal_cov=covariance_sequence(F, max_lag, g),
        noise_cov=covariance_sequence(G, max_lag, g),
    )
    a = prob.stacked_a()
    w = np.concatenate([np.asarray(weights[t], dtype=complex) for t in times]) if times else np.zeros(0)
    var = np.real(a @ prob.target_cov() @ a.conj()) if a.size else 0.0
    if not times:
        return float(var)
    cross = a @ prob.target_cross() @ w.conj()  # E[A xi conj(w^T Y)]
    observed_power = w @ prob.gram() @ w.conj()
    return float(np.real(var - 2.0 * np.real(cross) + observed_power))


@dataclass(frozen=True)
class OracleRow:
    L: int
    mse: float


def oracle_convergence(
    F: SpectralDensity,
    G: SpectralDensity,
    pattern: MissingPattern,
    functional: FunctionalSpec,
    L_list: Sequence[int],
    grid: GridLike = None,
) -> list[OracleRow]:
    """``mse_L`` for nested windows; non-increasing because the subspaces are nested."""
    return [OracleRow(L, oracle_mse(F, G, pattern, functional, L, grid).mse) for L in sorted(L_list)]
