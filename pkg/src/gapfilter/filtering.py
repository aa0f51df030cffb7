"""Optimal linear filter for a functional of a noisy sequence with missing observations.

The estimate has spectral characteristic

    h(lam)^T = (A(lam)^T F(lam) - C(lam)^T) (F(lam) + G(lam))^{-1},
    C(lam)   = sum_{k in U} c(k) e^{i k lam},

where ``c`` solves the block system built in :mod:`gapfilter.fourier`. The error is

    Delta = <R a, B^{-1} R a> + <Q a, a>
          = (1/2pi) int r_G^T F conj(r_G) + (1/2pi) int r_F^T G conj(r_F),

with ``r_F = h`` and ``r_G = A - h``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .exceptions import DimensionMismatchError, SingularDensityError
from .fourier import OperatorBlocks, SpectralPieces, assemble_operators, grid_pieces
from .grid import Grid, GridLike, as_grid, dft_coefficients, trig_series
from .indices import (
    FunctionalSpec,
    IndexUniverse,
    MissingPattern,
    build_universe,
    default_truncation,
    embed_coefficients,
    observed_indices,
)
from .spectral import SpectralDensity, check_minimality

logger = logging.getLogger(__name__)

SOLVER_RTOL = 1e-10
CONSTRAINT_RTOL = 1e-4
MSE_RTOL = 1e-6


def _blocks(vec: np.ndarray, u: IndexUniverse, T: int) -> np.ndarray:
    return np.asarray(vec).reshape(len(u), T)


def solve_coefficients(ops: OperatorBlocks, a_bar: np.ndarray) -> np.ndarray:
    """Solve the coefficient system (see :class:`OperatorBlocks` for the orientation)."""
    rhs = ops.R_mat.T @ a_bar
    scale = np.linalg.norm(rhs)
    if scale == 0.0:
        return np.zeros_like(rhs)
    factor = ops.cholesky
    if factor is not None:
        c = scipy.linalg.cho_solve(factor, rhs)
        method = "cholesky"
    else:
        warnings.warn("B is not positive definite; falling back to least squares", RuntimeWarning, stacklevel=2)
        c = scipy.linalg.lstsq(ops.system, rhs)[0]
        method = "lstsq"
    resid = np.linalg.norm(ops.system @ c - rhs)
    if resid > SOLVER_RTOL * scale:
        if method == "cholesky":
            c = scipy.linalg.lstsq(ops.system, rhs)[0]
            resid = np.linalg.norm(ops.system @ c - rhs)
        if resid > SOLVER_RTOL * scale:
            raise SingularDensityError(f"coefficient system residual {resid / scale:.3e} exceeds {SOLVER_RTOL}")
    return c


def _symbol_rows(u: IndexUniverse, a_bar: np.ndarray, T: int, lam: np.ndarray) -> np.ndarray:
    return trig_series(_blocks(a_bar, u, T), u.indices, lam, sign=-1)


def residual_symbols(
    pieces: SpectralPieces, u: IndexUniverse, a_bar: np.ndarray, c: np.ndarray, grid: GridLike
) -> tuple[np.ndarray, np.ndarray]:
    """``(r_F, r_G)`` on the grid, each of shape ``(N, T)``; ``r_F = h``."""
    g = as_grid(grid)
    T = pieces.F.shape[1]
    A = _symbol_rows(u, a_bar, T, g.lam)
    C = trig_series(_blocks(c, u, T), u.indices, g.lam, sign=+1)
    r_F = np.einsum("ni,nij->nj", np.einsum("ni,nij->nj", A, pieces.F) - C, pieces.W)
    r_G = np.einsum("ni,nij->nj", np.einsum("ni,nij->nj", A, pieces.G) + C, pieces.W)
    return r_F, r_G


def spectral_characteristic(
    F: SpectralDensity,
    G: SpectralDensity,
    u: IndexUniverse,
    a_bar: np.ndarray,
    c: np.ndarray,
    grid: GridLike = None,
) -> np.ndarray:
    """``h`` on every grid node, shape ``(N, T)``."""
    g = as_grid(grid)
    return residual_symbols(grid_pieces(F, G, g), u, a_bar, c, g)[0]


def mse_quadratic(ops: OperatorBlocks, a_bar: np.ndarray, c: np.ndarray | None = None) -> float:
    """``<R a, B^{-1} R a> + <Q a, a>``, clamped at zero."""
    if c is None:
        c = solve_coefficients(ops, a_bar)
    rhs = ops.R_mat.T @ a_bar
    value = np.vdot(c, rhs).real + np.vdot(a_bar, ops.Q_mat.T @ a_bar).real
    return max(float(value), 0.0)


def _quad_form_mean(r: np.ndarray, D: np.ndarray) -> float:
    # (1/N) sum_n r_n^T D_n conj(r_n)
    return float(np.einsum("ni,nij,nj->", r, D, r.conj()).real / r.shape[0])


def mse_integral(
    F: SpectralDensity,
    G: SpectralDensity,
    u: IndexUniverse,
    a_bar: np.ndarray,
    c: np.ndarray,
    grid: GridLike = None,
) -> float:
    g = as_grid(grid)
    pieces = grid_pieces(F, G, g)
    r_F, r_G = residual_symbols(pieces, u, a_bar, c, g)
    return max(_quad_form_mean(r_G, pieces.F) + _quad_form_mean(r_F, pieces.G), 0.0)


def impulse_response(h_grid: np.ndarray, max_lag: int) -> dict[int, np.ndarray]:
    """Weights ``h~(j) = (1/2pi) int h e^{-i j lam} dlam`` for ``|j| <= max_lag``.

    The estimate is ``sum_j h~(j)^T (xi(j) + eta(j))``.
    """
    h_grid = np.asarray(h_grid)
    Grid(h_grid.shape[0]).require(max_lag, "impulse-response lag")
    lags = list(range(-max_lag, max_lag + 1))
    coefs = dft_coefficients(h_grid, lags)
    return {j: coefs[i] for i, j in enumerate(lags)}


@dataclass(eq=False)
class FilterSolution:
    """Solved filter on a truncation ``U_K`` and a frequency grid."""

    F: SpectralDensity
    G: SpectralDensity
    pattern: MissingPattern
    functional: FunctionalSpec
    universe: IndexUniverse
    grid: Grid
    ops: OperatorBlocks = field(repr=False)
    pieces: SpectralPieces = field(repr=False)
    a_bar: np.ndarray = field(repr=False)
    c: np.ndarray = field(repr=False)
    h: np.ndarray = field(repr=False)
    r_F: np.ndarray = field(repr=False)
    r_G: np.ndarray = field(repr=False)
    mse: float = 0.0
    mse_integral: float = 0.0

    @property
    def dim(self) -> int:
        return self.functional.dim

    @property
    def K(self) -> int:
        return self.universe.K

    def coefficients(self) -> dict[int, np.ndarray]:
        c = _blocks(self.c, self.universe, self.dim)
        return {j: c[p] for p, j in enumerate(self.universe.indices)}

    def impulse_response(self, max_lag: int) -> dict[int, np.ndarray]:
        return impulse_response(self.h, max_lag)

    def projection_residual(self) -> float:
        """``max_{j in U_K} |h~(j)| / max_j |h~(j)|``; zero for an admissible estimate."""
        coefs = dft_coefficients(self.h, range(-self.grid.size // 2, self.grid.size // 2))
        norms = np.linalg.norm(coefs, axis=1)
        top = norms.max()
        if top == 0.0:
            return 0.0
        on_u = [j + self.grid.size // 2 for j in self.universe.indices]
        return float(norms[on_u].max() / top)

    def orthogonality_residual(self, window: int) -> float:
        """Largest Fourier coefficient of ``(A - h)^T F - h^T G`` at observed times in the
        window, relative to the largest coefficient of ``A^T F`` (the target's
        cross-covariance with the signal). The residual itself can vanish identically,
        so it is not used as its own scale."""
        A = self.functional.symbol(self.grid.lam)
        AF = np.einsum("ni,nij->nj", A, self.pieces.F)
        err = AF - np.einsum("ni,nij->nj", self.h, self.pieces.F + self.pieces.G)
        obs = observed_indices(self.pattern, window)
        self.grid.require(window, "orthogonality window")
        lags = range(-self.grid.size // 2, self.grid.size // 2)
        top = np.linalg.norm(dft_coefficients(AF, lags), axis=1).max()
        if top == 0.0 or not obs:
            return 0.0
        norms = np.linalg.norm(dft_coefficients(err, obs), axis=1)
        return float(norms.max() / top)

    def mse_of(self, h: np.ndarray) -> float:
        """Error of an arbitrary characteristic ``h`` under this solution's densities."""
        A = self.functional.symbol(self.grid.lam)
        return _quad_form_mean(A - h, self.pieces.F) + _quad_form_mean(h, self.pieces.G)


def solve_filter(
    F: SpectralDensity,
    G: SpectralDensity,
    pattern: MissingPattern,
    functional: FunctionalSpec,
    K: int | None = None,
    grid: GridLike = None,
    *,
    check: bool = True,
    strict: bool = False,
) -> FilterSolution:
    """Spectral characteristic, coefficients and error of the optimal estimate.

    ``check`` runs the minimality test first. The truncation defaults to
    ``4 * (max functional index + deepest gap)``. Single gaps, single missing points
    and finite functionals are all special cases of ``pattern`` and ``functional``.
    """
    g = as_grid(grid)
    if F.dim != functional.dim or G.dim != functional.dim:
        raise DimensionMismatchError(
            f"densities have dimensions {F.dim}, {G.dim} but the functional has {functional.dim}"
        )
    if check:
        rep = check_minimality(F, G, g)
        if not rep.passed:
            raise SingularDensityError(f"minimality condition fails: {rep.message}")
    K = default_truncation(pattern, functional) if K is None else K
    u = build_universe(pattern, K)
    a_bar = embed_coefficients(functional, u)
    pieces = grid_pieces(F, G, g)
    ops = assemble_operators(F, G, u, g, pieces=pieces, strict=strict)
    c = solve_coefficients(ops, a_bar)
    r_F, r_G = residual_symbols(pieces, u, a_bar, c, g)
    quad = mse_quadratic(ops, a_bar, c)
    integ = max(_quad_form_mean(r_G, pieces.F) + _quad_form_mean(r_F, pieces.G), 0.0)
    return FilterSolution(
        F=F, G=G, pattern=pattern, functional=functional, universe=u, grid=g,
        ops=ops, pieces=pieces, a_bar=a_bar, c=c, h=r_F, r_F=r_F, r_G=r_G,
        mse=quad, mse_integral=integ,
    )


@dataclass(frozen=True)
class ConvergenceRow:
    K: int
    mse: float
    rel_change: float  # relative to the previous row; nan for the first


def convergence_study(
    F: SpectralDensity,
    G: SpectralDensity,
    pattern: MissingPattern,
    functional: FunctionalSpec,
    K_list: Sequence[int],
    grid: GridLike = None,
) -> list[ConvergenceRow]:
    """Error ``Delta_K`` for ascending truncations with successive relative changes."""
    K_list = list(K_list)
    if K_list != sorted(K_list):
        raise ValueError(f"truncations must be ascending, got {K_list}")
    rows, prev = [], None
    for i, K in enumerate(K_list):
        sol = solve_filter(F, G, pattern, functional, K, grid, check=(i == 0))
        if prev is None:
            rel = float("nan")
        elif prev == 0.0:
            rel = 0.0 if sol.mse == 0.0 else float("inf")
        else:
            rel = abs(sol.mse - prev) / abs(prev)
        rows.append(ConvergenceRow(K, sol.mse, rel))
        prev = sol.mse
    return rows
