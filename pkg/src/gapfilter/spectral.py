"""Matrix-valued spectral densities and covariance sequences.

A density ``F`` maps a frequency ``lam`` in [-pi, pi) to a T x T Hermitian positive
semidefinite matrix. Covariances follow the convention

    R(n) = E x(j + n) x(j)^*  =  (1/2pi) * int exp(i n lam) F(lam) dlam.

Three concrete representations are provided (constant, autoregressive-type,
piecewise-constant) plus a lazy pointwise sum. Sequences are complex valued;
real-valued sequences correspond to densities with ``F(-lam) = conj(F(lam))``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import (
    DimensionMismatchError,
    FrequencyRangeError,
    NotPositiveSemidefiniteError,
)
from .grid import Grid, GridLike, as_grid, dft_coefficients

logger = logging.getLogger(__name__)

HERMITIAN_RTOL = 1e-12
PSD_RTOL = 1e-10


def hermitian_psd(mats: np.ndarray, what: str = "density") -> np.ndarray:
    """Validate a stack of matrices as Hermitian PSD and return a cleaned copy.

    Small negative eigenvalues (within ``PSD_RTOL`` of the largest) are floored at
    zero; anything larger raises.
    """
    mats = np.array(mats, dtype=complex)
    if mats.ndim == 2:
        return hermitian_psd(mats[None], what)[0]
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise DimensionMismatchError(f"{what}: expected square matrices, got shape {mats.shape}")
    herm = mats.conj().transpose(0, 2, 1)
    scale = np.max(np.abs(mats), axis=(1, 2))
    asym = np.max(np.abs(mats - herm), axis=(1, 2))
    bad = asym > HERMITIAN_RTOL * np.maximum(scale, 1e-300)
    if np.any(bad):
        raise NotPositiveSemidefiniteError(
            f"{what}: matrix {int(np.argmax(bad))} is not Hermitian (asymmetry {asym.max():.3e})"
        )
    mats = 0.5 * (mats + herm)
    w, v = np.linalg.eigh(mats)
    top = np.max(np.abs(w), axis=1)
    low = w.min(axis=1)
    viol = low < -PSD_RTOL * np.maximum(top, 1e-300)
    if np.any(viol):
        k = int(np.argmax(viol))
        raise NotPositiveSemidefiniteError(
            f"{what}: matrix {k} has eigenvalue {low[k]:.3e} (largest {top[k]:.3e})"
        )
    neg = low < 0
    if np.any(neg):
        w = np.maximum(w, 0.0)
        mats[neg] = np.einsum("nij,nj,nkj->nik", v[neg], w[neg], v[neg].conj())
    return mats


def _as_lam(lam) -> tuple[np.ndarray, bool]:
    arr = np.asarray(lam, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(~np.isfinite(arr)) or np.any(arr < -np.pi) or np.any(arr > np.pi):
        raise FrequencyRangeError(f"frequency outside [-pi, pi]: {arr[(arr < -np.pi) | (arr > np.pi)][:3]}")
    return arr, scalar


class SpectralDensity:
    """Base class. Subclasses implement ``_values`` on an array of frequencies."""

    dim: int

    def _values(self, lam: np.ndarray) -> np.ndarray:  # (n, T, T)
        raise NotImplementedError

    def evaluate(self, lam) -> np.ndarray:
        """Density at ``lam`` (scalar -> (T, T); array -> (n, T, T)).

        ``lam = pi`` is accepted and identified with ``-pi``.
        """
        arr, scalar = _as_lam(lam)
        out = self._values(arr)
        return out[0] if scalar else out

    def on_grid(self, grid: GridLike = None) -> np.ndarray:
        g = as_grid(grid)
        return self._values(g.lam)

    def scaled(self, factor: float) -> "SpectralDensity":
        raise NotImplementedError

    def __add__(self, other: "SpectralDensity") -> "SpectralDensity":
        return sum_densities(self, other)


@dataclass(frozen=True, eq=False)
class ConstantDensity(SpectralDensity):
    """White-noise density ``F(lam) = matrix``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=complex))
        object.__setattr__(self, "matrix", hermitian_psd(m, "constant density"))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def _values(self, lam):
        return np.broadcast_to(self.matrix, (lam.size,) + self.matrix.shape).copy()

    def scaled(self, factor):
        return ConstantDensity(self.matrix * factor)

    @classmethod
    def identity(cls, dim: int, scale: float = 1.0) -> "ConstantDensity":
        return cls(scale * np.eye(dim))


@dataclass(frozen=True, eq=False)
class ARDensity(SpectralDensity):
    """First-order autoregressive channels with correlated innovations.

    Channel ``k`` follows ``x_k(t) = phi_k x_k(t-1) + sigma_k e_k(t)`` where the
    innovations have correlation matrix ``coherence`` (Hermitian PSD, unit diagonal
    not required). The density is

        F_kl(lam) = sigma_k sigma_l coherence_kl / ((1 - phi_k e^{-i lam}) conj(1 - phi_l e^{-i lam})).
    """

    sigma: np.ndarray
    phi: np.ndarray
    coherence: np.ndarray | None = None

    def __post_init__(self):
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        phi = np.atleast_1d(np.asarray(self.phi, dtype=complex))
        if sigma.shape != phi.shape or sigma.ndim != 1:
            raise DimensionMismatchError(f"sigma {sigma.shape} and phi {phi.shape} must be equal-length vectors")
        if np.any(np.abs(phi) >= 1.0):
            raise ValueError(f"poles must satisfy |phi| < 1, got {phi}")
        if np.any(sigma < 0):
            raise ValueError("scales sigma must be nonnegative")
        coh = np.eye(sigma.size) if self.coherence is None else np.atleast_2d(self.coherence)
        if coh.shape != (sigma.size, sigma.size):
            raise DimensionMismatchError(f"coherence must be {sigma.size}x{sigma.size}, got {coh.shape}")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "coherence", hermitian_psd(coh, "coherence"))

    @property
    def dim(self) -> int:
        return self.sigma.size

    def _transfer(self, lam):
        return self.sigma[None, :] / (1.0 - self.phi[None, :] * np.exp(-1j * lam)[:, None])

    def _values(self, lam):
        t = self._transfer(lam)
        return t[:, :, None] * self.coherence[None] * t.conj()[:, None, :]

    def exact_covariance(self, n: int) -> np.ndarray:
        """Closed-form ``R(n)``."""
        if n < 0:
            return self.exact_covariance(-n).conj().T
        s = np.outer(self.sigma, self.sigma) * self.coherence
        return s * (self.phi[:, None] ** n) / (1.0 - np.outer(self.phi, self.phi.conj()))

    def scaled(self, factor):
        return ARDensity(self.sigma * np.sqrt(factor), self.phi, self.coherence)


def cell_lookup(n_cells: int, lam: np.ndarray):
    """Map frequencies to a uniform ``n_cells`` partition of [-pi, pi).

    Returns ``(left, right, w_left, w_right)``: nodes strictly inside a cell use that
    cell with weight 1; nodes on a jump get weight 1/2 from each neighbour, which makes
    the periodic equal-weight rule a trapezoid rule on every cell.
    """
    pos = (np.asarray(lam, dtype=float) + np.pi) * n_cells / (2.0 * np.pi)
    nearest = np.rint(pos)
    on_edge = np.abs(pos - nearest) < 1e-9
    inner = np.floor(pos).astype(np.int64) % n_cells
    right = np.where(on_edge, nearest.astype(np.int64) % n_cells, inner)
    left = np.where(on_edge, (nearest.astype(np.int64) - 1) % n_cells, inner)
    w = np.where(on_edge, 0.5, 1.0)
    return left, right, w, np.where(on_edge, 0.5, 0.0)


@dataclass(frozen=True, eq=False)
class PiecewiseDensity(SpectralDensity):
    """Constant Hermitian matrix on each of ``n_cells`` equal cells of [-pi, pi).

    Cell ``c`` covers ``[-pi + 2 pi c / n, -pi + 2 pi (c + 1) / n)``.
    """

    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=complex)
        if cells.ndim == 1:
            cells = cells[:, None, None]
        object.__setattr__(self, "cells", hermitian_psd(cells, "piecewise density"))

    @property
    def dim(self) -> int:
        return self.cells.shape[1]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def edges(self) -> np.ndarray:
        return -np.pi + 2.0 * np.pi * np.arange(self.n_cells + 1) / self.n_cells

    def evaluate(self, lam):
        arr, scalar = _as_lam(lam)
        idx = np.floor((arr + np.pi) * self.n_cells / (2.0 * np.pi)).astype(np.int64) % self.n_cells
        out = self.cells[idx]
        return out[0] if scalar else out

    def _values(self, lam):
        left, right, wl, wr = cell_lookup(self.n_cells, lam)
        return wl[:, None, None] * self.cells[left] + wr[:, None, None] * self.cells[right]

    def scaled(self, factor):
        return PiecewiseDensity(self.cells * factor)

    def exact_covariance(self, n: int) -> np.ndarray:
        """Exact ``(1/2pi) int exp(i n lam) F dlam`` summed cell by cell."""
        e = self.edges
        if n == 0:
            w = np.diff(e) / (2.0 * np.pi)
        else:
            w = (np.exp(1j * n * e[1:]) - np.exp(1j * n * e[:-1])) / (2j * np.pi * n)
        return np.einsum("c,cij->ij", w, self.cells)


@dataclass(frozen=True, eq=False)
class SumDensity(SpectralDensity):
    """Lazy pointwise sum of densities of equal dimension."""

    parts: tuple = field(default_factory=tuple)

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    def _values(self, lam):
        out = self.parts[0]._values(lam)
        for p in self.parts[1:]:
            out = out + p._values(lam)
        return out

    def scaled(self, factor):
        return SumDensity(tuple(p.scaled(factor) for p in self.parts))


def sum_densities(F: SpectralDensity, G: SpectralDensity) -> SpectralDensity:
    """Pointwise sum ``F + G``. Keeps a closed representation when one exists."""
    if F.dim != G.dim:
        raise DimensionMismatchError(f"cannot add densities of dimension {F.dim} and {G.dim}")
    if isinstance(F, ConstantDensity) and isinstance(G, ConstantDensity):
        return ConstantDensity(F.matrix + G.matrix)
    if isinstance(F, PiecewiseDensity) and isinstance(G, ConstantDensity):
        return PiecewiseDensity(F.cells + G.matrix[None])
    if isinstance(F, ConstantDensity) and isinstance(G, PiecewiseDensity):
        return PiecewiseDensity(G.cells + F.matrix[None])
    if isinstance(F, PiecewiseDensity) and isinstance(G, PiecewiseDensity) and F.n_cells == G.n_cells:
        return PiecewiseDensity(F.cells + G.cells)
    parts = (F.parts if isinstance(F, SumDensity) else (F,)) + (G.parts if isinstance(G, SumDensity) else (G,))
    return SumDensity(parts)


def zero_density(dim: int) -> ConstantDensity:
    return ConstantDensity(np.zeros((dim, dim)))


# --- minimality -----------------------------------------------------------------


@dataclass(frozen=True)
class MinimalityReport:
    passed: bool
    integral: float  # int_{-pi}^{pi} Tr (F + G)^{-1} dlam at the finest level
    levels: tuple[int, ...]
    values: tuple[float, ...]
    growth: float
    singular_nodes: int
    message: str


def check_minimality(
    F: SpectralDensity,
    G: SpectralDensity,
    grid: GridLike = None,
    levels: int = 5,
    threshold: float = 10.0,
) -> MinimalityReport:
    """Check integrability of ``Tr (F + G)^{-1}`` by quadrature under grid refinement.

    Uses midpoint nodes (offset half a step) at ``N, 2N, ..., 2^(levels-1) N``. The
    check fails when the quadrature grows by more than ``threshold`` over the ladder
    or when ``F + G`` is singular at a node; the latter is reported, not raised.
    """
    if F.dim != G.dim:
        raise DimensionMismatchError(f"dimensions differ: {F.dim} vs {G.dim}")
    g = as_grid(grid)
    sizes, values = [], []
    singular = 0
    for level in range(levels):
        n = g.size * 2**level
        lam = -np.pi + 2.0 * np.pi * (np.arange(n) + 0.5) / n
        s = F._values(lam) + G._values(lam)
        w = np.linalg.eigvalsh(0.5 * (s + s.conj().transpose(0, 2, 1)))
        top = max(float(np.max(np.abs(w))), 1e-300)
        bad = w.min(axis=1) <= 1e-14 * top
        sizes.append(n)
        if np.any(bad):
            singular = int(bad.sum())
            values.append(float("inf"))
            break
        values.append(float(np.sum(1.0 / w) * 2.0 * np.pi / n))
    if singular:
        k = int(np.argmax(bad))
        msg = f"F+G singular at {singular} of {sizes[-1]} nodes (first near lam={lam[k]:.6f})"
        return MinimalityReport(False, float("inf"), tuple(sizes), tuple(values), float("inf"), singular, msg)
    growth = values[-1] / values[0]
    passed = growth < threshold
    msg = "ok" if passed else f"quadrature of Tr(F+G)^-1 grew by {growth:.3g} over {levels} refinements"
    return MinimalityReport(passed, values[-1], tuple(sizes), tuple(values), growth, 0, msg)


# --- covariances ----------------------------------------------------------------


@dataclass(frozen=True)
class CovarianceSequence:
    """Lags ``R(n)`` for ``0 <= n <= max_lag``; negative lags by ``R(-n) = R(n)^*``."""

    dim: int
    lags: dict

    @property
    def max_lag(self) -> int:
        return max(self.lags)

    def __getitem__(self, n: int) -> np.ndarray:
        if n < 0:
            return self.lags[-n].conj().T
        return self.lags[n]

    def block_toeplitz(self, order: int | None = None) -> np.ndarray:
        """Covariance of ``(x(0), ..., x(L))``: block ``(i, j)`` is ``R(i - j)``."""
        L = self.max_lag if order is None else order
        T = self.dim
        out = np.empty(((L + 1) * T, (L + 1) * T), dtype=complex)
        for i in range(L + 1):
            for j in range(L + 1):
                out[i * T:(i + 1) * T, j * T:(j + 1) * T] = self[i - j]
        return out


def covariance_from_density(D: SpectralDensity, n: int, grid: GridLike = None) -> np.ndarray:
    """``R(n) = (1/2pi) int exp(i n lam) D(lam) dlam`` by the shared grid rule."""
    g = as_grid(grid)
    g.require(n, "covariance lag")
    return dft_coefficients(D.on_grid(g), [-n])[0]


def covariance_sequence(D: SpectralDensity, max_lag: int, grid: GridLike = None) -> CovarianceSequence:
    g = as_grid(grid)
    g.require(max_lag, "covariance lag")
    coefs = dft_coefficients(D.on_grid(g), [-n for n in range(max_lag + 1)])
    return CovarianceSequence(D.dim, {n: coefs[n] for n in range(max_lag + 1)})


def constant(matrix) -> ConstantDensity:
    return ConstantDensity(matrix)


def autoregressive(sigma: Sequence[float], phi: Sequence[complex], coherence=None) -> ARDensity:
    return ARDensity(np.asarray(sigma, dtype=float), np.asarray(phi, dtype=complex), coherence)


def piecewise(cells) -> PiecewiseDensity:
    return PiecewiseDensity(np.asarray(cells))
