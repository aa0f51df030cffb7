"""Fourier coefficients of matrix functions and the truncated block operators.

For ``W = (F + G)^{-1}`` the three coefficient families are

    B(m) = (1/2pi) int W(lam) e^{-i m lam} dlam                  (indexed by m = k - j)
    R(m) = (1/2pi) int F(lam) W(lam) e^{-i m lam} dlam           (indexed by m = k + j)
    Q(m) = (1/2pi) int F(lam) W(lam) G(lam) e^{-i m lam} dlam    (indexed by m = k - j)

and the operators over ``U_K`` have blocks ``B(k - j)``, ``R(k + j)``, ``Q(k - j)``.
Each distinct ``m`` is computed once and the same matrix is placed in every block
that needs it, so the Toeplitz/Hankel structure is exact.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg

from .exceptions import DimensionMismatchError, SingularDensityError
from .grid import GridLike, as_grid, dft_coefficients
from .indices import IndexUniverse
from .spectral import SpectralDensity, check_minimality

logger = logging.getLogger(__name__)

EIGEN_FLOOR = 1e-12


def fourier_coefficient(values: np.ndarray, m: int, grid: GridLike = None) -> np.ndarray:
    """``(1/2pi) int H(lam) e^{-i m lam} dlam`` for ``H`` sampled on the grid (axis 0)."""
    values = np.asarray(values)
    g = as_grid(values.shape[0] if grid is None else grid)
    g.require(m)
    return dft_coefficients(values, [m])[0]


def fourier_coefficients(values: np.ndarray, indices, grid: GridLike = None) -> dict[int, np.ndarray]:
    values = np.asarray(values)
    g = as_grid(values.shape[0] if grid is None else grid)
    indices = sorted(set(int(m) for m in indices))
    if indices:
        g.require(max(abs(indices[0]), abs(indices[-1])))
    coefs = dft_coefficients(values, indices)
    return {m: coefs[i] for i, m in enumerate(indices)}


def hermitian_inverse(mats: np.ndarray, floor: float = EIGEN_FLOOR) -> tuple[np.ndarray, int]:
    """Invert a stack of Hermitian matrices via eigendecomposition.

    Eigenvalues below ``floor * (largest eigenvalue over the stack)`` are raised to
    that floor. Returns the inverses and the number of floored eigenvalues.
    """
    mats = 0.5 * (mats + mats.conj().transpose(0, 2, 1))
    w, v = np.linalg.eigh(mats)
    cutoff = floor * float(np.max(w))
    if cutoff <= 0.0:
        raise SingularDensityError("F + G vanishes on the whole grid")
    low = w < cutoff
    hits = int(low.sum())
    if hits:
        w = np.where(low, cutoff, w)
    inv = np.einsum("nij,nj,nkj->nik", v, 1.0 / w, v.conj())
    return inv, hits


@dataclass(frozen=True)
class SpectralPieces:
    """``F``, ``G``, ``W = (F + G)^{-1}`` sampled on a common grid."""

    F: np.ndarray
    G: np.ndarray
    W: np.ndarray
    floor_hits: int

    @cached_property
    def FW(self) -> np.ndarray:
        return self.F @ self.W

    @cached_property
    def FWG(self) -> np.ndarray:
        return self.FW @ self.G


def grid_pieces(F: SpectralDensity, G: SpectralDensity, grid: GridLike = None, floor: float = EIGEN_FLOOR) -> SpectralPieces:
    if F.dim != G.dim:
        raise DimensionMismatchError(f"signal dimension {F.dim} != noise dimension {G.dim}")
    g = as_grid(grid)
    Fg, Gg = F.on_grid(g), G.on_grid(g)
    W, hits = hermitian_inverse(Fg + Gg, floor)
    if hits:
        logger.warning("eigenvalue floor applied at %d eigenvalues of F+G on a %d-node grid", hits, g.size)
    return SpectralPieces(Fg, Gg, W, hits)


@dataclass(frozen=True, eq=False)
class OperatorBlocks:
    """Truncated operators over ``U_K`` with blocks laid out as in the coefficient equations.

    ``B_mat[k, j] = B(k - j)``, ``R_mat[k, j] = R(k + j)``, ``Q_mat[k, j] = Q(k - j)``
    (T x T blocks, ``k, j`` in ``universe.indices`` order).

    The coefficient equations pair row vectors, ``sum_j a(j)^T R(k + j) = sum_j c(j)^T B(k - j)``.
    For column vectors this is ``system @ c = R_mat.T @ a`` where ``system`` has blocks
    ``B(k - j)^T`` (each block transposed in place), and the noise term of the error is
    ``a^H Q_mat.T a``. For scalar even densities all of these reduce to the plain blocks.
    """

    universe: IndexUniverse
    dim: int
    B_mat: np.ndarray
    R_mat: np.ndarray
    Q_mat: np.ndarray
    B_coef: dict = field(repr=False)
    R_coef: dict = field(repr=False)
    Q_coef: dict = field(repr=False)
    floor_hits: int = 0
    positive_definite: bool = True

    @cached_property
    def system(self) -> np.ndarray:
        return np.ascontiguousarray(block_transpose(self.B_mat, self.dim))

    @cached_property
    def cholesky(self):
        """Cholesky factor of the (Hermitian PD) system matrix, or None."""
        try:
            return scipy.linalg.cho_factor(self.system, lower=True, check_finite=True)
        except (np.linalg.LinAlgError, ValueError):
            return None

    def block(self, which: str, k: int, j: int) -> np.ndarray:
        mat = {"B": self.B_mat, "R": self.R_mat, "Q": self.Q_mat}[which]
        T = self.dim
        return mat[self.universe.block(k, T), self.universe.block(j, T)]

    def to_csv(self, path) -> None:
        """Debug dump: one row per (operator, k, j, row, col)."""
        path = Path(path)
        T = self.dim
        with path.open("w") as fh:
            fh.write("operator,k,j,row,col,re,im\n")
            for name, mat in (("B", self.B_mat), ("R", self.R_mat), ("Q", self.Q_mat)):
                for k in self.universe.indices:
                    for j in self.universe.indices:
                        blk = mat[self.universe.block(k, T), self.universe.block(j, T)]
                        for r in range(T):
                            for c in range(T):
                                fh.write(f"{name},{k},{j},{r},{c},{blk[r, c].real!r},{blk[r, c].imag!r}\n")


def block_transpose(mat: np.ndarray, T: int) -> np.ndarray:
    """Transpose every T x T block in place, keeping block positions."""
    n = mat.shape[0] // T
    return mat.reshape(n, T, n, T).transpose(0, 3, 2, 1).reshape(n * T, n * T)


def _place(coef: dict, keys: np.ndarray, T: int) -> np.ndarray:
    """Block matrix whose block ``(a, b)`` is ``coef[keys[a, b]]``."""
    ms = sorted(coef)
    stack = np.stack([coef[m] for m in ms])
    lookup = np.searchsorted(ms, keys)
    n = keys.shape[0]
    return stack[lookup].transpose(0, 2, 1, 3).reshape(n * T, n * T)


def assemble_operators(
    F: SpectralDensity,
    G: SpectralDensity,
    u: IndexUniverse,
    grid: GridLike = None,
    *,
    pieces: SpectralPieces | None = None,
    strict: bool = True,
    verify_minimality: bool = False,
) -> OperatorBlocks:
    """Build ``B``, ``R``, ``Q`` over ``U_K`` from densities sampled on the grid.

    With ``strict`` a floored eigenvalue of ``F + G`` or a failed Cholesky
    factorization of ``B`` raises :class:`SingularDensityError`; otherwise both are
    recorded on the result.
    """
    g = as_grid(grid)
    if verify_minimality:
        rep = check_minimality(F, G, g)
        if not rep.passed:
            raise SingularDensityError(f"minimality condition fails: {rep.message}")
    if pieces is None:
        pieces = grid_pieces(F, G, g)
    if strict and pieces.floor_hits:
        raise SingularDensityError(f"F + G is numerically singular at {pieces.floor_hits} grid eigenvalues")
    T = pieces.F.shape[1]
    idx = np.asarray(u.indices)
    diff = idx[:, None] - idx[None, :]
    summ = idx[:, None] + idx[None, :]
    g.require(max(np.abs(diff).max(), np.abs(summ).max()), "operator index")

    B_coef = fourier_coefficients(pieces.W, np.unique(diff), g)
    R_coef = fourier_coefficients(pieces.FW, np.unique(summ), g)
    Q_coef = fourier_coefficients(pieces.FWG, np.unique(diff), g)
    # W and FWG are Hermitian: enforce B(-m) = B(m)^* exactly
    for coef in (B_coef, Q_coef):
        for m in coef:
            if m > 0 and -m in coef:
                coef[-m] = coef[m].conj().T
            elif m == 0:
                coef[0] = 0.5 * (coef[0] + coef[0].conj().T)

    ops = OperatorBlocks(
        universe=u,
        dim=T,
        B_mat=_place(B_coef, diff, T),
        R_mat=_place(R_coef, summ, T),
        Q_mat=_place(Q_coef, diff, T),
        B_coef=B_coef,
        R_coef=R_coef,
        Q_coef=Q_coef,
        floor_hits=pieces.floor_hits,
    )
    pd = ops.cholesky is not None
    object.__setattr__(ops, "positive_definite", pd)
    if strict and not pd:
        raise SingularDensityError("block operator B is not positive definite (Cholesky failed)")
    return ops
