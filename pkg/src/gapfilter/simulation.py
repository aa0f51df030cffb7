"""Sample paths with a prescribed spectral density and Monte Carlo error estimates.

Paths are drawn by the spectral method on the shared grid: with ``z_k`` independent
circular complex Gaussian vectors of covariance ``D(lam_k) / N``,

    x(t) = sum_k exp(i t lam_k) z_k = (-1)^t * N * ifft(z)[t mod N],

so ``E x(t + n) x(t)^*`` equals the grid quadrature of ``R(n)`` exactly. Paths cover
the times ``-length, ..., -1``.

Random streams are addressed by ``(seed, stream, chunk)`` so that results do not
depend on how chunks are scheduled: stream 0 is the signal, stream 1 the noise.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np

from .exceptions import DimensionMismatchError, PatternError
from .filtering import FilterSolution
from .grid import GridLike, as_grid, dft_coefficients
from .indices import FunctionalSpec, MissingPattern, observed_indices
from .spectral import SpectralDensity

CHUNK = 256
SIGNAL_STREAM = 0
NOISE_STREAM = 1


@dataclass(frozen=True, eq=False)
class PathBatch:
    """``n_paths`` paths on the times ``-length, ..., -1``; arrays are ``(n_paths, length, T)``."""

    n_paths: int
    length: int
    dim: int
    seed: int
    grid_size: int
    signal: np.ndarray
    noise: np.ndarray | None = None

    @property
    def times(self) -> np.ndarray:
        return np.arange(-self.length, 0)

    def column(self, t: int) -> int:
        """Array position of time ``t``."""
        if not -self.length <= t <= -1:
            raise PatternError(f"time {t} outside the simulated range [-{self.length}, -1]")
        return t + self.length


def matrix_sqrt(D: np.ndarray) -> np.ndarray:
    """Hermitian square roots of a stack of PSD matrices (negative round-off clipped)."""
    w, V = np.linalg.eigh(0.5 * (D + D.conj().transpose(0, 2, 1)))
    return np.einsum("nij,nj,nkj->nik", V, np.sqrt(np.clip(w, 0.0, None)), V.conj())


def _stream(seed: int, stream: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, chunk)))


def _draw_chunk(root: np.ndarray, n: int, length: int, rng: np.random.Generator) -> np.ndarray:
    N, T, _ = root.shape
    # always draw a full chunk so that a batch is a prefix of any larger batch
    w = (rng.standard_normal((CHUNK, N, T)) + 1j * rng.standard_normal((CHUNK, N, T)))[:n] / np.sqrt(2.0)
    z = np.einsum("kij,pkj->pki", root, w) / np.sqrt(N)
    x = N * np.fft.ifft(z, axis=1)
    t = np.arange(-length, 0)
    sign = np.where(t % 2 == 0, 1.0, -1.0)
    return x[:, t % N, :] * sign[None, :, None]


def _draw(D: SpectralDensity, n_paths: int, length: int, seed: int, stream: int, grid, workers: int) -> np.ndarray:
    g = as_grid(grid)
    g.require(length, "path length")
    root = matrix_sqrt(D.on_grid(g))
    starts = list(range(0, n_paths, CHUNK))

    def job(i):
        return _draw_chunk(root, min(CHUNK, n_paths - starts[i]), length, _stream(seed, stream, i))

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(job, range(len(starts))))
    else:
        parts = [job(i) for i in range(len(starts))]
    if not parts:
        return np.zeros((0, length, D.dim), dtype=complex)
    return np.concatenate(parts, axis=0)


def sample_paths(
    D: SpectralDensity,
    n_paths: int,
    length: int,
    seed: int = 0,
    grid: GridLike = None,
    *,
    noise: SpectralDensity | None = None,
    workers: int = 1,
) -> PathBatch:
    """Draw paths of ``D`` (signal stream) and optionally of ``noise`` (independent stream).

    The grid must have at least ``8 * length`` nodes. Identical arguments give
    bit-identical paths for any ``workers``.
    """
    if noise is not None and noise.dim != D.dim:
        raise DimensionMismatchError(f"signal dimension {D.dim} differs from noise dimension {noise.dim}")
    g = as_grid(grid)
    signal = _draw(D, n_paths, length, seed, SIGNAL_STREAM, g, workers)
    eta = None if noise is None else _draw(noise, n_paths, length, seed, NOISE_STREAM, g, workers)
    return PathBatch(n_paths, length, D.dim, seed, g.size, signal, eta)


class Estimate(NamedTuple):
    mean: np.ndarray | float
    se: np.ndarray | float


def _mean_se(samples: np.ndarray) -> Estimate:
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    if n < 2:
        return Estimate(mean, np.full_like(np.real(mean), np.inf))
    if np.iscomplexobj(samples):
        se = (samples.real.std(axis=0, ddof=1) + 1j * samples.imag.std(axis=0, ddof=1)) / np.sqrt(n)
    else:
        se = samples.std(axis=0, ddof=1) / np.sqrt(n)
    return Estimate(mean, se)


def _paths(x) -> np.ndarray:
    return x.signal if isinstance(x, PathBatch) else np.asarray(x)


def empirical_covariance(paths, lag: int) -> Estimate:
    """``E x(t + lag) x(t)^*`` averaged over time within each path, with the standard
    error across paths (separately for real and imaginary parts)."""
    x = _paths(paths)
    n, length, _ = x.shape
    if not 0 <= lag < length:
        raise PatternError(f"lag {lag} must lie in [0, {length - 1}]")
    per_path = np.einsum("pti,ptj->pij", x[:, lag:, :], x[:, :length - lag, :].conj()) / (length - lag)
    return _mean_se(per_path)


def filter_weights(sol: FilterSolution, L: int) -> dict[int, np.ndarray]:
    """Impulse response ``h~(t)`` of the solution on the observed times of the window ``L``."""
    times = observed_indices(sol.pattern, L)
    resp = sol.impulse_response(L)
    return {t: resp[t] for t in times}


def tail_mass(sol: FilterSolution, L: int) -> float:
    """Share of ``sum_j |h~(j)|^2`` outside the observed window ``{-1, ..., -L} \\ S``."""
    N = sol.grid.size
    lags = range(-N // 2, N // 2)
    coefs = dft_coefficients(sol.h, lags)
    power = np.sum(np.abs(coefs) ** 2, axis=1)
    total = power.sum()
    if total == 0.0:
        return 0.0
    outside = np.ones(N, dtype=bool)
    outside[[t + N // 2 for t in observed_indices(sol.pattern, L)]] = False
    return float(power[outside].sum() / total)


def functional_values(functional: FunctionalSpec, signal: np.ndarray) -> np.ndarray:
    """``A xi = sum_j a(j)^T xi(-j)`` for each path."""
    length = signal.shape[1]
    if functional.max_index > length:
        raise PatternError(f"functional reaches index {functional.max_index} beyond path length {length}")
    out = np.zeros(signal.shape[0], dtype=complex)
    for j, a in functional.coefficients.items():
        out += signal[:, length - j, :] @ a
    return out


def apply_weights(weights: Mapping[int, np.ndarray], observed: np.ndarray) -> np.ndarray:
    """``sum_t w(t)^T y(t)`` for each path; ``observed`` holds ``y = xi + eta``."""
    length = observed.shape[1]
    out = np.zeros(observed.shape[0], dtype=complex)
    for t, w in weights.items():
        if not -length <= t <= -1:
            raise PatternError(f"weight at time {t} outside the simulated range [-{length}, -1]")
        out += observed[:, t + length, :] @ np.asarray(w)
    return out


def empirical_mse_weights(
    weights: Mapping[int, np.ndarray],
    functional: FunctionalSpec,
    signal,
    noise=None,
) -> Estimate:
    """Mean and standard error of ``|A xi - sum_t w(t)^T (xi(t) + eta(t))|^2``."""
    xi = _paths(signal)
    if noise is None and isinstance(signal, PathBatch):
        noise = signal.noise
    eta = np.zeros_like(xi) if noise is None else (noise.signal if isinstance(noise, PathBatch) else np.asarray(noise))
    if eta.shape != xi.shape:
        raise DimensionMismatchError(f"signal paths {xi.shape} and noise paths {eta.shape} differ in shape")
    err = functional_values(functional, xi) - apply_weights(weights, xi + eta)
    m, s = _mean_se(np.abs(err) ** 2)
    return Estimate(float(m), float(s))


def empirical_mse(
    sol: FilterSolution,
    signal,
    noise=None,
    pattern: MissingPattern | None = None,
    functional: FunctionalSpec | None = None,
    L: int | None = None,
) -> Estimate:
    """Monte Carlo error of the solved filter applied on the window ``{-1, ..., -L}``.

    ``pattern`` and ``functional`` default to the solution's own; ``L`` defaults to
    the path length. Weights beyond the window are dropped (see :func:`tail_mass`).
    """
    pattern = sol.pattern if pattern is None else pattern
    functional = sol.functional if functional is None else functional
    length = _paths(signal).shape[1]
    L = length if L is None else L
    if L > length:
        raise PatternError(f"window L = {L} exceeds path length {length}")
    times = observed_indices(pattern, L)
    resp = sol.impulse_response(L)
    weights = {t: resp[t] for t in times}
    return empirical_mse_weights(weights, functional, signal, noise)
