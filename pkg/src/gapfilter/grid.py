"""Uniform frequency grid on [-pi, pi) and the discrete Fourier transform over it.

All quadratures in the package share one grid. For a 2*pi-periodic integrand the
trapezoid rule on ``lam_m = -pi + 2*pi*m/N`` reduces to an equal-weight sum, so

    (1/2pi) * int H(lam) exp(-i m lam) dlam  ~=  (1/N) * sum_n H(lam_n) exp(-i m lam_n)

which is evaluated for every ``m`` at once with an FFT.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Union

import numpy as np

from .exceptions import GridResolutionError

DEFAULT_GRID_SIZE = 4096
# a Fourier index m needs at least this many nodes per unit |m|
RESOLUTION_FACTOR = 8


@dataclass(frozen=True)
class Grid:
    """Uniform ``size``-point grid on [-pi, pi)."""

    size: int = DEFAULT_GRID_SIZE

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 2:
            raise GridResolutionError(f"grid size must be an integer >= 2, got {self.size!r}")
        object.__setattr__(self, "size", int(self.size))

    @cached_property
    def lam(self) -> np.ndarray:
        return -np.pi + 2.0 * np.pi * np.arange(self.size) / self.size

    @property
    def step(self) -> float:
        return 2.0 * np.pi / self.size

    def max_index(self) -> int:
        return self.size // RESOLUTION_FACTOR

    def require(self, index: int, what: str = "Fourier index") -> None:
        if RESOLUTION_FACTOR * abs(int(index)) > self.size:
            raise GridResolutionError(
                f"{what} {index} needs a grid of at least {RESOLUTION_FACTOR * abs(int(index))} "
                f"nodes, got {self.size}"
            )

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.size * factor)


GridLike = Union[Grid, int, None]


def as_grid(grid: GridLike) -> Grid:
    if grid is None:
        return Grid()
    if isinstance(grid, Grid):
        return grid
    return Grid(int(grid))


def dft_coefficients(values: np.ndarray, indices: Iterable[int]) -> np.ndarray:
    """Fourier coefficients ``(1/N) sum_n values[n] exp(-i m lam_n)`` for each ``m``.

    ``values`` has the grid along axis 0 and any trailing shape. Returns an array
    of shape ``(len(indices),) + values.shape[1:]``.
    """
    values = np.asarray(values)
    n = values.shape[0]
    idx = np.asarray(list(indices), dtype=np.int64)
    spectrum = np.fft.fft(values, axis=0)
    # lam_0 = -pi contributes exp(i m pi) = (-1)^m
    sign = np.where(idx % 2 == 0, 1.0, -1.0)
    out = spectrum[idx % n] / n
    return out * sign.reshape((-1,) + (1,) * (values.ndim - 1))


def trig_series(coefficients: np.ndarray, indices: Iterable[int], lam: np.ndarray, sign: int = 1) -> np.ndarray:
    """Evaluate ``sum_k coefficients[k] exp(sign * i * index_k * lam)`` on ``lam``.

    ``coefficients`` has shape ``(len(indices), T)``; the result has shape ``(len(lam), T)``.
    """
    idx = np.asarray(list(indices), dtype=float)
    phase = np.exp(1j * sign * np.outer(lam, idx))
    return phase @ np.asarray(coefficients)
