"""Piecewise-constant parametrization of densities on a uniform cell partition."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..exceptions import GridResolutionError
from ..grid import Grid, GridLike, as_grid
from ..spectral import ConstantDensity, PiecewiseDensity, SpectralDensity, cell_lookup


@dataclass(frozen=True, eq=False)
class CellMap:
    """Link between ``n_cells`` constant pieces and the nodes of a frequency grid.

    Grid nodes on a cell edge take the average of the two neighbouring cells, so the
    grid mean of a piecewise-constant function equals the plain mean of its cells.
    """

    n_cells: int
    grid: Grid

    def __post_init__(self):
        if self.n_cells < 1:
            raise GridResolutionError(f"need at least one cell, got {self.n_cells}")
        if self.grid.size % self.n_cells:
            raise GridResolutionError(f"grid size {self.grid.size} is not a multiple of {self.n_cells} cells")

    @cached_property
    def _lookup(self):
        return cell_lookup(self.n_cells, self.grid.lam)

    def to_grid(self, cells: np.ndarray) -> np.ndarray:
        left, right, wl, wr = self._lookup
        return wl[:, None, None] * cells[left] + wr[:, None, None] * cells[right]

    def collect(self, values: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`to_grid`: ``sum_n w[n, c] values[n]`` for every cell."""
        left, right, wl, wr = self._lookup
        out = np.zeros((self.n_cells,) + values.shape[1:], dtype=complex)
        np.add.at(out, left, wl[:, None, None] * values)
        np.add.at(out, right, wr[:, None, None] * values)
        return out

    def cell_average(self, values: np.ndarray) -> np.ndarray:
        return self.collect(values) * (self.n_cells / self.grid.size)

    def cells_of(self, density: SpectralDensity) -> np.ndarray:
        """Cell values of a density: exact for a matching piecewise density, else averages."""
        if isinstance(density, PiecewiseDensity) and density.n_cells == self.n_cells:
            return np.array(density.cells)
        if isinstance(density, ConstantDensity):
            return np.broadcast_to(density.matrix, (self.n_cells,) + density.matrix.shape).copy()
        avg = self.cell_average(density.on_grid(self.grid))
        return 0.5 * (avg + avg.conj().transpose(0, 2, 1))

    def centers(self) -> np.ndarray:
        return -np.pi + (np.arange(self.n_cells) + 0.5) * 2.0 * np.pi / self.n_cells


def cell_map(n_cells: int, grid: GridLike = None) -> CellMap:
    return CellMap(int(n_cells), as_grid(grid))
