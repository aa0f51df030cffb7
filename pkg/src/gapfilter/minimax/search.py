"""Least-favorable densities by projected gradient ascent over admissible classes.

The optimal error ``Delta(F, G)`` is the minimum over admissible characteristics of
an expression that is linear in ``(F, G)``, so it is concave and its gradient with
respect to a cell ``X_c`` of ``F`` is ``sum_n w[n, c] conj(r_G) r_G^T / N`` (likewise
for ``G`` with ``r_F``). The ascent uses spectral (Barzilai-Borwein) steps with a
non-monotone Armijo line search and exact class projections.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..exceptions import DimensionMismatchError, GapFilterError, InfeasibleClassError, SingularDensityError
from ..filtering import (
    FilterSolution,
    _quad_form_mean,
    mse_quadratic,
    residual_symbols,
    solve_coefficients,
    solve_filter,
)
from ..fourier import SpectralPieces, assemble_operators, hermitian_inverse
from ..grid import Grid, GridLike, as_grid
from ..indices import FunctionalSpec, MissingPattern, build_universe, default_truncation, embed_coefficients
from ..spectral import PiecewiseDensity, SpectralDensity
from .cells import CellMap
from .classes import FAMILY_COORDS, AdmissibleClass, BoundClass, fixed_class
from .relations import check_optimality_relations

logger = logging.getLogger(__name__)

NEAR_SINGULAR = 1e-3

STATIONARITY_TOL = 1e-5
SECTION_PAIRS = {
    ("moment", "l2"): "moment_l2",
    ("l1", "band"): "l1_band",
}


class SearchNotConverged(GapFilterError):
    """Raised only on request; normally non-convergence is reported on the solution."""


@dataclass(frozen=True)
class SearchConfig:
    n_cells: int = 64
    restarts: int = 8
    max_iter: int = 3000
    tol: float = STATIONARITY_TOL
    seed: int = 0
    memory: int = 10
    armijo: float = 1e-4


def pair_id(class_F: AdmissibleClass, class_G: AdmissibleClass) -> str:
    """Label of a class pair, e.g. ``moment_l2_trace`` or ``l1_band_matrix``.

    A known side gives ``<kind>/known_noise`` or ``<kind>/known_signal``.
    """
    if class_F.is_fixed and class_G.is_fixed:
        return "known/known"
    if class_G.is_fixed:
        return f"{class_F.kind}/known_noise"
    if class_F.is_fixed:
        return f"{class_G.kind}/known_signal"
    key = SECTION_PAIRS.get((class_F.family, class_G.family))
    if key is not None:
        i = FAMILY_COORDS[class_F.family].index(class_F.coords)
        j = FAMILY_COORDS[class_G.family].index(class_G.coords)
        if i == j:
            return f"{key}_{class_G.coords}"
    return f"{class_F.kind}x{class_G.kind}"


@dataclass
class Evaluation:
    delta: float
    grads: list  # gradient per free side, same shape as its cells
    r_F: np.ndarray
    r_G: np.ndarray


class _Objective:
    """``Delta`` and its cell gradient for the free sides of a class pair."""

    def __init__(self, bound_F, bound_G, pattern, functional, K, cmap: CellMap):
        self.cmap = cmap
        self.grid = cmap.grid
        self.bound = [bound_F, bound_G]
        self.fixed_grid = [
            None if not b.spec.is_fixed else b.spec.density.on_grid(self.grid) for b in self.bound
        ]
        self.free = [i for i, b in enumerate(self.bound) if not b.spec.is_fixed]
        self.universe = build_universe(pattern, K)
        self.a_bar = embed_coefficients(functional, self.universe)
        self.n_evals = 0

    def grids(self, xs: Sequence[np.ndarray]) -> list[np.ndarray]:
        out = list(self.fixed_grid)
        for i, x in zip(self.free, xs):
            out[i] = self.cmap.to_grid(x)
        return out

    def __call__(self, xs: Sequence[np.ndarray]) -> Evaluation:
        self.n_evals += 1
        Fg, Gg = self.grids(xs)
        W, hits = hermitian_inverse(Fg + Gg)
        pieces = SpectralPieces(Fg, Gg, W, hits)
        ops = assemble_operators(None, None, self.universe, self.grid, pieces=pieces, strict=False)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            try:
                c = solve_coefficients(ops, self.a_bar)
            except SingularDensityError:
                # F + G numerically singular: reject the point
                return Evaluation(-np.inf, [], None, None)
        delta = mse_quadratic(ops, self.a_bar, c)
        r_F, r_G = residual_symbols(pieces, self.universe, self.a_bar, c, self.grid)
        N = self.grid.size
        grads = []
        for i in self.free:
            r = r_G if i == 0 else r_F
            outer = np.einsum("ni,nj->nij", r.conj(), r) / N
            g = self.cmap.collect(outer)
            grads.append(0.5 * (g + g.conj().transpose(0, 2, 1)))
        return Evaluation(delta, grads, r_F, r_G)


def _inner(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> float:
    return float(sum(np.vdot(x, y).real for x, y in zip(a, b)))


def _norm(a: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(max(_inner(a, a), 0.0)))


@dataclass
class AscentResult:
    x: list
    delta: float
    iterations: int
    converged: bool
    stationarity: float
    history: list = field(default_factory=list)


def stationarity_measure(x, g, projected, delta) -> float:
    """``||P(x + tau g) - x|| / tau * ||x|| / |Delta|`` with ``tau = ||x|| / ||g||``."""
    gn, xn = _norm(g), _norm(x)
    if gn == 0.0 or xn == 0.0:
        return 0.0
    tau = xn / gn
    d = [p - xi for p, xi in zip(projected(x, g, tau), x)]
    return _norm(d) / tau * xn / max(abs(delta), 1e-300)


def projected_ascent(objective: _Objective, projections, x0, cfg: SearchConfig) -> AscentResult:
    """Spectral projected gradient ascent for a concave objective over a convex set."""

    def project(xs):
        return [P(x) for P, x in zip(projections, xs)]

    def step(xs, gs, t):
        return project([x + t * g for x, g in zip(xs, gs)])

    x = project(x0)
    ev = objective(x)
    f, g = ev.delta, ev.grads
    history = [f]
    gn = _norm(g)
    alpha = _norm(x) / gn if gn > 0 else 1.0
    measure = stationarity_measure(x, g, step, f)
    it = 0
    while measure > cfg.tol and it < cfg.max_iter:
        it += 1
        trial = step(x, g, alpha)
        d = [p - xi for p, xi in zip(trial, x)]
        slope = _inner(g, d)
        if slope <= 0.0:
            break
        f_ref = min(history[-cfg.memory:])
        t = 1.0
        while True:
            xn = [xi + t * di for xi, di in zip(x, d)] if t < 1.0 else trial
            ev_new = objective(xn)
            if ev_new.delta >= f_ref + cfg.armijo * t * slope:
                break
            drop = t * slope - (ev_new.delta - f) if np.isfinite(ev_new.delta) else np.inf
            t_new = 0.5 * t * t * slope / max(drop, 1e-300)
            t = t_new if 0.1 * t <= t_new <= 0.9 * t else 0.5 * t
            if t < 1e-14:
                break
        if t < 1e-14:
            logger.debug("line search stalled at iteration %d", it)
            break
        s = [a - b for a, b in zip(xn, x)]
        y = [a - b for a, b in zip(ev_new.grads, g)]
        sy = -_inner(s, y)
        ss = _inner(s, s)
        x, f, g = xn, ev_new.delta, ev_new.grads
        history.append(f)
        alpha = ss / sy if sy > 0 else 1e3 * (_norm(x) / max(_norm(g), 1e-300))
        measure = stationarity_measure(x, g, step, f)
    return AscentResult(x, f, it, measure <= cfg.tol, measure, history)


@dataclass(eq=False)
class MinimaxSolution:
    """Least-favorable pair, the robust characteristic and search diagnostics."""

    class_F: AdmissibleClass
    class_G: AdmissibleClass
    F0: SpectralDensity
    G0: SpectralDensity
    F_cells: np.ndarray | None
    G_cells: np.ndarray | None
    filter: FilterSolution = field(repr=False)
    delta0: float
    restart_values: list
    iterations: int
    converged: bool
    stationarity: float
    cmap: CellMap = field(repr=False)
    pair: str = ""
    notes: list = field(default_factory=list)
    relations: object = None

    @property
    def h0(self) -> np.ndarray:
        return self.filter.h

    @property
    def grid(self) -> Grid:
        return self.cmap.grid

    def bound(self) -> tuple[BoundClass, BoundClass]:
        return self.class_F.bind(self.cmap), self.class_G.bind(self.cmap)

    def membership(self) -> dict[str, float]:
        """Constraint violation of each free side (0 means inside its class)."""
        out = {}
        for name, cls, x in (("signal", self.class_F, self.F_cells), ("noise", self.class_G, self.G_cells)):
            if not cls.is_fixed:
                out[name] = cls.bind(self.cmap).violation(x)
        return out

    def recomputed_delta(self) -> float:
        sol = solve_filter(
            self.F0, self.G0, self.filter.pattern, self.filter.functional, self.filter.K, self.grid, check=False
        )
        return sol.mse

    def self_consistent(self, tol: float = 1e-8) -> bool:
        return abs(self.recomputed_delta() - self.delta0) <= tol * max(1.0, abs(self.delta0))


def _density(cls: AdmissibleClass, x) -> SpectralDensity:
    return cls.density if cls.is_fixed else PiecewiseDensity(x)


def solution_at(
    class_F: AdmissibleClass,
    class_G: AdmissibleClass,
    F_cells,
    G_cells,
    pattern: MissingPattern,
    functional: FunctionalSpec,
    K: int,
    cmap: CellMap,
    **diagnostics,
) -> MinimaxSolution:
    """Wrap an arbitrary (not necessarily optimal) pair of class members as a solution."""
    F0, G0 = _density(class_F, F_cells), _density(class_G, G_cells)
    fsol = solve_filter(F0, G0, pattern, functional, K, cmap.grid, check=False)
    Fc = None if class_F.is_fixed else np.array(F0.cells)
    Gc = None if class_G.is_fixed else np.array(G0.cells)
    return MinimaxSolution(
        class_F=class_F, class_G=class_G, F0=F0, G0=G0, F_cells=Fc, G_cells=Gc,
        filter=fsol, delta0=fsol.mse,
        restart_values=diagnostics.get("restart_values", [fsol.mse]),
        iterations=diagnostics.get("iterations", 0),
        converged=diagnostics.get("converged", True),
        stationarity=diagnostics.get("stationarity", float("nan")),
        cmap=cmap, pair=pair_id(class_F, class_G), notes=list(diagnostics.get("notes", [])),
    )


def search_least_favorable(
    class_F: AdmissibleClass,
    class_G: AdmissibleClass,
    pattern: MissingPattern,
    functional: FunctionalSpec,
    K: int | None = None,
    grid: GridLike = None,
    config: SearchConfig | None = None,
    *,
    check_relations: bool = True,
) -> MinimaxSolution:
    """Maximize ``Delta(F, G)`` over ``class_F x class_G``.

    Densities are piecewise constant on ``config.n_cells`` cells. Each restart starts
    from a random class member; the best end point is returned with all restart values.
    """
    cfg = config or SearchConfig()
    g = as_grid(grid)
    if class_F.side != "signal" or class_G.side != "noise":
        raise InfeasibleClassError("the first class must describe the signal and the second the noise")
    if class_F.dim != functional.dim or class_G.dim != functional.dim:
        raise DimensionMismatchError(
            f"class dimensions {class_F.dim}, {class_G.dim} do not match functional dimension {functional.dim}"
        )
    if max(class_F.dim, class_G.dim) > 2:
        logger.warning("full least-favorable search is only validated for T <= 2")
    K = default_truncation(pattern, functional) if K is None else K
    cmap = CellMap(cfg.n_cells, g)
    bF, bG = class_F.bind(cmap), class_G.bind(cmap)
    objective = _Objective(bF, bG, pattern, functional, K, cmap)
    free = [b for b in (bF, bG) if not b.spec.is_fixed]
    notes = []
    if not free:
        sol = solution_at(class_F, class_G, None, None, pattern, functional, K, cmap, notes=["both densities known"])
        return _with_relations(sol, check_relations)

    projections = [b.project for b in free]
    seeds = np.random.SeedSequence(cfg.seed).spawn(max(cfg.restarts, 1))
    singleton = all(b.is_singleton for b in free)
    results = []
    for r, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        x0 = [b.sample(rng) for b in free]
        for _ in range(20):
            if np.isfinite(objective(x0).delta):
                break
            x0 = [b.sample(rng) for b in free]
        res = projected_ascent(objective, projections, x0, cfg)
        logger.info("restart %d: Delta=%.10g iterations=%d stationarity=%.2e", r, res.delta, res.iterations, res.stationarity)
        results.append(res)
        if singleton:
            notes.append("every free class is a single density; no search needed")
            break
    best = max(results, key=lambda res: res.delta)
    if not best.converged:
        notes.append(f"stationarity {best.stationarity:.3e} above tolerance {cfg.tol:.1e} after {best.iterations} iterations")
    cells = [None, None]
    for b, x in zip(free, best.x):
        cells[0 if b is bF else 1] = x
    sol = solution_at(
        class_F, class_G, cells[0], cells[1], pattern, functional, K, cmap,
        restart_values=[res.delta for res in results],
        iterations=best.iterations,
        converged=best.converged,
        stationarity=best.stationarity,
        notes=notes,
    )
    total = cmap.cells_of(sol.F0) + cmap.cells_of(sol.G0)
    eig = np.linalg.eigvalsh(total)
    ratio = float(eig.min() / max(eig.max(), 1e-300))
    if ratio < NEAR_SINGULAR:
        sol.notes.append(
            f"F0 + G0 is nearly singular (eigenvalue ratio {ratio:.2e}); the maximizer approaches "
            "the boundary where the minimality condition fails and convergence is slow"
        )
    return _with_relations(sol, check_relations)


def _with_relations(sol: MinimaxSolution, check: bool) -> MinimaxSolution:
    if check:
        sol.relations = check_optimality_relations(sol)
    return sol


def corollary_mode(
    known: SpectralDensity,
    free_class: AdmissibleClass,
    pattern: MissingPattern,
    functional: FunctionalSpec,
    K: int | None = None,
    grid: GridLike = None,
    config: SearchConfig | None = None,
) -> MinimaxSolution:
    """Search over one side with the other density known exactly."""
    if free_class.side == "signal":
        return search_least_favorable(free_class, fixed_class("noise", known), pattern, functional, K, grid, config)
    return search_least_favorable(fixed_class("signal", known), free_class, pattern, functional, K, grid, config)


def evaluate_delta_cross(solution, F, G, grid: GridLike = None) -> float:
    """Error of the characteristic fixed at ``solution`` when the true densities are ``F``, ``G``.

    ``F`` and ``G`` may be densities or cell arrays on the solution's cell map.
    """
    fsol: FilterSolution = solution.filter if isinstance(solution, MinimaxSolution) else solution
    g = fsol.grid if grid is None else as_grid(grid)
    if g.size != fsol.grid.size:
        raise DimensionMismatchError(f"grid {g.size} differs from the solution grid {fsol.grid.size}")

    def values(D):
        if isinstance(D, SpectralDensity):
            return D.on_grid(g)
        if isinstance(solution, MinimaxSolution):
            return solution.cmap.to_grid(np.asarray(D, dtype=complex))
        raise TypeError("cell arrays need a MinimaxSolution to locate the cells")

    val = _quad_form_mean(fsol.r_G, values(F)) + _quad_form_mean(fsol.r_F, values(G))
    return max(val, 0.0)
