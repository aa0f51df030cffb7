"""Admissible sets of spectral densities and their exact projections on cells.

Every non-fixed class constrains one of these coordinates of each cell ``X_c``:

* ``trace``    -- ``Tr X_c``
* ``diag``     -- each diagonal entry ``x_kk`` separately
* ``weighted`` -- ``<B, X_c> = sum_ij b_ij x_ij`` for a Hermitian positive-definite ``B``
* ``entry``    -- every entry ``x_ij`` (Hermitian pairs share one constraint)
* ``matrix``   -- the whole matrix in the Loewner order

through one of four families: ``moment`` (cell mean fixed), ``l2`` / ``l1``
(mean squared / absolute deviation from a centre density bounded), ``band``
(pointwise bounds plus a fixed mean). ``fixed`` pins a known density.
Means over cells equal the frequency averages ``(1/2pi) int ... dlam``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np

from ..exceptions import ConfigError, InfeasibleClassError
from ..spectral import PiecewiseDensity, SpectralDensity, hermitian_psd
from .cells import CellMap
from .projections import (
    dykstra,
    project_box_mean,
    project_l1_ball,
    project_l2_ball,
    project_psd,
    project_spectraplex,
)

FAMILY_COORDS = {
    "moment": ("trace", "diag", "weighted", "matrix"),
    "l2": ("trace", "diag", "weighted", "entry"),
    "l1": ("trace", "diag", "weighted", "entry"),
    "band": ("trace", "diag", "weighted", "matrix"),
}
KINDS = tuple(f"{fam}_{c}" for fam, cs in FAMILY_COORDS.items() for c in cs) + ("fixed",)
SIDES = ("signal", "noise")
MEMBERSHIP_TOL = 1e-8


def _matrix(value, dim: int, what: str) -> np.ndarray:
    m = np.atleast_2d(np.asarray(value, dtype=complex))
    if m.shape != (dim, dim):
        raise ConfigError(what, f"expected a {dim}x{dim} matrix, got shape {m.shape}")
    return m


def _positive_definite(m: np.ndarray, what: str) -> np.ndarray:
    if np.max(np.abs(m - m.conj().T)) > 1e-12 * max(np.max(np.abs(m)), 1e-300):
        raise ConfigError(what, "matrix must be Hermitian")
    if np.linalg.eigvalsh(m).min() <= 0:
        raise ConfigError(what, "matrix must be positive definite")
    return 0.5 * (m + m.conj().T)


@dataclass(frozen=True, eq=False)
class AdmissibleClass:
    """Declarative description of a set of admissible densities for one side.

    ``level`` holds ``p`` / ``p_k`` / ``P`` (moment), ``delta`` / ``delta_k`` /
    ``delta_ij`` (balls) or ``q`` / ``q_k`` / ``Q`` (bands). ``weight`` is ``B`` for the
    weighted kinds, ``center`` the reference density of a ball, ``lower`` / ``upper``
    the band limits and ``density`` the known density of a ``fixed`` class.
    """

    side: str
    kind: str
    dim: int
    level: Any = None
    weight: Any = None
    center: SpectralDensity | None = None
    lower: SpectralDensity | None = None
    upper: SpectralDensity | None = None
    density: SpectralDensity | None = None

    def __post_init__(self):
        if self.side not in SIDES:
            raise ConfigError("side", f"must be one of {SIDES}, got {self.side!r}")
        if self.kind not in KINDS:
            raise ConfigError("kind", f"unknown class kind {self.kind!r}; expected one of {KINDS}")
        T = self.dim
        if self.kind == "fixed":
            if self.density is None or self.density.dim != T:
                raise ConfigError("density", f"a fixed class needs a density of dimension {T}")
            return
        fam, coord = self.family, self.coords
        if coord == "weighted":
            if self.weight is None:
                raise ConfigError("weight", f"{self.kind} needs a weight matrix")
            object.__setattr__(self, "weight", _positive_definite(_matrix(self.weight, T, "weight"), "weight"))
        if fam in ("l2", "l1") and (self.center is None or self.center.dim != T):
            raise ConfigError("center", f"{self.kind} needs a centre density of dimension {T}")
        if fam == "band":
            for name in ("lower", "upper"):
                d = getattr(self, name)
                if d is None or d.dim != T:
                    raise ConfigError(name, f"{self.kind} needs a {name} density of dimension {T}")
        if self.level is None:
            raise ConfigError("level", f"{self.kind} needs a level (moment, radius or band mean)")
        object.__setattr__(self, "level", self._check_level(np.asarray(self.level, dtype=complex)))

    def _check_level(self, lev: np.ndarray):
        T, fam, coord = self.dim, self.family, self.coords
        if coord in ("trace", "weighted"):
            if lev.size != 1 or abs(lev.imag).max() > 0:
                raise ConfigError("level", f"{self.kind} needs one real number")
            val = float(lev.real.ravel()[0])
            if val < 0 or (fam in ("moment", "band") and val == 0):
                raise ConfigError("level", f"{self.kind} level must be positive, got {val}")
            return val
        if coord == "diag":
            v = lev.real.ravel() if lev.size == T else None
            if v is None or np.any(lev.imag != 0):
                raise ConfigError("level", f"{self.kind} needs {T} real numbers")
            if np.any(v < 0) or (fam in ("moment", "band") and np.any(v == 0)):
                raise ConfigError("level", f"{self.kind} levels must be positive, got {v}")
            return v.astype(float)
        if coord == "entry":
            m = np.broadcast_to(lev, (T, T)) if lev.size == 1 else lev.reshape(T, T) if lev.size == T * T else None
            if m is None or np.any(m.imag != 0) or np.any(m.real < 0):
                raise ConfigError("level", f"{self.kind} needs a {T}x{T} matrix of nonnegative radii")
            r = np.minimum(m.real, m.real.T)  # a Hermitian pair is one constraint
            return r.astype(float)
        return _positive_definite(_matrix(lev, T, "level"), "level")

    @property
    def family(self) -> str:
        return self.kind.split("_")[0]

    @property
    def coords(self) -> str:
        return self.kind.split("_", 1)[1] if "_" in self.kind else ""

    @property
    def is_fixed(self) -> bool:
        return self.kind == "fixed"

    def bind(self, cmap: CellMap) -> "BoundClass":
        return BoundClass(self, cmap)


def fixed_class(side: str, density: SpectralDensity) -> AdmissibleClass:
    return AdmissibleClass(side, "fixed", density.dim, density=density)


def _unit(T: int, k: int) -> np.ndarray:
    e = np.zeros((T, T), dtype=complex)
    e[k, k] = 1.0
    return e


@dataclass(eq=False)
class BoundClass:
    """An :class:`AdmissibleClass` discretized on a cell map."""

    spec: AdmissibleClass
    cmap: CellMap
    _center: np.ndarray | None = field(init=False, default=None, repr=False)

    def __post_init__(self):
        c = self.spec
        if c.center is not None:
            self._center = self.cmap.cells_of(c.center)
        if c.family == "band":
            lo, hi = self.cmap.cells_of(c.lower), self.cmap.cells_of(c.upper)
            if c.coords == "matrix":
                gap = np.linalg.eigvalsh(hi - lo).min()
                if gap < -1e-12 * max(1.0, np.abs(hi).max()):
                    raise InfeasibleClassError(f"band lower limit exceeds upper limit (eigenvalue {gap:.3e})")
            self._lo, self._hi = lo, hi
        self._check_feasible()

    @property
    def T(self) -> int:
        return self.spec.dim

    @property
    def n(self) -> int:
        return self.cmap.n_cells

    @property
    def coords(self) -> str:
        """Constrained coordinate; every kind reduces to ``trace`` for scalar densities."""
        return "trace" if self.T == 1 else self.spec.coords

    # --- linear coordinates ------------------------------------------------
    @cached_property
    def weights(self) -> list[np.ndarray]:
        """Matrices ``B`` with functional ``<B, X> = sum b_ij x_ij`` (trace/diag/weighted kinds)."""
        T, coord = self.T, self.coords
        if coord == "trace":
            return [np.eye(T, dtype=complex)]
        if coord == "diag":
            return [_unit(T, k) for k in range(T)]
        if coord == "weighted":
            return [np.asarray(self.spec.weight)]
        return []

    def functional(self, x: np.ndarray, b: int) -> np.ndarray:
        """``<B_b, X_c>`` per cell (real)."""
        return np.einsum("ij,cij->c", self.weights[b], x).real

    def _direction(self, b: int) -> tuple[np.ndarray, float]:
        B = self.weights[b]
        norm = float(np.linalg.norm(B))
        return B.conj() / norm, norm

    def _coordinate(self, x: np.ndarray, b: int) -> np.ndarray:
        D, norm = self._direction(b)
        return self.functional(x, b) / norm

    def _set_coordinate(self, x: np.ndarray, b: int, y: np.ndarray) -> np.ndarray:
        D, _ = self._direction(b)
        perp = x - self._coordinate(x, b)[:, None, None] * D
        return perp + y[:, None, None] * D

    def _level(self, b: int):
        lev = self.spec.level
        if self.T == 1:
            return float(np.real(np.ravel(lev)[0]))
        return lev[b] if self.coords == "diag" else lev

    def _pairs(self):
        return [(i, j) for i in range(self.T) for j in range(i, self.T)]

    # --- set projections ---------------------------------------------------
    def _project_constraint(self, x: np.ndarray) -> np.ndarray:
        fam, coord, n = self.spec.family, self.coords, self.n
        if coord == "matrix" and fam == "moment":
            return x + (np.asarray(self.spec.level) - x.mean(axis=0))[None]
        if coord == "entry":
            out = x.copy()
            proj = project_l2_ball if fam == "l2" else project_l1_ball
            for i, j in self._pairs():
                r = float(self.spec.level[i, j])
                radius = np.sqrt(n * r) if fam == "l2" else n * r
                z = x[:, i, j] - self._center[:, i, j]
                if i == j:
                    z = z.real
                zp = self._center[:, i, j] + proj(z, radius)
                out[:, i, j] = zp
                out[:, j, i] = np.conj(zp)
            return out
        for b in range(len(self.weights)):
            _, norm = self._direction(b)
            y = self._coordinate(x, b)
            lev = self._level(b)
            if fam == "moment":
                y = y + (lev / norm - y.mean())
            elif fam in ("l2", "l1"):
                yc = self._coordinate(self._center, b)
                radius = np.sqrt(n * lev) / norm if fam == "l2" else n * lev / norm
                proj = project_l2_ball if fam == "l2" else project_l1_ball
                y = yc + proj(y - yc, radius)
            else:
                lo = self._coordinate(self._lo, b)
                hi = self._coordinate(self._hi, b)
                y = project_box_mean(y, lo, hi, lev / norm)
            x = self._set_coordinate(x, b, y)
        return x

    def _project_band_lower(self, x):
        return self._lo + project_psd(x - self._lo)

    def _project_band_upper(self, x):
        return self._hi - project_psd(self._hi - x)

    def _project_mean(self, x):
        return x + (np.asarray(self.spec.level) - x.mean(axis=0))[None]

    @cached_property
    def scale(self) -> float:
        """Typical size of a cell entry, used to make tolerances relative."""
        c, T = self.spec, self.T
        fam = c.family
        if fam == "moment":
            lev = np.asarray(c.level)
            s = float(np.trace(lev).real) / T if c.coords == "matrix" else float(np.sum(lev)) / max(T, 1)
            if c.coords == "weighted":
                s /= float(np.trace(c.weight).real) / T
        elif fam == "band":
            s = float(np.abs(self._hi).max())
        else:
            s = max(float(np.abs(self._center).max()), float(np.sqrt(np.max(c.level))), float(np.max(c.level)))
        return max(s, 1e-300)

    def violation(self, x: np.ndarray) -> float:
        """Largest constraint violation of ``x`` relative to :attr:`scale`."""
        s = self.scale
        eig = np.linalg.eigvalsh(0.5 * (x + x.conj().transpose(0, 2, 1)))
        worst = max(0.0, -float(eig.min()) / s)
        worst = max(worst, float(np.abs(x - x.conj().transpose(0, 2, 1)).max()) / s)
        for name, value, bound, kind in self.constraint_values(x):
            if kind == "eq":
                worst = max(worst, abs(value - bound) / max(abs(bound), s))
            else:
                worst = max(worst, max(0.0, value - bound) / max(abs(bound), s, s * s))
        return worst

    def constraint_values(self, x: np.ndarray) -> list[tuple[str, float, float, str]]:
        """``(name, value, bound, 'eq' | 'le')`` for every scalar constraint."""
        c, fam, out = self.spec, self.spec.family, []
        if self.coords == "matrix":
            mean = x.mean(axis=0)
            lev = np.asarray(c.level)
            for i, j in self._pairs():
                out.append((f"mean[{i},{j}]", float(abs(mean[i, j] - lev[i, j])), 0.0, "eq"))
            if fam == "band":
                lo_gap = -np.linalg.eigvalsh(x - self._lo).min()
                hi_gap = -np.linalg.eigvalsh(self._hi - x).min()
                out.append(("lower", float(lo_gap), 0.0, "le"))
                out.append(("upper", float(hi_gap), 0.0, "le"))
            return out
        if self.coords == "entry":
            for i, j in self._pairs():
                z = x[:, i, j] - self._center[:, i, j]
                val = np.mean(np.abs(z) ** 2) if fam == "l2" else np.mean(np.abs(z))
                out.append((f"dev[{i},{j}]", float(val), float(c.level[i, j]), "le"))
            return out
        for b in range(len(self.weights)):
            f = self.functional(x, b)
            lev = self._level(b)
            if fam == "moment":
                out.append((f"moment[{b}]", float(f.mean()), float(lev), "eq"))
            elif fam in ("l2", "l1"):
                d = f - self.functional(self._center, b)
                val = np.mean(d ** 2) if fam == "l2" else np.mean(np.abs(d))
                out.append((f"dev[{b}]", float(val), float(lev), "le"))
            else:
                out.append((f"mean[{b}]", float(f.mean()), float(lev), "eq"))
                lo, hi = self.functional(self._lo, b), self.functional(self._hi, b)
                out.append((f"lower[{b}]", float(np.max(lo - f)), 0.0, "le"))
                out.append((f"upper[{b}]", float(np.max(f - hi)), 0.0, "le"))
        return out

    def _projections(self):
        if self.spec.family == "band" and self.coords == "matrix":
            return [self._project_band_lower, self._project_band_upper, self._project_mean]
        return [project_psd, self._project_constraint]

    @property
    def is_singleton(self) -> bool:
        """True when the class has exactly one member (zero radius or collapsed band)."""
        c = self.spec
        if c.family in ("l2", "l1"):
            full = c.coords == "entry" or self.T == 1
            return full and bool(np.all(np.asarray(c.level) == 0))
        if c.family == "band":
            full = c.coords == "matrix" or self.T == 1
            return full and bool(np.array_equal(self._lo, self._hi))
        return False

    def project(self, x: np.ndarray) -> np.ndarray:
        """Euclidean projection onto the class (PSD cells satisfying the constraint)."""
        if self.is_singleton:
            return self.singleton_point()
        if self.spec.family == "moment" and self.coords == "trace":
            return project_spectraplex(np.asarray(x, dtype=complex), self.n * float(self._level(0)))
        out = dykstra(np.asarray(x, dtype=complex), self._projections(), self.violation)
        # round-off can leave eigenvalues of order -1e-13 * scale in empty cells
        return project_psd(out)

    def singleton_point(self) -> np.ndarray:
        c = self.spec
        pt = self._center if c.family in ("l2", "l1") else self._lo
        return hermitian_psd(pt, "singleton class member")

    def contains(self, x: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        return self.violation(x) <= tol

    def _check_feasible(self):
        c = self.spec
        if c.family == "band":
            for b in range(len(self.weights)):
                lo = self.functional(self._lo, b).mean()
                hi = self.functional(self._hi, b).mean()
                lev = self._level(b)
                if not (lo - 1e-12 * abs(lev) <= lev <= hi + 1e-12 * abs(lev)):
                    raise InfeasibleClassError(f"{c.kind}: mean {lev} outside band range [{lo:.6g}, {hi:.6g}]")
        if c.family in ("l2", "l1"):
            eig = np.linalg.eigvalsh(self._center).min()
            if eig < -1e-10 * max(1.0, np.abs(self._center).max()):
                raise InfeasibleClassError(f"{c.kind}: centre density is not PSD")

    # --- sampling ----------------------------------------------------------
    def random_cells(self, rng: np.random.Generator) -> np.ndarray:
        """Random PSD cells of roughly the class scale (not yet projected)."""
        T, n, s = self.T, self.n, self.scale
        a = rng.standard_normal((n, T, T)) + 1j * rng.standard_normal((n, T, T))
        x = np.einsum("nij,nkj->nik", a, a.conj()) / (2 * T)
        x *= np.exp(rng.normal(0.0, 1.0, n))[:, None, None] * s
        if self.spec.family in ("l2", "l1"):
            x = self._center + (x - x.mean(axis=0)) * rng.uniform(0.2, 3.0)
        elif self.spec.family == "band":
            t = rng.uniform(0.0, 1.0, n)[:, None, None]
            x = self._lo + t * (self._hi - self._lo) + 0.1 * x
        return x

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Random member: projection of random cells, shrunk towards another member."""
        if self.is_singleton:
            return self.singleton_point()
        x = self.project(self.random_cells(rng))
        if self.spec.family in ("l2", "l1"):
            anchor = self.project(self._center)
        else:
            anchor = self.project(self.random_cells(rng))
        t = rng.uniform(0.0, 1.0)
        return t * x + (1.0 - t) * anchor

    def to_density(self, x: np.ndarray) -> PiecewiseDensity:
        return PiecewiseDensity(x)
