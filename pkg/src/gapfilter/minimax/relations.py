"""Residuals of the optimality relations at a candidate least-favorable pair.

Every relation has the form ``M K M = M Lambda M`` on a cell, where ``M = F0 + G0``,
``K`` is the cell average of ``conj(r) r^T`` (``r = r_G`` for the signal side,
``r = r_F`` for the noise side) and ``Lambda`` is built from the class constraint:
a shared multiplier times a fixed direction, possibly plus per-cell slack terms
whose signs or magnitudes are restricted. Shared multipliers and slack terms are
fitted by least squares; the residual is the largest relative mismatch over the
cells where the relation is required to hold.

Cells where the density has a zero eigenvalue are excluded from the equality fit;
there the PSD constraint only asks ``K - Lambda`` to be negative semidefinite, which
is counted separately.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classes import BoundClass

RELATION_TOL = 5e-2
ACTIVE_RTOL = 1e-8
ZERO_RTOL = 1e-9


@dataclass
class RelationResult:
    name: str
    residual: float
    multipliers: dict = field(default_factory=dict)
    active_cells: int = 0
    violations: int = 0
    note: str = ""


@dataclass
class RelationReport:
    pair: str
    results: list
    tol: float = RELATION_TOL

    @property
    def max_residual(self) -> float:
        return max((r.residual for r in self.results), default=0.0)

    @property
    def violations(self) -> int:
        return sum(r.violations for r in self.results)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol and self.violations == 0

    def lines(self) -> list[str]:
        out = []
        for r in self.results:
            mult = ", ".join(f"{k}={_fmt(v)}" for k, v in r.multipliers.items())
            out.append(
                f"{r.name}: residual={r.residual:.3e} active={r.active_cells} violations={r.violations}"
                + (f" [{mult}]" if mult else "") + (f" ({r.note})" if r.note else "")
            )
        return out


def _fmt(v) -> str:
    a = np.asarray(v)
    if a.ndim == 0:
        return f"{complex(a).real:.6g}" if abs(complex(a).imag) < 1e-300 else f"{complex(a):.6g}"
    return np.array2string(a, precision=4)


def _herm_basis(T: int) -> list[np.ndarray]:
    out = []
    for i in range(T):
        for j in range(i, T):
            e = np.zeros((T, T), dtype=complex)
            if i == j:
                e[i, i] = 1.0
                out.append(e)
            else:
                e[i, j] = e[j, i] = 1.0
                out.append(e)
                f = np.zeros((T, T), dtype=complex)
                f[i, j], f[j, i] = 1j, -1j
                out.append(f)
    return out


def _pair_dir(T: int, i: int, j: int, value: complex) -> np.ndarray:
    e = np.zeros((T, T), dtype=complex)
    e[i, j] = value
    e[j, i] = np.conj(value)
    return e


def _fit(K, L, R, shared, free):
    """Least-squares fit of ``L_c K_c R_c ~ L_c (sum_b theta_b shared[c][b] + sum_f kappa_cf free[c][f]) R_c``.

    ``shared[c]`` / ``free[c]`` are lists of direction matrices per cell. Returns
    ``theta``, ``kappa`` (list per cell) and the per-cell relative residuals.
    """
    n = len(K)
    nb = max((len(s) for s in shared), default=0)
    offsets, total = [], nb
    for f in free:
        offsets.append(total)
        total += len(f)
    rows, rhs = [], []
    for c in range(n):
        size = K[c].size * 2
        cols = np.zeros((size, total))
        for b, D in enumerate(shared[c]):
            m = L[c] @ D @ R[c]
            cols[:, b] = np.concatenate([m.real.ravel(), m.imag.ravel()])
        for k, D in enumerate(free[c]):
            m = L[c] @ D @ R[c]
            cols[:, offsets[c] + k] = np.concatenate([m.real.ravel(), m.imag.ravel()])
        rows.append(cols)
        lhs = L[c] @ K[c] @ R[c]
        rhs.append(np.concatenate([lhs.real.ravel(), lhs.imag.ravel()]))
    A, y = np.vstack(rows), np.concatenate(rhs)
    sol = np.linalg.lstsq(A, y, rcond=None)[0] if total else np.zeros(0)
    theta = sol[:nb]
    kappa = [sol[offsets[c]:offsets[c] + len(free[c])] for c in range(n)]
    lhs_all = [L[c] @ K[c] @ R[c] for c in range(n)]
    scale = max((np.linalg.norm(x) for x in lhs_all), default=0.0)
    res = []
    for c in range(n):
        fit = L[c] @ _combine(theta, shared[c], kappa[c], free[c], K[c].shape[0]) @ R[c]
        den = max(np.linalg.norm(lhs_all[c]), np.linalg.norm(fit), 1e-12 * scale, 1e-300)
        res.append(float(np.linalg.norm(lhs_all[c] - fit) / den))
    return theta, kappa, res


def _combine(theta, shared, kappa, free, T) -> np.ndarray:
    out = np.zeros((T, T), dtype=complex)
    for t, D in zip(theta, shared):
        out = out + t * D
    for k, D in zip(kappa, free):
        out = out + k * D
    return out


class _Side:
    """Cell data needed to check one side's relation."""

    def __init__(self, bound: BoundClass, x: np.ndarray, K: np.ndarray, M: np.ndarray, label: str):
        self.bound, self.x, self.K, self.M, self.label = bound, x, K, M, label
        self.T = x.shape[1]
        eig, vec = np.linalg.eigh(x)
        cut = ACTIVE_RTOL * max(float(eig.max()), 1e-300)
        self.pd = eig.min(axis=1) > cut
        self.zero = eig.max(axis=1) <= cut
        # range and null-space bases of each cell
        self.range = [vec[c][:, eig[c] > cut] for c in range(len(x))]
        self.null = [vec[c][:, eig[c] <= cut] for c in range(len(x))]

    def transforms(self, c: int):
        """``(L, R)`` of the relation on cell ``c``: ``M K M`` on positive-definite cells,
        ``(K - Lambda) P = 0`` with ``P`` the range projector on singular cells."""
        if self.pd[c]:
            return self.M[c], self.M[c]
        U = self.range[c]
        return np.eye(self.T), U @ U.conj().T


def _psd_slack(side: _Side, Lams: dict) -> int:
    """Singular cells where ``K - Lambda`` is not negative semidefinite on the null space."""
    count = 0
    for c, Lam in Lams.items():
        if side.pd[c]:
            continue
        Nc = side.null[c]
        top = np.linalg.eigvalsh(Nc.conj().T @ (side.K[c] - Lam) @ Nc).max()
        if top > RELATION_TOL * max(np.linalg.norm(Lam), np.linalg.norm(side.K[c]), 1e-300):
            count += 1
    return count


def _relation_shared(side: _Side, name: str, dirs_per_cell, labels, free_per_cell=None, free_check=None):
    """Generic relation with shared multipliers and optional per-cell slack terms.

    Cells with a nonzero density enter the fit; positive-definite cells in the
    ``M K M = M Lambda M`` form and singular cells restricted to the density's range.
    """
    cells = [c for c in range(len(side.x)) if not side.zero[c]]
    if not cells:
        return RelationResult(name, 0.0, note="density vanishes on every cell"), {}
    shared = [dirs_per_cell(c) for c in cells]
    free = [free_per_cell(c) if free_per_cell else [] for c in cells]
    LR = [side.transforms(c) for c in cells]
    theta, kappa, res = _fit([side.K[c] for c in cells], [t[0] for t in LR], [t[1] for t in LR], shared, free)
    mult = {lab: float(t) for lab, t in zip(labels, theta)}
    viol = 0
    if free_check is not None:
        for i, c in enumerate(cells):
            viol += free_check(c, theta, kappa[i])
    Lams = {}
    fitted = dict(zip(cells, range(len(cells))))
    for c in range(len(side.x)):
        if c in fitted:
            i = fitted[c]
            Lams[c] = _combine(theta, shared[i], kappa[i], free[i], side.T)
        elif not (free_per_cell and free_per_cell(c)):
            # empty cell: only the shared part is determined
            Lams[c] = _combine(theta, dirs_per_cell(c), [], [], side.T)
    viol += _psd_slack(side, Lams)
    n_pd = int(sum(side.pd[c] for c in cells))
    note = "" if n_pd == len(cells) else f"{len(cells) - n_pd} singular cells checked on the density range"
    return RelationResult(name, max(res), mult, len(cells), viol, note), mult


def _moment(side: _Side) -> list[RelationResult]:
    b, T = side.bound, side.T
    coord = b.coords
    if coord == "matrix":
        basis = _herm_basis(T)
        res, mult = _relation_shared(side, side.label, lambda c: basis, [f"m{k}" for k in range(len(basis))])
        Lam = sum(t * D for t, D in zip(mult.values(), basis))
        res.multipliers = {"Lambda": Lam, "Lambda_eigenvalues": np.linalg.eigvalsh(Lam)}
        return [res]
    dirs = [B.T for B in b.weights]
    labels = ["alpha2"] if len(dirs) == 1 else [f"alpha2_{k}" for k in range(len(dirs))]
    res, mult = _relation_shared(side, side.label, lambda c: dirs, labels)
    res.violations += sum(1 for v in mult.values() if v < -1e-12)
    return [res]


def _deviation_dirs(side: _Side, center: np.ndarray, fam: str):
    """Directions of the ball relations per cell plus the zero-deviation free terms."""
    b, T = side.bound, side.T
    coord = b.coords
    dev = side.x - center
    scale = b.scale
    if coord == "entry":
        pairs = b._pairs()

        def value(c, i, j):
            return dev[c, i, j] if fam == "l2" else _phase(dev[c, i, j], scale)

        def shared(c):
            return [_pair_dir(T, i, j, value(c, i, j)) for i, j in pairs]

        def free(c):
            if fam == "l2":
                return []
            out = []
            for i, j in pairs:
                if abs(dev[c, i, j]) <= ZERO_RTOL * scale:
                    out.append(_pair_dir(T, i, j, 1.0))
                    if i != j:
                        out.append(_pair_dir(T, i, j, 1j))
            return out

        labels = [f"{'beta' if fam == 'l2' else 'alpha'}_{i}{j}" for i, j in pairs]
        return shared, free, labels, pairs
    weights = b.weights
    d = np.stack([np.einsum("ij,cij->c", B, dev).real for B in weights], axis=1)

    def shared(c):
        if fam == "l2":
            return [d[c, k] * B.T for k, B in enumerate(weights)]
        return [_phase(d[c, k], scale) * B.T for k, B in enumerate(weights)]

    def free(c):
        if fam == "l2":
            return []
        return [B.T for k, B in enumerate(weights) if abs(d[c, k]) <= ZERO_RTOL * scale]

    name = "beta2" if fam == "l2" else "alpha2"
    labels = [name] if len(weights) == 1 else [f"{name}_{k}" for k in range(len(weights))]
    return shared, free, labels, None


def _phase(v: complex, scale: float) -> complex:
    return 0.0 if abs(v) <= ZERO_RTOL * scale else v / abs(v)


def _ball(side: _Side) -> list[RelationResult]:
    b = side.bound
    fam = b.spec.family
    shared, free, labels, pairs = _deviation_dirs(side, b._center, fam)

    def check_free(c, theta, kappa):
        # zero deviation: gamma may be anything with |gamma| <= 1, i.e. |coefficient| <= multiplier
        if fam == "l2" or len(kappa) == 0:
            return 0
        bound = float(np.max(np.abs(theta))) if len(theta) else 0.0
        mags = np.abs(kappa)
        return int(np.sum(mags > (1 + RELATION_TOL) * bound + 1e-300))

    res, mult = _relation_shared(side, side.label, shared, labels, free, check_free)
    if fam == "l1":
        res.violations += sum(1 for v in mult.values() if v < -1e-12)
    out = [res]
    for name, value, bound, _ in b.constraint_values(side.x):
        rel = abs(value - bound) / max(abs(bound), 1e-300)
        out.append(RelationResult(f"{side.label}:budget:{name}", rel, {"value": value, "radius": bound}, note="ball boundary"))
    return out


def _band(side: _Side) -> list[RelationResult]:
    b, T = side.bound, side.T
    scale = b.scale
    if b.coords == "matrix":
        basis = _herm_basis(T)
        tol = ZERO_RTOL * scale
        lo_eig, lo_vec = np.linalg.eigh(side.x - b._lo)
        hi_eig, hi_vec = np.linalg.eigh(b._hi - side.x)
        at_lo = lo_eig.min(axis=1) <= tol
        at_hi = hi_eig.min(axis=1) <= tol

        def null_dirs(vec, eig):
            # Hermitian directions supported on the null space of the active limit
            Nc = vec[:, eig <= tol]
            return [Nc @ H @ Nc.conj().T for H in _herm_basis(Nc.shape[1])]

        free_lo = [null_dirs(lo_vec[c], lo_eig[c]) if at_lo[c] else [] for c in range(len(side.x))]
        free_hi = [null_dirs(hi_vec[c], hi_eig[c]) if at_hi[c] else [] for c in range(len(side.x))]

        def free(c):
            return free_lo[c] + free_hi[c]

        def check(c, theta, kappa):
            # K - Lambda = Gamma_2 - Gamma_1 with Gamma_1 >= 0 at the lower and Gamma_2 >= 0 at the upper limit
            if len(kappa) == 0 or (at_lo[c] and at_hi[c]):
                return 0
            Gam = _combine([], [], kappa, free(c), T)
            ev = np.linalg.eigvalsh(Gam)
            ref = max(np.linalg.norm(_combine(theta, basis, [], [], T)), 1e-300)
            if at_lo[c]:
                return int(ev.max() > RELATION_TOL * ref)
            return int(ev.min() < -RELATION_TOL * ref)

        def shared(c):
            return basis

        res, mult = _relation_shared(side, side.label, shared, [f"m{k}" for k in range(len(basis))], free, check)
        Lam = sum(t * D for t, D in zip(mult.values(), basis))
        res.multipliers = {"beta_outer": Lam, "beta_outer_eigenvalues": np.linalg.eigvalsh(Lam)}
        res.note = f"{int(np.sum(at_lo))} cells at lower limit, {int(np.sum(at_hi))} at upper"
        return [res]
    weights = b.weights
    s = np.stack([b.functional(side.x, k) for k in range(len(weights))], axis=1)
    lo = np.stack([b.functional(b._lo, k) for k in range(len(weights))], axis=1)
    hi = np.stack([b.functional(b._hi, k) for k in range(len(weights))], axis=1)
    at_lo = s - lo <= ZERO_RTOL * scale
    at_hi = hi - s <= ZERO_RTOL * scale

    def shared(c):
        return [B.T for B in weights]

    def free(c):
        return [B.T for k, B in enumerate(weights) if at_lo[c, k] or at_hi[c, k]]

    def check(c, theta, kappa):
        bad, i = 0, 0
        for k in range(len(weights)):
            if not (at_lo[c, k] or at_hi[c, k]):
                continue
            gamma = kappa[i]
            i += 1
            ref = max(abs(theta[k]), 1e-300)
            if at_lo[c, k] and not at_hi[c, k] and gamma > RELATION_TOL * ref:
                bad += 1
            if at_hi[c, k] and not at_lo[c, k] and gamma < -RELATION_TOL * ref:
                bad += 1
        return bad

    labels = ["beta2"] if len(weights) == 1 else [f"beta2_{k}" for k in range(len(weights))]
    res, mult = _relation_shared(side, side.label, shared, labels, free, check)
    res.note = f"{int(at_lo.any(axis=1).sum())} cells at lower limit, {int(at_hi.any(axis=1).sum())} at upper"
    return [res]


def check_optimality_relations(sol, pair: str | None = None, tol: float = RELATION_TOL) -> RelationReport:
    """Fit multipliers and report residuals of the relations for each free side."""
    cmap = sol.cmap
    fsol = sol.filter
    N = cmap.grid.size
    bF, bG = sol.bound()
    xF = sol.F_cells if sol.F_cells is not None else cmap.cells_of(sol.class_F.density)
    xG = sol.G_cells if sol.G_cells is not None else cmap.cells_of(sol.class_G.density)
    M = xF + xG
    avg = cmap.n_cells / N

    def outer(r):
        return cmap.collect(np.einsum("ni,nj->nij", r.conj(), r)) * avg

    results = []
    for label, bound, x, r in (("signal", bF, xF, fsol.r_G), ("noise", bG, xG, fsol.r_F)):
        spec = bound.spec
        name = f"{label}:{spec.kind}"
        if spec.is_fixed:
            continue
        if bound.is_singleton:
            results.append(RelationResult(name, 0.0, note="class has a single member; relation holds trivially"))
            continue
        side = _Side(bound, x, outer(r), M, name)
        if spec.family == "moment":
            results += _moment(side)
        elif spec.family in ("l2", "l1"):
            results += _ball(side)
        else:
            results += _band(side)
    return RelationReport(pair or sol.pair, results, tol)
