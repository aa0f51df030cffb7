"""Euclidean projections used by the least-favorable search.

All operate on stacks of Hermitian cells ``(n, T, T)`` or on real/complex
coordinate vectors, in the Frobenius metric summed over cells.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..exceptions import InfeasibleClassError


def project_psd(cells: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues cell by cell; PSD input is returned unchanged."""
    herm = 0.5 * (cells + cells.conj().transpose(0, 2, 1))
    w, v = np.linalg.eigh(herm)
    if np.all(w >= 0.0) and np.array_equal(herm, cells):
        return cells
    w = np.maximum(w, 0.0)
    return np.einsum("nij,nj,nkj->nik", v, w, v.conj())


def project_simplex(v: np.ndarray, total: float) -> np.ndarray:
    """Projection of a real vector onto ``{w >= 0, sum(w) = total}``."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    k = np.arange(1, v.size + 1)
    hits = np.nonzero(u - css / k > 0)[0]
    rho = hits[-1] if hits.size else 0  # total negligible against v: all mass on the top entry
    return np.maximum(v - css[rho] / (rho + 1.0), 0.0)


def project_spectraplex(cells: np.ndarray, total: float) -> np.ndarray:
    """Projection onto PSD cells with ``sum_c Tr X_c = total`` (eigenvalues onto a simplex)."""
    herm = 0.5 * (cells + cells.conj().transpose(0, 2, 1))
    w, v = np.linalg.eigh(herm)
    w = project_simplex(w.ravel(), total).reshape(w.shape)
    return np.einsum("nij,nj,nkj->nik", v, w, v.conj())


def project_l2_ball(z: np.ndarray, radius: float) -> np.ndarray:
    """Radial projection of a (real or complex) vector onto ``||z||_2 <= radius``."""
    norm = float(np.linalg.norm(z))
    if radius <= 0.0:
        return np.zeros_like(z)
    if norm <= radius:
        return z
    return z * (radius / norm)


def project_l1_ball(z: np.ndarray, radius: float) -> np.ndarray:
    """Projection onto ``sum |z_i| <= radius`` by sorting magnitudes; phases are kept."""
    mag = np.abs(z)
    if radius <= 0.0:
        return np.zeros_like(z)
    if mag.sum() <= radius:
        return z
    u = np.sort(mag)[::-1]
    css = np.cumsum(u)
    hits = np.nonzero(u * np.arange(1, u.size + 1) > css - radius)[0]
    rho = hits[-1] if hits.size else 0  # radius lost to round-off against the largest entry
    theta = (css[rho] - radius) / (rho + 1.0)
    shrunk = np.maximum(mag - theta, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        phase = np.where(mag > 0, z / np.where(mag > 0, mag, 1.0), 0.0)
    return (phase * shrunk).astype(z.dtype, copy=False)


def project_box_mean(y: np.ndarray, lo: np.ndarray, hi: np.ndarray, target_mean: float, tol: float = 1e-14) -> np.ndarray:
    """Closest point to ``y`` with ``lo <= y <= hi`` and ``mean(y) = target_mean``.

    The solution is ``clip(y + tau, lo, hi)`` for a scalar ``tau`` found by bisection.
    """
    n = y.size
    if target_mean < lo.mean() - 1e-12 * max(1.0, abs(target_mean)) or target_mean > hi.mean() + 1e-12 * max(1.0, abs(target_mean)):
        raise InfeasibleClassError(
            f"band mean {target_mean:.6g} outside attainable range [{lo.mean():.6g}, {hi.mean():.6g}]"
        )
    if np.all(lo == hi):
        return lo.copy()

    def excess(tau):
        return np.clip(y + tau, lo, hi).sum() - n * target_mean

    span = float(np.max(hi - lo)) + float(np.max(np.abs(y))) + abs(target_mean) + 1.0
    a, b = -span, span
    while excess(a) > 0:
        a *= 2
    while excess(b) < 0:
        b *= 2
    for _ in range(200):
        mid = 0.5 * (a + b)
        if excess(mid) > 0:
            b = mid
        else:
            a = mid
        if b - a <= tol * span:
            break
    return np.clip(y + 0.5 * (a + b), lo, hi)


def dykstra(
    x0: np.ndarray,
    projections: Sequence[Callable[[np.ndarray], np.ndarray]],
    violation: Callable[[np.ndarray], float],
    *,
    tol: float = 1e-12,
    max_iter: int = 5000,
) -> np.ndarray:
    """Dykstra's alternating projections onto the intersection of convex sets.

    Returns the output of the last projection once ``violation`` drops below ``tol``.
    """
    if len(projections) == 1:
        return projections[0](x0)
    x = x0
    incs = [np.zeros_like(x0) for _ in projections]
    for it in range(max_iter):
        prev = x
        for i, proj in enumerate(projections):
            y = proj(x + incs[i])
            incs[i] = x + incs[i] - y
            x = y
        if violation(x) <= tol and np.linalg.norm(x - prev) <= tol * max(1.0, np.linalg.norm(x)):
            return x
    if violation(x) <= 1e3 * tol:
        return x
    raise InfeasibleClassError(f"alternating projections did not converge (violation {violation(x):.3e})")
