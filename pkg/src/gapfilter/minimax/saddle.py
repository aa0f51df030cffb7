"""Sampling check of the saddle-point inequalities around a least-favorable pair.

Right inequality: the robust characteristic ``h0`` never does worse on a class
member than on ``(F0, G0)``. Left inequality: any admissible change of ``h0``
(weights on observed times only) increases the error at ``(F0, G0)``, to second
order in the size of the change.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..grid import trig_series
from ..indices import observed_indices
from .search import MinimaxSolution, evaluate_delta_cross

SADDLE_TOL = 1e-6


@dataclass
class SaddleReport:
    n_samples: int
    max_excess: float  # max over samples of Delta(h0; F, G) - Delta0
    right_violations: list = field(default_factory=list)  # (sample index, excess)
    quadratic_ratios: list = field(default_factory=list)  # increase(2 eps) / increase(eps)
    left_violations: list = field(default_factory=list)  # (direction index, eps, increase)
    tol: float = SADDLE_TOL

    @property
    def passed(self) -> bool:
        return not self.right_violations and not self.left_violations

    def lines(self) -> list[str]:
        out = [
            f"right inequality: {self.n_samples} samples, max excess {self.max_excess:.3e}, "
            f"{len(self.right_violations)} violations",
        ]
        if self.quadratic_ratios:
            r = np.asarray(self.quadratic_ratios)
            out.append(
                f"left inequality: {len(r)} directions, growth ratio in [{r.min():.4f}, {r.max():.4f}] "
                f"(4 for quadratic), {len(self.left_violations)} violations"
            )
        return out


def verify_saddle(
    sol: MinimaxSolution,
    n_samples: int = 200,
    *,
    seed: int = 0,
    n_directions: int = 5,
    eps: float = 1e-3,
    window: int | None = None,
    tol: float = SADDLE_TOL,
) -> SaddleReport:
    """Test both saddle inequalities by random sampling."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    bF, bG = sol.bound()
    limit = tol * max(1.0, abs(sol.delta0))
    excess, right = [], []
    for i in range(n_samples):
        F = sol.class_F.density if sol.class_F.is_fixed else bF.sample(rng)
        G = sol.class_G.density if sol.class_G.is_fixed else bG.sample(rng)
        e = evaluate_delta_cross(sol, F, G) - sol.delta0
        excess.append(e)
        if e > limit:
            right.append((i, float(e)))
    report = SaddleReport(n_samples, max(excess, default=0.0), right, tol=tol)
    if n_samples == 0:
        return report

    fsol = sol.filter
    times = observed_indices(fsol.pattern, window or fsol.K)
    if not times:
        return report
    lam = fsol.grid.lam
    h_rms = float(np.sqrt(np.mean(np.abs(fsol.h) ** 2))) or 1.0
    for k in range(n_directions):
        v = rng.standard_normal((len(times), fsol.dim)) + 1j * rng.standard_normal((len(times), fsol.dim))
        d = trig_series(v, times, lam, sign=+1)
        d *= h_rms / float(np.sqrt(np.mean(np.abs(d) ** 2)))
        inc = [fsol.mse_of(fsol.h + s * eps * d) - sol.delta0 for s in (1.0, 2.0)]
        for s, value in zip((1.0, 2.0), inc):
            if value < -limit:
                report.left_violations.append((k, s * eps, float(value)))
        if inc[0] > 0:
            report.quadratic_ratios.append(inc[1] / inc[0])
    return report
