"""Index sets for observations with missing intervals.

Observations are available at the strictly negative times ``{-1, -2, ...}`` except a
finite union of gaps ``S = U_l {-(M_l + N_l), ..., -M_l}``. The functional to be
estimated is ``A xi = sum_j a(j)^T xi(-j)`` over ``j >= 1`` outside the mirrored gaps
``S+ = U_l {M_l, ..., M_l + N_l}``. Filter coefficients ``c(j)`` live on
``U = S u {0, 1, 2, ...}``, truncated here to ``U_K = S u {0, ..., K}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from .exceptions import PatternError


@dataclass(frozen=True)
class MissingPattern:
    """Gaps given as ``(M, N)`` pairs: times ``-(M + N), ..., -M`` are unobserved."""

    intervals: tuple = ()

    def __post_init__(self):
        pairs = []
        for item in self.intervals:
            try:
                m, n = (int(v) for v in item)
            except (TypeError, ValueError):
                raise PatternError(f"interval {item!r} is not an (M, N) pair") from None
            if m < 1 or n < 0:
                raise PatternError(f"interval (M={m}, N={n}) needs M >= 1 and N >= 0")
            pairs.append((m, n))
        pairs.sort()
        for (m1, n1), (m2, n2) in zip(pairs, pairs[1:]):
            if m2 <= m1 + n1:
                raise PatternError(
                    f"intervals (M={m1}, N={n1}) and (M={m2}, N={n2}) overlap: "
                    f"{{{m1}..{m1 + n1}}} and {{{m2}..{m2 + n2}}}"
                )
        object.__setattr__(self, "intervals", tuple(pairs))

    @classmethod
    def single_gap(cls, M: int, N: int) -> "MissingPattern":
        """One missing interval ``{-(M + N), ..., -M}``."""
        return cls(((M, N),))

    @classmethod
    def single_point(cls, s: int) -> "MissingPattern":
        """Only the time ``-s`` is missing."""
        return cls(((s, 0),))

    @cached_property
    def missing(self) -> tuple[int, ...]:
        """``S`` in ascending order (negative integers)."""
        return tuple(sorted(-t for m, n in self.intervals for t in range(m, m + n + 1)))

    @cached_property
    def mirrored(self) -> tuple[int, ...]:
        """``S+ = -S`` in ascending order."""
        return tuple(sorted(-t for t in self.missing))

    @property
    def size(self) -> int:
        return sum(n + 1 for _, n in self.intervals)

    @property
    def depth(self) -> int:
        """Largest ``M_l + N_l`` (0 for no gaps)."""
        return max((m + n for m, n in self.intervals), default=0)

    def is_missing(self, t: int) -> bool:
        return t in set(self.missing)

    def to_list(self) -> list[list[int]]:
        return [[m, n] for m, n in self.intervals]


@dataclass(frozen=True)
class IndexUniverse:
    """Ordered truncated index set ``U_K``: ``S`` ascending, then ``0..K``."""

    pattern: MissingPattern
    K: int

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise PatternError(f"truncation K must be an integer >= 1, got {self.K!r}")
        object.__setattr__(self, "K", int(self.K))

    @cached_property
    def indices(self) -> tuple[int, ...]:
        return tuple(self.pattern.missing) + tuple(range(self.K + 1))

    @cached_property
    def position(self) -> dict[int, int]:
        return {j: p for p, j in enumerate(self.indices)}

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, j) -> bool:
        return j in self.position

    def block(self, j: int, dim: int) -> slice:
        p = self.position[j]
        return slice(p * dim, (p + 1) * dim)


def build_universe(pattern: MissingPattern, K: int) -> IndexUniverse:
    return IndexUniverse(pattern, K)


@dataclass(frozen=True)
class FunctionalSpec:
    """Coefficients ``a(j)`` (T-vectors) of ``A xi = sum_j a(j)^T xi(-j)``, ``j >= 1``."""

    dim: int
    coefficients: Mapping = field(default_factory=dict)

    def __post_init__(self):
        coefs = {}
        for j, vec in dict(self.coefficients).items():
            j = int(j)
            if j < 1:
                raise PatternError(f"functional index {j} must be >= 1 (a(0) is zero by construction)")
            v = np.atleast_1d(np.asarray(vec, dtype=complex))
            if v.shape != (self.dim,):
                raise PatternError(f"a({j}) has shape {v.shape}, expected ({self.dim},)")
            coefs[j] = v
        object.__setattr__(self, "coefficients", dict(sorted(coefs.items())))

    @classmethod
    def from_pairs(cls, dim: int, pairs: Iterable) -> "FunctionalSpec":
        return cls(dim, {int(j): v for j, v in pairs})

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(j for j, v in self.coefficients.items() if np.any(v != 0))

    @property
    def max_index(self) -> int:
        return max(self.support, default=0)

    def truncated(self, N: int) -> "FunctionalSpec":
        """Coefficients restricted to ``j <= N`` (the functional ``A_N``)."""
        return FunctionalSpec(self.dim, {j: v for j, v in self.coefficients.items() if j <= N})

    def check_pattern(self, pattern: MissingPattern) -> None:
        hit = sorted(set(self.support) & set(pattern.mirrored))
        if hit:
            raise PatternError(f"functional support {hit} falls on mirrored gap indices; a(j) must vanish there")

    def symbol(self, lam) -> np.ndarray:
        """``A(e^{i lam}) = sum_j a(j) exp(-i j lam)`` with shape ``lam.shape + (T,)``."""
        lam = np.asarray(lam, dtype=float)
        out = np.zeros(lam.shape + (self.dim,), dtype=complex)
        for j, v in self.coefficients.items():
            out = out + np.exp(-1j * j * lam)[..., None] * v
        return out

    def norm2(self) -> float:
        return float(sum(np.vdot(v, v).real for v in self.coefficients.values()))


def embed_coefficients(f: FunctionalSpec, u: IndexUniverse) -> np.ndarray:
    """Zero-padded block vector over ``U_K``: ``a(j)`` at ``j`` in the support, 0 elsewhere."""
    if f.max_index > u.K:
        raise PatternError(f"functional support reaches {f.max_index} but truncation K = {u.K}")
    f.check_pattern(u.pattern)
    out = np.zeros(len(u) * f.dim, dtype=complex)
    for j, v in f.coefficients.items():
        out[u.block(j, f.dim)] = v
    return out


def observed_indices(pattern: MissingPattern, L: int) -> list[int]:
    """Observed times in the window ``{-1, ..., -L}``, newest first."""
    if L < 1:
        raise PatternError(f"window L must be >= 1, got {L}")
    miss = set(pattern.missing)
    return [t for t in range(-1, -L - 1, -1) if t not in miss]


def default_truncation(pattern: MissingPattern, functional: FunctionalSpec) -> int:
    return max(4 * (functional.max_index + pattern.depth), 1)
