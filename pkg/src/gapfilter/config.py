"""Experiment configuration: loading, validation and construction of model objects.

Configs are YAML or JSON mappings. Complex numbers may be written as strings such
as ``"1+0.5j"``. Every validation error is a :class:`ConfigError` naming the field.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .exceptions import ConfigError, GapFilterError
from .grid import DEFAULT_GRID_SIZE
from .indices import FunctionalSpec, MissingPattern
from .spectral import (
    ARDensity,
    ConstantDensity,
    PiecewiseDensity,
    SpectralDensity,
    SumDensity,
    zero_density,
)

MODES = ("filter", "mse", "oracle-check", "minimax", "simulate", "converge")
MANIFEST_KEY = "manifest_version"


def load_document(path: str | Path) -> dict:
    """Read a YAML/JSON mapping; a run manifest yields its recorded config."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {p}: {exc.strerror}") from None
    try:
        doc = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError("config", f"cannot parse {p}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config", f"{p} must contain a mapping at top level")
    if MANIFEST_KEY in doc:
        if not isinstance(doc.get("config"), dict):
            raise ConfigError("config", f"manifest {p} has no recorded config")
        return doc["config"]
    return doc


def _complex(value, where: str):
    """Nested lists of numbers or complex strings -> complex ndarray."""
    def conv(v):
        if isinstance(v, (list, tuple)):
            return [conv(x) for x in v]
        if isinstance(v, bool):
            raise ConfigError(where, f"expected a number, got {v!r}")
        if isinstance(v, (int, float, complex)):
            return complex(v)
        if isinstance(v, str):
            try:
                return complex(v.replace(" ", ""))
            except ValueError:
                raise ConfigError(where, f"cannot read {v!r} as a number") from None
        raise ConfigError(where, f"expected a number, got {v!r}")

    try:
        return np.asarray(conv(value), dtype=complex)
    except ValueError:
        raise ConfigError(where, "ragged array") from None


def _real(value, where: str) -> np.ndarray:
    arr = _complex(value, where)
    if np.any(arr.imag != 0):
        raise ConfigError(where, "expected real numbers")
    return arr.real


def _int(value, where: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ConfigError(where, f"expected an integer, got {value!r}")
    try:
        out = int(value)
    except ValueError:
        raise ConfigError(where, f"expected an integer, got {value!r}") from None
    if float(value) != out:
        raise ConfigError(where, f"expected an integer, got {value!r}")
    if minimum is not None and out < minimum:
        raise ConfigError(where, f"must be >= {minimum}, got {out}")
    return out


def _float(value, where: str) -> float:
    arr = _real(value, where)
    if arr.size != 1:
        raise ConfigError(where, f"expected one number, got {value!r}")
    return float(arr.ravel()[0])


def _square(value, dim: int, where: str) -> np.ndarray:
    arr = _complex(value, where)
    if arr.size == 1:
        return arr.ravel()[0] * np.eye(dim, dtype=complex)
    if arr.shape != (dim, dim):
        raise ConfigError(where, f"expected a {dim}x{dim} matrix, got shape {arr.shape}")
    return arr


def build_density(spec, dim: int, where: str) -> SpectralDensity:
    """Density from a mapping with a ``type`` key.

    ``constant`` (``matrix`` or scalar ``value`` times identity), ``white`` (``scale``),
    ``zero``, ``ar`` (``sigma``, ``phi``, optional ``coherence``), ``piecewise``
    (``cells``: list of T x T matrices or scalars) and ``sum`` (``terms``).
    """
    if not isinstance(spec, dict):
        raise ConfigError(where, f"expected a density mapping with a 'type' key, got {spec!r}")
    kind = spec.get("type")
    try:
        if kind == "constant":
            if "matrix" in spec:
                return ConstantDensity(_square(spec["matrix"], dim, f"{where}.matrix"))
            return ConstantDensity(_float(spec.get("value", 1.0), f"{where}.value") * np.eye(dim))
        if kind == "white":
            return ConstantDensity.identity(dim, _float(spec.get("scale", 1.0), f"{where}.scale"))
        if kind == "zero":
            return zero_density(dim)
        if kind == "ar":
            sigma = _real(spec.get("sigma", [1.0] * dim), f"{where}.sigma").ravel()
            phi = _complex(spec.get("phi"), f"{where}.phi").ravel()
            if sigma.size != dim or phi.size != dim:
                raise ConfigError(where, f"sigma and phi need {dim} entries each")
            coh = spec.get("coherence")
            coh = None if coh is None else _square(coh, dim, f"{where}.coherence")
            return ARDensity(sigma, phi, coh)
        if kind == "piecewise":
            cells = _complex(spec.get("cells"), f"{where}.cells")
            if cells.ndim == 1 and dim == 1:
                cells = cells[:, None, None]
            if cells.ndim != 3 or cells.shape[1:] != (dim, dim):
                raise ConfigError(f"{where}.cells", f"expected n x {dim} x {dim} cells, got shape {cells.shape}")
            return PiecewiseDensity(cells)
        if kind == "sum":
            terms = spec.get("terms")
            if not isinstance(terms, list) or not terms:
                raise ConfigError(f"{where}.terms", "expected a non-empty list of densities")
            parts = [build_density(t, dim, f"{where}.terms[{i}]") for i, t in enumerate(terms)]
            return parts[0] if len(parts) == 1 else SumDensity(tuple(parts))
    except ConfigError:
        raise
    except (GapFilterError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from None
    raise ConfigError(f"{where}.type", f"unknown density type {kind!r}; expected constant, white, zero, ar, piecewise or sum")


def build_pattern(spec, where: str = "pattern") -> MissingPattern:
    if spec is None:
        return MissingPattern()
    if not isinstance(spec, list):
        raise ConfigError(where, f"expected a list of [M, N] intervals, got {spec!r}")
    pairs = []
    for i, item in enumerate(spec):
        if isinstance(item, dict):
            item = [item.get("M"), item.get("N")]
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise ConfigError(f"{where}[{i}]", f"expected [M, N], got {item!r}")
        pairs.append((_int(item[0], f"{where}[{i}].M"), _int(item[1], f"{where}[{i}].N")))
    try:
        return MissingPattern(tuple(pairs))
    except GapFilterError as exc:
        raise ConfigError(where, str(exc)) from None


def build_functional(spec, dim: int, where: str = "functional") -> FunctionalSpec:
    """``{j: a(j)}`` mapping or list of ``[j, a(j)]`` pairs; scalars allowed for T = 1."""
    if isinstance(spec, dict):
        items = list(spec.items())
    elif isinstance(spec, list):
        items = []
        for i, item in enumerate(spec):
            if not isinstance(item, (list, tuple)) or len(item) != 2:
                raise ConfigError(f"{where}[{i}]", f"expected [j, a(j)], got {item!r}")
            items.append(tuple(item))
    else:
        raise ConfigError(where, f"expected a mapping j -> a(j), got {spec!r}")
    if not items:
        raise ConfigError(where, "functional has no coefficients")
    coefs = {}
    for j, v in items:
        jj = _int(j, f"{where}[{j}]")
        vec = _complex(v, f"{where}[{j}]").ravel()
        if vec.size != dim:
            raise ConfigError(f"{where}[{j}]", f"expected {dim} entries, got {vec.size}")
        coefs[jj] = vec
    try:
        return FunctionalSpec(dim, coefs)
    except GapFilterError as exc:
        raise ConfigError(where, str(exc)) from None


def build_class(spec, side: str, dim: int, where: str):
    """Admissible class from ``{kind, level, weight, center, lower, upper}``;
    ``kind: fixed`` (or a missing class) uses ``density``."""
    from .minimax import AdmissibleClass

    if not isinstance(spec, dict):
        raise ConfigError(where, f"expected a class mapping with a 'kind' key, got {spec!r}")
    kind = spec.get("kind")
    args: dict[str, Any] = {}
    for name in ("center", "lower", "upper", "density"):
        if name in spec:
            args[name] = build_density(spec[name], dim, f"{where}.{name}")
    if "level" in spec:
        args["level"] = _complex(spec["level"], f"{where}.level")
    if "weight" in spec:
        args["weight"] = _square(spec["weight"], dim, f"{where}.weight")
    try:
        return AdmissibleClass(side, kind, dim, **args)
    except ConfigError as exc:
        raise ConfigError(f"{where}.{exc.field}", str(exc).split(": ", 1)[-1]) from None
    except GapFilterError as exc:
        raise ConfigError(where, str(exc)) from None


@dataclass
class ExperimentConfig:
    """Validated experiment; ``raw`` is the effective mapping recorded in the manifest."""

    mode: str
    dim: int
    signal: SpectralDensity
    noise: SpectralDensity
    pattern: MissingPattern
    functional: FunctionalSpec
    truncation: int | None
    grid: int
    window: int
    seed: int
    out: str | None
    raw: dict = field(repr=False)

    def section(self, name: str) -> dict:
        sec = self.raw.get(name, {}) or {}
        if not isinstance(sec, dict):
            raise ConfigError(name, f"expected a mapping, got {sec!r}")
        return sec


def parse_config(doc: dict, mode: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Validate ``doc`` (left untouched) with command-line ``overrides`` applied on top."""
    raw = copy.deepcopy(doc)
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    mode = mode or raw.get("mode")
    if mode not in MODES:
        raise ConfigError("mode", f"expected one of {MODES}, got {mode!r}")
    raw["mode"] = mode
    dim = _int(raw.get("dim", 1), "dim", 1)
    signal_spec = raw.get("signal")
    noise_spec = raw.get("noise")
    if signal_spec is None and mode != "minimax":
        raise ConfigError("signal", "missing signal density")
    if noise_spec is None and mode != "minimax":
        raise ConfigError("noise", "missing noise density")
    signal = build_density(signal_spec, dim, "signal") if signal_spec is not None else zero_density(dim)
    noise = build_density(noise_spec, dim, "noise") if noise_spec is not None else zero_density(dim)
    pattern = build_pattern(raw.get("pattern"))
    if "functional" not in raw:
        raise ConfigError("functional", "missing functional coefficients")
    functional = build_functional(raw["functional"], dim)
    try:
        functional.check_pattern(pattern)
    except GapFilterError as exc:
        raise ConfigError("functional", str(exc)) from None
    K = raw.get("truncation")
    K = None if K is None else _int(K, "truncation", max(functional.max_index, 1))
    grid = _int(raw.get("grid", DEFAULT_GRID_SIZE), "grid", 2)
    window = _int(raw.get("window", K or 32), "window", 1)
    seed = _int(raw.get("seed", 0), "seed", 0)
    out = raw.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("out", f"expected a directory path, got {out!r}")
    return ExperimentConfig(mode, dim, signal, noise, pattern, functional, K, grid, window, seed, out, raw)
