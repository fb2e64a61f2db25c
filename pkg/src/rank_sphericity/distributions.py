"""
Samplers for the five simulation scenarios and the diagonal spike transform.

Scenarios I-III are elliptical (normal, multivariate t4, normal scale
mixture); IV and V are factor models with iid standardized Gamma or t4
coordinates. Observations are ``X_i = A Y_i + location`` where ``A`` scales
the first ``floor(v p)`` coordinates by sqrt(2).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError
from .rank_tests import ShapeSpec
from .sign_core import SampleMatrix

__all__ = [
    "Scenario",
    "ScenarioSpec",
    "make_rng",
    "sample",
    "scale_matrix",
    "shape_from_v",
    "spike_count",
]


class Scenario(str, enum.Enum):
    I = "I"  # standard normal
    II = "II"  # multivariate t, 4 df
    III = "III"  # kappa N(0, I) + (1 - kappa) N(0, 9 I)
    IV = "IV"  # factor model, standardized Gamma(shape 4, rate 0.5)
    V = "V"  # factor model, standardized t4

    @classmethod
    def parse(cls, value) -> "Scenario":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise InvalidInputError(f"unknown scenario {value!r}; expected one of I, II, III, IV, V") from None


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: Scenario
    n: int
    p: int
    v: float = 0.0
    seed: int = 0
    kappa: float = 0.8
    location: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario.parse(self.scenario))
        if self.n < 1 or self.p < 1:
            raise InvalidInputError(f"n and p must be positive, got n={self.n}, p={self.p}")
        if not (0.0 <= self.v <= 1.0):
            raise InvalidInputError(f"v must lie in [0, 1], got {self.v}")
        if not (0.0 < self.kappa < 1.0):
            raise InvalidInputError(f"kappa must lie in (0, 1), got {self.kappa}")
        if not (0 <= int(self.seed) < 2**64):
            raise InvalidInputError("seed must be a 64-bit unsigned integer")
        if self.location is not None:
            loc = tuple(float(c) for c in self.location)
            if len(loc) != self.p or not all(math.isfinite(c) for c in loc):
                raise InvalidInputError("location must be a finite vector of length p")
            object.__setattr__(self, "location", loc)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def spike_count(p: int, v: float) -> int:
    # Integer truncation of v p; the epsilon keeps e.g. 0.3 * 10 from landing on 2.999...
    return int(math.floor(v * p + 1e-9))


def scale_matrix(p: int, v: float) -> np.ndarray:
    """Diagonal of A: sqrt(2) on the first floor(v p) coordinates, 1 elsewhere."""
    if p < 1 or not (0.0 <= v <= 1.0):
        raise InvalidInputError(f"need p >= 1 and 0 <= v <= 1, got p={p}, v={v}")
    a = np.ones(p)
    a[: spike_count(p, v)] = math.sqrt(2.0)
    return a


def shape_from_v(p: int, v: float) -> ShapeSpec:
    """Traces of the normalized shape ``Lambda = p A^2 / tr(A^2)``."""
    if p < 1 or not (0.0 <= v <= 1.0):
        raise InvalidInputError(f"need p >= 1 and 0 <= v <= 1, got p={p}, v={v}")
    m = spike_count(p, v)
    s = p + m
    return ShapeSpec(
        tr_D2=m * (p - m) * p / s**2,
        tr_L2=p**2 * (p + 3 * m) / s**2,
        tr_L4=p**4 * (p + 15 * m) / s**4,
        p=p,
    )


def _chi2_4(rng: np.random.Generator, size) -> np.ndarray:
    z = rng.standard_normal(tuple(np.atleast_1d(size)) + (4,))
    return np.einsum("...k,...k->...", z, z)


def _draw_base(spec: ScenarioSpec, rng: np.random.Generator) -> np.ndarray:
    n, p = spec.n, spec.p
    sc = spec.scenario
    if sc is Scenario.I:
        return rng.standard_normal((n, p))
    if sc is Scenario.II:
        z = rng.standard_normal((n, p))
        w = _chi2_4(rng, n)
        return z / np.sqrt(w / 4.0)[:, None]
    if sc is Scenario.III:
        z = rng.standard_normal((n, p))
        wide = rng.random(n) >= spec.kappa
        return z * np.where(wide, 3.0, 1.0)[:, None]
    if sc is Scenario.IV:
        g = rng.gamma(shape=4.0, scale=2.0, size=(n, p))
        return (g - 8.0) / 4.0
    # Scenario V: iid t4 coordinates with unit variance.
    z = rng.standard_normal((n, p))
    w = _chi2_4(rng, (n, p))
    return z * np.sqrt(4.0 / w) / math.sqrt(2.0)


def sample(spec: ScenarioSpec) -> SampleMatrix:
    """Draw an n x p sample for ``spec``; deterministic in ``spec.seed``."""
    rng = make_rng(spec.seed)
    Y = _draw_base(spec, rng)
    X = Y * scale_matrix(spec.p, spec.v)
    if spec.location is not None:
        X = X + np.asarray(spec.location)
    return SampleMatrix(X)
