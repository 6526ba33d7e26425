"""Monte Carlo estimates and their mergeable accumulators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

__all__ = ["Estimate", "Accumulator"]


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    n_paths: int
    confidence_level: float = 0.95
    metadata: dict = field(default_factory=dict, compare=False)
    valid: bool = True

    @property
    def half_width(self):
        return stats.norm.ppf(0.5 + 0.5 * self.confidence_level) * self.std_error

    def within(self, target, n_se=3.0, budget=0.0):
        """``|mean - target| <= n_se * SE + budget``."""
        return abs(self.mean - target) <= n_se * self.std_error + budget

    def __str__(self):
        flag = "" if self.valid else " [INVALID]"
        return f"{self.mean:.6g} +/- {self.std_error:.3g} (n={self.n_paths}){flag}"


@dataclass
class Accumulator:
    """Mergeable ``(count, mean, sum of squared deviations)`` triple.

    ``merge`` is commutative and associative up to floating-point
    reassociation (Chan et al. pairwise update).
    """

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    exploded: int = 0

    def add(self, values):
        v = np.asarray(values, dtype=float).ravel()
        if v.size == 0:
            return self
        other = Accumulator(int(v.size), float(np.mean(v)), 0.0)
        other.m2 = float(np.sum((v - other.mean) ** 2))
        merged = self.merge(other)
        self.count, self.mean, self.m2 = merged.count, merged.mean, merged.m2
        return self

    def merge(self, other):
        n = self.count + other.count
        if n == 0:
            return Accumulator(exploded=self.exploded + other.exploded)
        d = other.mean - self.mean
        mean = self.mean + d * other.count / n
        m2 = self.m2 + other.m2 + d * d * self.count * other.count / n
        return Accumulator(n, mean, m2, self.exploded + other.exploded)

    def estimate(self, confidence_level=0.95, metadata=None):
        n = self.count
        mean = self.mean if n else math.nan
        se = math.sqrt(self.m2 / (n - 1) / n) if n > 1 else math.nan
        meta = dict(metadata or {})
        meta["exploded"] = self.exploded
        return Estimate(mean, se, n, confidence_level, meta, valid=self.exploded == 0)

    @classmethod
    def of(cls, values):
        return cls().add(values)
