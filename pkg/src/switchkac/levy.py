"""Levy measures: tail masses, moment quadrature, truncated jump sampling.

A measure describes the jump intensity nu(dz) of the driving Poisson random
measure.  Every integral over marks goes through :func:`integrate`, which
uses Gauss-Legendre panels in ``log|z|`` split at the truncation level and
at ``|z| = 1``; this keeps the singularity of infinite-activity measures at
the origin harmless.

Jumps with ``|z| <= delta`` are dropped by the simulator; the dropped part
is quantified by :func:`small_jump_second_moment` and the drift that
compensates the retained large jumps by :func:`compensator_correction`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ConfigurationError, QuadratureError

__all__ = [
    "QuadParams",
    "LevyMeasure",
    "CompoundPoisson",
    "StableLike",
    "Tabulated",
    "SeparableJump",
    "AliasTable",
    "integrate",
    "integrate_checked",
    "tail_mass",
    "sample_jumps",
    "compensator_correction",
    "small_jump_second_moment",
    "choose_truncation",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
_LOG_PANEL_WIDTH = 0.5


@dataclass(frozen=True)
class QuadParams:
    """Quadrature settings for integrals against a Levy measure.

    The integral is evaluated at ``base_level`` and ``refinements`` further
    levels (each halving the panel width); the last two must agree to
    ``atol + rtol * |value|``.
    """

    atol: float = 1e-8
    rtol: float = 0.0
    base_level: int = 0
    refinements: int = 2


def _gl_panels(a, b, n_panels):
    """Gauss-Legendre nodes/weights for ``[a, b]`` split into equal panels."""
    edges = np.linspace(a, b, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return x, w


def _radial_log_nodes(lo, hi, level, breaks=(1.0,)):
    """Nodes ``r`` and weights for ``int_lo^hi g(r) dr`` using panels in log r.

    ``lo`` must be positive and finite.  Panel edges always include the
    points in ``breaks`` that fall inside ``(lo, hi)``.
    """
    if not (0.0 < lo < hi < math.inf):
        return np.empty(0), np.empty(0)
    pts = [math.log(lo)]
    pts += [math.log(b) for b in sorted(breaks) if lo < b < hi]
    pts.append(math.log(hi))
    width = _LOG_PANEL_WIDTH / 2**level
    rs, ws = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, int(math.ceil((b - a) / width)))
        s, w = _gl_panels(a, b, n)
        r = np.exp(s)
        rs.append(r)
        ws.append(w * r)
    return np.concatenate(rs), np.concatenate(ws)


class AliasTable:
    """Walker alias table for O(1) categorical draws."""

    def __init__(self, probs):
        p = np.asarray(probs, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any(p < 0) or p.sum() <= 0:
            raise ConfigurationError("alias table needs a non-empty non-negative weight vector")
        k = p.size
        scaled = p * k / p.sum()
        prob = np.zeros(k)
        alias = np.zeros(k, dtype=np.int64)
        small = [j for j in range(k) if scaled[j] < 1.0]
        large = [j for j in range(k) if scaled[j] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] -= 1.0 - scaled[s]
            (small if scaled[g] < 1.0 else large).append(g)
        for j in large + small:
            prob[j] = 1.0
            alias[j] = j
        self.prob = prob
        self.alias = alias

    def sample(self, size, rng):
        k = self.prob.size
        col = rng.integers(0, k, size=size)
        keep = rng.random(size) < self.prob[col]
        return np.where(keep, col, self.alias[col])


class LevyMeasure:
    """Common interface of the supported Levy measure variants.

    Subclasses implement ``tail_mass``, ``nodes`` and ``sample_marks``.
    ``nodes(lo, hi, level)`` returns marks ``z`` of shape ``(K, dim)`` and
    weights of shape ``(K,)`` so that ``sum(w * g(z))`` approximates the
    integral of ``g`` over ``{lo < |z| <= hi}``.
    """

    dim = 1
    outer = math.inf

    @property
    def infinite_activity(self) -> bool:
        return math.isinf(self.tail_mass(0.0))

    def tail_mass(self, delta):
        raise NotImplementedError

    def nodes(self, lo=0.0, hi=math.inf, level=0):
        raise NotImplementedError

    def sample_marks(self, size, delta, rng):
        raise NotImplementedError

    def symmetric(self) -> bool:
        return False


@dataclass(frozen=True)
class StableLike(LevyMeasure):
    """``nu(dz) = intensity * |z|**(-1-beta) dz`` on ``inner < |z| <= outer`` (1-D)."""

    beta: float
    inner: float = 0.0
    outer: float = math.inf
    intensity: float = 1.0
    dim: int = field(default=1, init=False)

    def __post_init__(self):
        if not 0.0 < self.beta < 2.0:
            raise ConfigurationError(f"stable-like index beta must lie in (0, 2), got {self.beta}")
        if self.inner < 0 or self.outer <= self.inner:
            raise ConfigurationError("stable-like cutoffs must satisfy 0 <= inner < outer")
        if self.intensity <= 0:
            raise ConfigurationError("stable-like intensity must be positive")

    def _radial_tail(self, r):
        # nu({|z| > r}) for r >= inner
        b = self.beta
        hi = 0.0 if math.isinf(self.outer) else self.outer ** (-b)
        if r >= self.outer:
            return 0.0
        if r == 0.0:
            return math.inf
        return 2.0 * self.intensity * (r ** (-b) - hi) / b

    def tail_mass(self, delta):
        return self._radial_tail(max(delta, self.inner))

    def symmetric(self):
        return True

    def _floor(self):
        if self.inner > 0:
            return self.inner
        # neglected second moment below the floor is ~1e-13 * intensity
        return 1e-13 ** (1.0 / (2.0 - self.beta))

    def _ceiling(self):
        if not math.isinf(self.outer):
            return self.outer
        # neglected tail mass above the ceiling is ~1e-14
        return min(1e300, (1e-14 * self.beta / (2.0 * self.intensity)) ** (-1.0 / self.beta))

    def nodes(self, lo=0.0, hi=math.inf, level=0):
        a = max(lo, self._floor())
        b = min(hi, self._ceiling())
        r, w = _radial_log_nodes(a, b, level, breaks=(1.0, lo) if lo > 0 else (1.0,))
        w = w * self.intensity * r ** (-1.0 - self.beta)
        z = np.concatenate([r, -r])[:, None]
        return z, np.concatenate([w, w])

    def sample_marks(self, size, delta, rng):
        r0 = max(delta, self.inner)
        if r0 <= 0:
            raise ConfigurationError("infinite activity requires delta > 0")
        b = self.beta
        top = 0.0 if math.isinf(self.outer) else self.outer ** (-b)
        u = rng.random(size)
        r = (r0 ** (-b) - u * (r0 ** (-b) - top)) ** (-1.0 / b)
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return (sign * r)[:, None]

    def radial_cdf(self, r, delta):
        """CDF of ``|z|`` under the normalized tail measure ``nu(. ; |z| > delta)``."""
        r0 = max(delta, self.inner)
        total = self._radial_tail(r0)
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        for idx, v in np.ndenumerate(r):
            out[idx] = 0.0 if v <= r0 else 1.0 - self._radial_tail(min(v, self.outer)) / total
        return out


class CompoundPoisson(LevyMeasure):
    """Finite measure ``rate * law(mark)``.

    Marks are either a discrete set of atoms (any dimension) or normally
    distributed (1-D).  Build with :meth:`discrete` or :meth:`normal`.
    """

    def __init__(self, rate, *, values=None, probs=None, mean=None, std=None):
        if not rate > 0:
            raise ConfigurationError("compound Poisson rate must be positive")
        self.rate = float(rate)
        if values is not None:
            v = np.asarray(values, dtype=float)
            if v.ndim == 1:
                v = v[:, None]
            p = np.full(len(v), 1.0 / len(v)) if probs is None else np.asarray(probs, dtype=float)
            if p.shape != (len(v),) or np.any(p < 0) or not math.isclose(p.sum(), 1.0, rel_tol=1e-12):
                raise ConfigurationError("mark probabilities must be non-negative and sum to one")
            if np.any(np.linalg.norm(v, axis=1) == 0):
                raise ConfigurationError("a Levy measure cannot charge the origin")
            self.kind = "discrete"
            self.values, self.probs = v, p
            self.dim = v.shape[1]
        elif mean is not None and std is not None:
            if not std > 0:
                raise ConfigurationError("normal mark std must be positive")
            self.kind = "normal"
            self.mean, self.std = float(mean), float(std)
            self.dim = 1
        else:
            raise ConfigurationError("compound Poisson needs atoms or a normal mark law")

    @classmethod
    def discrete(cls, rate, values, probs=None):
        return cls(rate, values=values, probs=probs)

    @classmethod
    def normal(cls, rate, mean, std):
        return cls(rate, mean=mean, std=std)

    def __repr__(self):
        if self.kind == "discrete":
            return f"CompoundPoisson(rate={self.rate}, atoms={len(self.values)})"
        return f"CompoundPoisson(rate={self.rate}, normal({self.mean}, {self.std}))"

    def symmetric(self):
        if self.kind == "normal":
            return self.mean == 0.0
        key = {tuple(v): p for v, p in zip(self.values, self.probs)}
        return all(math.isclose(key.get(tuple(-np.asarray(v)), -1.0), p) for v, p in key.items())

    def tail_mass(self, delta):
        if self.kind == "discrete":
            keep = np.linalg.norm(self.values, axis=1) > delta
            return self.rate * float(self.probs[keep].sum())
        if delta <= 0:
            return self.rate
        d = stats.norm(self.mean, self.std)
        return self.rate * float(d.sf(delta) + d.cdf(-delta))

    def mark_moment(self, k):
        """Raw moment ``E[Z**k]`` of the (untruncated) 1-D mark law."""
        if self.kind == "normal":
            return float(stats.norm(self.mean, self.std).moment(k))
        return float(np.sum(self.probs * self.values[:, 0] ** k))

    def nodes(self, lo=0.0, hi=math.inf, level=0):
        if self.kind == "discrete":
            r = np.linalg.norm(self.values, axis=1)
            keep = (r > lo) & (r <= hi)
            return self.values[keep], self.rate * self.probs[keep]
        a, b = self.mean - 12 * self.std, self.mean + 12 * self.std
        n = 24 * 2**level
        zs, ws = [], []
        for s0, s1 in ((max(a, -hi), min(b, -lo)), (max(a, lo), min(b, hi))):
            if s1 > s0:
                z, w = _gl_panels(s0, s1, max(1, int(math.ceil(n * (s1 - s0) / (b - a)))))
                zs.append(z)
                ws.append(w * self.rate * stats.norm.pdf(z, self.mean, self.std))
        if not zs:
            return np.empty((0, 1)), np.empty(0)
        return np.concatenate(zs)[:, None], np.concatenate(ws)

    def sample_marks(self, size, delta, rng):
        if self.kind == "discrete":
            keep = np.linalg.norm(self.values, axis=1) > delta
            if size and not keep.any():
                raise ConfigurationError("no marks exceed the truncation level")
            vals = self.values[keep]
            idx = AliasTable(self.probs[keep]).sample(size, rng) if size else np.empty(0, dtype=int)
            return vals[idx]
        out = np.empty(size)
        filled = 0
        while filled < size:
            z = rng.normal(self.mean, self.std, size - filled)
            z = z[np.abs(z) > delta]
            out[filled:filled + z.size] = z
            filled += z.size
        return out[:, None]


class Tabulated(LevyMeasure):
    """Atomic 1-D measure with explicit nodes and weights (symmetric grid expected)."""

    def __init__(self, nodes, weights):
        z = np.asarray(nodes, dtype=float).ravel()
        w = np.asarray(weights, dtype=float).ravel()
        if z.shape != w.shape or z.size == 0:
            raise ConfigurationError("tabulated measure needs matching node and weight arrays")
        if np.any(w < 0) or np.any(z == 0):
            raise ConfigurationError("tabulated weights must be >= 0 and nodes nonzero")
        self.z, self.w = z, w
        self.dim = 1

    def __repr__(self):
        return f"Tabulated({self.z.size} nodes)"

    def symmetric(self):
        order = np.argsort(self.z)
        return np.allclose(self.z[order], -self.z[order][::-1]) and np.allclose(
            self.w[order], self.w[order][::-1])

    def tail_mass(self, delta):
        return float(self.w[np.abs(self.z) > delta].sum())

    def nodes(self, lo=0.0, hi=math.inf, level=0):
        keep = (np.abs(self.z) > lo) & (np.abs(self.z) <= hi)
        return self.z[keep][:, None], self.w[keep]

    def sample_marks(self, size, delta, rng):
        keep = np.abs(self.z) > delta
        if size and not keep.any():
            raise ConfigurationError("no nodes exceed the truncation level")
        if not size:
            return np.empty((0, 1))
        return self.z[keep][AliasTable(self.w[keep]).sample(size, rng)][:, None]


class SeparableJump:
    """Jump coefficient ``gamma(x, i, z) = scale(x, i) * shape(z)`` (elementwise).

    ``scale`` maps ``(x (N, n), i (N,))`` to ``(N, n)``; ``shape`` maps marks
    ``(N, d)`` to ``(N, n)``.  Separability lets mark integrals be computed
    once per measure instead of once per state.
    """

    def __init__(self, scale, shape):
        self.scale = scale
        self.shape = shape
        self._moments = {}

    def __call__(self, x, i, z):
        return self.scale(x, i) * self.shape(z)

    def shape_integral(self, measure, lo, hi=math.inf, quad=QuadParams()):
        key = (id(measure), lo, hi, quad)
        if key not in self._moments:
            self._moments[key] = integrate_checked(measure, self.shape, lo, hi, quad)
        return self._moments[key]


def integrate(measure, func, lo=0.0, hi=math.inf, level=0):
    """Integral of ``func(z)`` over ``{lo < |z| <= hi}``; ``func`` maps ``(K, d)`` to ``(K, ...)``."""
    z, w = measure.nodes(lo, hi, level)
    if len(w) == 0:
        probe = np.asarray(func(np.zeros((1, measure.dim)) + 1.0))
        return np.zeros(probe.shape[1:]) if probe.ndim > 1 else 0.0
    vals = np.asarray(func(z), dtype=float)
    return np.tensordot(w, vals, axes=(0, 0))


def integrate_checked(measure, func, lo=0.0, hi=math.inf, quad=QuadParams()):
    """:func:`integrate` with refinement: raises :class:`QuadratureError` on disagreement."""
    levels = range(quad.base_level, quad.base_level + quad.refinements + 1)
    vals = [integrate(measure, func, lo, hi, lv) for lv in levels]
    if len(vals) >= 2:
        coarse, fine = vals[-2], vals[-1]
        gap = np.max(np.abs(np.asarray(fine) - np.asarray(coarse)))
        if not np.all(np.isfinite(fine)) or gap > quad.atol + quad.rtol * np.max(np.abs(fine)):
            raise QuadratureError("Levy quadrature did not converge", coarse, fine)
    return vals[-1]


def tail_mass(measure, delta):
    """``nu({|z| > delta})``; closed form for parametric variants."""
    if not delta > 0:
        raise ConfigurationError("tail_mass needs delta > 0")
    return measure.tail_mass(delta)


def sample_jumps(measure, delta, T, rng):
    """Compound-Poisson skeleton of the jumps with ``|z| > delta`` on ``[0, T]``.

    Returns ``(times, marks)`` with times sorted ascending and marks of shape
    ``(count, dim)``.
    """
    if T <= 0:
        raise ConfigurationError("horizon T must be positive")
    lam = measure.tail_mass(delta)
    if math.isinf(lam):
        raise ConfigurationError("infinite activity requires delta > 0")
    count = int(rng.poisson(lam * T)) if lam > 0 else 0
    times = np.sort(rng.uniform(0.0, T, count))
    marks = measure.sample_marks(count, delta, rng) if count else np.empty((0, measure.dim))
    return times, marks


def _state_arrays(spec, state):
    x = np.asarray(state.x, dtype=float).reshape(1, spec.n)
    return x, np.array([state.regime])


def compensator_correction(spec, state, delta, quad=QuadParams()):
    """Drift ``-int_{|z|>delta} gamma(x, i, z) nu(dz)`` compensating retained jumps."""
    x, i = _state_arrays(spec, state)
    return -_jump_first_moment(spec, x, i, delta, quad)[0]


def _jump_first_moment(spec, x, i, lo, quad=QuadParams()):
    """Vectorized ``int_{|z|>lo} gamma(x, i, z) nu(dz)`` for states ``x (N, n)``."""
    measure = spec.levy
    n_states = x.shape[0]
    if measure is None or measure.tail_mass(lo) == 0.0:
        return np.zeros((n_states, spec.n))
    gamma = spec.jump_coeff
    if isinstance(gamma, SeparableJump):
        moment = gamma.shape_integral(measure, lo, quad=quad)
        return gamma.scale(x, i) * moment
    out = np.empty((n_states, spec.n))
    for k in range(n_states):
        xk, ik = x[k:k + 1], i[k:k + 1]

        def g(z, xk=xk, ik=ik):
            return gamma(np.repeat(xk, len(z), axis=0), np.repeat(ik, len(z)), z)

        out[k] = integrate_checked(measure, g, lo, math.inf, quad)
    return out


def small_jump_second_moment(spec, state, delta, quad=QuadParams()):
    """``int_{|z|<=delta} |gamma(x, i, z)|^2 nu(dz)``: the variance dropped by truncation."""
    if not delta > 0:
        raise ConfigurationError("small_jump_second_moment needs delta > 0")
    if spec.levy is None:
        return 0.0
    x, i = _state_arrays(spec, state)

    def g(z):
        gam = spec.jump_coeff(np.repeat(x, len(z), axis=0), np.repeat(i, len(z)), z)
        return np.sum(gam**2, axis=1)

    return float(integrate_checked(spec.levy, g, 0.0, delta, quad))


def choose_truncation(spec, state, T, target_variance, delta_max=1.0, factor=1e-4):
    """Largest ``delta`` (by bisection in log scale) with dropped variance below
    ``factor * target_variance / T``."""
    budget = factor * target_variance / T
    if small_jump_second_moment(spec, state, delta_max) <= budget:
        return delta_max
    lo, hi = 1e-12, delta_max
    for _ in range(60):
        mid = math.sqrt(lo * hi)
        if small_jump_second_moment(spec, state, mid) <= budget:
            lo = mid
        else:
            hi = mid
    return lo
