"""Hybrid-system data model and the pointwise generator.

Coefficient functions are vectorized over states: they receive ``x`` of
shape ``(N, n)`` and integer regimes ``i`` of shape ``(N,)`` (regimes are
0-based, ``0 <= i < m``) and return

* ``drift(x, i)``          -> ``(N, n)``
* ``diffusion(x, i)``      -> ``(N, n, n)``
* ``jump_coeff(x, i, z)``  -> ``(N, n)`` for marks ``z`` of shape ``(N, d)``
* ``generator_q(x)``       -> ``(N, m, m)``

The family constructors at the bottom of the module (``constant``,
``affine``, ...) build such functions from per-regime parameters and are
the registry used by configuration files.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigurationError, QuadratureError
from .levy import LevyMeasure, QuadParams, SeparableJump, integrate, integrate_checked

__all__ = [
    "HybridState",
    "ModelSpec",
    "ScalarField",
    "Violation",
    "ValidationReport",
    "validate_model",
    "apply_generator",
    "generator_terms",
    "levy_compensated_integral",
    "generator_table",
    "fd_step",
    "COEFFICIENT_FAMILIES",
    "GENERATOR_FAMILIES",
    "JUMP_FAMILIES",
]

_TAYLOR_CUTOFF = 1e-4
_SECOND_MOMENT_CAP = 1e12


@dataclass(frozen=True)
class HybridState:
    """A point ``(x, i)`` of the hybrid state space (``regime`` is 0-based)."""

    x: np.ndarray
    regime: int

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float)).ravel()
        if not np.all(np.isfinite(x)):
            raise ConfigurationError("state entries must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "regime", int(self.regime))


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Regime-switching jump diffusion ``dX = b dt + sigma dW + int gamma dN~``."""

    n: int
    m: int
    drift: Callable
    diffusion: Callable
    generator_q: Callable
    q_bound: float
    jump_coeff: Callable | None = None
    levy: LevyMeasure | None = None
    name: str = "model"

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ConfigurationError("dimension n and regime count m must be positive")
        if self.q_bound < 0:
            raise ConfigurationError("q_bound must be non-negative")
        if (self.levy is None) != (self.jump_coeff is None):
            raise ConfigurationError("jump_coeff and levy must be given together")

    @property
    def has_jumps(self):
        return self.levy is not None

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def check_state(self, state):
        if state.x.shape != (self.n,):
            raise ConfigurationError(
                f"state dimension {state.x.shape[0]} does not match model dimension {self.n}")
        if not 0 <= state.regime < self.m:
            raise ConfigurationError(f"regime {state.regime} outside 0..{self.m - 1}")


def fd_step(x):
    """Central-difference step ``max(1e-5, 1e-5 |x|)`` per state row."""
    return np.maximum(1e-5, 1e-5 * np.linalg.norm(x, axis=-1))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Per-regime scalar function ``f(x, i)`` with optional derivatives.

    With ``time_dependent=True`` the callables take ``(t, x, i)``; use
    :meth:`at` to freeze the time argument.
    """

    eval: Callable
    gradient: Callable | None = None
    hessian: Callable | None = None
    time_dependent: bool = False

    def __call__(self, *args):
        return np.asarray(self.eval(*args), dtype=float)

    def at(self, t):
        if not self.time_dependent:
            return self
        return ScalarField(
            lambda x, i: self.eval(t, x, i),
            None if self.gradient is None else (lambda x, i: self.gradient(t, x, i)),
            None if self.hessian is None else (lambda x, i: self.hessian(t, x, i)),
        )

    def value(self, x, i, t=0.0):
        if self.time_dependent:
            return np.asarray(self.eval(t, x, i), dtype=float)
        return np.asarray(self.eval(x, i), dtype=float)

    def grad(self, x, i):
        if self.gradient is not None:
            return np.asarray(self.gradient(x, i), dtype=float)
        h = fd_step(x)
        n = x.shape[1]
        out = np.empty_like(x)
        for k in range(n):
            e = np.zeros(n)
            e[k] = 1.0
            step = h[:, None] * e
            out[:, k] = (self.eval(x + step, i) - self.eval(x - step, i)) / (2 * h)
        return out

    def hess(self, x, i):
        if self.hessian is not None:
            return np.asarray(self.hessian(x, i), dtype=float)
        h = fd_step(x)
        n = x.shape[1]
        f0 = self.eval(x, i)
        out = np.empty((x.shape[0], n, n))
        eye = np.eye(n)
        for a in range(n):
            ea = h[:, None] * eye[a]
            out[:, a, a] = (self.eval(x + ea, i) - 2 * f0 + self.eval(x - ea, i)) / h**2
            for b in range(a + 1, n):
                eb = h[:, None] * eye[b]
                v = (self.eval(x + ea + eb, i) - self.eval(x + ea - eb, i)
                     - self.eval(x - ea + eb, i) + self.eval(x - ea - eb, i)) / (4 * h**2)
                out[:, a, b] = out[:, b, a] = v
        return out

    @classmethod
    def constant(cls, c):
        c = float(c)
        return cls(lambda x, i: np.full(np.shape(x)[0], c),
                   lambda x, i: np.zeros_like(x),
                   lambda x, i: np.zeros((np.shape(x)[0], np.shape(x)[1], np.shape(x)[1])))

    @classmethod
    def per_regime(cls, funcs, time_dependent=False):
        """Field from 1-D callables, one per regime, each acting on ``x[:, 0]``
        (and on ``t`` first when ``time_dependent``)."""
        funcs = list(funcs)

        if time_dependent:
            def ev(t, x, i):
                x0 = np.asarray(x, dtype=float)[:, 0]
                out = np.empty(x0.shape[0])
                for j, fn in enumerate(funcs):
                    sel = np.asarray(i) == j
                    if sel.any():
                        out[sel] = fn(t, x0[sel])
                return out
        else:
            def ev(x, i):
                x0 = np.asarray(x, dtype=float)[:, 0]
                out = np.empty(x0.shape[0])
                for j, fn in enumerate(funcs):
                    sel = np.asarray(i) == j
                    if sel.any():
                        out[sel] = fn(x0[sel])
                return out

        return cls(ev, time_dependent=time_dependent)


class Violation(NamedTuple):
    check: str
    witness: object
    message: str


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    sampled_kappa: float = 0.0

    @property
    def ok(self):
        return not self.violations


def _arrays(states, n):
    x = np.array([s.x for s in states], dtype=float).reshape(len(states), n)
    i = np.array([s.regime for s in states], dtype=np.int64)
    return x, i


def _gamma_at(spec, x, i, z):
    k = len(z)
    return spec.jump_coeff(np.repeat(x[None, :], k, axis=0), np.full(k, i), z)


def validate_model(spec, probe_points, probe_pairs, kappa=None, quad=QuadParams()):
    """Spot-check the standing assumptions at the given probes.

    Findings are collected in the returned report; only a dimension or
    regime mismatch between spec and probes raises.
    """
    if not probe_points or not probe_pairs:
        raise ConfigurationError("probe sets must be non-empty")
    for s in list(probe_points) + [p for pair in probe_pairs for p in pair]:
        spec.check_state(s)
    report = ValidationReport()
    add = report.violations.append
    quotients = [spec.q_bound]
    x, i = _arrays(probe_points, spec.n)

    q = np.asarray(spec.generator_q(x), dtype=float)
    if q.shape != (len(x), spec.m, spec.m):
        raise ConfigurationError(f"generator_q returned shape {q.shape}, expected {(len(x), spec.m, spec.m)}")
    off = ~np.eye(spec.m, dtype=bool)
    for k, s in enumerate(probe_points):
        qk = q[k]
        if np.any(qk[off] < 0):
            add(Violation("generator off-diagonal", s, "negative off-diagonal rate"))
        rs = qk.sum(axis=1)
        if np.any(np.abs(rs) > 1e-12):
            add(Violation("generator row sum", s, f"row sums {rs.tolist()} are not zero"))
        if np.any(qk[off] > spec.q_bound):
            add(Violation("rate bound", s, f"max rate {qk[off].max():.6g} exceeds q_bound {spec.q_bound}"))

    b = np.asarray(spec.drift(x, i), dtype=float)
    sig = np.asarray(spec.diffusion(x, i), dtype=float)
    if b.shape != (len(x), spec.n) or sig.shape != (len(x), spec.n, spec.n):
        raise ConfigurationError("drift/diffusion returned shapes inconsistent with n")
    for k, s in enumerate(probe_points):
        if not (np.all(np.isfinite(b[k])) and np.all(np.isfinite(sig[k]))):
            add(Violation("finite coefficients", s, "drift or diffusion is not finite"))

    if spec.has_jumps:
        for k, s in enumerate(probe_points):
            m2 = _second_moment_check(spec, x[k], i[k])
            if m2 is None:
                add(Violation("jump second moment infinite", s,
                              "int |gamma|^2 nu(dz) diverges (quadrature exceeds cap or tail keeps growing)"))
            else:
                quotients.append(m2 / (1.0 + float(x[k] @ x[k])))

    for s1, s2 in probe_pairs:
        d2 = float(np.sum((s1.x - s2.x) ** 2))
        if d2 == 0:
            continue
        xa, ia = _arrays([s1, HybridState(s2.x, s1.regime)], spec.n)
        bb = spec.drift(xa, ia)
        ss = spec.diffusion(xa, ia)
        num = float(np.sum((bb[0] - bb[1]) ** 2) + np.sum((ss[0] - ss[1]) ** 2))
        if spec.has_jumps:
            def diff2(z):
                return np.sum((_gamma_at(spec, xa[0], ia[0], z) - _gamma_at(spec, xa[1], ia[0], z)) ** 2, axis=1)
            num += float(integrate(spec.levy, diff2))
        quotients.append(num / d2)

    report.sampled_kappa = float(max(quotients))
    if kappa is not None and report.sampled_kappa > kappa:
        add(Violation("lipschitz constant", None,
                      f"sampled constant {report.sampled_kappa:.6g} exceeds kappa {kappa}"))
    return report


def _second_moment_check(spec, x, i):
    """Return ``int |gamma|^2 nu`` or ``None`` when it looks divergent."""
    measure = spec.levy

    def g2(z):
        return np.sum(_gamma_at(spec, x, i, z) ** 2, axis=1)

    total = float(integrate(measure, g2))
    if not math.isfinite(total) or total > _SECOND_MOMENT_CAP:
        return None
    if math.isinf(measure.outer):
        z, _ = measure.nodes(1.0, math.inf, 0)
        if len(z):
            top = float(np.max(np.abs(z)))
            far = float(integrate(measure, g2, math.sqrt(top), math.inf))
            if far > 1e-6 * (1.0 + total):
                return None
    return total


def _single(state):
    return state.x[None, :], np.array([state.regime])


def levy_compensated_integral(spec, f, state, quad=QuadParams()):
    """``int [f(x+g) - f(x) - Df(x).g] nu(dz)`` with ``g = gamma(x, i, z)``.

    Small displacements use the second-order Taylor form to avoid
    cancellation.  Raises :class:`QuadratureError` when refinements disagree.
    """
    if not spec.has_jumps:
        return 0.0
    x, i = _single(state)
    df = f.grad(x, i)[0]
    hf = f.hess(x, i)[0]
    f0 = float(f.value(x, i)[0])

    def integrand(z):
        d = _gamma_at(spec, x[0], i[0], z)
        k = len(z)
        shifted = f.value(x + d, np.full(k, i[0]))
        exact = shifted - f0 - d @ df
        taylor = 0.5 * np.einsum("ka,ab,kb->k", d, hf, d)
        small = np.linalg.norm(d, axis=1) < _TAYLOR_CUTOFF * max(1.0, float(np.linalg.norm(x)))
        return np.where(small, taylor, exact)

    return float(integrate_checked(spec.levy, integrand, 0.0, math.inf, quad))


def generator_terms(spec, f, state, quad=QuadParams()):
    """The drift, diffusion, switching and jump parts of ``L f`` at one state."""
    spec.check_state(state)
    x, i = _single(state)
    grad = f.grad(x, i)[0]
    hess = f.hess(x, i)[0]
    b = np.asarray(spec.drift(x, i), dtype=float)[0]
    sig = np.asarray(spec.diffusion(x, i), dtype=float)[0]
    q = np.asarray(spec.generator_q(x), dtype=float)[0]
    f_all = np.array([float(f.value(x, np.array([j]))[0]) for j in range(spec.m)])
    return {
        "drift": float(grad @ b),
        "diffusion": 0.5 * float(np.trace(sig @ sig.T @ hess)),
        "switching": float(q[state.regime] @ (f_all - f_all[state.regime])),
        "jump": levy_compensated_integral(spec, f, state, quad),
    }


def apply_generator(spec, f, state, quad=QuadParams()):
    """``(L f)(x, i)``: drift + diffusion + switching + compensated jump integral."""
    t = generator_terms(spec, f, state, quad)
    return t["drift"] + t["diffusion"] + t["switching"] + t["jump"]


def generator_table(spec, f, nodes, quad=QuadParams(), strict=False):
    """Tabulate ``L f`` on 1-D ``nodes`` for every regime -> array ``(m, K)``.

    With ``strict=False`` quadrature disagreement falls back to the finest
    level instead of raising (tables are interpolated anyway).
    """
    if spec.n != 1:
        raise ConfigurationError("generator tables are one-dimensional")
    out = np.empty((spec.m, len(nodes)))
    loose = QuadParams(atol=math.inf, base_level=quad.base_level + quad.refinements, refinements=0)
    for j in range(spec.m):
        for k, xv in enumerate(nodes):
            s = HybridState([xv], j)
            try:
                out[j, k] = apply_generator(spec, f, s, quad)
            except QuadratureError:
                if strict:
                    raise
                out[j, k] = apply_generator(spec, f, s, loose)
    return out


# ---------------------------------------------------------------------------
# coefficient families (the configuration registry)

def _regime_array(values, m=None):
    arr = np.asarray(values, dtype=float)
    if m is not None and arr.shape[0] != m:
        raise ConfigurationError(f"expected {m} per-regime entries, got {arr.shape[0]}")
    return arr


def constant(values, kind="drift", n=1):
    """Per-regime constant drift ``(m, n)`` / diffusion ``(m, n, n)`` (scalars allowed for n=1)."""
    v = _regime_array(values)
    if kind == "drift":
        v = v.reshape(len(v), n)
        return lambda x, i: v[i]
    v = v.reshape(len(v), n, n) if v.ndim == 1 and n == 1 else v
    return lambda x, i: v[i]


def affine(intercept, slope, kind="drift", n=1):
    """``a_i + s_i * x`` (n = 1)."""
    if n != 1:
        raise ConfigurationError("affine family is one-dimensional")
    a = _regime_array(intercept)
    s = _regime_array(slope)
    if kind == "drift":
        return lambda x, i: (a[i] + s[i] * x[:, 0])[:, None]
    return lambda x, i: (a[i] + s[i] * x[:, 0])[:, None, None]


def geometric(coef, kind="drift", n=1):
    """``c_i * x`` (diagonal in n dimensions)."""
    c = _regime_array(coef)
    if kind == "drift":
        return lambda x, i: c[i][:, None] * x
    return lambda x, i: c[i][:, None, None] * np.eye(x.shape[1])[None] * x[:, :, None]


def tabulated(nodes, values, kind="drift", n=1):
    """Piecewise-linear interpolation of per-regime tables ``values (m, K)`` on ``nodes``."""
    if n != 1:
        raise ConfigurationError("tabulated family is one-dimensional")
    xs = np.asarray(nodes, dtype=float)
    tab = _regime_array(values)

    def fn(x, i):
        out = np.empty(x.shape[0])
        for j in range(tab.shape[0]):
            sel = i == j
            if sel.any():
                out[sel] = np.interp(x[sel, 0], xs, tab[j])
        return out[:, None] if kind == "drift" else out[:, None, None]

    return fn


def two_sided(left, right, width=1.0, scale=None, kind="diffusion", n=1):
    """Smoothed step ``scale_i * (left + (right-left) * (1 + tanh(x/width)) / 2)``."""
    if n != 1:
        raise ConfigurationError("two_sided family is one-dimensional")
    sc = None if scale is None else _regime_array(scale)

    def fn(x, i):
        prof = left + (right - left) * 0.5 * (1.0 + np.tanh(x[:, 0] / width))
        v = prof if sc is None else sc[i] * prof
        return v[:, None] if kind == "drift" else v[:, None, None]

    return fn


COEFFICIENT_FAMILIES = {
    "constant": constant,
    "affine": affine,
    "geometric": geometric,
    "tabulated": tabulated,
    "two_sided": two_sided,
}


def constant_generator(matrix):
    q = np.asarray(matrix, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ConfigurationError("generator matrix must be square")
    return lambda x: np.broadcast_to(q, (np.shape(x)[0],) + q.shape)


def logistic_generator(low, high, width=1.0):
    """``Q(x) = low + (high - low) * sigmoid(x_0 / width)``: state-dependent switching."""
    lo = np.asarray(low, dtype=float)
    hi = np.asarray(high, dtype=float)

    def fn(x):
        w = 1.0 / (1.0 + np.exp(-np.asarray(x)[:, 0] / width))
        return lo[None] + (hi - lo)[None] * w[:, None, None]

    return fn


GENERATOR_FAMILIES = {
    "constant": constant_generator,
    "logistic": logistic_generator,
}


def scaled_jump(scale):
    """``gamma(x, i, z) = k_i * z``."""
    k = _regime_array(scale)
    return SeparableJump(lambda x, i: np.broadcast_to(k[i][:, None], x.shape), lambda z: z)


def state_scaled_jump(intercept, slope):
    """``gamma(x, i, z) = (a_i + s_i x) * z`` (n = 1)."""
    a = _regime_array(intercept)
    s = _regime_array(slope)
    return SeparableJump(lambda x, i: (a[i] + s[i] * x[:, 0])[:, None], lambda z: z)


def power_jump(scale, b_small, b_large, large_ratio=1.0, symmetric=True):
    """Two-power shape ``k_i * (|z|^b1 1{|z|<=1} + c |z|^b2 1{|z|>1})``, optionally odd in z."""
    k = _regime_array(scale)

    def shape(z):
        r = np.abs(z)
        v = np.where(r <= 1.0, r**b_small, large_ratio * r**b_large)
        return np.sign(z) * v if symmetric else v

    return SeparableJump(lambda x, i: np.broadcast_to(k[i][:, None], x.shape), shape)


def exponential_jump(scale):
    """``gamma(x, i, z) = k_i * (exp(z) - 1)``: relative price jump (> -1 for k_i <= 1)."""
    k = _regime_array(scale)
    return SeparableJump(lambda x, i: np.broadcast_to(k[i][:, None], x.shape), np.expm1)


JUMP_FAMILIES = {
    "scaled": scaled_jump,
    "state_scaled": state_scaled_jump,
    "power": power_jump,
    "exponential": exponential_jump,
}
