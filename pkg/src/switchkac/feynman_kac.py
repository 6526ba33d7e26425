"""Monte Carlo estimators for the Feynman-Kac representations.

* :func:`estimate_initial_value`  ``E[exp(-int_0^t c) f(X(t), alpha(t))]``
* :func:`estimate_terminal_value` ``E[exp(-int_t^T c) f(X(T), alpha(T)) - int_t^T exp(-int_t^s c) g(s) ds]``
* :func:`estimate_dirichlet`      exit-time version on a bounded box with exterior data
* :func:`dynkin_residual`         ``E f(X(tau)) - f(x) - E int_0^tau L f`` (statistically zero)

Time integrals use the trapezoid rule on the event-split skeleton.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError
from .estimate import Estimate
from .levy import QuadParams
from .model import HybridState, ScalarField, generator_table
from .path_sim import Box, Observer, ensemble_values, reduce_batches

__all__ = [
    "DirichletProblemSpec",
    "estimate_initial_value",
    "estimate_terminal_value",
    "estimate_dirichlet",
    "dynkin_residual",
    "DiscountObserver",
]

CENSOR_LIMIT = 0.01


def _field_at(field, t, x, a):
    if field is None:
        return np.zeros(len(a))
    if field.time_dependent:
        return np.asarray(field.eval(t, x, a), dtype=float)
    return np.asarray(field.eval(x, a), dtype=float)


class DiscountObserver(Observer):
    """Per-path ``exp(-C) * terminal - int exp(-C) g`` with ``C = int c``."""

    def __init__(self, n, c, g, terminal, exterior=None):
        self.c, self.g = c, g
        self.terminal = terminal
        self.exterior = exterior if exterior is not None else terminal
        self.C = np.zeros(n)
        self.S = np.zeros(n)
        self.out = np.full(n, np.nan)
        self.censored = np.zeros(n, dtype=bool)

    def segment(self, idx, t_a, t_b, x_a, x_b, a):
        dt = t_b - t_a
        ca = _field_at(self.c, t_a, x_a, a)
        cb = _field_at(self.c, t_b, x_b, a)
        c_old = self.C[idx]
        c_new = c_old + 0.5 * (ca + cb) * dt
        self.C[idx] = c_new
        if self.g is not None:
            ga = _field_at(self.g, t_a, x_a, a)
            gb = _field_at(self.g, t_b, x_b, a)
            self.S[idx] += 0.5 * (np.exp(-c_old) * ga + np.exp(-c_new) * gb) * dt

    def _close(self, idx, t, x, a, fn):
        vals = fn.value(x, a, t) if isinstance(fn, ScalarField) else fn(x, a)
        self.out[idx] = np.exp(-self.C[idx]) * vals - self.S[idx]

    def stop(self, idx, t, x, a):
        self._close(idx, t, x, a, self.exterior)

    def finish(self, idx, t, x, a):
        self.censored[idx] = True
        self._close(idx, t, x, a, self.terminal)

    def values(self):
        return self.out


def _meta(params, **extra):
    d = {"h": params.h, "delta": params.delta, "seed": params.seed, "stream_id": params.stream_id}
    d.update(extra)
    return d


def estimate_initial_value(spec, c, f, t, start, params, n_paths, quad=QuadParams()):
    """Estimate ``u(t, x, i)`` of the initial-value system ``u_t = L u - c u, u(0) = f``."""
    if not t > 0:
        raise ConfigurationError("t must be positive")
    p = params.with_horizon(t)
    res = ensemble_values(spec, start, p, n_paths, lambda n: DiscountObserver(n, c, None, f), quad=quad)
    return reduce_batches(res, _meta(p, t=t))


def estimate_terminal_value(spec, c, g, f, t, T, start, params, n_paths, quad=QuadParams()):
    """Estimate ``u(t, x, i)`` of ``u_t + L u - c u = g, u(T) = f``.

    ``c`` and ``g`` may be time-dependent fields (``eval(t, x, i)``); time is absolute.
    """
    if not 0 <= t <= T:
        raise ConfigurationError("need 0 <= t <= T")
    if t == T:
        x, a = start.x[None, :], np.array([start.regime])
        v = float(f.value(x, a, T)[0])
        return Estimate(v, 0.0, n_paths, metadata=_meta(params, t=t, T=T))
    p = params.with_horizon(T - t)
    res = ensemble_values(spec, start, p, n_paths, lambda n: DiscountObserver(n, c, g, f),
                          t0=t, quad=quad)
    return reduce_batches(res, _meta(p, t=t, T=T))


@dataclass(frozen=True, eq=False)
class DirichletProblemSpec:
    """``L u - c u = xi`` in the box ``domain``, ``u = eta`` outside.

    ``max_horizon`` censors paths that have not exited; ``None`` selects
    ``50 * diam^2 / min diffusivity``.
    """

    domain: Box
    c: ScalarField | None
    xi: ScalarField | None
    eta: ScalarField
    max_horizon: float | None = None


def _min_diffusivity(spec, domain, n_probe=41):
    """Smallest, over probes in the closed box and regimes, of the largest diagonal entry of sigma sigma'."""
    grids = [np.linspace(lo, hi, n_probe) for lo, hi in zip(domain.lo, domain.hi)]
    if spec.n > 1:
        pts = np.stack([g.ravel() for g in np.meshgrid(*[gr[::max(1, n_probe // 8)] for gr in grids])], axis=1)
    else:
        pts = grids[0][:, None]
    best = math.inf
    for j in range(spec.m):
        s = np.asarray(spec.diffusion(pts, np.full(len(pts), j)), dtype=float)
        a = np.einsum("kab,kab->ka", s, s)
        best = min(best, float(np.min(np.max(a, axis=1))))
    return best


def estimate_dirichlet(spec, prob, start, params, n_paths, bridge=True, quad=QuadParams()):
    """Estimate ``u(x, i)`` of the Dirichlet system by simulating to the first exit.

    Jump overshoots are evaluated with the exterior data as they land.
    Paths still inside at ``max_horizon`` are censored: they contribute the
    exterior data at their censoring state, and a censored fraction above
    1% marks the estimate invalid ("horizon too short").
    """
    dom = prob.domain
    if not dom.inside(start.x[None, :])[0]:
        raise ConfigurationError("start point must lie in the domain")
    a_min = _min_diffusivity(spec, dom)
    if not a_min > 0:
        raise ConfigurationError("no uniformly elliptic diagonal diffusion entry on the closed domain")
    horizon = prob.max_horizon or 50.0 * dom.diameter**2 / a_min
    p = params.with_horizon(horizon)
    observers = []

    def make(n):
        ob = DiscountObserver(n, prob.c, prob.xi, prob.eta)
        observers.append(ob)
        return ob

    res = ensemble_values(spec, start, p, n_paths, make, domain=dom, bridge=bridge, quad=quad)
    censored = sum(int(ob.censored.sum()) for ob in observers)
    frac = censored / n_paths
    exit_times = np.concatenate([r.exit_times[r.exited] for r in res])
    est = reduce_batches(res, _meta(p, max_horizon=horizon, censored_fraction=frac,
                                    mean_exit_time=float(np.mean(exit_times)) if exit_times.size else math.nan,
                                    bridge=bridge))
    if frac > CENSOR_LIMIT:
        est.metadata["flags"] = ["horizon too short"]
        return Estimate(est.mean, est.std_error, est.n_paths, est.confidence_level, est.metadata, valid=False)
    return est


class _DynkinObserver(Observer):
    def __init__(self, n, f, lf, x0, i0):
        self.f, self.lf = f, lf
        self.f0 = float(f.value(x0[None, :], np.array([i0]))[0])
        self.integral = np.zeros(n)
        self.out = np.full(n, np.nan)

    def segment(self, idx, t_a, t_b, x_a, x_b, a):
        self.integral[idx] += 0.5 * (self.lf(x_a, a) + self.lf(x_b, a)) * (t_b - t_a)

    def _close(self, idx, x, a):
        self.out[idx] = self.f.value(x, a) - self.f0 - self.integral[idx]

    def stop(self, idx, t, x, a):
        self._close(idx, x, a)

    def finish(self, idx, t, x, a):
        self._close(idx, x, a)

    def values(self):
        return self.out


def _jump_reach(spec):
    if not spec.has_jumps:
        return 0.0
    z, _ = spec.levy.nodes(0.0, math.inf, 0)
    if not len(z):
        return 0.0
    probe = np.zeros((len(z), spec.n))
    reach = 0.0
    for j in range(spec.m):
        reach = max(reach, float(np.max(np.abs(spec.jump_coeff(probe, np.full(len(z), j), z)))))
    return reach


def tabulated_generator(spec, f, support, n_nodes=2001, quad=QuadParams()):
    """Cubic-spline table of ``L f`` for a field supported in ``support`` (n = 1).

    Outside ``support`` widened by the maximal jump reach ``L f`` vanishes.
    """
    lo, hi = support
    reach = _jump_reach(spec)
    nodes = np.linspace(lo - reach, hi + reach, n_nodes)
    tab = generator_table(spec, f, nodes, quad)
    splines = [CubicSpline(nodes, tab[j]) for j in range(spec.m)]
    a_lo, a_hi = nodes[0], nodes[-1]

    def lf(x, a):
        xv = x[:, 0]
        out = np.zeros(len(xv))
        inside = (xv >= a_lo) & (xv <= a_hi)
        for j in range(spec.m):
            sel = inside & (a == j)
            if sel.any():
                out[sel] = splines[j](xv[sel])
        return out

    return lf


def dynkin_residual(spec, f, stopping, start, params, n_paths, support=None, lf=None,
                    max_horizon=None, quad=QuadParams()):
    """Estimate ``E f(X(tau), alpha(tau)) - f(x, i) - E int_0^tau L f ds``.

    ``stopping`` is a fixed time (float) or a :class:`Box` (first exit).  For
    n = 1, ``L f`` is tabulated over ``support`` (the support of ``f``);
    otherwise pass a vectorized ``lf(x, a)``.
    """
    if lf is None:
        if spec.n != 1 or support is None:
            raise ConfigurationError("pass support (n = 1) or a vectorized lf")
        lf = tabulated_generator(spec, f, support, quad=quad)
    x0, i0 = start.x, start.regime
    make = lambda n: _DynkinObserver(n, f, lf, x0, i0)  # noqa: E731
    if isinstance(stopping, Box):
        horizon = max_horizon or 50.0 * stopping.diameter**2 / _min_diffusivity(spec, stopping)
        p = params.with_horizon(horizon)
        res = ensemble_values(spec, start, p, n_paths, make, domain=stopping, quad=quad)
    else:
        p = params.with_horizon(float(stopping))
        res = ensemble_values(spec, start, p, n_paths, make, quad=quad)
    return reduce_batches(res, _meta(p))
