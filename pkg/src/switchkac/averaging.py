"""Fast switching: averaged diffusion, occupation times and the L2 gap.

With generator ``Q / eps`` and jumps scaled by ``eps`` the drift-free model
``dX = sigma(X, alpha) dW + eps int gamma dN~`` converges weakly to the
diffusion with coefficient ``sigma_bar(x) = sqrt(sum_i sigma(x, i)^2 nu_i)``
where ``nu`` is the stationary law of ``Q``.  The occupation fraction of a
positive half-line then follows the arcsine law when the spatial averages
``p_+ = p_-`` of ``1 / sigma_bar^2`` agree, and a skewed law characterized by
its Stieltjes transform otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate as sp_integrate
from scipy.sparse.csgraph import connected_components

from .errors import ConfigurationError, DomainError
from .levy import SeparableJump
from .model import ModelSpec
from .path_sim import Observer, SimParams, stream, ensemble_values

__all__ = [
    "TwoTimeScaleSpec",
    "OccupationSpec",
    "stationary_distribution",
    "averaged_sigma",
    "build_scaled_model",
    "averaged_model",
    "occupation_statistic",
    "OccupationObserver",
    "occupation_samples",
    "arcsine_cdf",
    "stieltjes_rhs",
    "spatial_averages",
    "SpatialAverages",
    "ks_statistic",
    "ks_two_sample",
    "l2_gap_formula",
    "l2_gap_mc",
]


@dataclass(frozen=True, eq=False)
class TwoTimeScaleSpec:
    """Base model with a state-independent generator and a time-scale ``eps``."""

    base: ModelSpec
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigurationError("eps must be positive")
        probes = np.linspace(-10, 10, 21)[:, None] * np.ones((1, self.base.n))
        q = np.asarray(self.base.generator_q(probes), dtype=float)
        if np.max(np.abs(q - q[:1])) > 0:
            raise ConfigurationError("the two-time-scale generator must not depend on x")

    @property
    def Q(self):
        return np.asarray(self.base.generator_q(np.zeros((1, self.base.n))), dtype=float)[0]


@dataclass(frozen=True, eq=False)
class OccupationSpec:
    f: Callable
    f_plus: float = 1.0
    f_minus: float = 0.0

    def __post_init__(self):
        if self.f_plus == self.f_minus:
            raise ConfigurationError("f_plus and f_minus must differ")

    @classmethod
    def positive_half_line(cls):
        return cls(lambda x: (np.asarray(x) > 0).astype(float), 1.0, 0.0)


def stationary_distribution(Q):
    """The probability vector ``nu`` with ``nu Q = 0`` for an irreducible ``Q``."""
    Q = np.asarray(Q, dtype=float)
    m = Q.shape[0]
    if Q.shape != (m, m):
        raise ConfigurationError("generator must be square")
    adj = (Q - np.diag(np.diag(Q))) > 0
    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    if n_comp != 1:
        raise ConfigurationError("generator is reducible")
    A = np.vstack([Q.T, np.ones(m)])
    rhs = np.zeros(m + 1)
    rhs[-1] = 1.0
    nu, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    # one Newton-style polish step keeps the residual at rounding level
    nu = nu - np.linalg.lstsq(A, A @ nu - rhs, rcond=None)[0]
    return nu


def averaged_sigma(spec, nu, x):
    """``sqrt(sum_i sigma(x, i)^2 nu_i)`` (1-D ``x``: scalar or array)."""
    base = spec.base if isinstance(spec, TwoTimeScaleSpec) else spec
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    tot = np.zeros(len(xs))
    for i, w in enumerate(nu):
        s = np.asarray(base.diffusion(xs[:, None], np.full(len(xs), i)), dtype=float).reshape(len(xs))
        tot += w * s**2
    out = np.sqrt(tot)
    return float(out[0]) if np.ndim(x) == 0 else out


def build_scaled_model(spec):
    """Generator ``Q / eps``, jumps ``eps * gamma``, zero drift."""
    base, eps = spec.base, spec.eps
    q = base.generator_q
    jump = None
    if base.has_jumps:
        g = base.jump_coeff
        if isinstance(g, SeparableJump):
            # keep separability so mark integrals stay cached
            sc = g.scale
            jump = SeparableJump(lambda x, i: eps * np.asarray(sc(x, i), dtype=float), g.shape)
        else:
            jump = lambda x, i, z: eps * np.asarray(g(x, i, z), dtype=float)  # noqa: E731
    return base.replace(
        drift=lambda x, i: np.zeros((np.shape(x)[0], base.n)),
        generator_q=lambda x: np.asarray(q(x), dtype=float) / eps,
        q_bound=base.q_bound / eps,
        jump_coeff=jump,
        name=f"{base.name}[eps={eps:g}]",
    )


def averaged_model(spec, nu=None):
    """The one-regime limit diffusion ``dX = sigma_bar(X) dW``."""
    nu = stationary_distribution(spec.Q) if nu is None else nu
    base = spec.base
    return ModelSpec(
        n=1, m=1,
        drift=lambda x, i: np.zeros((np.shape(x)[0], 1)),
        diffusion=lambda x, i: averaged_sigma(base, nu, x[:, 0])[:, None, None],
        generator_q=lambda x: np.zeros((np.shape(x)[0], 1, 1)),
        q_bound=0.0,
        name="averaged",
    )


def occupation_statistic(path, occ):
    """``[(1/T) int_0^T f(X) dt - f_-] / (f_+ - f_-)`` along a simulated path.

    Trapezoid on the skeleton, using the left limit at jump epochs.
    """
    T = path.T
    if not T > 0:
        raise ConfigurationError("path horizon must be positive")
    t = path.times
    right = np.asarray(occ.f(path.x_values[:, 0]), dtype=float)
    left = np.asarray(occ.f(path.left_limits()[:, 0]), dtype=float)
    integral = float(np.sum(0.5 * (right[:-1] + left[1:]) * np.diff(t)))
    return (integral / T - occ.f_minus) / (occ.f_plus - occ.f_minus)


class OccupationObserver(Observer):
    """Vectorized occupation statistic for :func:`path_sim.run_batch`."""

    def __init__(self, n, occ, T):
        self.occ, self.T = occ, T
        self.acc = np.zeros(n)

    def segment(self, idx, t_a, t_b, x_a, x_b, a):
        fa = self.occ.f(x_a[:, 0])
        fb = self.occ.f(x_b[:, 0])
        self.acc[idx] += 0.5 * (fa + fb) * (t_b - t_a)

    def values(self):
        o = self.occ
        return (self.acc / self.T - o.f_minus) / (o.f_plus - o.f_minus)


def occupation_samples(spec, occ, x0, regime, T, h, n_paths, seed, stream_id=0, delta=0.0,
                       threads=1):
    """Samples of the occupation statistic of the scaled model over ``[0, T]``."""
    from .model import HybridState

    model = build_scaled_model(spec)
    p = SimParams(T, h, delta=delta, seed=seed, stream_id=stream_id, threads=threads)
    res = ensemble_values(model, HybridState([x0], regime), p, n_paths,
                          lambda n: OccupationObserver(n, occ, T))
    return np.concatenate([r.values[~r.exploded] for r in res])


def arcsine_cdf(z):
    """``(2 / pi) arcsin(sqrt(z))`` on ``[0, 1]``."""
    za = np.asarray(z, dtype=float)
    if np.any((za < 0) | (za > 1)) or np.any(np.isnan(za)):
        raise DomainError("arcsine_cdf is defined on [0, 1]")
    out = 2.0 / math.pi * np.arcsin(np.sqrt(za))
    return float(out) if np.ndim(z) == 0 else out


def stieltjes_rhs(z, A):
    """Target of ``E[1 / (z + Xi)]`` for the skewed occupation law with ``A = sqrt(p_+ / p_-)``."""
    if not z > 0:
        raise DomainError("z must be positive")
    if not A > 0:
        raise DomainError("A must be positive")
    sz, s1 = math.sqrt(z), math.sqrt(1 + z)
    return (s1 + A * sz) / (math.sqrt((1 + z) * z) * (sz + A * s1))


@dataclass
class SpatialAverages:
    p_plus: float
    p_minus: float
    f_plus: float
    f_minus: float
    gap: float
    converged: bool
    history: list


def spatial_averages(sigma_bar, f, L_schedule=None, tol=1e-3, sigma_floor=1e-8):
    """Running averages ``(1/L) int_0^{+-L}`` of ``p = 1/sigma_bar^2`` and of ``p f / p_+-``.

    ``f_+-`` are the ``p``-weighted averages of ``f``.  The schedule doubles
    from 1e2 to 1e4 by default; the returned ``gap`` is the largest change
    between the last two iterates, and ``converged`` is ``gap <= tol``.
    """
    if L_schedule is None:
        L_schedule = [100.0 * 2**k for k in range(7)] + [1e4]
    probes = np.linspace(-max(L_schedule), max(L_schedule), 2001)
    if np.min(sigma_bar(probes)) < sigma_floor:
        raise ConfigurationError("sigma_bar must be bounded away from zero")

    def p(x):
        return 1.0 / np.asarray(sigma_bar(x), dtype=float) ** 2

    def avg(fn, L):
        # fine fixed-order quadrature: integrands vary on O(1) scales near 0
        n = max(2001, int(40 * L) + 1)
        x = np.linspace(0.0, L, n)
        return float(sp_integrate.simpson(fn(x), x=x)) / L

    hist = []
    for L in L_schedule:
        pp = avg(p, L)
        pm = avg(lambda x: p(-x), L)
        fp = avg(lambda x: p(x) * np.asarray(f(x), float), L) / pp
        fm = avg(lambda x: p(-x) * np.asarray(f(-x), float), L) / pm
        hist.append((L, pp, pm, fp, fm))
    last, prev = np.array(hist[-1][1:]), np.array(hist[-2][1:])
    gap = float(np.max(np.abs(last - prev)))
    return SpatialAverages(*last, gap=gap, converged=gap <= tol, history=hist)


def ks_statistic(samples, cdf):
    """``sup |F_n - F|`` using both one-sided limits of the empirical CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n == 0:
        raise ConfigurationError("no samples")
    F = np.asarray(cdf(x), dtype=float)
    hi = np.arange(1, n + 1) / n - F
    lo = F - np.arange(0, n) / n
    return float(max(hi.max(), lo.max()))


def ks_two_sample(a, b):
    """Two-sample Kolmogorov-Smirnov distance."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if not (len(a) and len(b)):
        raise ConfigurationError("no samples")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


def _two_state(sigma1, sigma2, q1, q2):
    nu = stationary_distribution([[-q1, q1], [q2, -q2]])
    sbar = math.sqrt(sigma1**2 * nu[0] + sigma2**2 * nu[1])
    return nu, sbar


def l2_gap_formula(sigma1, sigma2, q1, q2, t, eps):
    """``E|X^eps(t) - X(t)|^2`` for ``X^eps = x + int sigma(alpha^eps) dW`` and
    ``X = x + sigma_bar W`` driven by the same ``W``, chain started in state 1.

    ``eps = 0`` gives the limit ``2 sigma_bar (sigma_bar - sigma1 nu1 - sigma2 nu2) t``.
    """
    if min(sigma1, sigma2, q1, q2, t) <= 0 or eps < 0:
        raise DomainError("parameters must be positive")
    nu, sb = _two_state(sigma1, sigma2, q1, q2)
    lim = 2 * sb * (sb - sigma1 * nu[0] - sigma2 * nu[1]) * t
    if eps == 0:
        return lim
    lam = q1 + q2
    trans = (sigma1 - sigma2) * (sigma1 + sigma2 - 2 * sb) * nu[1] * eps / lam * (-math.expm1(-lam * t / eps))
    return lim + trans


def l2_gap_mc(sigma1, sigma2, q1, q2, t, eps, n_paths, seed, stream_id=0):
    """Coupled-path estimate of ``E|X^eps(t) - X(t)|^2`` with exact switching epochs.

    The chain starts in state 1; both processes use the Brownian increments
    over the chain's holding intervals, so the difference is exact.
    Returns ``(mean, std_error)``.
    """
    rng = stream(seed, stream_id, 0)
    _, sb = _two_state(sigma1, sigma2, q1, q2)
    sig = np.array([sigma1, sigma2])
    rates = np.array([q1, q2]) / eps
    diff = np.zeros(n_paths)
    now = np.zeros(n_paths)
    state = np.zeros(n_paths, dtype=np.int64)
    live = np.arange(n_paths)
    while live.size:
        s = state[live]
        hold = rng.exponential(1.0, live.size) / rates[s]
        rem = t - now[live]
        seg = np.minimum(hold, rem)
        dw = np.sqrt(seg) * rng.standard_normal(live.size)
        diff[live] += (sig[s] - sb) * dw
        now[live] += seg
        state[live] = 1 - s
        live = live[hold < rem]
    sq = diff**2
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(n_paths))
