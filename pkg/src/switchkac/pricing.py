"""European options in a regime-switching jump Black-Scholes market.

Under the pricing measure the stock is ``S = s * exp(X)`` with, in regime ``i``,

    dX = (r_i - sigma_i^2/2 + int [log(1 + gamma) - gamma] nu) dt + sigma_i dW
         + int log(1 + gamma(i, z)) N~(dt, dz)

and the short rate ``r(alpha)`` discounts payoffs.  Two routes price the same
claim: :func:`price_european_mc` simulates the log-price exactly (exponential
holding times, Gaussian segment increments, compound-Poisson jumps) and
:func:`price_european_pide` solves the pricing equation in the log-price
coordinate with :mod:`switchkac.pide`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats
from scipy.linalg import expm

from .errors import ConfigurationError, SimulationError
from .estimate import Accumulator
from .levy import LevyMeasure, QuadParams, Tabulated, integrate_checked
from .model import ModelSpec, ScalarField
from .path_sim import Path, JumpRecord, SimParams, stream, _batch_sizes
from .pide import Extension, Grid1D, PideSolution, solve_cauchy

__all__ = [
    "MarketSpec",
    "PayoffSpec",
    "relative_jump",
    "call",
    "put",
    "digital",
    "constant_payoff",
    "simulate_stock_path",
    "simulate_terminal",
    "price_european_mc",
    "price_european_pide",
    "PriceSurface",
    "black_scholes_call",
    "discount_oracle",
    "log_model",
]


def relative_jump(scale):
    """``gamma(i, z) = k_i (exp(z) - 1)``; stays above -1 whenever ``0 <= k_i <= 1``."""
    k = np.asarray(scale, dtype=float)
    return lambda i, z: k[i] * np.expm1(z)


@dataclass(frozen=True, eq=False)
class MarketSpec:
    rates: np.ndarray
    vols: np.ndarray
    generator: np.ndarray
    s0: float
    levy: LevyMeasure | None = None
    jump: Callable | None = None
    delta: float = 0.0
    quad: QuadParams = QuadParams()

    def __post_init__(self):
        r = np.atleast_1d(np.asarray(self.rates, dtype=float))
        v = np.atleast_1d(np.asarray(self.vols, dtype=float))
        q = np.atleast_2d(np.asarray(self.generator, dtype=float))
        m = len(r)
        if v.shape != (m,) or q.shape != (m, m):
            raise ConfigurationError("rates, vols and generator must agree on the regime count")
        if np.any(r < 0) or np.any(v < 0):
            raise ConfigurationError("rates and volatilities must be non-negative")
        off = q - np.diag(np.diag(q))
        if np.any(off < 0) or np.max(np.abs(q.sum(axis=1))) > 1e-12:
            raise ConfigurationError("generator needs non-negative off-diagonals and zero row sums")
        if not self.s0 > 0:
            raise ConfigurationError("initial price must be positive")
        if (self.levy is None) != (self.jump is None):
            raise ConfigurationError("levy and jump must be given together")
        object.__setattr__(self, "rates", r)
        object.__setattr__(self, "vols", v)
        object.__setattr__(self, "generator", q)
        if self.levy is not None:
            z, _ = self.levy.nodes(self.delta, math.inf, 1)
            for i in range(m):
                g = self._gamma(i, z[:, 0])
                if np.any(g <= -1):
                    raise ConfigurationError(f"jump multiplier <= -1 in regime {i}")
            for i in range(m):
                if not math.isfinite(self._integral(i, lambda g: g**2)):
                    raise ConfigurationError("jump multiplier has infinite second moment")

    @property
    def m(self):
        return len(self.rates)

    def _gamma(self, i, z):
        return np.asarray(self.jump(np.full(len(z), i), z), dtype=float)

    def _integral(self, i, fn):
        if self.levy is None:
            return 0.0
        return float(integrate_checked(self.levy, lambda z: fn(self._gamma(i, z[:, 0])),
                                       self.delta, math.inf, self.quad))

    def log_drift(self):
        """Per-regime drift of the log-price (compensated-jump form) over ``|z| > delta``."""
        corr = np.array([self._integral(i, lambda g: np.log1p(g) - g) for i in range(self.m)])
        return self.rates - 0.5 * self.vols**2 + corr

    def raw_drift(self):
        """Drift when the jumps ``log(1 + gamma)`` are summed uncompensated."""
        comp = np.array([self._integral(i, np.log1p) for i in range(self.m)])
        return self.log_drift() - comp


@dataclass(frozen=True, eq=False)
class PayoffSpec:
    """Payoff ``h(s, i)`` (vectorized) with a quadratic-growth probe check."""

    h: Callable
    name: str = "payoff"
    growth_probes: tuple = (0.0, 1e-3, 1.0, 1e2, 1e4, 1e8)

    def __post_init__(self):
        s = np.asarray(self.growth_probes, dtype=float)
        for i in (0, 1):
            v = np.asarray(self.h(s, np.full(len(s), i)), dtype=float)
            if np.any(v < 0):
                raise ConfigurationError(f"payoff {self.name} is negative at a probe")
            ratio = v / (1 + s**2)
            if not np.all(np.isfinite(ratio)) or np.max(ratio) > 1e6:
                raise ConfigurationError(f"payoff {self.name} violates quadratic growth at probes")

    def __call__(self, s, i):
        return np.asarray(self.h(s, i), dtype=float)


def call(K):
    return PayoffSpec(lambda s, i: np.maximum(s - K, 0.0), f"call(K={K})")


def put(K):
    return PayoffSpec(lambda s, i: np.maximum(K - s, 0.0), f"put(K={K})")


def digital(K):
    return PayoffSpec(lambda s, i: (np.asarray(s) > K).astype(float), f"digital(K={K})")


def constant_payoff(c=1.0):
    return PayoffSpec(lambda s, i: np.full(np.shape(s), float(c)), f"constant({c})")


def _check_marks(market, g):
    if np.any(g <= -1):
        raise SimulationError("jump multiplier <= -1 at a sampled mark", None)


def simulate_terminal(market, T, start_regime, n, rng, s=None):
    """Exact draws of ``(S(T), alpha(T), int_0^T r(alpha))`` for ``n`` paths."""
    s = market.s0 if s is None else float(s)
    q = market.generator
    mu = market.raw_drift()
    lam = market.levy.tail_mass(market.delta) if market.levy is not None else 0.0
    if math.isinf(lam):
        raise ConfigurationError("infinite activity requires delta > 0")
    X = np.zeros(n)
    R = np.zeros(n)
    A = np.full(n, start_regime, dtype=np.int64)
    t = np.zeros(n)
    live = np.arange(n)
    exit_rate = -np.diag(q)
    with np.errstate(divide="ignore"):
        jump_probs = np.where(exit_rate[:, None] > 0, q / np.where(exit_rate > 0, exit_rate, 1)[:, None], 0)
    np.fill_diagonal(jump_probs, 0.0)
    while live.size:
        a = A[live]
        rate = exit_rate[a]
        hold = np.where(rate > 0, rng.exponential(1.0, live.size) / np.where(rate > 0, rate, 1), np.inf)
        seg = np.minimum(hold, T - t[live])
        X[live] += mu[a] * seg + market.vols[a] * np.sqrt(seg) * rng.standard_normal(live.size)
        R[live] += market.rates[a] * seg
        if lam > 0:
            counts = rng.poisson(lam * seg)
            total = int(counts.sum())
            if total:
                marks = market.levy.sample_marks(total, market.delta, rng)[:, 0]
                owner = np.repeat(np.arange(live.size), counts)
                g = np.asarray(market.jump(a[owner], marks), dtype=float)
                _check_marks(market, g)
                X[live] += np.bincount(owner, np.log1p(g), minlength=live.size)
        t[live] += seg
        switching = hold < T - (t[live] - seg)
        sw = live[switching]
        if sw.size:
            cum = np.cumsum(jump_probs[A[sw]], axis=1)
            u = rng.random(sw.size)
            A[sw] = (cum > u[:, None] * cum[:, -1:]).argmax(axis=1)
        live = sw
    return s * np.exp(X), A, R


def simulate_stock_path(market, T, params=None, rng=None, start_regime=0):
    """One price path as a :class:`Path` (skeleton at switch and jump epochs)."""
    if rng is None:
        p = params or SimParams(T, T)
        rng = stream(p.seed, p.stream_id, 0)
    q = market.generator
    mu = market.raw_drift()
    lam = market.levy.tail_mass(market.delta) if market.levy is not None else 0.0
    if math.isinf(lam):
        raise ConfigurationError("infinite activity requires delta > 0")
    t, x, a = 0.0, 0.0, int(start_regime)
    times, xs, regs, jumps, switches = [0.0], [market.s0], [a], [], []
    while t < T:
        rate = -q[a, a]
        hold = rng.exponential(1.0 / rate) if rate > 0 else math.inf
        switching = hold < T - t
        seg = hold if switching else T - t
        count = int(rng.poisson(lam * seg)) if lam > 0 else 0
        jt = np.sort(rng.uniform(0.0, seg, count))
        marks = market.levy.sample_marks(count, market.delta, rng)[:, 0] if count else np.empty(0)
        prev = 0.0
        for tj, z in zip(jt, marks):
            d = tj - prev
            x += mu[a] * d + market.vols[a] * math.sqrt(d) * rng.standard_normal()
            g = float(market.jump(np.array([a]), np.array([z]))[0])
            _check_marks(market, np.array([g]))
            before = market.s0 * math.exp(x)
            x += math.log1p(g)
            times.append(t + tj)
            xs.append(market.s0 * math.exp(x))
            regs.append(a)
            jumps.append(JumpRecord(t + tj, np.array([z]), np.array([xs[-1] - before])))
            prev = tj
        d = seg - prev
        x += mu[a] * d + market.vols[a] * math.sqrt(d) * rng.standard_normal()
        t += seg
        if switching:
            row = q[a].copy()
            row[a] = 0.0
            new = int(rng.choice(len(row), p=row / row.sum()))
            switches.append((t, a, new))
            a = new
        times.append(t)
        xs.append(market.s0 * math.exp(x))
        regs.append(a)
    return Path(np.array(times), np.array(xs)[:, None], np.array(regs), jumps, switches)


def price_european_mc(market, payoff, t, s, i, T, params, n_paths):
    """Estimate ``E[exp(-int_t^T r) h(S(T), alpha(T)) | S(t) = s, alpha(t) = i]``."""
    if not t < T:
        raise ConfigurationError("need t < T")
    if not s > 0:
        raise ConfigurationError("price must be positive")
    acc = Accumulator()
    for b, size in enumerate(_batch_sizes(n_paths, params.batch_size)):
        rng = stream(params.seed, params.stream_id, b)
        S, A, R = simulate_terminal(market, T - t, i, size, rng, s)
        acc = acc.merge(Accumulator.of(np.exp(-R) * payoff(S, A)))
    return acc.estimate(metadata={"payoff": payoff.name, "t": t, "T": T, "s": s, "regime": i,
                                  "seed": params.seed})


def log_model(market):
    """The log-price dynamics as a :class:`ModelSpec` (n = 1)."""
    mu = market.log_drift()
    vols = market.vols
    q = market.generator

    jump_coeff = levy = None
    if market.levy is not None:
        jump = market.jump

        def jump_coeff(x, i, z):
            return np.log1p(np.asarray(jump(i, z[:, 0]), dtype=float))[:, None]

        levy = market.levy
        if market.delta > 0:
            # the PIDE sees the same truncated measure as the simulation
            z, w = market.levy.nodes(market.delta, math.inf, 2)
            levy = Tabulated(z, w)
    return ModelSpec(
        n=1, m=market.m,
        drift=lambda x, i: (mu[i] + 0.0 * x[:, 0])[:, None],
        diffusion=lambda x, i: (vols[i] + 0.0 * x[:, 0])[:, None, None],
        generator_q=lambda x: np.broadcast_to(q, (np.shape(x)[0],) + q.shape),
        q_bound=float(np.max(-np.diag(q))) if market.m > 1 else 0.0,
        jump_coeff=jump_coeff, levy=levy, name="log-price",
    )


@dataclass
class PriceSurface:
    """PIDE prices reported in the price coordinate."""

    solution: PideSolution
    T: float

    def price(self, t, s, regime):
        return self.solution.value(t, math.log(s), regime)

    def to_csv(self, path):
        sol = self.solution
        nodes = np.exp(sol.grid.nodes)
        with open(path, "w") as fh:
            fh.write("t,s,regime,price\n")
            for k, t in enumerate(sol.times):
                for i in range(sol.values.shape[1]):
                    for sv, uv in zip(nodes, sol.values[k, i]):
                        fh.write(f"{float(t)!r},{float(sv)!r},{i},{float(uv)!r}\n")


def log_grid(market, T, n_nodes, width=None):
    """Uniform log-price grid around ``log s0`` wide enough for the boundary layer."""
    vmax = float(np.max(market.vols)) or 0.1
    half = width or 8.0 * vmax * math.sqrt(T) + 1.0
    c = math.log(market.s0)
    return Grid1D(c - half, c + half, n_nodes, market.m)


def price_european_pide(market, payoff, T, grid=None, n_nodes=801, n_steps=None, quad_level=1):
    """Backward solve of the pricing system in log-price; exterior data
    ``exp(-r_i tau) h(s exp(r_i tau), i)``."""
    grid = grid or log_grid(market, T, n_nodes)
    spec = log_model(market)
    rates = market.rates

    def exterior(t, y, i):
        tau = T - t
        return math.exp(-rates[i] * tau) * payoff(np.exp(y) * math.exp(rates[i] * tau), np.full(len(y), i))

    terminal = ScalarField(lambda x, i: payoff(np.exp(x[:, 0]), i))
    kill = ScalarField(lambda x, i: rates[i] + 0.0 * x[:, 0])
    sol = solve_cauchy(spec, grid, kill, terminal, T, n_steps=n_steps, direction="backward",
                       extension=Extension("formula", exterior), quad_level=quad_level,
                       average_data=True)
    return PriceSurface(sol, T)


def black_scholes_call(s, K, r, sigma, tau):
    """Lognormal closed-form call price."""
    if tau <= 0 or sigma <= 0:
        return max(s - K * math.exp(-r * max(tau, 0.0)), 0.0)
    d1 = (math.log(s / K) + (r + 0.5 * sigma**2) * tau) / (sigma * math.sqrt(tau))
    d2 = d1 - sigma * math.sqrt(tau)
    return s * stats.norm.cdf(d1) - K * math.exp(-r * tau) * stats.norm.cdf(d2)


def discount_oracle(market, tau):
    """Price of the unit claim per starting regime: ``expm((Q - diag r) tau) @ 1``."""
    return expm((market.generator - np.diag(market.rates)) * tau) @ np.ones(market.m)
