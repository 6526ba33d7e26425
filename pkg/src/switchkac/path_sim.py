"""Path simulation of the hybrid process (X, alpha).

Between events X advances by Euler-Maruyama steps with the regime frozen.
Large jumps (``|z| > delta``) are applied exactly at their epochs and the
dropped-jump compensator enters the drift.  Switching uses thinning: a
dominating clock of rate ``m * q_bound`` proposes epochs and a proposal at
time ``t`` moves ``i -> j`` with probability ``q_ij(X(t-)) / (m * q_bound)``.
Euler steps are split at every jump and switch epoch.

Two engines share these rules: :func:`simulate_path` builds a single
:class:`Path` (jump skeleton drawn up front by :func:`levy.sample_jumps`);
:func:`run_batch` advances many paths in lockstep with vectorized
exponential clocks and feeds a path observer.  Ensembles are split into
fixed-size batches, each with its own counter-based stream derived from
``(seed, stream_id, batch index)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, SimulationError
from .estimate import Accumulator, Estimate
from .levy import QuadParams, _jump_first_moment, sample_jumps
from .model import HybridState

__all__ = [
    "SimParams",
    "JumpRecord",
    "Path",
    "Box",
    "stream",
    "simulate_path",
    "simulate_ensemble",
    "empirical_moment_bound",
    "run_batch",
    "ensemble_values",
    "Observer",
    "TerminalObserver",
    "PathCallable",
]

EXPLOSION_LEVEL = 1e12


@dataclass(frozen=True)
class SimParams:
    """Horizon ``T``, max Euler step ``h``, jump truncation ``delta`` and stream ids."""

    T: float
    h: float
    delta: float = 0.0
    retain_brownian: bool = False
    seed: int = 0
    stream_id: int = 0
    batch_size: int = 16384
    threads: int = 1

    def __post_init__(self):
        if not (self.T > 0 and self.h > 0 and self.delta >= 0):
            raise ConfigurationError("SimParams needs T > 0, h > 0, delta >= 0")

    def with_horizon(self, T):
        return SimParams(T, self.h, self.delta, self.retain_brownian, self.seed,
                         self.stream_id, self.batch_size, self.threads)


def stream(seed, stream_id=0, index=0):
    """Independent Philox stream keyed by ``(seed, stream_id, index)``."""
    mask = (1 << 64) - 1
    ss = np.random.SeedSequence([seed & mask, stream_id & mask, index & mask])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class JumpRecord:
    time: float
    mark: np.ndarray
    displacement: np.ndarray


@dataclass
class Path:
    """One trajectory; ``x_values[k]`` is the post-event state at ``times[k]``."""

    times: np.ndarray
    x_values: np.ndarray
    regimes: np.ndarray
    jumps: list = field(default_factory=list)
    switches: list = field(default_factory=list)
    brownian_increments: np.ndarray | None = None

    @property
    def T(self):
        return float(self.times[-1])

    def left_limits(self):
        """``X(t-)`` at every skeleton time (differs from ``x_values`` at jump epochs)."""
        xl = self.x_values.copy()
        if self.jumps:
            pos = {j.time: j.displacement for j in self.jumps}
            for k, t in enumerate(self.times):
                if t in pos:
                    xl[k] = xl[k] - pos[t]
        return xl

    def left_regimes(self):
        """``alpha(t-)`` at every skeleton time."""
        al = self.regimes.copy()
        if self.switches:
            prev = {t: a for t, a, _ in self.switches}
            for k, t in enumerate(self.times):
                if t in prev:
                    al[k] = prev[t]
        return al


@dataclass(frozen=True)
class Box:
    """Open box ``lo < x < hi`` (an interval for n = 1)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(hi <= lo) or not np.all(np.isfinite(hi - lo)):
            raise ConfigurationError("box must be bounded with lo < hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def diameter(self):
        return float(np.linalg.norm(self.hi - self.lo))

    def inside(self, x):
        return np.all((x > self.lo) & (x < self.hi), axis=-1)


def _coefficients(spec, x, i, delta, quad):
    b = np.asarray(spec.drift(x, i), dtype=float)
    if spec.has_jumps:
        b = b - _jump_first_moment(spec, x, i, delta, quad)
    s = np.asarray(spec.diffusion(x, i), dtype=float)
    return b, s


def _diffuse(spec, x, i, dt, dw_unit, delta, quad):
    """Euler step of length ``dt`` (per row) from ``x`` given unit normals."""
    b, s = _coefficients(spec, x, i, delta, quad)
    sq = np.sqrt(dt)[:, None]
    if spec.n == 1:
        return x + b * dt[:, None] + s[:, 0, :] * (dw_unit * sq), s
    return x + b * dt[:, None] + np.einsum("kab,kb->ka", s, dw_unit * sq), s


def _thin(spec, x, a, rate, rng):
    """Accept/route switching proposals at states ``x`` in regimes ``a``."""
    q = np.asarray(spec.generator_q(x), dtype=float)
    k = len(a)
    rows = q[np.arange(k), a].copy()
    rows[np.arange(k), a] = 0.0
    cum = np.cumsum(rows, axis=1)
    u = rng.random(k) * rate
    hit = cum > u[:, None]
    moved = hit.any(axis=1)
    target = np.where(moved, hit.argmax(axis=1), a)
    return target


def _n_steps(horizon, h):
    return max(1, int(math.ceil(horizon / h - 1e-9)))


def simulate_path(spec, start, params, rng=None, quad=QuadParams()):
    """Simulate one :class:`Path` on ``[0, params.T]``.

    Raises :class:`SimulationError` (carrying the partial path) if ``|X|``
    exceeds the explosion level.
    """
    spec.check_state(start)
    if rng is None:
        rng = stream(params.seed, params.stream_id, 0)
    T = params.T
    if spec.has_jumps and spec.levy.tail_mass(params.delta) > 0:
        jt, jm = sample_jumps(spec.levy, params.delta, T, rng)
    else:
        jt, jm = np.empty(0), np.empty((0, 1))
    rate = spec.m * spec.q_bound
    next_switch = rng.exponential(1.0 / rate) if rate > 0 else math.inf

    x = start.x.copy()[None, :]
    a = np.array([start.regime])
    times, xs, regs = [0.0], [x[0].copy()], [a[0]]
    jumps, switches, dws = [], [], []
    t = 0.0
    kj = 0

    def advance(dt):
        nonlocal x
        z = rng.standard_normal((1, spec.n))
        x, _ = _diffuse(spec, x, a, np.array([dt]), z, params.delta, quad)
        if params.retain_brownian:
            dws.append(z[0] * math.sqrt(dt))

    def record(tt):
        times.append(tt)
        xs.append(x[0].copy())
        regs.append(a[0])
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > EXPLOSION_LEVEL:
            partial = Path(np.array(times), np.array(xs), np.array(regs), jumps, switches)
            raise SimulationError(f"path exploded at t={tt:.6g}", partial)

    n_steps = _n_steps(T, params.h)
    for k in range(1, n_steps + 1):
        t_end = T * k / n_steps
        while True:
            tj = jt[kj] if kj < len(jt) else math.inf
            ev = min(tj, next_switch)
            if ev >= t_end:
                break
            advance(ev - t)
            t = ev
            if tj <= next_switch:
                d = np.asarray(spec.jump_coeff(x, a, jm[kj:kj + 1]), dtype=float)
                x = x + d
                jumps.append(JumpRecord(t, jm[kj].copy(), d[0].copy()))
                kj += 1
            else:
                new = _thin(spec, x, a, rate, rng)
                if new[0] != a[0]:
                    switches.append((t, int(a[0]), int(new[0])))
                    a = new
                next_switch += rng.exponential(1.0 / rate)
            record(t)
        advance(t_end - t)
        t = t_end
        record(t)
    return Path(np.array(times), np.array(xs), np.array(regs), jumps, switches,
                np.array(dws) if params.retain_brownian else None)


class Observer:
    """Receives the skeleton of a batch of paths and produces one value per path.

    ``segment`` is called for every Euler sub-step with the state at its
    start (post-event) and end (pre-event); ``stop`` when paths leave the
    domain; ``finish`` at the horizon for still-running paths.
    """

    def start(self, t0, x, a):
        pass

    def segment(self, idx, t_a, t_b, x_a, x_b, a):
        pass

    def event(self, idx, t, x_before, x_after, a_before, a_after):
        pass

    def stop(self, idx, t, x, a):
        pass

    def finish(self, idx, t, x, a):
        pass

    def values(self):
        raise NotImplementedError


class TerminalObserver(Observer):
    """Value ``fn(X(T), alpha(T))`` (vectorized ``fn``)."""

    def __init__(self, n, fn):
        self.fn = fn
        self.out = np.full(n, np.nan)

    def finish(self, idx, t, x, a):
        self.out[idx] = self.fn(x, a)

    def stop(self, idx, t, x, a):
        self.out[idx] = self.fn(x, a)

    def values(self):
        return self.out


@dataclass
class BatchResult:
    values: np.ndarray
    exploded: np.ndarray
    exited: np.ndarray
    exit_times: np.ndarray


def run_batch(spec, start, params, n, rng, observer, t0=0.0, domain=None,
              bridge=True, quad=QuadParams()):
    """Advance ``n`` paths from ``start`` over ``[t0, t0 + params.T]`` in lockstep.

    With ``domain`` (a :class:`Box`) paths stop at the first exit, detected
    at skeleton times and, for diffusive sub-steps, by the Brownian-bridge
    crossing probability when ``bridge`` is true.  Returns a
    :class:`BatchResult`; exploded paths are flagged, not raised.
    """
    spec.check_state(start)
    X = np.repeat(start.x[None, :], n, axis=0)
    A = np.full(n, start.regime, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    exploded = np.zeros(n, dtype=bool)
    exited = np.zeros(n, dtype=bool)
    exit_times = np.full(n, np.nan)
    lam = spec.levy.tail_mass(params.delta) if spec.has_jumps else 0.0
    if math.isinf(lam):
        raise ConfigurationError("infinite activity requires delta > 0")
    rate = spec.m * spec.q_bound
    next_jump = t0 + (rng.exponential(1.0 / lam, n) if lam > 0 else np.full(n, np.inf))
    next_switch = t0 + (rng.exponential(1.0 / rate, n) if rate > 0 else np.full(n, np.inf))
    cur = np.full(n, float(t0))
    observer.start(t0, X, A)
    if domain is not None:
        outside = ~domain.inside(X)
        if outside.any():
            raise ConfigurationError("start point must lie inside the domain")

    def halt(idx, why):
        active[idx] = False
        why[idx] = True

    def check_explosion(idx):
        # NaN compares false, so one pass covers non-finite values too
        bad = ~(np.abs(X[idx]) <= EXPLOSION_LEVEL).all(axis=1)
        if bad.any():
            halt(idx[bad], exploded)
            return idx[~bad]
        return idx

    def advance(idx, t_b):
        if idx.size == 0:
            return
        t_a = cur[idx]
        dt = t_b - t_a
        xa = X[idx]
        aa = A[idx]
        z = rng.standard_normal((idx.size, spec.n))
        xb, s = _diffuse(spec, xa, aa, dt, z, params.delta, quad)
        t_end = np.array(t_b, dtype=float, copy=True) if np.ndim(t_b) else np.full(idx.size, float(t_b))
        stopped = np.zeros(idx.size, dtype=bool)
        if domain is not None:
            stopped, xb, t_end = _exit_step(domain, xa, xb, s, dt, t_a, t_end, bridge, rng)
        observer.segment(idx, t_a, t_end, xa, xb, aa)
        X[idx] = xb
        cur[idx] = t_end
        if stopped.any():
            sidx = idx[stopped]
            halt(sidx, exited)
            exit_times[sidx] = t_end[stopped]
            observer.stop(sidx, t_end[stopped], X[sidx], A[sidx])
        check_explosion(idx[~stopped])

    horizon = params.T
    n_steps = _n_steps(horizon, params.h)
    for k in range(1, n_steps + 1):
        t_next = t0 + horizon * k / n_steps
        while True:
            ev = np.minimum(next_jump, next_switch)
            due = np.flatnonzero(active & (ev < t_next))
            if due.size == 0:
                break
            advance(due, ev[due])
            due = due[active[due]]
            if due.size == 0:
                continue
            is_jump = next_jump[due] <= next_switch[due]
            jidx = due[is_jump]
            sidx = due[~is_jump]
            if jidx.size:
                marks = spec.levy.sample_marks(jidx.size, params.delta, rng)
                before = X[jidx].copy()
                X[jidx] = before + np.asarray(spec.jump_coeff(before, A[jidx], marks), dtype=float)
                next_jump[jidx] += rng.exponential(1.0 / lam, jidx.size)
                observer.event(jidx, cur[jidx], before, X[jidx], A[jidx], A[jidx])
                jidx = check_explosion(jidx)
                if domain is not None and jidx.size:
                    out = ~domain.inside(X[jidx])
                    if out.any():
                        oidx = jidx[out]
                        halt(oidx, exited)
                        exit_times[oidx] = cur[oidx]
                        observer.stop(oidx, cur[oidx], X[oidx], A[oidx])
            if sidx.size:
                old = A[sidx].copy()
                A[sidx] = _thin(spec, X[sidx], old, rate, rng)
                next_switch[sidx] += rng.exponential(1.0 / rate, sidx.size)
                changed = A[sidx] != old
                if changed.any():
                    c = sidx[changed]
                    observer.event(c, cur[c], X[c], X[c], old[changed], A[c])
        live = np.flatnonzero(active)
        if live.size == 0:
            break
        advance(live, t_next)
    live = np.flatnonzero(active)
    if live.size:
        observer.finish(live, t0 + horizon, X[live], A[live])
    return BatchResult(observer.values(), exploded, exited, exit_times)


def _exit_step(domain, xa, xb, s, dt, t_a, t_end, bridge, rng):
    """Detect exits during a diffusive sub-step; returns (stopped, x_end, t_end)."""
    stopped = ~domain.inside(xb)
    t_end = t_end.copy()
    xb = xb.copy()
    if bridge:
        var = np.einsum("kab,kab->ka", s, s) * dt[:, None]
        var = np.maximum(var, 1e-300)
        inside = ~stopped
        d_hi_a = domain.hi - xa
        d_hi_b = domain.hi - xb
        d_lo_a = xa - domain.lo
        d_lo_b = xb - domain.lo
        p_hi = np.exp(-2.0 * np.clip(d_hi_a * d_hi_b, 0, None) / var)
        p_lo = np.exp(-2.0 * np.clip(d_lo_a * d_lo_b, 0, None) / var)
        p_stay = np.prod((1.0 - p_hi) * (1.0 - p_lo), axis=1)
        u = rng.random(len(xa))
        crossed = inside & (u >= p_stay)
        if crossed.any():
            c = np.flatnonzero(crossed)
            # side: coordinate and face proportional to crossing probabilities
            w = np.concatenate([p_lo[c], p_hi[c]], axis=1)
            w = w / w.sum(axis=1, keepdims=True)
            pick = (np.cumsum(w, axis=1) > rng.random(c.size)[:, None]).argmax(axis=1)
            nd = xa.shape[1]
            coord = pick % nd
            upper = pick >= nd
            xb[c] = xa[c] + 0.5 * (xb[c] - xa[c])
            xb[c, coord] = np.where(upper, domain.hi[coord], domain.lo[coord])
            t_end[c] = t_a[c] + 0.5 * dt[c]
            stopped = stopped | crossed
    return stopped, xb, t_end


class PathCallable:
    """Adapter turning ``fn(path) -> float`` into an ensemble functional."""

    def __init__(self, fn):
        self.fn = fn


def _batch_sizes(n_paths, batch_size):
    sizes = [batch_size] * (n_paths // batch_size)
    if n_paths % batch_size:
        sizes.append(n_paths % batch_size)
    return sizes


def ensemble_values(spec, start, params, n_paths, make_observer, t0=0.0, domain=None,
                    bridge=True, quad=QuadParams()):
    """Run all batches; returns ``(list of BatchResult)`` in batch order."""
    if n_paths < 1:
        raise ConfigurationError("n_paths must be positive")
    sizes = _batch_sizes(n_paths, params.batch_size)

    def job(b):
        rng = stream(params.seed, params.stream_id, b)
        return run_batch(spec, start, params, sizes[b], rng, make_observer(sizes[b]),
                         t0=t0, domain=domain, bridge=bridge, quad=quad)

    if params.threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(params.threads) as pool:
            return list(pool.map(job, range(len(sizes))))
    return [job(b) for b in range(len(sizes))]


def reduce_batches(results, metadata=None):
    """Merge batch results into an :class:`Estimate` (exploded paths excluded and counted)."""
    acc = Accumulator()
    for r in results:
        part = Accumulator.of(r.values[~r.exploded])
        part.exploded = int(r.exploded.sum())
        acc = acc.merge(part)
    est = acc.estimate(metadata=metadata)
    if acc.exploded:
        est.metadata["explosion_fraction"] = acc.exploded / (acc.count + acc.exploded)
    return est


def simulate_ensemble(spec, start, params, n_paths, functional, quad=QuadParams()):
    """Estimate ``E[functional(path)]`` over ``n_paths`` independent paths.

    ``functional`` is either a factory ``n -> Observer`` (vectorized, fast) or
    a :class:`PathCallable` wrapping a per-:class:`Path` function.
    """
    if n_paths < 2:
        raise ConfigurationError("n_paths must be at least 2")
    meta = {"T": params.T, "h": params.h, "delta": params.delta, "seed": params.seed}
    if isinstance(functional, PathCallable):
        acc = Accumulator()
        vals = []
        exploded = 0
        for k in range(n_paths):
            try:
                p = simulate_path(spec, start, params, stream(params.seed, params.stream_id, k), quad)
                vals.append(functional.fn(p))
            except SimulationError:
                exploded += 1
        acc.add(vals)
        acc.exploded = exploded
        return acc.estimate(metadata=meta)
    results = ensemble_values(spec, start, params, n_paths, functional, quad=quad)
    return reduce_batches(results, meta)


class _SupObserver(Observer):
    def __init__(self, n, x0, p):
        self.p = p
        self.best = np.full(n, float(np.linalg.norm(x0)) ** p)

    def _upd(self, idx, x):
        v = np.linalg.norm(x, axis=1) ** self.p
        self.best[idx] = np.maximum(self.best[idx], v)

    def segment(self, idx, t_a, t_b, x_a, x_b, a):
        self._upd(idx, x_b)

    def event(self, idx, t, x_before, x_after, a_before, a_after):
        self._upd(idx, x_after)

    def values(self):
        return self.best


def empirical_moment_bound(spec, start, params, p, n_paths, quad=QuadParams()):
    """Estimate ``E[sup_{t<=T} |X(t)|^p]`` from the skeleton maximum."""
    if not 0 < p <= 2:
        raise ConfigurationError("p must lie in (0, 2]")
    x0 = start.x
    return simulate_ensemble(spec, start, params, n_paths,
                             lambda n: _SupObserver(n, x0, p), quad=quad)
