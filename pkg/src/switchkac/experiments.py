"""Named experiment suites driven by a parsed configuration.

Every suite takes the top-level :class:`config.Table` and a :class:`RunContext`
and returns a list of :class:`Check` records; data tables are written to the
context's output directory with fixed headers.
"""

from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import averaging as avg
from . import pricing as pr
from .config import Table, build_coefficient, build_field, build_levy, build_model
from .errors import ConfigurationError
from .feynman_kac import (DirichletProblemSpec, dynkin_residual, estimate_dirichlet,
                          estimate_initial_value, estimate_terminal_value, tabulated_generator)
from .model import HybridState, ModelSpec, ScalarField, constant, constant_generator
from .path_sim import Box, SimParams, TerminalObserver, ensemble_values
from .pide import Grid1D, solve_cauchy, solve_dirichlet

__all__ = ["Check", "RunContext", "EXPERIMENTS", "EXPERIMENT_KEYS", "emit_plot_data", "check_keys"]


@dataclass
class Check:
    name: str
    value: float
    target: float
    tolerance: float
    passed: bool
    runtime: float = 0.0
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        self.passed = bool(self.passed)

    def as_dict(self):
        d = asdict(self)
        d["runtime"] = float(d["runtime"])
        for k in ("value", "target", "tolerance"):
            v = d[k]
            d[k] = None if v is None or (isinstance(v, float) and not math.isfinite(v)) else float(v)
        return d


@dataclass
class RunContext:
    out_dir: str
    seed: int
    threads: int = 1
    files: list = field(default_factory=list)

    def path(self, name):
        return os.path.join(self.out_dir, name)


def emit_plot_data(ctx, name, header, rows):
    """Write a CSV table; an empty table is an error."""
    rows = list(rows)
    if not rows:
        raise ConfigurationError("no samples")
    path = ctx.path(name)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    ctx.files.append(name)
    return path


class _Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def _brownian():
    return ModelSpec(1, 1, constant([0.0]), constant([1.0], kind="diffusion"),
                     constant_generator([[0.0]]), 0.0, name="brownian")


def _params(cfg, ctx, T, stream_id=0):
    return SimParams(T, float(cfg.get("h", 1e-3)), delta=float(cfg.get("delta", 0.0)),
                     seed=ctx.seed, stream_id=stream_id, threads=ctx.threads)


def _tolerances(cfg):
    tol = cfg.sub("tolerances")
    if tol is None:
        return {}
    out = {k: tol.get(k) for k in list(tol.data)}
    tol.finish()
    return out


def _agree(name, mc, ref, budget, n_se, elapsed, **detail):
    tol = n_se * mc.std_error + budget
    ok = bool(mc.valid and abs(mc.mean - ref) <= tol)
    return Check(name, mc.mean, ref, tol, ok, elapsed,
                 {"std_error": mc.std_error, "budget": budget, **detail})


def _cauchy_pair(spec, grid_nodes, x_range, **kw):
    fine = solve_cauchy(spec, Grid1D(x_range[0], x_range[1], grid_nodes, spec.m), **kw)
    coarse = solve_cauchy(spec, Grid1D(x_range[0], x_range[1], (grid_nodes + 1) // 2, spec.m), **kw)
    return fine, coarse


# ---------------------------------------------------------------------------


def feynman_kac_smoke(cfg, ctx):
    n_paths = int(cfg.get("n_paths", 100_000))
    t = float(cfg.get("t", 1.0))
    xs = [float(v) for v in cfg.get("x_points", [-2.0, -1.0, 0.0, 1.0, 2.0])]
    nodes = int(cfg.get("grid_nodes", 801))
    x_range = cfg.get("x_range", [-10.0, 10.0])
    budget = float(cfg.get("grid_budget", 5e-3))
    kill = build_field(cfg.get("potential", "kac_potential"), 1, "potential")
    init = build_field(cfg.get("initial", "cos"), 1, "initial")
    n_se = float(_tolerances(cfg).get("n_se", 3.0))
    spec = _brownian()
    p = _params(cfg, ctx, t)
    sol = solve_cauchy(spec, Grid1D(x_range[0], x_range[1], nodes), kill, init, t)
    checks, rows = [], []
    for k, x in enumerate(xs):
        with _Timer() as tm:
            mc = estimate_initial_value(spec, kill, init, t, HybridState([x], 0),
                                        SimParams(t, p.h, seed=p.seed, stream_id=k, threads=p.threads),
                                        n_paths)
        ref = sol.value(t, x, 0)
        c = _agree(f"kac x={x:g}", mc, ref, budget, n_se, tm.elapsed, x=x)
        checks.append(c)
        rows.append((x, mc.mean, mc.std_error, ref, abs(mc.mean - ref), c.tolerance))
    emit_plot_data(ctx, "kac_smoke.csv", ["x", "mc_mean", "mc_se", "pide", "abs_diff", "tolerance"], rows)
    return checks


def feynman_kac(cfg, ctx):
    spec = build_model(cfg.sub("model", required=True))
    m = spec.m
    n_paths = int(cfg.get("n_paths", 100_000))
    t = float(cfg.get("t", 0.5))
    T = float(cfg.get("T", 0.5))
    t0 = float(cfg.get("t_eval", 0.0))
    x = float(cfg.get("x", 0.0))
    nodes = int(cfg.get("grid_nodes", 801))
    x_range = cfg.get("x_range", [-10.0, 10.0])
    quad_level = int(cfg.get("quad_level", 1))
    kill = build_field(cfg.get("kill", {"family": "constant", "value": 0.1}), m, "kill")
    init = build_field(cfg.require("initial"), m, "initial")
    source = build_field(cfg.get("source", {"family": "gaussian", "amplitude": 0.5}), m, "source")
    n_se = float(_tolerances(cfg).get("n_se", 3.0))
    checks, rows = [], []

    fine, coarse = _cauchy_pair(spec, nodes, x_range, c=kill, data=init, T=t, quad_level=quad_level)
    for i in range(m):
        with _Timer() as tm:
            mc = estimate_initial_value(spec, kill, init, t, HybridState([x], i),
                                        _params(cfg, ctx, t, stream_id=i), n_paths)
        ref = fine.value(t, x, i)
        budget = 2 * abs(ref - coarse.value(t, x, i))
        checks.append(_agree(f"initial-value regime {i}", mc, ref, budget, n_se, tm.elapsed))
        rows.append(("initial", i, x, mc.mean, mc.std_error, ref, budget))

    fine, coarse = _cauchy_pair(spec, nodes, x_range, c=kill, data=init, T=T, direction="backward",
                                source=source, quad_level=quad_level)
    for i in range(m):
        with _Timer() as tm:
            mc = estimate_terminal_value(spec, kill, source, init, t0, T, HybridState([x], i),
                                         _params(cfg, ctx, T, stream_id=100 + i), n_paths)
        ref = fine.value(t0, x, i)
        budget = 2 * abs(ref - coarse.value(t0, x, i))
        checks.append(_agree(f"terminal-value regime {i}", mc, ref, budget, n_se, tm.elapsed))
        rows.append(("terminal", i, x, mc.mean, mc.std_error, ref, budget))

    zero = ScalarField.constant(0.0)
    with _Timer() as tm:
        mc = estimate_terminal_value(spec, zero, ScalarField.constant(1.0), zero, t0, T,
                                     HybridState([x], 0), _params(cfg, ctx, T, stream_id=200),
                                     min(n_paths, 1000))
    target = -(T - t0)
    checks.append(Check("terminal sign convention", mc.mean, target, n_se * mc.std_error + 1e-12,
                        abs(mc.mean - target) <= n_se * mc.std_error + 1e-12, tm.elapsed))
    emit_plot_data(ctx, "feynman_kac.csv",
                   ["problem", "regime", "x", "mc_mean", "mc_se", "pide", "budget"], rows)
    return checks


def dirichlet(cfg, ctx):
    n_paths = int(cfg.get("n_paths", 20_000))
    xs = [float(v) for v in cfg.get("x_points", [-0.5, 0.0, 0.5])]
    lo, hi = cfg.get("interval", [-1.0, 1.0])
    nodes = int(cfg.get("grid_nodes", 401))
    n_se = float(_tolerances(cfg).get("n_se", 3.0))
    box = Box([lo], [hi])
    bm = _brownian()
    zero = ScalarField.constant(0.0)
    checks, rows = [], []
    exit_time = DirichletProblemSpec(box, None, ScalarField.constant(-1.0), zero)
    hit = DirichletProblemSpec(box, None, None,
                               ScalarField(lambda x, i: (x[:, 0] >= hi).astype(float)))
    width = hi - lo
    for k, x in enumerate(xs):
        for label, prob, exact in (
            ("exit time", exit_time, (x - lo) * (hi - x)),
            ("hitting probability", hit, (x - lo) / width),
        ):
            with _Timer() as tm:
                mc = estimate_dirichlet(bm, prob, HybridState([x], 0),
                                        _params(cfg, ctx, 1.0, stream_id=10 * k + len(rows)), n_paths)
            c = Check(f"brownian {label} x={x:g}", mc.mean, exact, n_se * mc.std_error,
                      bool(mc.valid and abs(mc.mean - exact) <= n_se * mc.std_error), tm.elapsed,
                      {"std_error": mc.std_error, "censored_fraction": mc.metadata["censored_fraction"]})
            checks.append(c)
            rows.append((label, 0, x, mc.mean, mc.std_error, exact, 0.0))

    mtbl = cfg.sub("model")
    if mtbl is not None:
        spec = build_model(mtbl)
        m = spec.m
        kill = build_field(cfg.get("kill", {"family": "constant", "value": 0.1}), m, "kill")
        xi = build_field(cfg.get("xi", {"family": "constant", "value": -1.0}), m, "xi")
        eta = build_field(cfg.get("eta", "indicator_positive"), m, "eta")
        prob = DirichletProblemSpec(box, kill, xi, eta)
        fine = solve_dirichlet(spec, Grid1D(lo, hi, nodes, m), kill, xi, eta)
        coarse = solve_dirichlet(spec, Grid1D(lo, hi, (nodes + 1) // 2, m), kill, xi, eta)
        worst_censor = 0.0
        for k, x in enumerate(xs):
            for i in range(m):
                with _Timer() as tm:
                    mc = estimate_dirichlet(spec, prob, HybridState([x], i),
                                            _params(cfg, ctx, 1.0, stream_id=500 + 10 * k + i), n_paths)
                ref = fine.value(0.0, x, i)
                budget = 2 * abs(ref - coarse.value(0.0, x, i))
                checks.append(_agree(f"coupled dirichlet x={x:g} regime {i}", mc, ref, budget,
                                     n_se, tm.elapsed))
                worst_censor = max(worst_censor, mc.metadata["censored_fraction"])
                rows.append(("coupled", i, x, mc.mean, mc.std_error, ref, budget))
        checks.append(Check("censored fraction", worst_censor, 0.0, 0.01, worst_censor < 0.01))

    # discrete maximum principle on pure-diffusion solves
    for label, eta_f in (("max principle linear data", ScalarField(lambda x, i: x[:, 0])),
                         ("max principle indicator data",
                          ScalarField(lambda x, i: (x[:, 0] > 0).astype(float)))):
        sol = solve_dirichlet(bm, Grid1D(lo, hi, nodes), None, None, eta_f)
        u = sol.values[0, 0, 1:-1]
        ev = eta_f.value(np.array([[lo], [hi]]), np.zeros(2, dtype=int))
        viol = max(0.0, float(np.max(u) - ev.max()), float(ev.min() - np.min(u)))
        checks.append(Check(label, viol, 0.0, 1e-12, viol <= 1e-12))
    emit_plot_data(ctx, "dirichlet.csv",
                   ["problem", "regime", "x", "mc_mean", "mc_se", "reference", "budget"], rows)
    return checks


def dynkin(cfg, ctx):
    spec = build_model(cfg.sub("model", required=True))
    n_paths = int(cfg.get("n_paths", 100_000))
    t = float(cfg.get("t", 0.5))
    x = float(cfg.get("x", 0.3))
    radius = float(cfg.get("radius", 1.0))
    n_se = float(_tolerances(cfg).get("n_se", 3.0))
    trend = cfg.sub("trend")
    f = build_field({"family": "bump", "radius": radius}, spec.m, "bump")
    support = (-radius, radius)
    with _Timer() as tm:
        r = dynkin_residual(spec, f, t, HybridState([x], 0), _params(cfg, ctx, t), n_paths,
                            support=support)
    checks = [Check("dynkin residual", r.mean, 0.0, n_se * r.std_error,
                    bool(r.valid and abs(r.mean) <= n_se * r.std_error), tm.elapsed,
                    {"std_error": r.std_error, "h": r.metadata["h"]})]
    rows = [("base", r.metadata["h"], r.mean, r.std_error)]
    if trend is not None:
        # Euler bias is invisible without drift; a restoring drift exposes it
        hs = [float(v) for v in trend.require("h")]
        tx = float(trend.get("x", x))
        tn = int(trend.get("n_paths", n_paths))
        tspec = spec
        if trend.get("drift") is not None:
            tspec = spec.replace(drift=build_coefficient(trend.get("drift"), "drift", 1, "trend.drift"))
        trend.finish()
        if len(hs) < 2 or any(b >= a for a, b in zip(hs, hs[1:])):
            raise ConfigurationError("trend.h must be a decreasing list of at least two steps")
        lf = tabulated_generator(tspec, f, support)
        mags = []
        with _Timer() as tm:
            for k, h in enumerate(hs):
                p = SimParams(t, h, seed=ctx.seed, stream_id=1 + k, threads=ctx.threads)
                rk = dynkin_residual(tspec, f, t, HybridState([tx], 0), p, tn, support=support, lf=lf)
                mags.append(abs(rk.mean))
                rows.append(("trend", h, rk.mean, rk.std_error))
        n_dec = sum(a > b for a, b in zip(mags, mags[1:]))
        checks.append(Check("dynkin residual trend", n_dec, len(hs) - 1, 0, n_dec == len(hs) - 1,
                            tm.elapsed, {"h": hs, "abs_residual": mags}))
    emit_plot_data(ctx, "dynkin.csv", ["model", "h", "residual", "std_error"], rows)
    return checks


def _market(tbl):
    levy = jump = None
    lspec = tbl.get("levy")
    jscale = tbl.get("jump_scale")
    if (lspec is None) != (jscale is None):
        raise ConfigurationError(f"{tbl.where}: levy and jump_scale must be given together")
    if lspec is not None:
        levy = build_levy(lspec, f"{tbl.where}.levy")
        jump = pr.relative_jump(jscale)
    mk = pr.MarketSpec(tbl.require("rates"), tbl.require("vols"), tbl.require("generator"),
                       float(tbl.get("s0", 100.0)), levy, jump)
    tbl.finish()
    return mk


def pricing(cfg, ctx):
    market = _market(cfg.sub("market", required=True))
    K = float(cfg.get("strike", 100.0))
    T = float(cfg.get("T", 1.0))
    n_paths = int(cfg.get("n_paths", 200_000))
    nodes = int(cfg.get("grid_nodes", 801))
    budget = float(cfg.get("grid_budget", 0.05))
    n_se = float(_tolerances(cfg).get("n_se", 3.0))
    s = market.s0
    p = SimParams(T, T, seed=ctx.seed)
    checks, rows = [], []

    bs = pr.MarketSpec([0.05], [0.2], [[0.0]], s)
    ref = pr.black_scholes_call(s, K, 0.05, 0.2, T)
    with _Timer() as tm:
        e = pr.price_european_mc(bs, pr.call(K), 0.0, s, 0, T, p, n_paths)
    tol = max(n_se * e.std_error, 0.05)
    checks.append(Check("lognormal call mc", e.mean, ref, tol, abs(e.mean - ref) <= tol, tm.elapsed))
    rows.append(("lognormal", "call", 0, e.mean, e.std_error, ref, 0.0))
    surf = pr.price_european_pide(bs, pr.call(K), T, n_nodes=600)
    grid_s = np.linspace(0.5 * s, 2.0 * s, 61)
    err = max(abs(surf.price(0.0, v, 0) - pr.black_scholes_call(v, K, 0.05, 0.2, T)) for v in grid_s)
    checks.append(Check("lognormal call pide max error", err, 0.0, 0.05, err < 0.05))

    est = {}
    for pay in (pr.call(K), pr.digital(K), pr.put(K)):
        fine = pr.price_european_pide(market, pay, T, n_nodes=nodes)
        for i in range(market.m):
            with _Timer() as tm:
                e = pr.price_european_mc(market, pay, 0.0, s, i, T,
                                         SimParams(T, T, seed=ctx.seed, stream_id=1 + i), n_paths)
            est[pay.name, i] = e
            ref = fine.price(0.0, s, i)
            if not pay.name.startswith("put"):
                b = budget if pay.name.startswith("call") else 2 * abs(
                    ref - pr.price_european_pide(market, pay, T, n_nodes=(nodes + 1) // 2).price(0.0, s, i))
                checks.append(_agree(f"{pay.name} regime {i} mc vs pide", e, ref, b, n_se, tm.elapsed))
            rows.append(("market", pay.name, i, e.mean, e.std_error, ref, 0.0))
    disc = pr.discount_oracle(market, T)
    for i in range(market.m):
        c, q = est[f"call(K={K})", i], est[f"put(K={K})", i]
        lhs = c.mean - q.mean
        rhs = s - K * disc[i]
        tol = n_se * math.hypot(c.std_error, q.std_error)
        checks.append(Check(f"put-call parity regime {i}", lhs, rhs, tol, abs(lhs - rhs) <= tol))
    emit_plot_data(ctx, "pricing.csv",
                   ["market", "payoff", "regime", "mc_price", "mc_se", "pide_price", "budget"], rows)
    surf = pr.price_european_pide(market, pr.call(K), T, n_nodes=nodes)
    surf.solution.values = surf.solution.values[[0, -1]]
    surf.solution.times = surf.solution.times[[0, -1]]
    surf.to_csv(ctx.path("price_surface.csv"))
    ctx.files.append("price_surface.csv")
    return checks


def _terminal_samples(model, x0, regime, T, h, n, seed, stream_id, threads):
    p = SimParams(T, h, seed=seed, stream_id=stream_id, threads=threads)
    res = ensemble_values(model, HybridState([x0], regime), p, n,
                          lambda k: TerminalObserver(k, lambda x, a: x[:, 0]))
    return np.concatenate([r.values[~r.exploded] for r in res])


def averaging(cfg, ctx):
    base = build_model(cfg.sub("model", required=True))
    eps_list = [float(e) for e in cfg.get("epsilons", [0.5, 0.1, 0.02])]
    reps = int(cfg.get("replicates", 5))
    n = int(cfg.get("n_samples", 10_000))
    T = float(cfg.get("T", 1.0))
    h = float(cfg.get("h", 1e-2))
    need = int(cfg.get("min_decreasing", 4))
    x0 = float(cfg.get("x", 0.0))
    Q = avg.TwoTimeScaleSpec(base, 1.0).Q
    with _Timer() as tm:
        nu = avg.stationary_distribution(Q)
    res = float(np.max(np.abs(nu @ Q)))
    checks = [Check("stationary residual", res, 0.0, 1e-12, res < 1e-12, tm.elapsed,
                    {"nu": [float(v) for v in nu]})]
    rows, decreasing = [], 0
    limit = avg.averaged_model(avg.TwoTimeScaleSpec(base, 1.0), nu)
    with _Timer() as tm:
        for r in range(reps):
            ref = _terminal_samples(limit, x0, 0, T, h, n, ctx.seed + r, 999, ctx.threads)
            ks = []
            for k, eps in enumerate(eps_list):
                model = avg.build_scaled_model(avg.TwoTimeScaleSpec(base, eps))
                xs = _terminal_samples(model, x0, 0, T, h, n, ctx.seed + r, k, ctx.threads)
                ks.append(avg.ks_two_sample(xs, ref))
                rows.append((r, eps, ks[-1]))
            decreasing += all(a > b for a, b in zip(ks, ks[1:]))
    checks.append(Check("ks strictly decreasing replicates", decreasing, need, 0, decreasing >= need,
                        tm.elapsed))
    emit_plot_data(ctx, "weak_convergence.csv", ["replicate", "epsilon", "ks"], rows)
    return checks


def arcsine(cfg, ctx):
    base = build_model(cfg.sub("model", required=True))
    schedule = cfg.get("schedule", [[0.1, 25.0], [0.02, 100.0]])
    n = int(cfg.get("n_paths", 10_000))
    h = float(cfg.get("h", 0.05))
    ks_max = float(cfg.get("ks_max", 0.05))
    occ = avg.OccupationSpec.positive_half_line()
    checks = []
    zs = np.linspace(0.0, 1.0, 101)
    for k, (eps, T) in enumerate(schedule):
        with _Timer() as tm:
            eta = avg.occupation_samples(avg.TwoTimeScaleSpec(base, float(eps)), occ, 0.0, 0,
                                         float(T), h, n, ctx.seed, stream_id=k, threads=ctx.threads)
            ks = avg.ks_statistic(eta, avg.arcsine_cdf)
        final = k == len(schedule) - 1
        checks.append(Check(f"arcsine ks eps={eps:g} T={T:g}", ks, 0.0, ks_max,
                            ks < ks_max if final else True, tm.elapsed, {"gating": final}))
        srt = np.sort(eta)
        emp = np.searchsorted(srt, zs, side="right") / len(srt)
        emit_plot_data(ctx, f"arcsine_stage{k}.csv", ["z", "empirical_cdf", "arcsine_cdf"],
                       zip(zs, emp, avg.arcsine_cdf(zs)))
    return checks


def stieltjes(cfg, ctx):
    base = build_model(cfg.sub("model", required=True))
    eps = float(cfg.get("eps", 0.02))
    T = float(cfg.get("T", 100.0))
    n = int(cfg.get("n_paths", 10_000))
    h = float(cfg.get("h", 0.05))
    zs = [float(z) for z in cfg.get("z", [0.5, 1.0, 2.0])]
    rel = float(cfg.get("rel_tol", 0.1))
    spec = avg.TwoTimeScaleSpec(base, eps)
    nu = avg.stationary_distribution(spec.Q)
    sa = avg.spatial_averages(lambda x: avg.averaged_sigma(base, nu, x), lambda x: (x > 0).astype(float))
    A = math.sqrt(sa.p_plus / sa.p_minus)
    checks = [Check("spatial averages converged", sa.gap, 0.0, 1e-3, sa.converged, 0.0,
                    {"p_plus": sa.p_plus, "p_minus": sa.p_minus, "A": A})]
    with _Timer() as tm:
        eta = avg.occupation_samples(spec, avg.OccupationSpec.positive_half_line(), 0.0, 0, T, h, n,
                                     ctx.seed, threads=ctx.threads)
    rows = []
    for z in zs:
        emp = float(np.mean(1.0 / (z + eta)))
        target = avg.stieltjes_rhs(z, A)
        checks.append(Check(f"stieltjes z={z:g}", emp, target, rel * target,
                            abs(emp - target) <= rel * target, tm.elapsed))
        rows.append((z, emp, target))
    emit_plot_data(ctx, "stieltjes.csv", ["z", "empirical_transform", "target_transform"], rows)
    return checks


def l2_gap(cfg, ctx):
    s1, s2 = (float(v) for v in cfg.get("sigma", [1.0, 2.0]))
    q1, q2 = (float(v) for v in cfg.get("q", [1.0, 1.0]))
    eps_list = [float(e) for e in cfg.get("epsilons", [0.1, 0.01])]
    times = [float(t) for t in cfg.get("times", [0.5, 1.0])]
    n = int(cfg.get("n_paths", 200_000))
    n_se = float(_tolerances(cfg).get("n_se", 3.0))
    checks, rows = [], []
    for a, eps in enumerate(eps_list):
        for b, t in enumerate(times):
            with _Timer() as tm:
                mean, se = avg.l2_gap_mc(s1, s2, q1, q2, t, eps, n, ctx.seed, stream_id=10 * a + b)
            ref = avg.l2_gap_formula(s1, s2, q1, q2, t, eps)
            checks.append(Check(f"l2 gap eps={eps:g} t={t:g}", mean, ref, n_se * se,
                                abs(mean - ref) <= n_se * se, tm.elapsed, {"std_error": se}))
            rows.append((eps, t, mean, se, ref))
            if eps == min(eps_list):
                lim = avg.l2_gap_formula(s1, s2, q1, q2, t, 0.0)
                checks.append(Check(f"gap persists eps={eps:g} t={t:g}", mean, 0.5 * lim, 0.0,
                                    mean > 0.5 * lim))
    emit_plot_data(ctx, "l2_gap.csv", ["epsilon", "t", "mc_gap", "mc_se", "formula_gap"], rows)
    return checks


_COMMON = {"experiment", "seed", "output_dir", "tolerances", "h", "delta"}

EXPERIMENT_KEYS = {
    "feynman-kac-smoke": {"n_paths", "t", "x_points", "grid_nodes", "x_range", "grid_budget",
                          "potential", "initial"},
    "feynman-kac": {"model", "n_paths", "t", "T", "t_eval", "x", "grid_nodes", "x_range",
                    "quad_level", "kill", "initial", "source"},
    "dirichlet": {"n_paths", "x_points", "interval", "grid_nodes", "model", "kill", "xi", "eta"},
    "dynkin": {"model", "n_paths", "t", "x", "radius", "trend"},
    "pricing": {"market", "strike", "T", "n_paths", "grid_nodes", "grid_budget"},
    "averaging": {"model", "epsilons", "replicates", "n_samples", "T", "min_decreasing", "x"},
    "arcsine": {"model", "schedule", "n_paths", "ks_max"},
    "stieltjes": {"model", "eps", "T", "n_paths", "z", "rel_tol"},
    "l2-gap": {"sigma", "q", "epsilons", "times", "n_paths"},
}

EXPERIMENTS = {
    "feynman-kac-smoke": feynman_kac_smoke,
    "feynman-kac": feynman_kac,
    "dirichlet": dirichlet,
    "dynkin": dynkin,
    "pricing": pricing,
    "averaging": averaging,
    "arcsine": arcsine,
    "stieltjes": stieltjes,
    "l2-gap": l2_gap,
}


def check_keys(cfg, name):
    """Reject unknown top-level keys before any work starts."""
    allowed = _COMMON | EXPERIMENT_KEYS[name]
    extra = sorted(set(cfg.data) - allowed)
    if extra:
        raise ConfigurationError(f"unknown key config.{extra[0]}")
