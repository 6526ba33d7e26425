"""Finite-difference solver for the coupled 1-D integro-differential systems.

The operator on a uniform grid, per regime ``i``:

* diffusion ``a_i u''`` with ``a = sigma^2 / 2``, three-point stencil;
* drift ``b_i u'``, central differences;
* coupling ``sum_j q_ij(x) (u_j - u_i)``, exact;
* jumps by fixed quadrature over marks.  A displacement ``d = gamma(x, i, z)``
  with ``|d| >= dx`` contributes ``u(x + d) - u(x)`` (linear interpolation,
  extension rule off the grid) and ``-d`` to the drift; a smaller one is
  replaced by its Taylor term ``u'' d^2 / 2``, i.e. extra diffusivity.

Time stepping is IMEX: diffusion and killing implicit (Crank-Nicolson with
four backward-Euler half steps at the start), everything else explicit
(second-order Adams-Bashforth).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.linalg import solve_banded
from scipy.sparse.linalg import spsolve

from .errors import ConfigurationError, NumericalError, StabilityError
from .model import ScalarField

__all__ = [
    "Grid1D",
    "Extension",
    "PideSolution",
    "DiscreteOperator",
    "apply_discrete_generator",
    "solve_cauchy",
    "solve_dirichlet",
    "discretization_budget",
]


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_nodes: int
    m: int = 1

    def __post_init__(self):
        if self.n_nodes < 3 or not self.x_max > self.x_min:
            raise ConfigurationError("grid needs n_nodes >= 3 and x_min < x_max")

    @property
    def nodes(self):
        return np.linspace(self.x_min, self.x_max, self.n_nodes)

    @property
    def dx(self):
        return (self.x_max - self.x_min) / (self.n_nodes - 1)


@dataclass(frozen=True)
class Extension:
    """How ``u`` is continued beyond the grid.

    ``constant``: the nearest boundary value; ``linear``: extrapolation of the
    two outermost nodes; ``formula``: a callable ``fn(t, x, i)``, which also
    fixes the boundary nodes (Dirichlet).
    """

    kind: str = "constant"
    formula: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "linear", "formula"):
            raise ConfigurationError(f"unknown extension rule {self.kind!r}")
        if self.kind == "formula" and self.formula is None:
            raise ConfigurationError("formula extension needs a callable")

    @classmethod
    def of(cls, rule):
        if isinstance(rule, Extension):
            return rule
        if rule is None:
            return cls()
        if callable(rule):
            return cls("formula", rule)
        return cls(str(rule))

    @classmethod
    def from_field(cls, f):
        """Formula extension evaluating a :class:`ScalarField` (time ignored unless time-dependent)."""
        return cls("formula", lambda t, x, i: f.value(np.asarray(x, float)[:, None], np.full(len(x), i), t))

    def evaluate(self, t, x, i):
        return np.asarray(self.formula(t, np.asarray(x, dtype=float), i), dtype=float)


@dataclass
class PideSolution:
    """``values[k, i, j]`` is ``u(times[k], nodes[j], i)``."""

    grid: Grid1D
    times: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def level(self, t):
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigurationError(f"time {t} is not a stored level")
        return self.values[k]

    def value(self, t, x, regime):
        """Linear interpolation in x at a stored time level."""
        return float(np.interp(x, self.grid.nodes, self.level(t)[regime]))

    def to_csv(self, path):
        nodes = self.grid.nodes
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "regime", "u"])
            for k, t in enumerate(self.times):
                for i in range(self.values.shape[1]):
                    for xv, uv in zip(nodes, self.values[k, i]):
                        w.writerow([repr(float(t)), repr(float(xv)), i, repr(float(uv))])


def _field_values(fld, x, i, t=0.0):
    if fld is None:
        return np.zeros(len(x))
    if isinstance(fld, (int, float)):
        return np.full(len(x), float(fld))
    return fld.value(x[:, None], np.full(len(x), i), t)


class DiscreteOperator:
    """Precomputed stencils of the discrete generator on a grid."""

    def __init__(self, spec, grid, extension="constant", quad_level=1):
        if spec.n != 1:
            raise ConfigurationError("the PIDE solver is one-dimensional")
        self.spec, self.grid = spec, grid
        self.ext = Extension.of(extension)
        m, N, dx = spec.m, grid.n_nodes, grid.dx
        x = grid.nodes
        self.x = x
        xs = x[:, None]
        self.a = np.empty((m, N))
        self.b = np.empty((m, N))
        self.jump = []
        self.jump_rate = np.zeros(m)
        self.ext_terms = []  # per regime: (rows, weights, targets) evaluated with the formula
        for i in range(m):
            ii = np.full(N, i)
            s = np.asarray(spec.diffusion(xs, ii), dtype=float).reshape(N)
            self.a[i] = 0.5 * s**2
            self.b[i] = np.asarray(spec.drift(xs, ii), dtype=float).reshape(N)
        self.q = np.asarray(spec.generator_q(xs), dtype=float)  # (N, m, m)
        if spec.has_jumps:
            z, w = spec.levy.nodes(0.0, math.inf, quad_level)
            K = len(w)
            for i in range(m):
                xr = np.repeat(xs, K, axis=0)
                zr = np.tile(z, (N, 1))
                d = np.asarray(spec.jump_coeff(xr, np.full(N * K, i), zr), dtype=float).reshape(N, K)
                wk = np.broadcast_to(w, (N, K))
                small = np.abs(d) < dx
                self.a[i] += 0.5 * np.sum(np.where(small, wk * d**2, 0.0), axis=1)
                self.b[i] -= np.sum(np.where(small, 0.0, wk * d), axis=1)
                rows, cols = np.nonzero(~small)
                self.jump_rate[i] = float(np.max(np.sum(np.where(small, 0.0, wk), axis=1)))
                mat, ext = self._jump_matrix(rows, x[rows] + d[rows, cols], wk[rows, cols])
                self.jump.append(mat)
                self.ext_terms.append(ext)
        else:
            self.jump = [None] * m
            self.ext_terms = [None] * m

    # -- stencils -----------------------------------------------------------
    def _jump_matrix(self, rows, y, w):
        N, dx, x0 = self.grid.n_nodes, self.grid.dx, self.grid.x_min
        pos = (y - x0) / dx
        inside = (pos >= 0) & (pos <= N - 1)
        r_in, p_in, w_in = rows[inside], pos[inside], w[inside]
        j0 = np.minimum(np.floor(p_in).astype(int), N - 2)
        th = p_in - j0
        R = [r_in, r_in, rows]
        C = [j0, j0 + 1, rows]
        V = [w_in * (1 - th), w_in * th, -w]
        ext = None
        out = ~inside
        if out.any():
            r_o, p_o, w_o, y_o = rows[out], pos[out], w[out], y[out]
            kind = self.ext.kind
            if kind == "formula":
                ext = (r_o, w_o, y_o)
            elif kind == "constant":
                R.append(r_o)
                C.append(np.where(p_o < 0, 0, N - 1))
                V.append(w_o)
            else:
                left = p_o < 0
                # u(y) = u_e + s (u_e - u_in), s = distance beyond the edge in cells
                e = np.where(left, 0, N - 1)
                nxt = np.where(left, 1, N - 2)
                sdist = np.where(left, -p_o, p_o - (N - 1))
                R += [r_o, r_o]
                C += [e, nxt]
                V += [w_o * (1 + sdist), -w_o * sdist]
        mat = sparse.csr_matrix((np.concatenate(V), (np.concatenate(R), np.concatenate(C))),
                                shape=(N, N))
        return mat, ext

    def _ghosts(self, u, t, i):
        """Values at ``x_min - dx`` and ``x_max + dx``."""
        kind = self.ext.kind
        if kind == "constant":
            return u[0], u[-1]
        if kind == "linear":
            return 2 * u[0] - u[1], 2 * u[-1] - u[-2]
        g = self.ext.evaluate(t, np.array([self.grid.x_min - self.grid.dx,
                                           self.grid.x_max + self.grid.dx]), i)
        return g[0], g[1]

    def _padded(self, u, t, i):
        lo, hi = self._ghosts(u, t, i)
        return np.concatenate([[lo], u, [hi]])

    # -- pieces -------------------------------------------------------------
    def diffusion(self, U, t=0.0):
        dx2 = self.grid.dx**2
        out = np.empty_like(U)
        for i in range(self.spec.m):
            p = self._padded(U[i], t, i)
            out[i] = self.a[i] * (p[2:] - 2 * p[1:-1] + p[:-2]) / dx2
        return out

    def explicit(self, U, t=0.0):
        """Drift, coupling and jump parts."""
        dx = self.grid.dx
        out = np.empty_like(U)
        for i in range(self.spec.m):
            p = self._padded(U[i], t, i)
            v = self.b[i] * (p[2:] - p[:-2]) / (2 * dx)
            v = v + np.einsum("kj,jk->k", self.q[:, i, :], U) - self.q[:, i, :].sum(axis=1) * U[i]
            if self.jump[i] is not None:
                v = v + self.jump[i] @ U[i]
                ext = self.ext_terms[i]
                if ext is not None:
                    rows, w, y = ext
                    v = v + np.bincount(rows, w * self.ext.evaluate(t, y, i), minlength=len(v))
            out[i] = v
        return out

    def apply(self, U, t=0.0):
        return self.diffusion(U, t) + self.explicit(U, t)

    def stability_ratio(self, dt):
        rate = float(np.max(-np.einsum("kii->ki", self.q))) if self.spec.m > 1 else 0.0
        return dt * (float(np.max(np.abs(self.b))) / self.grid.dx
                     + float(np.max(self.jump_rate)) + rate)


def apply_discrete_generator(spec, grid, U, extension="constant", t=0.0, quad_level=1):
    """Discrete ``L u`` for node values ``U`` of shape ``(m, n_nodes)``."""
    U = np.asarray(U, dtype=float).reshape(spec.m, grid.n_nodes)
    return DiscreteOperator(spec, grid, extension, quad_level).apply(U, t)


def _tridiag_solve(diag, off, rhs, fixed):
    """Solve ``(I*diag + off-diagonals)`` with rows in ``fixed`` replaced by identity."""
    N = len(rhs)
    ab = np.zeros((3, N))
    ab[1] = diag
    ab[0, 1:] = off[1][:-1]
    ab[2, :-1] = off[0][1:]
    for r in fixed:
        ab[1, r] = 1.0
        if r + 1 < N:
            ab[0, r + 1] = 0.0
        if r - 1 >= 0:
            ab[2, r - 1] = 0.0
    try:
        x = solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"tridiagonal solve failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise NumericalError("tridiagonal solve produced non-finite values")
    return x


def solve_cauchy(spec, grid, c, data, T, n_steps=None, direction="forward", source=None,
                 extension="constant", quad_level=1, store_every=1, average_data=False):
    """March ``u_t = L u - c u`` from ``u(0) = data`` (forward) or
    ``u_t + L u - c u = source`` from ``u(T) = data`` down to ``t = 0`` (backward).

    ``c`` and ``source`` are scalar fields (possibly time-dependent, absolute
    time) or ``None``.  ``n_steps=None`` picks the smallest count meeting the
    explicit-part stability ratio 1 and ``n_steps >= T / dx``.
    ``average_data`` replaces the data by cell averages (Gauss-Legendre over
    each cell), which restores the convergence rate for kinked or
    discontinuous payoffs.
    """
    if direction not in ("forward", "backward"):
        raise ConfigurationError("direction is 'forward' or 'backward'")
    if not T > 0:
        raise ConfigurationError("T must be positive")
    op = DiscreteOperator(spec, grid, extension, quad_level)
    m, N, dx = spec.m, grid.n_nodes, grid.dx
    x = grid.nodes
    r1 = op.stability_ratio(T)
    if n_steps is None:
        n_steps = max(int(math.ceil(r1 / 0.9)), int(math.ceil(T / dx)), 8)
    dt = T / n_steps
    ratio = op.stability_ratio(dt)
    if ratio > 1.0:
        raise StabilityError(f"explicit step restriction violated with dt={dt:.4g}", ratio)

    backward = direction == "backward"
    to_t = (lambda tau: T - tau) if backward else (lambda tau: tau)
    fixed = [0, N - 1] if op.ext.kind == "formula" else []

    def kill(tau, i):
        return _field_values(c, x, i, to_t(tau))

    def src(tau, i):
        if source is None:
            return np.zeros(N)
        return -_field_values(source, x, i, to_t(tau)) if backward else _field_values(source, x, i, to_t(tau))

    def boundary(tau, i):
        return op.ext.evaluate(to_t(tau), np.array([x[0], x[-1]]), i)

    t_data = T if backward else 0.0
    if average_data:
        g, gw = np.polynomial.legendre.leggauss(6)
        U = sum(0.5 * wk * np.stack([_field_values(data, x + 0.5 * dx * gk, i, t_data) for i in range(m)])
                for gk, wk in zip(g, gw))
    else:
        U = np.stack([_field_values(data, x, i, t_data) for i in range(m)])
    if not np.all(np.isfinite(U)):
        raise NumericalError("initial data is not finite")

    dx2 = dx * dx
    off_base = [op.a / dx2, op.a / dx2]  # sub and super diagonals per regime

    def implicit_step(U, tau0, k, theta, E_term):
        """``(I - theta k A(tau1)) u1 = (I + (1-theta) k A(tau0)) u0 + k E_term + k S``."""
        tau1 = tau0 + k
        new = np.empty_like(U)
        AU0 = op.diffusion(U, to_t(tau0)) if theta < 1 else None
        for i in range(m):
            c1 = kill(tau1, i)
            rhs = U[i] + k * E_term[i]
            s1 = src(tau1, i)
            if theta < 1:
                c0 = kill(tau0, i)
                rhs = rhs + (1 - theta) * k * (AU0[i] - c0 * U[i])
                rhs = rhs + k * 0.5 * (src(tau0, i) + s1)
            else:
                rhs = rhs + k * s1
            diag = 1.0 + theta * k * (2 * op.a[i] / dx2 + c1)
            sub = -theta * k * off_base[0][i]
            sup = -theta * k * off_base[1][i]
            # fold ghost values into the boundary rows
            kind = op.ext.kind
            if kind == "constant":
                diag = diag.copy()
                diag[0] += sub[0]
                diag[-1] += sup[-1]
            elif kind == "linear":
                diag = diag.copy()
                diag[0] += 2 * sub[0]
                diag[-1] += 2 * sup[-1]
                sup = sup.copy()
                sub = sub.copy()
                sup[0] -= sub[0]
                sub[-1] -= sup[-1]
            if fixed:
                rhs = rhs.copy()
                rhs[[0, -1]] = boundary(tau1, i)
            new[i] = _tridiag_solve(diag, (sub, sup), rhs, fixed)
        return new

    times, levels = [to_t(0.0)], [U.copy()]
    tau = 0.0
    E_old = None
    for k in range(n_steps):
        E_now = op.explicit(U, to_t(tau))
        if k < 2:
            # Rannacher start: backward-Euler half steps damp kinks in the data
            U = implicit_step(U, tau, 0.5 * dt, 1.0, E_now)
            mid = tau + 0.5 * dt
            U = implicit_step(U, mid, 0.5 * dt, 1.0, op.explicit(U, to_t(mid)))
        else:
            U = implicit_step(U, tau, dt, 0.5, 1.5 * E_now - 0.5 * E_old)
        tau = (k + 1) * dt
        E_old = E_now
        if not np.all(np.isfinite(U)):
            raise NumericalError(f"non-finite values at step {k + 1}")
        if (k + 1) % store_every == 0 or k == n_steps - 1:
            times.append(to_t(tau))
            levels.append(U.copy())
    times = np.array(times)
    vals = np.array(levels)
    order = np.argsort(times)
    meta = {"direction": direction, "n_steps": n_steps, "dt": dt, "stability_ratio": ratio,
            "extension": op.ext.kind}
    return PideSolution(grid, times[order], vals[order], meta)


def solve_dirichlet(spec, grid, c, xi, eta, quad_level=1):
    """Stationary ``L u - c u = xi`` on ``(x_min, x_max)`` with ``u = eta`` outside.

    ``eta`` is a :class:`ScalarField`; boundary nodes and jump targets off
    the open interval take its values.  Returns a single-level solution.
    """
    ext = Extension.from_field(eta)
    op = DiscreteOperator(spec, grid, ext, quad_level)
    m, N, dx = spec.m, grid.n_nodes, grid.dx
    x = grid.nodes
    sig = np.stack([np.asarray(spec.diffusion(x[:, None], np.full(N, i)), float).reshape(N)
                    for i in range(m)])
    if not np.all(sig**2 > 0):
        raise ConfigurationError("diffusion must be uniformly elliptic on the closed domain")
    nI = N - 2
    interior = np.arange(1, N - 1)

    def gid(i, j):  # global unknown index for regime i, node j (interior)
        return i * nI + (j - 1)

    rows, cols, vals = [], [], []
    rhs = np.zeros(m * nI)
    bvals = np.stack([ext.evaluate(0.0, x[[0, -1]], i) for i in range(m)])

    def put(i, r_nodes, c_nodes, v, c_regime=None):
        """Add entries; contributions from boundary nodes move to the rhs."""
        cr = i if c_regime is None else c_regime
        r_nodes, c_nodes, v = map(np.asarray, (r_nodes, c_nodes, v))
        is_b = (c_nodes == 0) | (c_nodes == N - 1)
        keep = ~is_b & (r_nodes >= 1) & (r_nodes <= N - 2)
        rows.append(gid(i, r_nodes[keep]))
        cols.append(gid(cr, c_nodes[keep]))
        vals.append(v[keep])
        bsel = is_b & (r_nodes >= 1) & (r_nodes <= N - 2)
        if bsel.any():
            bv = np.where(c_nodes[bsel] == 0, bvals[cr, 0], bvals[cr, 1])
            np.add.at(rhs, gid(i, r_nodes[bsel]), -v[bsel] * bv)

    for i in range(m):
        a, b = op.a[i, interior], op.b[i, interior]
        ck = _field_values(c, x, i)[interior]
        put(i, interior, interior - 1, a / dx**2 - b / (2 * dx))
        put(i, interior, interior + 1, a / dx**2 + b / (2 * dx))
        qrow = op.q[interior, i, :]
        put(i, interior, interior, -2 * a / dx**2 - ck - qrow.sum(axis=1) + qrow[:, i])
        for j in range(m):
            if j != i:
                put(i, interior, interior, qrow[:, j], c_regime=j)
        if op.jump[i] is not None:
            J = op.jump[i].tocoo()
            put(i, J.row, J.col, J.data)
            ext_t = op.ext_terms[i]
            if ext_t is not None:
                r, w, y = ext_t
                sel = (r >= 1) & (r <= N - 2)
                np.add.at(rhs, gid(i, r[sel]), -w[sel] * ext.evaluate(0.0, y[sel], i))
        rhs[gid(i, interior)] += _field_values(xi, x, i)[interior]
    A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(m * nI, m * nI))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        try:
            sol = spsolve(A.tocsc(), rhs)
        except Exception as exc:  # MatrixRankWarning or LinAlgError
            raise NumericalError(f"singular Dirichlet system: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise NumericalError("singular Dirichlet system")
    U = np.empty((m, N))
    for i in range(m):
        U[i, 1:-1] = sol[i * nI:(i + 1) * nI]
        U[i, [0, -1]] = bvals[i]
    return PideSolution(grid, np.array([0.0]), U[None], {"kind": "dirichlet"})


def discretization_budget(fine, coarse, t, x, regime):
    """``2 |u_fine - u_coarse|`` at one point: the reported grid budget."""
    return 2.0 * abs(fine.value(t, x, regime) - coarse.value(t, x, regime))
