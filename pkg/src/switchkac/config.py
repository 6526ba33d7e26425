"""Strict TOML experiment configuration and the name registries it refers to."""

from __future__ import annotations

import hashlib
import inspect
import math

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigurationError
from .levy import CompoundPoisson, StableLike, Tabulated
from .model import COEFFICIENT_FAMILIES, GENERATOR_FAMILIES, JUMP_FAMILIES, ModelSpec, ScalarField

__all__ = [
    "load_config",
    "Table",
    "build_model",
    "build_field",
    "build_levy",
    "build_coefficient",
    "FIELD_REGISTRY",
    "LEVY_REGISTRY",
]


def _bump(x, radius=1.0, amplitude=1.0):
    u = np.asarray(x, dtype=float) / radius
    r = np.clip(1.0 - u**2, 1e-300, None)
    return amplitude * np.where(np.abs(u) < 1, np.exp(1.0 - 1.0 / r), 0.0)


FIELD_REGISTRY = {
    "zero": lambda x: np.zeros_like(x),
    "constant": lambda x, value=1.0: np.full_like(x, float(value)),
    "kac_potential": lambda x, cap=4.0: np.minimum(x**2, cap),
    "cos": lambda x, freq=1.0: np.cos(freq * x),
    "gaussian": lambda x, scale=1.0, amplitude=1.0: amplitude * np.exp(-0.5 * (x / scale) ** 2),
    "lorentzian": lambda x, scale=1.0: 1.0 / (1.0 + (x / scale) ** 2),
    "bump": _bump,
    "indicator_positive": lambda x: (x > 0).astype(float),
}

LEVY_REGISTRY = {
    "stable_like": StableLike,
    "compound_poisson": CompoundPoisson,
    "tabulated": Tabulated,
}


class Table:
    """A config table whose keys must all be consumed (strict parsing)."""

    def __init__(self, data, where="config"):
        if not isinstance(data, dict):
            raise ConfigurationError(f"{where} must be a table")
        self.data = dict(data)
        self.where = where
        self.used = set()

    def get(self, key, default=None):
        self.used.add(key)
        return self.data.get(key, default)

    def require(self, key):
        if key not in self.data:
            raise ConfigurationError(f"missing key {self.where}.{key}")
        return self.get(key)

    def sub(self, key, required=False):
        if key not in self.data:
            if required:
                raise ConfigurationError(f"missing table {self.where}.{key}")
            self.used.add(key)
            return None
        return Table(self.get(key), f"{self.where}.{key}")

    def finish(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ConfigurationError(f"unknown key {self.where}.{extra[0]}")


def load_config(path):
    """Parse a TOML file; returns ``(Table, sha256 of the bytes)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
    return Table(data), hashlib.sha256(raw).hexdigest()


def _call(registry, spec, kind, where):
    """Resolve ``"name"`` or ``{family = "name", ...}`` -> ``(name, factory, kwargs)``."""
    if isinstance(spec, str):
        name, kwargs = spec, {}
    elif isinstance(spec, dict):
        kwargs = dict(spec)
        name = kwargs.pop("family", None) or kwargs.pop("name", None)
        if name is None:
            raise ConfigurationError(f"{where} needs a family name")
    else:
        raise ConfigurationError(f"{where} must be a name or a table")
    if name not in registry:
        raise ConfigurationError(
            f"unknown {kind} {name!r} at {where}; valid: {', '.join(sorted(registry))}")
    return name, registry[name], kwargs


def _checked(fn, kwargs, where, **extra):
    try:
        sig = inspect.signature(fn)
    except (TypeError, ValueError):
        sig = None
    if sig is not None and not any(p.kind == p.VAR_KEYWORD for p in sig.parameters.values()):
        for k in kwargs:
            if k not in sig.parameters:
                raise ConfigurationError(f"unknown key {where}.{k}")
    try:
        return fn(**kwargs, **extra)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters at {where}: {exc}") from exc


def build_field(spec, m, where="field"):
    """A :class:`ScalarField` from one spec (shared) or a list of per-regime specs."""
    if spec is None:
        return None
    specs = list(spec) if isinstance(spec, list) else [spec] * m
    if len(specs) != m:
        raise ConfigurationError(f"{where} needs {m} per-regime entries")
    fns = []
    for k, s in enumerate(specs):
        _, fn, kwargs = _call(FIELD_REGISTRY, s, "field", f"{where}[{k}]")
        params = inspect.signature(fn).parameters
        for key in kwargs:
            if key not in params or key == "x":
                raise ConfigurationError(f"unknown key {where}[{k}].{key}")
        fns.append(lambda x, fn=fn, kw=kwargs: fn(np.asarray(x, dtype=float), **kw))
    return ScalarField.per_regime(fns)


def build_levy(spec, where="model.levy"):
    name, cls, kwargs = _call(LEVY_REGISTRY, spec, "levy measure", where)
    if name == "compound_poisson":
        allowed = {"rate", "values", "probs", "mean", "std"}
        bad = sorted(set(kwargs) - allowed)
        if bad:
            raise ConfigurationError(f"unknown key {where}.{bad[0]}")
        try:
            return CompoundPoisson(**kwargs)
        except TypeError as exc:
            raise ConfigurationError(f"bad parameters at {where}: {exc}") from exc
    if "outer" in kwargs and kwargs["outer"] == "inf":
        kwargs["outer"] = math.inf
    return _checked(cls, kwargs, where)


def build_coefficient(spec, kind, n=1, where="coefficient"):
    """Drift or diffusion function from ``{family = ..., ...}``."""
    _, fam, kwargs = _call(COEFFICIENT_FAMILIES, spec, "coefficient family", where)
    return _checked(fam, kwargs, where, kind=kind, n=n)


def build_model(tbl):
    """A 1-D :class:`ModelSpec` from a ``[model]`` table."""
    m = int(tbl.require("regimes"))
    n = int(tbl.get("dimension", 1))

    drift = build_coefficient(tbl.require("drift"), "drift", n, f"{tbl.where}.drift")
    diffusion = build_coefficient(tbl.require("diffusion"), "diffusion", n, f"{tbl.where}.diffusion")
    gspec = tbl.require("generator")
    gname, gfam, gkw = _call(GENERATOR_FAMILIES, gspec, "generator family", f"{tbl.where}.generator")
    generator = _checked(gfam, gkw, f"{tbl.where}.generator")
    q_bound = tbl.get("q_bound")
    if q_bound is None:
        if gname != "constant":
            raise ConfigurationError(f"{tbl.where}.q_bound is required for state-dependent generators")
        q = np.asarray(gkw["matrix"], dtype=float)
        q_bound = float(np.max(-np.diag(q))) if m > 1 else 0.0
    jump = levy = None
    jspec, lspec = tbl.get("jump"), tbl.get("levy")
    if (jspec is None) != (lspec is None):
        raise ConfigurationError(f"{tbl.where}: jump and levy must be given together")
    if jspec is not None:
        _, jfam, jkw = _call(JUMP_FAMILIES, jspec, "jump family", f"{tbl.where}.jump")
        jump = _checked(jfam, jkw, f"{tbl.where}.jump")
        levy = build_levy(lspec, f"{tbl.where}.levy")
    name = tbl.get("name", "model")
    tbl.finish()
    return ModelSpec(n=n, m=m, drift=drift, diffusion=diffusion, generator_q=generator,
                     q_bound=float(q_bound), jump_coeff=jump, levy=levy, name=name)
