"""Experiment configuration: one JSON document with a schema version.

Minimal example::

    {
      "schema_version": 1,
      "objectives": {"quad": {"kind": "quadratic", "spectrum": [1, 2, 5, 10]}},
      "systems": [{"name": "nag6", "kind": "nag", "r": "6", "objective": "quad"}],
      "t0": 0.1,
      "gamma_cap": 40
    }

Parameters consumed exactly (``r``, ``alpha``, ``mu``, grid exponents,
mutation scales) accept rational strings such as ``"2/3"``.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import dynamics, objectives
from .errors import ConfigError
from .powersum import as_fraction

SCHEMA_VERSION = 1
DEFAULT_TOL = (1e-10, 1e-24)
TOP_KEYS = {"schema_version", "objectives", "systems", "t0", "t_end", "gamma_cap",
            "tolerances", "samples", "lyapunov", "symsearch", "fit", "seed", "output"}


@dataclass(frozen=True)
class Run:
    """One (system, initial state, span) cell of an experiment."""

    name: str
    system: dynamics.SystemSpec
    x0: np.ndarray
    v0: np.ndarray
    t0: float
    t_end: float | None
    gamma_cap: float | None


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    runs: list
    tol: tuple
    samples: int
    lyapunov: dict
    symsearch: dict
    fit: dict
    seed: int
    output: str | None = None
    objectives: dict = field(default_factory=dict)


def _q(value, name):
    try:
        return as_fraction(value)
    except (TypeError, ValueError, ZeroDivisionError):
        raise ConfigError(f"expected a rational number, got {value!r}", name) from None


def _num(value, name, positive=False):
    try:
        x = float(_q(value, name)) if isinstance(value, str) else float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {value!r}", name) from None
    if not math.isfinite(x):
        raise ConfigError("must be finite", name)
    if positive and x <= 0:
        raise ConfigError(f"must be positive, got {x}", name)
    return x


def _vec(value, n, name):
    try:
        a = np.asarray([_num(v, name) for v in value], dtype=float)
    except TypeError:
        raise ConfigError("expected a list of numbers", name) from None
    if a.shape != (n,):
        raise ConfigError(f"expected {n} entries, got {a.size}", name)
    return a


def _objective(name, spec, seed):
    where = f"objectives.{name}"
    kind = spec.get("kind")
    try:
        if kind == "quadratic":
            spectrum = spec.get("spectrum")
            if not spectrum:
                raise ConfigError("spectrum is required", where + ".spectrum")
            d = [_num(v, where + ".spectrum", positive=True) for v in spectrum]
            xs = spec.get("x_star")
            xs = None if xs is None else _vec(xs, len(d), where + ".x_star")
            obj = objectives.quadratic(d, xs, _num(spec.get("f_star", 0.0), where + ".f_star"),
                                       name=name)
        elif kind == "regularized-logsumexp":
            dim = spec.get("dimension")
            if not isinstance(dim, int) or dim < 1:
                raise ConfigError("dimension must be a positive integer", where + ".dimension")
            obj = objectives.regularized_logsumexp(
                dim, mu=_num(spec.get("mu", 1.0), where + ".mu", positive=True),
                n_terms=spec.get("n_terms"), seed=int(spec.get("seed", seed)), name=name)
        else:
            raise ConfigError(f"unknown objective kind {kind!r}", where + ".kind")
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), where) from None
    return obj


def _system(i, spec, objs):
    where = f"systems[{i}]"
    if not isinstance(spec, dict):
        raise ConfigError("expected an object", where)
    kind = spec.get("kind")
    if kind not in dynamics.KINDS:
        raise ConfigError(f"unknown system kind {kind!r}", where + ".kind")
    oname = spec.get("objective")
    if oname not in objs:
        raise ConfigError(f"unknown objective {oname!r}", where + ".objective")
    obj = objs[oname]
    r = _q(spec.get("r", 0), where + ".r")
    alpha = spec.get("alpha")
    if kind in ("nag", "generalized-nag") and r <= 0:
        raise ConfigError(f"r must be positive, got {r}", where + ".r")
    if kind == "generalized-nag":
        if alpha is None:
            raise ConfigError("alpha is required for generalized-nag", where + ".alpha")
        alpha = _q(alpha, where + ".alpha")
        if not 0 < alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {alpha}", where + ".alpha")
    elif alpha is not None:
        raise ConfigError(f"alpha is only meaningful for generalized-nag", where + ".alpha")
    name = spec.get("name") or f"{kind}-{i}"
    return dynamics.SystemSpec(kind, obj, r=r, alpha=alpha, name=str(name))


def _span(spec, where, default_t0, default_end, default_cap):
    t0 = _num(spec.get("t0", default_t0), where + ".t0", positive=True)
    t_end = spec.get("t_end", default_end)
    cap = spec.get("gamma_cap", default_cap)
    if "t_end" in spec or "gamma_cap" in spec:
        # a per-run setting overrides both global ones
        t_end, cap = spec.get("t_end"), spec.get("gamma_cap")
    if t_end is not None and cap is not None:
        raise ConfigError("set either t_end or gamma_cap, not both", where)
    if t_end is None and cap is None:
        raise ConfigError("one of t_end or gamma_cap is required", where)
    if t_end is not None:
        t_end = _num(t_end, where + ".t_end", positive=True)
        if not t_end > t0:
            raise ConfigError(f"t_end must exceed t0 ({t_end} <= {t0})", where + ".t_end")
    if cap is not None:
        cap = _num(cap, where + ".gamma_cap", positive=True)
    return t0, t_end, cap


def parse(raw: dict, seed=None) -> ExperimentConfig:
    """Validate a decoded configuration; errors name the offending field."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    raw = copy.deepcopy(raw)
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {version!r}", "schema_version")
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", sorted(unknown)[0])
    seed = int(raw.get("seed", 0) if seed is None else seed)
    objs = {name: _objective(name, spec, seed) for name, spec in sorted(raw.get("objectives", {}).items())}
    default_t0 = raw.get("t0", 0.1)
    runs = []
    names = set()
    for i, s in enumerate(raw.get("systems", [])):
        sys = _system(i, s, objs)
        where = f"systems[{i}]"
        if sys.name in names:
            raise ConfigError(f"duplicate system name {sys.name!r}", where + ".name")
        names.add(sys.name)
        t0, t_end, cap = _span(s, where, default_t0, raw.get("t_end"), raw.get("gamma_cap"))
        if cap is not None and sys.kind in ("gradient-flow", "undamped"):
            raise ConfigError("gamma_cap needs a damped second-order system; use t_end", where)
        n = sys.objective.dimension
        if "x0" in s:
            x0 = _vec(s["x0"], n, where + ".x0")
        else:
            x0 = sys.objective.x_star + _num(s.get("x0_offset", 1.0), where + ".x0_offset")
        v0 = _vec(s["v0"], n, where + ".v0") if "v0" in s else np.zeros(n)
        runs.append(Run(sys.name, sys, x0, v0, t0, t_end, cap))
    tol = raw.get("tolerances", {})
    rtol = _num(tol.get("rtol", DEFAULT_TOL[0]), "tolerances.rtol", positive=True)
    atol = _num(tol.get("atol", DEFAULT_TOL[1]), "tolerances.atol", positive=True)
    samples = raw.get("samples", 2000)
    if not isinstance(samples, int) or samples < 2:
        raise ConfigError("samples must be an integer >= 2", "samples")

    ly = dict(raw.get("lyapunov", {}))
    select = ly.get("select", "paper")
    if select not in ("paper", "discovered"):
        raise ConfigError(f"unknown selection {select!r}", "lyapunov.select")
    ly["select"] = select
    ly["index"] = int(ly.get("index", 0))
    ly["g_scale"] = _q(ly.get("g_scale", 1), "lyapunov.g_scale")
    ly["gamma_prime_scale"] = _q(ly.get("gamma_prime_scale", 1), "lyapunov.gamma_prime_scale")
    if ly.get("monotone_tol") is not None:
        ly["monotone_tol"] = _num(ly["monotone_tol"], "lyapunov.monotone_tol", positive=True)

    ss = dict(raw.get("symsearch", {}))
    ss["grid"] = [_q(p, "symsearch.grid") for p in ss.get("grid", ["-2", "-1", "0"])]
    ss["max_terms"] = int(ss.get("max_terms", 2))
    if ss["max_terms"] < 1:
        raise ConfigError("max_terms must be at least 1", "symsearch.max_terms")
    if ss.get("relax_scales") is not None:
        ss["relax_scales"] = [_q(x, "symsearch.relax_scales") for x in ss["relax_scales"]]
    cases = []
    for j, c in enumerate(ss.get("cases", [])):
        where = f"symsearch.cases[{j}]"
        r = _q(c.get("r"), where + ".r")
        if r <= 0:
            raise ConfigError("r must be positive", where + ".r")
        a = c.get("alpha")
        a = None if a is None else _q(a, where + ".alpha")
        if a is not None and not 0 < a < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {a}", where + ".alpha")
        mu = _q(c.get("mu", 1), where + ".mu")
        if mu <= 0:
            raise ConfigError("mu must be positive", where + ".mu")
        cases.append({"r": r, "alpha": a, "mu": mu})
    ss["cases"] = cases
    if ss.get("r_values") is not None:
        ss["r_values"] = [_q(x, "symsearch.r_values") for x in ss["r_values"]]
        if ss.get("alpha") is not None:
            ss["alpha"] = _q(ss["alpha"], "symsearch.alpha")
        ss["mu"] = _q(ss.get("mu", 1), "symsearch.mu")

    fit = dict(raw.get("fit", {}))
    model = fit.get("model", "auto")
    if model not in ("auto", "power-law", "stretched-exponential"):
        raise ConfigError(f"unknown model {model!r}", "fit.model")
    fit["model"] = model
    fit["eps"] = _q(fit.get("eps", "1/100"), "fit.eps")
    if fit.get("window") is not None:
        w = fit["window"]
        if not isinstance(w, (list, tuple)) or len(w) != 2:
            raise ConfigError("window must be [t_lo, t_hi]", "fit.window")
        fit["window"] = (_num(w[0], "fit.window"), _num(w[1], "fit.window"))
    return ExperimentConfig(raw, runs, (rtol, atol), samples, ly, ss, fit, seed,
                            raw.get("output"), objs)


def load(path, seed=None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"no such file {path}", "--config") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", "--config") from None
    return parse(raw, seed)


def exact_str(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"
