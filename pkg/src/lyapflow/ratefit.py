"""Empirical decay rates of the objective gap and comparison with known rates.

Two models are fitted by least squares:

* ``power-law``: ``log(f - f*)`` against ``log t`` (slope ``-2r/3`` expected
  for the ``r/t`` damping);
* ``stretched-exponential``: ``log(f - f*)`` against ``t^(1 - alpha)`` (slope
  ``-(2/3) r / (1 - alpha)``), which with ``alpha = 0`` also covers plain
  exponential decay.

The gap oscillates under light damping, so the regression runs on its
running-maximum envelope taken from the right, which is what an ``O(.)``
bound actually constrains.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .certs import CertReport
from .errors import InputError
from .powersum import Weight, as_fraction

MODELS = ("power-law", "stretched-exponential")
MIN_SAMPLES = 20


@dataclass(frozen=True)
class RateFit:
    model: str
    slope: float
    intercept: float
    window: tuple
    residual: float
    n_samples: int
    alpha: float = 0.0

    def to_json(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def envelope(gap) -> np.ndarray:
    """Running maximum from the right: ``env[i] = max(gap[i:])``."""
    gap = np.asarray(gap, dtype=float)
    return np.maximum.accumulate(gap[::-1])[::-1]


def _transform(model, t, alpha):
    if model == "power-law":
        return np.log(t)
    if model == "stretched-exponential":
        return t ** (1.0 - alpha)
    raise InputError(f"unknown model {model!r}")


def fit_samples(t, gap, model="power-law", window=None, alpha=0.0, floor=1e-13,
                use_envelope=True) -> RateFit:
    """Fit a rate model to ``(t, f - f*)`` samples.

    Samples outside ``window`` or below ``floor`` times the first gap in the
    window are dropped; fewer than 20 usable samples is an input error.
    """
    t = np.asarray(t, dtype=float)
    gap = np.asarray(gap, dtype=float)
    if t.shape != gap.shape:
        raise InputError("t and gap must have the same shape")
    lo, hi = (t.min(), t.max()) if window is None else (float(window[0]), float(window[1]))
    m = (t >= lo) & (t <= hi)
    t, gap = t[m], gap[m]
    if use_envelope:
        gap = envelope(gap)
    if gap.size:
        ok = gap > floor * gap[0]
        t, gap = t[ok], gap[ok]
    if t.size < MIN_SAMPLES:
        raise InputError(f"only {t.size} usable samples in window [{lo:g}, {hi:g}], need {MIN_SAMPLES}")
    X = _transform(model, t, alpha)
    Y = np.log(gap)
    A = np.column_stack((X, np.ones_like(X)))
    (slope, intercept), *_ = np.linalg.lstsq(A, Y, rcond=None)
    res = Y - (slope * X + intercept)
    return RateFit(model, float(slope), float(intercept), (float(t[0]), float(t[-1])),
                   float(np.sqrt(np.mean(res ** 2))), int(t.size), float(alpha))


def fit(traj, model="power-law", window=None, T=None, **kw) -> RateFit:
    """Fit a trajectory's gap; the window is clipped to start at ``T`` if given."""
    gap = traj.gap()
    alpha = float(traj.system.alpha) if traj.system.alpha is not None else 0.0
    if model == "stretched-exponential" and traj.system.kind == "gradient-flow":
        alpha = 0.0
    if window is None:
        window = default_window(traj, T=T)
    elif T is not None:
        window = (max(window[0], T), window[1])
    return fit_samples(traj.t, gap, model, window, alpha=kw.pop("alpha", alpha), **kw)


def default_window(traj, T=None, gamma=None, gamma_cap=40.0):
    """Last decade of time before ``gamma`` reaches the cap (or the run ends)."""
    t_hi = float(traj.t_end)
    if gamma is not None:
        ts = traj.t
        over = ts[np.asarray(gamma(ts)) > gamma_cap]
        if over.size:
            t_hi = float(over[0])
    t_lo = t_hi / 10
    if T is not None:
        t_lo = max(t_lo, T)
    return (max(t_lo, float(traj.t0)), t_hi)


def check_weighted_boundedness(traj, gamma: Weight, log_bound=None, T=None,
                               n_windows=5, growth_tol=0.05, tol=1e-6) -> CertReport:
    """Is ``e^gamma (f - f*)`` bounded on ``[T, t_end]``?

    The sup of ``log(f - f*) + gamma`` is taken over windows ``[T, t_k]`` with
    ``t_k`` log-spaced up to ``t_end``.  A bounded quantity stops growing, so
    the check fails when the sup over the last window exceeds that over the
    previous one by more than ``growth_tol`` (log units).  With
    ``log_bound`` (e.g. ``log E(T)`` plus the remainder constant) the sup must
    also stay below it.
    """
    t0 = traj.t0 if T is None else max(T, traj.t0)
    m = traj.t >= t0
    t = traj.t[m]
    if t.size < 2:
        raise InputError("not enough samples after T")
    gap = traj.gap()[m]
    with np.errstate(divide="ignore"):
        w = np.log(gap) + gamma(t)
    ends = np.geomspace(t[0] * (t[-1] / t[0]) ** (1 / n_windows), t[-1], n_windows)
    sups = np.array([w[t <= e].max() for e in ends])
    growth = np.diff(sups)
    viol = growth[-1] - growth_tol
    note = "window sups " + ", ".join(f"{s:.4g}" for s in sups)
    rep = CertReport("weighted-boundedness", int(t.size), float(viol), float(ends[-1]),
                     0.0, bool(viol <= 0), note)
    if log_bound is not None:
        lb = np.broadcast_to(np.asarray(log_bound, dtype=float), w.shape)
        b = CertReport.from_violations("weighted-boundedness", t, w - lb, tol)
        if not b.passed or b.max_violation > rep.max_violation:
            rep = CertReport("weighted-boundedness", int(t.size), b.max_violation,
                             b.violation_location, tol, b.passed and rep.passed,
                             note + f"; bound slack {b.max_violation:.3e}")
    return rep


@dataclass(frozen=True)
class Comparison:
    system: str
    r: Fraction
    alpha: Fraction | None
    eps: Fraction | None
    rates: dict          # name -> exact exponent
    flags: dict          # name -> bool

    def to_json(self) -> dict:
        def q(x):
            return None if x is None else [x.numerator, x.denominator]
        return {
            "system": self.system,
            "r": q(self.r),
            "alpha": q(self.alpha),
            "eps": q(self.eps),
            "rates": {k: {"exact": q(v), "value": float(v)} for k, v in self.rates.items()},
            "flags": dict(self.flags),
        }

    def rows(self):
        for k, v in self.rates.items():
            yield {"system": self.system, "rate": k, "exponent": str(v), "value": float(v)}


def compare_rates(r, alpha=None, eps=Fraction(1, 100)) -> Comparison:
    """Exponents of the proven rate and of the earlier rates it improves on.

    ``r/t`` damping: ``2r/3`` against ``(r+1)/2``.  ``r t^-alpha`` damping:
    ``(2/3) r/(1-alpha)`` against ``(2/3 - eps) r/(1-alpha)`` and
    ``(1/2) r/(1-alpha)``.  Everything is exact.
    """
    r = as_fraction(r)
    if r <= 0:
        raise InputError("r must be positive")
    if alpha is None:
        new, old = 2 * r / 3, (r + 1) / 2
        return Comparison("nag", r, None, None,
                          {"lyapunov": new, "previous": old},
                          {"improves_previous": new > old, "equal_previous": new == old})
    a, e = as_fraction(alpha), as_fraction(eps)
    if not 0 < a < 1:
        raise InputError("alpha must lie in (0, 1)")
    if e <= 0:
        raise InputError("eps must be positive")
    k = r / (1 - a)
    new, eps_rate, half = Fraction(2, 3) * k, (Fraction(2, 3) - e) * k, k / 2
    return Comparison("generalized-nag", r, a, e,
                      {"lyapunov": new, "previous_eps": eps_rate, "previous_half": half},
                      {"improves_previous_eps": new > eps_rate,
                       "improves_previous_half": new > half,
                       "eps_beats_half": eps_rate > half})


def write_fit(fit_: RateFit, comparison: Comparison | None, json_path, csv_path=None):
    payload = {"fit": fit_.to_json()}
    if comparison is not None:
        payload["comparison"] = comparison.to_json()
    with open(json_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if csv_path is not None and comparison is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["system", "rate", "exponent", "value"])
            w.writeheader()
            for row in comparison.rows():
                w.writerow(row)
