"""Lyapunov functions of the accelerated flows and sampled certification.

A :class:`LyapunovSpec` fixes power sums ``gamma'``, ``g`` and ``h`` in

    E(t) = e^gamma(t) [ f - f* - g(t) |x - x*|^2 ] + 1/2 e^gamma(t) |v + h(t) (x - x*)|^2
         = e^gamma (main_part + velocity_part)

with ``gamma`` the antiderivative of ``gamma'`` taken with zero constant (so
``gamma = (2r/3) log t`` for ``d = r/t``).  Weights reach ``e^40`` and beyond,
so every certified inequality is compared on logarithms.

Certifications work on the samples of a :class:`~lyapflow.integrator.Trajectory`
at times ``t >= T`` and use the dense output to evaluate the state exactly
at ``T``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy import integrate as spi

from . import objectives
from .certs import CertReport
from .collection import DerivativeCollection, derive_collection
from .dynamics import SystemSpec
from .errors import InputError
from .integrator import Trajectory, resample
from .powersum import PowerSum, Radical, Weight, as_fraction

PROVENANCES = ("paper-nag", "paper-alpha", "discovered", "custom")


@dataclass(frozen=True, eq=False)
class LyapunovSpec:
    """Coefficient power sums of one Lyapunov function.

    ``threshold`` is the exact ``T`` after which ``E`` is non-increasing, or
    None when unknown.  ``T_sharp`` optionally records the exact root of the
    merged ``|x - x*|^2`` coefficient (discovered specs only).
    """

    gamma_prime: PowerSum
    g: PowerSum
    h: PowerSum
    provenance: str = "custom"
    threshold: Radical | None = None
    T_sharp: float | None = None
    label: str = ""

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise InputError(f"unknown provenance {self.provenance!r}")

    @property
    def gamma(self) -> Weight:
        return self.gamma_prime.antiderivative()

    @property
    def y_weight(self) -> Weight:
        """Exponent ``H`` with ``H' = h``; ``y = e^H (x - x*)``."""
        return self.h.antiderivative()

    def to_json(self) -> dict:
        out = {
            "provenance": self.provenance,
            "gamma_prime": self.gamma_prime.to_json(),
            "g": self.g.to_json(),
            "h": self.h.to_json(),
            "T": None if self.threshold is None else self.threshold.to_json(),
        }
        if self.T_sharp is not None:
            out["T_sharp"] = self.T_sharp
        if self.label:
            out["label"] = self.label
        return out

    @classmethod
    def from_json(cls, data) -> "LyapunovSpec":
        T = data.get("T")
        return cls(
            PowerSum.from_json(data["gamma_prime"]), PowerSum.from_json(data["g"]),
            PowerSum.from_json(data["h"]), data.get("provenance", "custom"),
            None if T is None else Radical.from_json(T), data.get("T_sharp"),
            data.get("label", ""),
        )

    def __eq__(self, other):
        if not isinstance(other, LyapunovSpec):
            return NotImplemented
        return (self.gamma_prime, self.g, self.h) == (other.gamma_prime, other.g, other.h)

    def __hash__(self):
        return hash((self.gamma_prime, self.g, self.h))


def _mu_fraction(mu) -> Fraction:
    return as_fraction(mu)


def paper_nag(r, mu=None) -> LyapunovSpec:
    """``gamma' = h = 2r/(3t)``, ``g = (r^2 - 3r)/(9t^2)``; ``T^2 = 2r^2/(9 mu)``."""
    r = as_fraction(r)
    w = PowerSum.monomial(2 * r / 3, -1)
    g = PowerSum.monomial((r * r - 3 * r) / 9, -2)
    T = None if mu is None else Radical(2 * r * r / (9 * _mu_fraction(mu)), 2)
    return LyapunovSpec(w, g, w, "paper-nag", T)


def paper_alpha(r, alpha, mu=None) -> LyapunovSpec:
    """``gamma' = h = (2r/3) t^-a``, ``g = (r^2/9) t^-2a - (r a/3) t^(-1-a)``."""
    r, a = as_fraction(r), as_fraction(alpha)
    w = PowerSum.monomial(2 * r / 3, -a)
    g = PowerSum([(r * r / 9, -2 * a), (-r * a / 3, -1 - a)])
    T = None if mu is None else Radical(2 * r * r / (9 * _mu_fraction(mu)), 2 * a)
    return LyapunovSpec(w, g, w, "paper-alpha", T)


def for_system(sys: SystemSpec) -> LyapunovSpec:
    """The closed-form function matching the damping of ``sys``."""
    if sys.kind == "nag":
        return paper_nag(sys.r, sys.objective.mu)
    if sys.kind == "generalized-nag":
        return paper_alpha(sys.r, sys.alpha, sys.objective.mu)
    raise InputError(f"no closed-form Lyapunov function for {sys.kind!r}")


def mutate(lyap: LyapunovSpec, g_scale=1, gamma_prime_scale=1) -> LyapunovSpec:
    """Scaled copy used to show the certifications are not vacuous.

    The threshold is kept, so the corrupted function is checked over the
    same window as the original.
    """
    gs, ws = as_fraction(g_scale), as_fraction(gamma_prime_scale)
    if gs == 1 and ws == 1:
        return lyap
    return replace(lyap, gamma_prime=lyap.gamma_prime * ws, g=lyap.g * gs,
                   provenance="custom", T_sharp=None,
                   label=f"mutated(g*{gs}, gamma'*{ws})")


def threshold_exact(lyap: LyapunovSpec, sys: SystemSpec) -> Radical:
    if lyap.provenance == "paper-nag":
        return paper_nag(sys.r, sys.objective.mu).threshold
    if lyap.provenance == "paper-alpha":
        return paper_alpha(sys.r, sys.alpha, sys.objective.mu).threshold
    if lyap.threshold is None:
        raise InputError("Lyapunov spec carries no threshold T")
    return lyap.threshold


def threshold_T(lyap: LyapunovSpec, sys: SystemSpec) -> float:
    """``T`` as a float (exact form via :func:`threshold_exact`)."""
    if sys.objective.mu <= 0:
        raise InputError("mu must be positive")
    return float(threshold_exact(lyap, sys))


# --- pointwise evaluation -------------------------------------------------

def _quantities(obj, dx, v):
    """The six basis quantities of :mod:`lyapflow.collection` per sample."""
    dx = np.atleast_2d(np.asarray(dx, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if obj.kind == "quadratic":
        gr = obj.spectrum * dx
        gap = 0.5 * np.einsum("ij,ij->i", dx, gr)
    else:
        gr = np.array([objectives.grad_dev(obj, e) for e in dx])
        gap = np.array([objectives.gap_dev(obj, e) for e in dx])
    return {
        "gap": gap,
        "grad_e": np.einsum("ij,ij->i", gr, dx),
        "grad_v": np.einsum("ij,ij->i", gr, v),
        "e_sq": np.einsum("ij,ij->i", dx, dx),
        "e_v": np.einsum("ij,ij->i", dx, v),
        "v_sq": np.einsum("ij,ij->i", v, v),
    }


class LogE(NamedTuple):
    """``logE = gamma + log|main + velocity|``; ``sign`` is that of the interior."""

    logE: np.ndarray
    main_part: np.ndarray
    velocity_part: np.ndarray
    sign: np.ndarray
    gamma: np.ndarray


def _parts(lyap, obj, t, dx, v):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    dx = np.atleast_2d(np.asarray(dx, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    q = _quantities(obj, dx, v)
    main = q["gap"] - lyap.g(t) * q["e_sq"]
    w = v + lyap.h(t)[:, None] * dx
    vel = 0.5 * np.einsum("ij,ij->i", w, w)
    return t, q, main, vel


def eval_logE(lyap: LyapunovSpec, sys: SystemSpec, t, dx, v) -> LogE:
    """Evaluate ``E`` in log form at deviation states ``dx = x - x*``.

    Works on a single state or on arrays of states.  A vanishing interior
    gives ``logE = -inf`` with ``sign = 0``; a negative one keeps the
    magnitude in ``logE`` and reports ``sign = -1``.
    """
    t, _, main, vel = _parts(lyap, sys.objective, t, dx, v)
    if np.any(t <= 0):
        raise InputError("E needs t > 0")
    interior = main + vel
    gamma = lyap.gamma(t)
    with np.errstate(divide="ignore"):
        logE = gamma + np.log(np.abs(interior))
    return LogE(logE, main, vel, np.sign(interior), np.asarray(gamma, dtype=float))


def eval_logE_state(lyap, sys, state) -> LogE:
    """:func:`eval_logE` for one :class:`~lyapflow.dynamics.State`."""
    dx = np.asarray(state.x, dtype=float) - sys.objective.x_star
    return eval_logE(lyap, sys, state.t, dx, state.v)


def collection_for(lyap: LyapunovSpec, sys: SystemSpec) -> DerivativeCollection:
    return derive_collection(lyap.gamma_prime, lyap.g, lyap.h, sys.damping_powersum())


def _closed_form_rate(lyap, sys, t, q):
    """``e^-gamma dE/dt`` from the closed-form displays of the two systems."""
    r = float(sys.r)
    a = 1.0 if lyap.provenance == "paper-nag" else float(sys.alpha)
    hh = (2 * r / 3) * t ** (-a)
    c_e = (2 * r ** 3 * t ** (-2 * a) - 9 * r * a * (1 + a) * t ** -2.0) / (27 * t ** a)
    # f* - f - <grad f, x* - x> = <grad f, e> - (f - f*)
    return -(hh * (q["grad_e"] - q["gap"]) - c_e * q["e_sq"])


class Rate(NamedTuple):
    """``dE/dt = sign * exp(log_magnitude)``; ``ratio`` is ``d log E / dt``."""

    sign: np.ndarray
    log_magnitude: np.ndarray
    ratio: np.ndarray


def analytic_dEdt(lyap: LyapunovSpec, sys: SystemSpec, t, dx, v) -> Rate:
    """``dE/dt`` at the given states, reported as sign and log-magnitude.

    The closed forms are used for the two shipped functions and the
    mechanically derived coefficient collection for everything else.
    """
    t, q, main, vel = _parts(lyap, sys.objective, t, dx, v)
    if np.any(t <= 0):
        raise InputError("dE/dt needs t > 0")
    if lyap.provenance in ("paper-nag", "paper-alpha") and sys.kind in ("nag", "generalized-nag"):
        core = _closed_form_rate(lyap, sys, t, q)
    else:
        core = collection_for(lyap, sys).evaluate(t, q)
    gamma = lyap.gamma(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        logmag = gamma + np.log(np.abs(core))
        ratio = core / (main + vel)
    return Rate(np.sign(core), logmag, ratio)


# --- certification --------------------------------------------------------

def _window(traj: Trajectory, lyap: LyapunovSpec):
    """Samples with ``t >= T`` plus the exact state at ``T``."""
    sys = traj.system
    T = threshold_T(lyap, sys)
    if T < traj.t0 or T > traj.t_end:
        raise InputError(f"trajectory span [{traj.t0:g}, {traj.t_end:g}] does not contain T = {T:.6g}")
    grid = np.union1d([T], traj.t[traj.t >= T])
    return T, resample(traj, grid)


def _log_ET(lyap, w):
    le = eval_logE(lyap, w.system, w.t[:1], w.dx[:1], w.v[:1])
    return float(le.logE[0]), int(le.sign[0])


def default_monotone_tol(logE_T: float) -> float:
    return max(1e-9, 1e-8 * abs(logE_T))


def certify_monotone(traj: Trajectory, lyap: LyapunovSpec, tol=None) -> CertReport:
    """``E`` non-increasing on ``[T, t_end]``.

    Two checks are combined: (a) the analytic ``d log E/dt`` at each sample
    and (b) the increments of ``log E`` between consecutive samples.  The
    reported violation is the worse of the two.
    """
    T, w = _window(traj, lyap)
    le = eval_logE(lyap, w.system, w.t, w.dx, w.v)
    rate = analytic_dEdt(lyap, w.system, w.t, w.dx, w.v)
    logET = float(le.logE[0])
    tol = default_monotone_tol(logET) if tol is None else float(tol)
    a = np.where(le.sign > 0, rate.ratio, np.where(rate.sign > 0, np.inf, 0.0))
    b = np.diff(le.logE)
    b = np.where(np.isnan(b), 0.0, b)  # both ends at E = 0
    ra = CertReport.from_violations("monotone", w.t, a, tol)
    rb = CertReport.from_violations("monotone", w.t[1:], b, tol)
    worst = ra if ra.max_violation >= rb.max_violation else rb
    note = (f"T={T:.10g}; max dlogE/dt={ra.max_violation:.3e} at t={ra.violation_location:.6g}; "
            f"max logE increment={rb.max_violation:.3e} at t={rb.violation_location:.6g}")
    return replace(worst, samples_checked=len(w), note=note,
                   passed=ra.passed and rb.passed)


def certify_main_nonneg(traj: Trajectory, lyap: LyapunovSpec, tol=1e-10, t_min=None) -> CertReport:
    """``f - f* - g |x - x*|^2 >= 0`` for ``t >= T``.

    The violation is ``-e^gamma main_part / E(T)``, i.e. the deficit relative
    to the size of the Lyapunov function.  With ``t_min < T`` the check also
    covers the earlier samples; that part lies outside the guarantee and the
    report is marked informational.
    """
    T = threshold_T(lyap, traj.system)
    informational = t_min is not None and t_min < T
    if informational:
        grid = np.union1d([T], traj.t[traj.t >= t_min])
        w = resample(traj, grid)
    else:
        T, w = _window(traj, lyap)
    le = eval_logE(lyap, w.system, w.t, w.dx, w.v)
    k = int(np.searchsorted(w.t, T))
    logET = float(le.logE[k])
    with np.errstate(over="ignore"):
        viol = -le.main_part * np.exp(le.gamma - logET)
    note = f"T={T:.10g}; relative to E(T)"
    rep = CertReport.from_violations("main-nonneg", w.t, viol, tol, note=note)
    if informational:
        rep = replace(rep, inequality_id="main-nonneg-informational",
                      note=note + f"; includes t < T (from {t_min:g}), outside the guarantee")
    return rep


def certify_velocity_bound(traj: Trajectory, lyap: LyapunovSpec, tol=1e-8) -> CertReport:
    """``gamma + log(1/2 |v + h e|^2) <= log E(T)`` for ``t >= T``."""
    T, w = _window(traj, lyap)
    le = eval_logE(lyap, w.system, w.t, w.dx, w.v)
    logET = float(le.logE[0])
    with np.errstate(divide="ignore"):
        viol = le.gamma + np.log(le.velocity_part) - logET
    return CertReport.from_violations("velocity-bound", w.t, viol, tol,
                                      note=f"T={T:.10g}; log E(T)={logET:.12g}")


@dataclass(frozen=True)
class RateBound:
    """Explicit bound ``f - f* <= E(T) e^-gamma + max(g, 0) (Y e^-H)^2``.

    ``Y(t)`` bounds ``|y(t)|`` for ``y = e^H (x - x*)``, anchored at ``T``:
    ``|y(t)| <= |y(T)| + int_T^t |y'|``.  ``terms`` holds the individual
    summands of the expanded second term (closed forms only), with
    ``anchor`` in place of ``|y(0)|``.
    """

    t: np.ndarray
    log_bound: np.ndarray
    log_Y: np.ndarray
    E_T: float
    y_T: float
    anchor: float
    terms: dict


def _log_y_bound(lyap, sys, T, t, E_T, y_T):
    """``log Y(t)`` and the constant anchor used in the closed forms."""
    s = np.sqrt(2 * E_T)
    r = float(sys.r)
    if lyap.provenance == "paper-nag" and lyap.h == lyap.gamma_prime:
        p = r / 3 + 1
        c = 3 * s / (r + 3)
        anchor = y_T - c * T ** p
        return np.log(anchor + c * t ** p), anchor, c
    if lyap.provenance == "paper-alpha" and lyap.h == lyap.gamma_prime:
        a = float(sys.alpha)
        kappa = r / (3 * (1 - a))
        c = 3 * s / r
        # int_T^t e^{kappa s^(1-a)} ds <= t^a (3/r) [e^{kappa t^(1-a)} - e^{kappa T^(1-a)}],
        # bounded above by dropping the t^a on the subtracted part to T^a
        anchor = y_T - c * T ** a * np.exp(kappa * T ** (1 - a))
        return np.log(anchor + c * t ** a * np.exp(kappa * t ** (1 - a))), anchor, c
    # generic: |y'| <= sqrt(2 E(T)) e^{H - gamma/2}
    H, G = lyap.y_weight, lyap.gamma

    def integrand(u):
        return np.exp(H(u) - 0.5 * G(u))

    acc = np.empty(len(t))
    total, prev = 0.0, T
    for i, ti in enumerate(t):
        if ti > prev:
            total += spi.quad(integrand, prev, ti, epsrel=1e-12, limit=200)[0]
            prev = ti
        acc[i] = total
    return np.log(y_T + s * acc * (1 + 1e-9)), y_T, s


def rate_bound(traj: Trajectory, lyap: LyapunovSpec) -> RateBound:
    """Evaluate the explicit bound on the samples with ``t >= T``."""
    T, w = _window(traj, lyap)
    sys = w.system
    le = eval_logE(lyap, sys, w.t[:1], w.dx[:1], w.v[:1])
    if le.sign[0] < 0:
        raise InputError("E(T) is negative; the bound is undefined")
    if le.sign[0] == 0:
        # at rest at the minimizer: everything after T is identically zero
        zero = np.full(w.t.size, -np.inf)
        return RateBound(w.t, zero, zero.copy(), 0.0, 0.0, 0.0, {})
    E_T = float(np.exp(le.logE[0]))
    H = lyap.y_weight
    y_T = float(np.exp(H(T)) * np.linalg.norm(w.dx[0]))
    t = w.t
    log_Y, anchor, c = _log_y_bound(lyap, sys, T, t, E_T, y_T)
    gamma = lyap.gamma(t)
    gt = lyap.g(t)
    with np.errstate(divide="ignore"):
        first = np.log(E_T) - gamma
        # a negative g only helps; dropping it keeps the bound valid
        second = np.log(np.maximum(gt, 0.0)) + 2 * (log_Y - H(t))
    log_bound = np.logaddexp(first, second)
    terms = {"E(T) exp(-gamma)": np.exp(first)}
    if lyap.provenance in ("paper-nag", "paper-alpha") and lyap.h == lyap.gamma_prime:
        # expand g (u + z)^2 with u the growing and z the anchored part of Y e^-gamma
        r = float(sys.r)
        z = anchor * np.exp(-gamma)
        if lyap.provenance == "paper-nag":
            u = c * t ** (r / 3 + 1) * np.exp(-gamma)
            pieces = {"": gt}
        else:
            a = float(sys.alpha)
            u = c * t ** a * np.exp(r / (3 * (1 - a)) * t ** (1 - a) - gamma)
            pieces = {"[t^-2a]": (r * r / 9) * t ** (-2 * a),
                      "[t^-1-a]": -(r * a / 3) * t ** (-1 - a)}
        for tag, gg in pieces.items():
            terms[f"g{tag} Y1^2"] = gg * u * u
            terms[f"g{tag} 2 Y1 Y0"] = gg * 2 * u * z
            terms[f"g{tag} Y0^2"] = gg * z * z
    return RateBound(t, log_bound, log_Y, E_T, y_T, anchor, terms)


def certify_rate_bound(traj: Trajectory, lyap: LyapunovSpec, tol=1e-6) -> CertReport:
    """``log(f - f*) <= log Bound(t)`` on ``[T, t_end]``; see :class:`RateBound`."""
    T, w = _window(traj, lyap)
    rb = rate_bound(traj, lyap)
    gap = _quantities(w.system.objective, w.dx, w.v)["gap"]
    with np.errstate(divide="ignore", invalid="ignore"):
        viol = np.where((gap == 0) & np.isneginf(rb.log_bound), 0.0, np.log(gap) - rb.log_bound)
    note = f"T={T:.10g}; anchored at T (|y(T)|={rb.y_T:.6g}, constant {rb.anchor:.6g})"
    return CertReport.from_violations("rate-bound", w.t, viol, tol, note=note)


def _five_point(fn, t, delta):
    return (fn(t - 2 * delta) - 8 * fn(t - delta) + 8 * fn(t + delta) - fn(t + 2 * delta)) / (12 * delta)


def y_identity_residuals(traj: Trajectory, lyap: LyapunovSpec, times, rel_step=1e-3):
    """Relative mismatch between ``y'(t) e^-H`` by finite differences and ``v + h e``.

    Differences use the dense output with a five-point stencil; the weight is
    applied as ``e^{H(s) - H(t)}`` so nothing overflows.
    """
    times = np.asarray(times, dtype=float)
    H = lyap.y_weight
    out = np.empty(times.size)
    for i, t in enumerate(times):
        delta = rel_step * min(t, 1.0)
        lo, hi = t - 2 * delta, t + 2 * delta
        if lo < traj.t0 or hi > traj.t_end:
            out[i] = np.nan
            continue

        def y_rel(s, t=t):
            dx, _ = traj.state_at(s)
            return np.exp(H(s) - H(t)) * dx[0]

        fd = _five_point(y_rel, t, delta)
        dx, v = traj.state_at(t)
        cf = v[0] + lyap.h(t) * dx[0]
        scale = np.linalg.norm(cf) + 1e-3 * lyap.h(t) * np.linalg.norm(dx[0])
        out[i] = np.linalg.norm(fd - cf) / scale if scale > 0 else 0.0
    return out


def certify_y_growth(traj: Trajectory, lyap: LyapunovSpec, rel_tol=1e-5, tol=1e-8,
                     n_identity=200) -> CertReport:
    """Growth of ``y = e^H (x - x*)``.

    (a) the transform identity ``y' = e^H (v + h e)`` at up to ``n_identity``
    samples, checked against finite differences within ``rel_tol``;
    (b) ``log|y(t)| <= log Y(t)`` with ``Y`` from :func:`rate_bound`.
    """
    T, w = _window(traj, lyap)
    rb = rate_bound(traj, lyap)
    H = lyap.y_weight
    with np.errstate(divide="ignore"):
        log_y = H(w.t) + np.log(np.linalg.norm(w.dx, axis=1))
    both_zero = np.isneginf(log_y) & np.isneginf(rb.log_Y)
    with np.errstate(invalid="ignore"):
        slack = np.where(both_zero, 0.0, log_y - rb.log_Y)
    growth = CertReport.from_violations("y-growth", w.t, slack, tol)
    idx = np.unique(np.linspace(0, len(w) - 1, min(n_identity, len(w))).astype(int))
    res = y_identity_residuals(traj, lyap, w.t[idx])
    ok = ~np.isnan(res)
    ident = CertReport.from_violations("y-growth", w.t[idx][ok], res[ok] - rel_tol, 0.0)
    passed = growth.passed and ident.passed
    note = (f"T={T:.10g}; growth slack max {growth.max_violation:.3e}; "
            f"identity max rel err {res[ok].max() if ok.any() else 0.0:.3e} over {int(ok.sum())} samples")
    worst = growth if (growth.max_violation - tol) >= ident.max_violation else ident
    return replace(worst, inequality_id="y-growth", samples_checked=len(w) + int(ok.sum()),
                   tolerance=tol, passed=passed, note=note)


def derivative_residuals(traj: Trajectory, lyap: LyapunovSpec, times, rel_step=1e-3):
    """Finite-difference ``d log E/dt`` against :func:`analytic_dEdt`.

    Returns ``(relative_error, noise_floor_mask)``.  The mask flags samples
    where ``|d log E/dt|`` is large enough that dense-output noise cannot
    dominate the difference quotient.
    """
    sys = traj.system
    times = np.asarray(times, dtype=float)
    rel = np.full(times.size, np.nan)
    usable = np.zeros(times.size, dtype=bool)
    rtol = traj.tol[0]

    def logE(s):
        dx, v = traj.state_at(s)
        return eval_logE(lyap, sys, s, dx, v).logE[0]

    for i, t in enumerate(times):
        delta = rel_step * min(t, 1.0)
        if t - 2 * delta < traj.t0 or t + 2 * delta > traj.t_end:
            continue
        fd = _five_point(logE, t, delta)
        dx, v = traj.state_at(t)
        an = analytic_dEdt(lyap, sys, t, dx, v).ratio[0]
        rel[i] = abs(fd - an) / abs(an) if an != 0 else np.inf
        # differencing noise ~ 100 rtol / delta in log E
        usable[i] = abs(an) > 1e4 * rtol / delta
    return rel, usable


def certify_derivative(traj: Trajectory, lyap: LyapunovSpec, rel_tol=1e-5, frac=0.95,
                       hard_tol=1e-4, n=300) -> CertReport:
    """Analytic ``dE/dt`` against finite differences of ``E``.

    Passes when at least ``frac`` of the usable samples agree within
    ``rel_tol`` and all of them within ``hard_tol``.
    """
    times = np.geomspace(traj.t0 * 1.01, traj.t_end * 0.99, n)
    rel, usable = derivative_residuals(traj, lyap, times)
    ok = usable & ~np.isnan(rel)
    r = rel[ok]
    share = float(np.mean(r <= rel_tol)) if r.size else 1.0
    worst = float(r.max()) if r.size else 0.0
    loc = float(times[ok][np.argmax(r)]) if r.size else float("nan")
    passed = share >= frac and worst <= hard_tol
    note = f"{share:.4f} of {r.size} samples within {rel_tol:g}; worst {worst:.3e}"
    return CertReport("dEdt-match", int(r.size), worst, loc, hard_tol, passed, note)


CHECKS = (
    ("monotone", certify_monotone),
    ("main-nonneg", certify_main_nonneg),
    ("velocity-bound", certify_velocity_bound),
    ("rate-bound", certify_rate_bound),
    ("y-growth", certify_y_growth),
    ("dEdt-match", certify_derivative),
)


def certify_all(traj: Trajectory, lyap: LyapunovSpec, monotone_tol=None) -> list[CertReport]:
    """Run every check; the span must contain ``T``."""
    _window(traj, lyap)
    out = []
    for name, fn in CHECKS:
        out.append(fn(traj, lyap, tol=monotone_tol) if name == "monotone" else fn(traj, lyap))
    return out


def write_reports(reports, json_path=None, csv_path=None, extra=None):
    """JSON bundle and CSV summary (``inequality_id, pass, max_violation, location``)."""
    if json_path is not None:
        payload = {"reports": [r.to_json() for r in reports]}
        if extra:
            payload.update(extra)
        with open(json_path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["inequality_id", "pass", "max_violation", "location"])
            for r in reports:
                w.writerow([r.inequality_id, r.passed, repr(r.max_violation),
                            repr(r.violation_location)])
