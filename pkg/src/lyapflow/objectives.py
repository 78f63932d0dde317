"""Strongly convex test objectives with known minimizers.

Two families are shipped:

* ``quadratic``: ``f(x) = 1/2 (x - x*)^T D (x - x*) + f*`` with diagonal ``D``.
* ``regularized-logsumexp``: ``f(x) = log sum_i exp(a_i . x) + mu/2 |x|^2`` with
  seeded rows ``a_i``; the minimizer is manufactured by a damped Newton solve.

Trajectories of the accelerated flows decay by many orders of magnitude, so
both families evaluate the gap ``f(x) - f*`` and the gradient in forms that
stay accurate relative to ``|x - x*|`` instead of subtracting large numbers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .certs import CertReport
from .errors import InputError

KINDS = ("quadratic", "regularized-logsumexp")


@dataclass(frozen=True, eq=False)
class ObjectiveSpec:
    """A strongly convex objective with exact ``x_star``, ``f_star`` and ``mu``.

    Build instances with :func:`quadratic` or :func:`regularized_logsumexp`.
    The dataclass itself does not enforce ``mu == min(spectrum)`` so that
    misdeclared specs can be constructed and caught by
    :func:`check_strong_convexity`; :func:`validate` enforces it.
    """

    kind: str
    dimension: int
    mu: float
    x_star: np.ndarray
    f_star: float
    spectrum: np.ndarray | None = None
    rows: np.ndarray | None = None
    name: str = ""
    seed: int | None = None
    # softmax weights at x_star, cached for the accurate gap/gradient forms
    _p_star: np.ndarray | None = field(default=None, repr=False)

    def eval(self, x):
        return evaluate(self, x)

    def grad(self, x):
        return grad(self, x)

    def gap(self, x):
        return gap(self, x)


def quadratic(spectrum, x_star=None, f_star=0.0, mu=None, name="") -> ObjectiveSpec:
    """Diagonal quadratic; ``mu`` defaults to the smallest eigenvalue."""
    d = np.asarray(spectrum, dtype=float).ravel()
    if d.size == 0:
        raise InputError("dimension must be positive")
    if np.any(d <= 0):
        raise InputError("quadratic spectrum must be positive")
    xs = np.zeros_like(d) if x_star is None else np.asarray(x_star, dtype=float).ravel()
    if xs.shape != d.shape:
        raise InputError(f"x_star has dimension {xs.size}, spectrum has {d.size}")
    m = float(d.min()) if mu is None else float(mu)
    return ObjectiveSpec("quadratic", int(d.size), m, xs, float(f_star), spectrum=d, name=name)


def _lse_parts(rows, mu, x):
    z = rows @ x
    value = logsumexp(z) + 0.5 * mu * float(x @ x)
    p = np.exp(z - logsumexp(z))
    return value, rows.T @ p + mu * x, p


def regularized_logsumexp(dimension, mu=1.0, n_terms=None, seed=0, name="") -> ObjectiveSpec:
    """``log sum_i exp(a_i . x) + mu/2 |x|^2`` with seeded standard-normal rows.

    The minimizer is located by damped Newton iterations until the gradient
    norm is at most 1e-13.
    """
    n = int(dimension)
    if n < 1:
        raise InputError("dimension must be positive")
    if mu <= 0:
        raise InputError("mu must be positive")
    m = int(n_terms) if n_terms is not None else 2 * n + 1
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((m, n))
    x = np.zeros(n)
    for _ in range(100):
        val, g, p = _lse_parts(rows, mu, x)
        if np.linalg.norm(g) <= 1e-13:
            break
        H = rows.T @ (np.diag(p) - np.outer(p, p)) @ rows + mu * np.eye(n)
        step = np.linalg.solve(H, g)
        s = 1.0
        while s > 1e-8:
            cand = x - s * step
            if _lse_parts(rows, mu, cand)[0] <= val:
                break
            s *= 0.5
        x = x - s * step
    val, g, p = _lse_parts(rows, mu, x)
    if np.linalg.norm(g) > 1e-12:
        raise RuntimeError(f"Newton pre-solve stalled at |grad| = {np.linalg.norm(g):.3e}")
    return ObjectiveSpec(
        "regularized-logsumexp", n, float(mu), x, float(val),
        rows=rows, name=name, seed=seed, _p_star=p,
    )


def _check_dim(obj, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (obj.dimension,):
        raise InputError(f"expected a vector of dimension {obj.dimension}, got shape {x.shape}")
    return x


def _expm1_minus(u):
    """``expm1(u) - u`` without cancellation for small ``u``."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < 1e-2
    out = np.expm1(u) - u
    us = u[small]
    # Taylor to u^7: truncation below 1e-17 relative for |u| < 1e-2
    out[small] = us * us * (1 / 2 + us * (1 / 6 + us * (1 / 24 + us * (1 / 120 + us * (1 / 720 + us / 5040)))))
    return out


def _log1p_minus(s):
    """``log1p(s) - s`` without cancellation for small ``s``."""
    if abs(s) >= 1e-2:
        return float(np.log1p(s) - s)
    return -s * s * (1 / 2 - s * (1 / 3 - s * (1 / 4 - s * (1 / 5 - s * (1 / 6 - s / 7)))))


def gap_dev(obj: ObjectiveSpec, e) -> float:
    """``f(x_star + e) - f_star``, accurate relative to ``|e|^2``."""
    e = _check_dim(obj, e)
    if obj.kind == "quadratic":
        return 0.5 * float(e @ (obj.spectrum * e))
    u = obj.rows @ e
    p = obj._p_star
    q = float(p @ _expm1_minus(u))
    s = float(p @ u) + q
    return q + _log1p_minus(s) + 0.5 * obj.mu * float(e @ e)


def gap(obj: ObjectiveSpec, x) -> float:
    """``f(x) - f_star``."""
    x = _check_dim(obj, x)
    return gap_dev(obj, x - obj.x_star)


def evaluate(obj: ObjectiveSpec, x) -> float:
    """Objective value.

    For the log-sum-exp family this is ``f_star + gap(x)``, which differs
    from the literal formula by the linear term ``r . (x - x_star)`` where
    ``r`` is the Newton residual (norm below 1e-12).  That makes ``x_star``
    the exact stationary point of what is evaluated.
    """
    return obj.f_star + gap(obj, x)


def grad_dev(obj: ObjectiveSpec, e) -> np.ndarray:
    """Gradient at ``x_star + e``, accurate relative to ``|e|``."""
    e = _check_dim(obj, e)
    if obj.kind == "quadratic":
        return obj.spectrum * e
    u = obj.rows @ e
    p = obj._p_star
    em = np.expm1(u)
    s = float(p @ em)
    # softmax(x) - softmax(x_star) = p * (expm1(u) - s) / (1 + s)
    dp = p * (em - s) / (1.0 + s)
    return obj.rows.T @ dp + obj.mu * e


def grad(obj: ObjectiveSpec, x) -> np.ndarray:
    x = _check_dim(obj, x)
    return grad_dev(obj, x - obj.x_star)


def hessian_min_eig(obj: ObjectiveSpec, x) -> float:
    x = _check_dim(obj, x)
    if obj.kind == "quadratic":
        return float(obj.spectrum.min())
    z = obj.rows @ x
    p = np.exp(z - logsumexp(z))
    H = obj.rows.T @ (np.diag(p) - np.outer(p, p)) @ obj.rows + obj.mu * np.eye(obj.dimension)
    return float(np.linalg.eigvalsh(H)[0])


def check_strong_convexity(obj: ObjectiveSpec, n_pairs: int = 1000, seed: int = 0,
                           scale: float = 2.0) -> CertReport:
    """Sample pairs and report the smallest strong-convexity residual.

    The residual is ``f(y) - f(x) - <grad f(x), y - x> - mu/2 |y - x|^2``; the
    report's violation is its negative, so the check passes when every residual
    is at least ``-1e-10``.
    """
    if n_pairs < 1:
        raise InputError("n_pairs must be at least 1")
    rng = np.random.default_rng(seed)
    xs = obj.x_star + scale * rng.standard_normal((n_pairs, obj.dimension))
    ys = obj.x_star + scale * rng.standard_normal((n_pairs, obj.dimension))
    resid = np.empty(n_pairs)
    for i, (x, y) in enumerate(zip(xs, ys)):
        d = y - x
        resid[i] = gap(obj, y) - gap(obj, x) - grad(obj, x) @ d - 0.5 * obj.mu * (d @ d)
    return CertReport.from_violations(
        "strong-convexity", np.arange(n_pairs), -resid, 1e-10,
        note=f"min residual {resid.min():.6e}",
    )


def validate(obj: ObjectiveSpec) -> None:
    """Enforce the declarative invariants; raises :class:`InputError`."""
    if obj.dimension < 1:
        raise InputError("dimension must be positive")
    if obj.mu <= 0:
        raise InputError("mu must be positive")
    if obj.kind == "quadratic":
        if float(obj.spectrum.min()) != obj.mu:
            raise InputError(f"declared mu={obj.mu} differs from smallest eigenvalue "
                             f"{obj.spectrum.min()}")
    elif obj.kind != "regularized-logsumexp":
        raise InputError(f"unknown objective kind {obj.kind!r}")
    if np.linalg.norm(grad(obj, obj.x_star)) > 1e-12:
        raise InputError("declared minimizer is not stationary")
