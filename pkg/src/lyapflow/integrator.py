"""Adaptive Dormand-Prince 5(4) integration with continuous output.

Every accepted step keeps the five coefficient vectors of the order-4
continuous extension (Hairer, Norsett & Wanner, *Solving ODEs I*), so
trajectories can be resampled anywhere in their span after the fact.

Error control uses the usual mixed norm::

    err = rms( e_i / (atol + rtol * max(|y0_i|, |y1_i|)) ),   accept if err <= 1

and the per-sample ``err`` column reports this normalized estimate for the
step containing the sample, so ``err <= 1`` means "within tolerance".
"""
from __future__ import annotations

import csv
import types
from dataclasses import dataclass, replace

import numba
import numpy as np

from .dynamics import SystemSpec, flat_rhs
from .certs import CertReport
from .errors import InputError, IntegrationError

DEFAULT_TOL = (1e-10, 1e-12)

# Butcher tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 7))
_A[1, :1] = [1 / 5]
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_A[6, :6] = [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
_B = _A[6].copy()
# difference between 5th and embedded 4th order weights
_E = _B - np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640,
                    -92097 / 339200, 187 / 2100, 1 / 40])
_D = np.array([-12715105075 / 11282082432, 0, 87487479700 / 32700410799,
               -10690763975 / 1880347072, 701980252875 / 199316789632,
               -1453857185 / 822651844, 69997945 / 29380423])


@dataclass(frozen=True, eq=False)
class DenseOutput:
    """Piecewise quartic interpolant over accepted steps.

    ``coef[k]`` holds the five vectors ``r1..r5`` of step ``k`` running from
    ``ts[k]`` to ``ts[k+1]``; ``step_err[k]`` is its normalized error estimate.
    """

    ts: np.ndarray
    coef: np.ndarray
    step_err: np.ndarray

    def locate(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.ts, t, side="right") - 1
        return np.clip(k, 0, len(self.ts) - 2)

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = self.locate(t)
        h = self.ts[k + 1] - self.ts[k]
        th = ((t - self.ts[k]) / h)[:, None]
        c = self.coef[k]
        r1, r2, r3, r4, r5 = (c[:, i] for i in range(5))
        return r1 + th * (r2 + (1 - th) * (r3 + th * (r4 + (1 - th) * r5)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Samples ``(t, x, v, err)`` of one integration, plus its dense output.

    Positions are stored as the deviation ``dx = x - x_star`` (shape
    ``(len(t), n)``), which is what the integrator advances; ``x`` is derived.
    ``t0``/``t_end`` delimit the integrated span.
    """

    system: SystemSpec
    t: np.ndarray
    dx: np.ndarray
    v: np.ndarray
    err: np.ndarray
    tol: tuple
    t0: float
    t_end: float
    dense: DenseOutput | None = None
    n_steps: int = 0

    def __len__(self):
        return len(self.t)

    @property
    def x(self) -> np.ndarray:
        return self.system.objective.x_star + self.dx

    @property
    def samples(self):
        return list(zip(self.t, self.x, self.v, self.err))

    def gap(self) -> np.ndarray:
        """``f(x) - f_star`` per sample."""
        from .objectives import gap_dev
        return np.array([gap_dev(self.system.objective, e) for e in self.dx])

    def state_at(self, t):
        """``(dx, v)`` arrays at the given times via the dense output."""
        y = _dense_eval(self, t)
        n = self.system.objective.dimension
        return y[:, :n], y[:, n:]


def _dense_eval(traj, t):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if traj.dense is None:
        # single-sample trajectory: only its own time is available
        if np.any(t != traj.t0):
            raise InputError("trajectory has no dense output")
        return np.repeat(np.concatenate((traj.dx[0], traj.v[0]))[None, :], len(t), axis=0)
    return traj.dense(t)


def _check_tol(tol):
    try:
        rtol, atol = (float(v) for v in tol)
    except (TypeError, ValueError):
        raise InputError(f"tolerance must be a (rel, abs) pair, got {tol!r}") from None
    if not (rtol > 0 and atol > 0 and np.isfinite(rtol) and np.isfinite(atol)):
        raise InputError(f"tolerance must be a positive pair, got {tol!r}")
    return rtol, atol


def _initial_step(f, t0, y0, f0, rtol, atol, t_end):
    # Hairer's starting step heuristic for a 5th order method
    sc = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / sc) ** 2))
    d1 = np.sqrt(np.mean((f0 / sc) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, t_end - t0)
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / sc) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, t_end - t0)


_EPS16 = 16 * float(np.finfo(float).eps)


def _step_loop(params, t0, y0, t_end, rtol, atol, h, h_max, max_steps, A, C, E, D):
    """Dormand-Prince stepping from ``t0`` to ``t_end``.

    Written in the subset of numpy that numba compiles, so the same source
    runs interpreted (any objective) or jitted (closed-form right-hand sides).
    The right-hand side is the global ``_rhs``; see :func:`_interpreted_loop`.
    ``status`` is 0 on success, 1 when the step budget runs out and 2 on
    step-size underflow.
    """
    m = y0.size
    cap = 1024
    ts = np.empty(cap + 1)
    coefs = np.empty((cap, 5, m))
    errs = np.empty(cap)
    ts[0] = t0
    t = t0
    y = y0.copy()
    K = np.empty((7, m))
    K[0] = _rhs(t, y, params)
    rejected = False
    steps = 0
    status = 0
    while t < t_end:
        if steps >= max_steps:
            status = 1
            break
        if t + 1.01 * h >= t_end:
            h = t_end - t
        for i in range(1, 6):
            K[i] = _rhs(t + C[i] * h, y + h * np.dot(A[i, :i], K[:i]), params)
        y_new = y + h * np.dot(A[6, :6], K[:6])
        K[6] = _rhs(t + h, y_new, params)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        z = h * np.dot(E, K) / sc
        err = np.sqrt(np.dot(z, z) / m)
        if err <= 1.0:
            if steps == cap:
                cap *= 2
                ts2 = np.empty(cap + 1)
                ts2[:steps + 1] = ts[:steps + 1]
                ts = ts2
                c2 = np.empty((cap, 5, m))
                c2[:steps] = coefs[:steps]
                coefs = c2
                e2 = np.empty(cap)
                e2[:steps] = errs[:steps]
                errs = e2
            r2 = y_new - y
            r3 = h * K[0] - r2
            coefs[steps, 0] = y
            coefs[steps, 1] = r2
            coefs[steps, 2] = r3
            coefs[steps, 3] = r2 - h * K[6] - r3
            coefs[steps, 4] = h * np.dot(D, K)
            errs[steps] = err
            t_next = t + h
            if t_next >= t_end or t_end - t_next <= 1e-13 * abs(t_end):
                t_next = t_end
            steps += 1
            ts[steps] = t_next
            t = t_next
            y = y_new
            K[0] = K[6]
            fac = 0.9 * err ** -0.2 if err > 0 else 10.0
            fac = min(10.0, max(0.2, fac))
            if rejected:
                fac = min(1.0, fac)
            rejected = False
            h = min(h * fac, h_max)
        else:
            rejected = True
            h *= max(0.2, 0.9 * err ** -0.2)
        if h <= _EPS16 * abs(t):
            status = 2
            break
    return ts[:steps + 1].copy(), coefs[:steps].copy(), errs[:steps].copy(), steps, status, t, y


def _closed_form_rhs(t, y, p):
    # p = [kind code, r, alpha, spectrum...]; see fast_rhs_params
    m = y.size
    n = m // 2
    out = np.empty(m)
    kind = p[0]
    if kind == 0.0:
        for i in range(n):
            out[i] = -p[3 + i] * y[i]
            out[n + i] = 0.0
        return out
    if kind == 1.0:
        d = p[1] / t
    elif kind == 2.0:
        d = p[1] * t ** (-p[2])
    else:
        d = 0.0
    for i in range(n):
        out[i] = y[n + i]
        out[n + i] = -d * y[n + i] - p[3 + i] * y[i]
    return out


_KIND_CODE = {"gradient-flow": 0.0, "nag": 1.0, "generalized-nag": 2.0, "undamped": 3.0}


def fast_rhs_params(sys: SystemSpec):
    """Parameter vector for the compiled path, or None if it does not apply."""
    if sys.objective.kind != "quadratic":
        return None
    a = float(sys.alpha) if sys.alpha is not None else 0.0
    return np.concatenate(([_KIND_CODE[sys.kind], float(sys.r), a], sys.objective.spectrum))


_rhs = numba.njit(cache=True)(_closed_form_rhs)
# a global call (rather than a function argument) keeps the compiled loop cacheable
_jit_step_loop = numba.njit(cache=True)(_step_loop)


def _interpreted_loop(f):
    """:func:`_step_loop` running in Python with ``f(t, y)`` as right-hand side."""
    env = dict(globals(), _rhs=lambda t, y, p: f(t, y))
    return types.FunctionType(_step_loop.__code__, env, "_step_loop")

def integrate(sys: SystemSpec, t0, x0, v0=None, t_end=None, tol=DEFAULT_TOL,
              sample_grid=None, max_steps=5_000_000, h_max=None) -> Trajectory:
    """Integrate ``sys`` from ``(t0, x0, v0)`` to ``t_end``.

    ``sample_grid`` defaults to ``[t0, t_end]``; samples are interpolated from
    the continuous extension at exactly those times.  A grid containing only
    ``t0`` returns the initial state without integrating.
    """
    rtol, atol = _check_tol(tol)
    n = sys.objective.dimension
    x0 = np.asarray(x0, dtype=float).ravel()
    v0 = np.zeros(n) if v0 is None else np.asarray(v0, dtype=float).ravel()
    if x0.shape != (n,) or v0.shape != (n,):
        raise InputError(f"initial state must have dimension {n}")
    t0 = float(t0)
    if not t0 > 0:
        raise InputError(f"t0 must be positive, got {t0}")
    grid = None if sample_grid is None else np.asarray(sample_grid, dtype=float).ravel()
    if t_end is None:
        if grid is None or grid.size == 0:
            raise InputError("need t_end or a sample grid")
        t_end = float(grid.max())
    t_end = float(t_end)
    if grid is None:
        grid = np.array([t0, t_end])
    if grid.size and (grid.min() < t0 or grid.max() > t_end):
        raise InputError(f"sample grid must lie in [{t0}, {t_end}]")
    if grid.size and np.any(np.diff(grid) <= 0):
        raise InputError("sample grid must be strictly increasing")
    dx0 = x0 - sys.objective.x_star
    y0 = np.concatenate((dx0, v0))

    if grid.size and np.all(grid == t0):
        return Trajectory(sys, grid.copy(), np.repeat(dx0[None], grid.size, 0),
                          np.repeat(v0[None], grid.size, 0), np.zeros(grid.size),
                          (rtol, atol), t0, t0, None, 0)
    if not t_end > t0:
        raise InputError(f"t_end must exceed t0 ({t_end} <= {t0})")

    f = flat_rhs(sys)
    h_max = (t_end - t0) if h_max is None else float(h_max)
    k1 = f(t0, y0)
    # the heuristic collapses when a component starts at exactly zero with a
    # tiny atol; rejections shrink an over-large first step anyway
    h = min(max(_initial_step(f, t0, y0, k1, rtol, atol, t_end), 1e-8 * (t_end - t0)), h_max)
    fast = fast_rhs_params(sys)
    args = (t0, y0, t_end, rtol, atol, h, h_max, int(max_steps), _A, _C, _E, _D)
    if fast is not None:
        out = _jit_step_loop(fast, *args)
    else:
        out = _interpreted_loop(f)(None, *args)
    ts, coefs, errs, steps, status, t, y = out
    if status == 1:
        raise IntegrationError("step budget exhausted", t, y)
    if status == 2:
        raise IntegrationError("step size underflow", t, y)

    dense = DenseOutput(ts, coefs, errs)
    yg = dense(grid) if grid.size else np.empty((0, y0.size))
    if grid.size:
        # pin exact endpoint states
        yg[grid == t0] = y0
        yg[grid == t_end] = y
    sample_err = dense.step_err[dense.locate(grid)] if grid.size else np.empty(0)
    sample_err = np.where(grid == t0, 0.0, sample_err) if grid.size else sample_err
    return Trajectory(sys, grid, yg[:, :n], yg[:, n:], sample_err, (rtol, atol),
                      t0, t_end, dense, steps)


def resample(traj: Trajectory, grid) -> Trajectory:
    """Same trajectory sampled on a new grid inside ``[t0, t_end]``."""
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        n = traj.system.objective.dimension
        return replace(traj, t=grid, dx=np.empty((0, n)), v=np.empty((0, n)), err=np.empty(0))
    if grid.min() < traj.t0 or grid.max() > traj.t_end:
        raise InputError(f"grid leaves the span [{traj.t0}, {traj.t_end}]")
    n = traj.system.objective.dimension
    # reuse stored samples where times coincide so resampling is idempotent
    y = np.empty((grid.size, 2 * n))
    err = np.empty(grid.size)
    pos = np.searchsorted(traj.t, grid)
    hit = (pos < traj.t.size) & (traj.t[np.minimum(pos, traj.t.size - 1)] == grid)
    if hit.any():
        idx = pos[hit]
        y[hit] = np.concatenate((traj.dx[idx], traj.v[idx]), axis=1)
        err[hit] = traj.err[idx]
    miss = ~hit
    if miss.any():
        y[miss] = _dense_eval(traj, grid[miss])
        err[miss] = traj.dense.step_err[traj.dense.locate(grid[miss])]
    return replace(traj, t=grid, dx=y[:, :n], v=y[:, n:], err=err)


def geometric_grid(t0, t_end, n, extra=()):
    """``n`` log-spaced times from ``t0`` to ``t_end`` merged with ``extra``."""
    g = np.geomspace(t0, t_end, int(n))
    g[0], g[-1] = t0, t_end
    g = np.union1d(g, np.asarray(extra, dtype=float))
    return g[(g >= t0) & (g <= t_end)]


def write_csv(traj: Trajectory, path, extra_columns=None):
    """Write ``t, x0.., v0.., [extra..], err`` columns."""
    n = traj.system.objective.dimension
    header = ["t"] + [f"x{i}" for i in range(n)] + [f"v{i}" for i in range(n)]
    extra_columns = dict(extra_columns or {})
    header += list(extra_columns) + ["err"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        cols = [traj.t[:, None], traj.x, traj.v]
        cols += [np.asarray(c, dtype=float)[:, None] for c in extra_columns.values()]
        cols.append(traj.err[:, None])
        for row in np.hstack(cols):
            w.writerow([repr(float(v)) for v in row])


def certify_energy_decrease(traj: Trajectory, factor=10.0) -> CertReport:
    """Mechanical energy ``1/2 |v|^2 + f - f*`` must not grow between samples.

    Increments are measured in units of the local tolerance
    ``rtol * E + atol``; the check passes when none exceeds ``factor``.
    """
    from .dynamics import mechanical_energy
    sys = traj.system
    if sys.kind not in ("nag", "generalized-nag"):
        raise InputError("energy decrease applies to damped second-order systems")
    rtol, atol = traj.tol
    E = np.array([mechanical_energy(sys, dx, v) for dx, v in zip(traj.dx, traj.v)])
    scale = rtol * np.maximum(E[:-1], E[1:]) + atol
    return CertReport.from_violations("energy-decrease", traj.t[1:], np.diff(E) / scale, factor)
