"""First-order forms of the accelerated gradient flows.

The state is ``(t, x, v)`` with ``v = dx/dt``.  Second-order systems read

    x'' + d(t) x' + grad f(x) = 0,    d(t) = r/t  or  r t^(-alpha),

and the plain gradient flow ``x' = -grad f(x)`` carries ``v`` along unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import objectives
from .errors import InputError
from .objectives import ObjectiveSpec
from .powersum import PowerSum, as_fraction

KINDS = ("gradient-flow", "nag", "generalized-nag", "undamped")


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """ODE family, friction parameters and objective.

    ``r`` and ``alpha`` are exact rationals so the symbolic search and the
    Lyapunov coefficients can be built from them without rounding.
    ``undamped`` is a test mode (damping forced to zero) used as an
    integrator oracle.
    """

    kind: str
    objective: ObjectiveSpec
    r: Fraction = Fraction(0)
    alpha: Fraction | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown system kind {self.kind!r}")
        object.__setattr__(self, "r", as_fraction(self.r))
        if self.alpha is not None:
            object.__setattr__(self, "alpha", as_fraction(self.alpha))
        if self.kind in ("nag", "generalized-nag") and self.r <= 0:
            raise InputError(f"r must be positive for {self.kind}, got {self.r}")
        if self.kind == "generalized-nag":
            if self.alpha is None or not 0 < self.alpha < 1:
                raise InputError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def second_order(self) -> bool:
        return self.kind != "gradient-flow"

    @property
    def damping_exponent(self) -> Fraction:
        return Fraction(1) if self.kind == "nag" else (self.alpha or Fraction(0))

    def damping_powersum(self) -> PowerSum:
        """``d(t)`` as an exact power sum (zero for undamped kinds)."""
        if self.kind == "nag":
            return PowerSum.monomial(self.r, -1)
        if self.kind == "generalized-nag":
            return PowerSum.monomial(self.r, -self.alpha)
        return PowerSum.zero()


@dataclass(frozen=True)
class State:
    t: float
    x: np.ndarray
    v: np.ndarray


def nag(objective, r, name="") -> SystemSpec:
    return SystemSpec("nag", objective, r=r, name=name)


def generalized_nag(objective, r, alpha, name="") -> SystemSpec:
    return SystemSpec("generalized-nag", objective, r=r, alpha=alpha, name=name)


def gradient_flow(objective, name="") -> SystemSpec:
    return SystemSpec("gradient-flow", objective, name=name)


def damping(sys: SystemSpec, t):
    """``r/t``, ``r t^-alpha`` or zero.  Accepts scalars or arrays."""
    ta = np.asarray(t, dtype=float)
    if np.any(ta <= 0):
        raise InputError(f"damping needs t > 0, got {t}")
    if sys.kind == "nag":
        out = float(sys.r) / ta
    elif sys.kind == "generalized-nag":
        out = float(sys.r) * ta ** (-float(sys.alpha))
    else:
        out = np.zeros_like(ta)
    return out if out.ndim else float(out)


def vector_field(sys: SystemSpec, s: State):
    """Return ``(dx/dt, dv/dt)`` at state ``s``."""
    g = objectives.grad(sys.objective, s.x)
    if not sys.second_order:
        return -g, np.zeros_like(g)
    v = np.asarray(s.v, dtype=float)
    return v, -damping(sys, s.t) * v - g


def flat_rhs(sys: SystemSpec):
    """``f(t, y)`` over the stacked deviation state ``y = [x - x_star, v]``.

    Integrating the deviation keeps relative error control meaningful while
    the trajectory approaches ``x_star`` by many orders of magnitude.
    """
    n = sys.objective.dimension
    obj = sys.objective
    if obj.kind == "quadratic":
        # inlined diagonal gradient: this closure is the integrator's hot loop
        spec = obj.spectrum

        def grad_fn(e):
            return spec * e
    else:
        def grad_fn(e):
            return objectives.grad_dev(obj, e)

    if not sys.second_order:
        zero = np.zeros(n)

        def rhs(t, y):
            return np.concatenate((-grad_fn(y[:n]), zero))
        return rhs

    r = float(sys.r)
    kind = sys.kind
    a = float(sys.alpha) if sys.alpha is not None else 0.0

    def rhs(t, y):
        v = y[n:]
        if kind == "nag":
            d = r / t
        elif kind == "generalized-nag":
            d = r * t ** (-a)
        else:
            d = 0.0
        return np.concatenate((v, -d * v - grad_fn(y[:n])))
    return rhs


def mechanical_energy(sys: SystemSpec, dx, v) -> float:
    """``1/2 |v|^2 + f(x) - f_star`` at deviation ``dx = x - x_star``.

    Non-increasing along damped flows.
    """
    v = np.asarray(v, dtype=float)
    return 0.5 * float(v @ v) + objectives.gap_dev(sys.objective, dx)
