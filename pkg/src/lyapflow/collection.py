"""Mechanical differentiation of the quadratic Lyapunov ansatz.

The ansatz is

    E = e^gamma [ (f - f*) - g |e|^2 + 1/2 |v + h e|^2 ],    e = x - x*,

along ``x'' = -d(t) x' - grad f``.  After factoring out ``e^gamma``, ``dE/dt``
is a combination of six state quantities whose coefficients are power sums
in ``t``.  Everything here is exact rational arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .powersum import PowerSum

# state quantities, in order
BASIS = ("gap", "grad_e", "grad_v", "e_sq", "e_v", "v_sq")
LABELS = {
    "gap": "f - f*",
    "grad_e": "<grad f, x - x*>",
    "grad_v": "<grad f, v>",
    "e_sq": "|x - x*|^2",
    "e_v": "<x - x*, v>",
    "v_sq": "|v|^2",
}


@dataclass(frozen=True)
class DerivativeCollection:
    """Coefficients of ``e^-gamma dE/dt`` on the six basis quantities."""

    gap: PowerSum
    grad_e: PowerSum
    grad_v: PowerSum
    e_sq: PowerSum
    e_v: PowerSum
    v_sq: PowerSum

    def items(self):
        return [(k, getattr(self, k)) for k in BASIS]

    def is_zero(self) -> bool:
        return all(c.is_zero() for _, c in self.items())

    def evaluate(self, t, quantities) -> np.ndarray:
        """``sum_k c_k(t) q_k`` with ``quantities`` a mapping over :data:`BASIS`."""
        t = np.asarray(t, dtype=float)
        out = np.zeros(np.broadcast(t, quantities["gap"]).shape)
        for k, c in self.items():
            if c:
                out = out + c(t) * np.asarray(quantities[k], dtype=float)
        return out

    def to_json(self) -> dict:
        return {k: c.to_json() for k, c in self.items()}


# d/dt of each basis quantity along the flow, before substituting v'
#   gap   -> grad_v
#   e_sq  -> 2 e_v
#   e_v   -> v_sq + <e, v'>
#   v_sq  -> 2 <v, v'>
# with <e, v'> = -d e_v - grad_e and <v, v'> = -d v_sq - grad_v.
def _basis_derivative(name, d):
    one = PowerSum.monomial(1, 0)
    if name == "gap":
        return {"grad_v": one}
    if name == "e_sq":
        return {"e_v": 2 * one}
    if name == "e_v":
        return {"v_sq": one, "e_v": -d, "grad_e": -one}
    if name == "v_sq":
        return {"v_sq": -2 * d, "grad_v": -2 * one}
    raise KeyError(name)


def derive_collection(gamma_prime: PowerSum, g: PowerSum, h: PowerSum,
                      damping: PowerSum) -> DerivativeCollection:
    """Differentiate the ansatz and collect coefficients by the product rule.

    The interior is first expanded on the basis (``1/2 |v + h e|^2`` gives
    ``h^2/2 |e|^2 + h <e, v> + 1/2 |v|^2``); then each term ``c(t) q`` becomes
    ``(gamma' c + c') q + c dq/dt``.
    """
    half = PowerSum.monomial(1, 0) / 2
    interior = {
        "gap": PowerSum.monomial(1, 0),
        "e_sq": h * h * half - g,
        "e_v": h,
        "v_sq": half,
    }
    out = {k: PowerSum.zero() for k in BASIS}
    for name, c in interior.items():
        out[name] = out[name] + gamma_prime * c + c.derivative()
        for target, w in _basis_derivative(name, damping).items():
            out[target] = out[target] + c * w
    return DerivativeCollection(**out)
