"""Search for Lyapunov functions of the quadratic ansatz over power-sum grids.

For a damping ``d(t) = rho t^-beta`` the search enumerates supports for
``gamma'`` and ``h`` (one or two exponents from the grid each), solves the
exact linear conditions that remove the ``|v|^2`` term and make the
``f - f*`` and ``<grad f, x - x*>`` coefficients pair up, reads ``g`` off the
condition that kills the ``<x - x*, v>`` term, and extracts the threshold
``T`` from the ``|x - x*|^2`` coefficient after strong convexity has absorbed
part of it.

The damping coefficient is carried as ``rho * s`` for a formal scale ``s``
(see :class:`~lyapflow.powersum.ScalePoly`).  Every term of the final
coefficient then has a known degree in ``s``; a term whose sign does not
depend on ``s`` or on the data can be dropped when it is negative, and
``T`` comes from balancing the strong-convexity term against the single
positive term that remains.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

from .collection import DerivativeCollection, derive_collection
from .errors import InputError, ReconstructionError
from .lyapunov import LyapunovSpec
from .powersum import PowerSum, Radical, ScalePoly, as_fraction

__all__ = [
    "Candidate", "DerivativeCollection", "RationalFunction", "derive_collection",
    "reconstruct_parameter_dependence", "search", "candidates_to_json",
]


class Candidate(NamedTuple):
    spec: LyapunovSpec
    T: Radical


# --- exact linear algebra -------------------------------------------------

def _rref(rows, rhs):
    """Row-reduce ``rows x = rhs`` in place; returns pivot columns or None if inconsistent."""
    n_rows = len(rows)
    n_cols = len(rows[0]) if rows else 0
    pivots = []
    r = 0
    for c in range(n_cols):
        piv = next((i for i in range(r, n_rows) if rows[i][c] != 0), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        rhs[r], rhs[piv] = rhs[piv], rhs[r]
        p = rows[r][c]
        rows[r] = [v / p for v in rows[r]]
        rhs[r] = rhs[r] / p
        for i in range(n_rows):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
                rhs[i] = rhs[i] - rhs[r] * f
        pivots.append(c)
        r += 1
    if any(rhs[i] for i in range(r, n_rows)):
        return None
    return pivots


def _solve_unique(rows, rhs):
    rows = [list(map(Fraction, row)) for row in rows]
    rhs = list(rhs)
    pivots = _rref(rows, rhs)
    if pivots is None or len(pivots) < len(rows[0]):
        return None
    return rhs[: len(pivots)]


def _nullspace_vector(rows, n_cols):
    """A basis vector of a one-dimensional null space, else None."""
    rows = [list(map(Fraction, row)) for row in rows]
    rhs = [Fraction(0)] * len(rows)
    pivots = _rref(rows, rhs) if rows else []
    free = [c for c in range(n_cols) if c not in pivots]
    if len(free) != 1:
        return None
    x = [Fraction(0)] * n_cols
    x[free[0]] = Fraction(1)
    for i, c in enumerate(pivots):
        x[c] = -rows[i][free[0]]
    return x


# --- search ---------------------------------------------------------------

def _supports(grid, max_terms):
    for k in range(1, max_terms + 1):
        yield from itertools.combinations(grid, k)


def _solve_pair(sg, sh, d, lam):
    """``gamma'`` on ``sg`` and ``h`` on ``sh`` with ``gamma'/2 + h = lam d``
    and ``gamma' = h`` termwise, or None."""
    exps = sorted(set(sg) | set(sh) | set(d.exponents))
    n = len(sg) + len(sh)
    rows, rhs = [], []
    for p in exps:
        row = [Fraction(0)] * n
        for i, q in enumerate(sg):
            if q == p:
                row[i] = Fraction(1, 2)
        for j, q in enumerate(sh):
            if q == p:
                row[len(sg) + j] = Fraction(1)
        rows.append(row)
        rhs.append(d.coeff(p) * lam if d.coeff(p) else ScalePoly())
        row = [Fraction(0)] * n
        for i, q in enumerate(sg):
            if q == p:
                row[i] = Fraction(1)
        for j, q in enumerate(sh):
            if q == p:
                row[len(sg) + j] = Fraction(-1)
        rows.append(row)
        rhs.append(ScalePoly())
    sol = _solve_unique(rows, rhs)
    if sol is None:
        return None
    gp = PowerSum(zip(sol[: len(sg)], sg))
    h = PowerSum(zip(sol[len(sg):], sh))
    return gp, h


def _atoms(ps: PowerSum):
    """``{(exponent, s-degree): coefficient}`` for a power sum with scale coefficients."""
    out = {}
    for c, p in ps:
        items = c.coeffs.items() if isinstance(c, ScalePoly) else [(0, c)]
        for k, v in items:
            if v:
                out[(p, k)] = out.get((p, k), Fraction(0)) + v
    return {k: v for k, v in out.items() if v}


def _threshold(A: PowerSum, B: PowerSum, mu: Fraction):
    """Exact ``T`` from ``-(mu/2) A + B <= 0``, or None.

    Negative atoms of ``B`` are dropped (they are negative for every damping
    strength); what remains must be one positive atom ``b t^q`` balanced by a
    single strong-convexity atom ``-(mu/2) a t^p`` with ``p > q``.  Then
    ``T = (2b/(mu a))^(1/(p - q))``.
    """
    mu_atoms = _atoms(A)
    if len(mu_atoms) != 1:
        return None
    (p, _), a = next(iter(mu_atoms.items()))
    if a <= 0:
        return None
    pos = [(q, b) for (q, _), b in _atoms(B).items() if b > 0]
    if not pos:
        return Radical(0)
    if len(pos) != 1:
        return None
    q, b = pos[0]
    if p <= q:
        return None
    return Radical(2 * b / (mu * a), p - q)


def _sharp_threshold(A: PowerSum, B: PowerSum, mu: Fraction):
    """Largest positive root of the merged coefficient at unit scale (float)."""
    total = (B - A * (mu / 2)).at_scale(1)
    if total.is_zero():
        return 0.0
    terms = total.terms
    if len(terms) == 1:
        return 0.0 if terms[0][0] < 0 else float("inf")
    if len(terms) == 2:
        (c_lo, q), (c_hi, p) = terms
        if c_hi < 0 < c_lo:
            return float(Radical(-c_lo / c_hi, p - q))
        return 0.0 if c_hi < 0 else float("inf")
    # more terms: bracket the last sign change numerically
    from scipy.optimize import brentq
    if terms[-1][0] > 0:
        return float("inf")
    hi = 1.0
    while total(hi) > 0 or total(hi * 2) > 0:
        hi *= 2
        if hi > 1e12:
            return float("inf")
    lo = hi
    while lo > 1e-12 and total(lo) <= 0:
        lo /= 2
    return 0.0 if total(lo) <= 0 else brentq(total, lo, hi, xtol=1e-14)


def _rank_key(spec: LyapunovSpec, T: Radical):
    lead_c, lead_p = spec.gamma_prime.leading()
    exps = tuple(spec.gamma_prime.exponents) + (None,) + tuple(spec.g.exponents) + (None,) + tuple(spec.h.exponents)
    exps = tuple(Fraction(99) if e is None else e for e in exps)
    return (-lead_p, -lead_c, float(T), exps)


def search(damping: PowerSum, exponent_grid, mu, max_terms=2, relax_scales=None) -> list[Candidate]:
    """Enumerate Lyapunov candidates for ``x'' + d(t) x' + grad f = 0``.

    ``damping`` must be a single term ``rho t^-beta`` with ``rho > 0``.
    ``relax_scales`` replaces the exact cancellation of the ``|v|^2`` term by
    ``gamma'/2 + h = lam d`` for each listed ``lam`` in ``(0, 1]``, which
    leaves a non-positive ``|v|^2`` coefficient.  Results are exact, unique
    and ranked by how fast ``e^-gamma`` decays, then by ``T``.
    """
    if len(damping) != 1:
        raise InputError("damping must be a single term rho * t^-beta")
    (rho, beta_neg), = damping.terms
    rho = as_fraction(rho)
    if rho <= 0:
        raise InputError("damping coefficient must be positive")
    mu = as_fraction(mu)
    if mu <= 0:
        raise InputError("mu must be positive")
    grid = sorted({as_fraction(p) for p in exponent_grid})
    scales = [Fraction(1)] if relax_scales is None else sorted({as_fraction(x) for x in relax_scales})
    if any(not 0 < lam <= 1 for lam in scales):
        raise InputError("relaxation scales must lie in (0, 1]")
    d = PowerSum.monomial(ScalePoly.scale(rho), beta_neg)
    grid_set = set(grid)
    found = {}
    for lam in scales:
        for sg in _supports(grid, max_terms):
            for sh in _supports(grid, max_terms):
                pair = _solve_pair(sg, sh, d, lam)
                if pair is None:
                    continue
                gp, h = pair
                if gp.is_zero() or h.is_zero():
                    continue
                # condition on <x - x*, v>: -2g + h' + h(h - d) + gamma' h = 0
                g = (h.derivative() + h * (h - d) + gp * h) / 2
                if len(g) > max_terms or not set(g.exponents) <= grid_set:
                    continue
                coll = derive_collection(gp, g, h, d)
                if not (coll.e_v.is_zero() and coll.grad_v.is_zero()):
                    continue
                if not coll.v_sq.at_scale(1).is_zero() and lam == 1:
                    continue
                A = h
                if any(c.at(1) <= 0 for c, _ in A):
                    continue
                T = _threshold(A, coll.e_sq, mu)
                if T is None:
                    continue
                spec = LyapunovSpec(
                    gp.at_scale(1), g.at_scale(1), h.at_scale(1), "discovered", T,
                    _sharp_threshold(A, coll.e_sq, mu),
                    label="" if lam == 1 else f"relaxed lambda={lam}",
                )
                key = (spec.gamma_prime, spec.g, spec.h)
                if key not in found or float(T) < float(found[key].T):
                    found[key] = Candidate(spec, T)
    return sorted(found.values(), key=lambda c: _rank_key(c.spec, c.T))


def candidates_to_json(cands) -> list:
    out = []
    for i, c in enumerate(cands):
        d = c.spec.to_json()
        d["rank"] = i
        out.append(d)
    return out


def candidates_from_json(data) -> list[Candidate]:
    out = []
    for d in data:
        spec = LyapunovSpec.from_json(d)
        out.append(Candidate(spec, spec.threshold))
    return out


def dump_candidates(cands, path):
    with open(path, "w") as fh:
        json.dump({"candidates": candidates_to_json(cands)}, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- parameter reconstruction --------------------------------------------

def _poly_str(coeffs, var="r"):
    parts = []
    for k in range(len(coeffs) - 1, -1, -1):
        c = coeffs[k]
        if c == 0:
            continue
        sign = "-" if c < 0 else "+"
        a = abs(c)
        num = "" if (a == 1 and k) else (str(a.numerator) if a.denominator == 1 else f"{a.numerator}/{a.denominator}")
        mono = "" if k == 0 else (var if k == 1 else f"{var}^{k}")
        body = "*".join(x for x in (num, mono) if x)
        parts.append((sign, body))
    if not parts:
        return "0"
    s = ("-" if parts[0][0] == "-" else "") + parts[0][1]
    for sign, body in parts[1:]:
        s += f" {sign} {body}"
    return s


def _peval(coeffs, x):
    out = Fraction(0)
    for c in reversed(coeffs):
        out = out * x + c
    return out


@dataclass(frozen=True)
class RationalFunction:
    """``p(r) / q(r)`` with exact coefficients (lowest degree first); ``q`` is monic."""

    num: tuple
    den: tuple
    fitted: tuple = ()
    held_out: tuple = ()

    def __call__(self, r):
        r = as_fraction(r)
        return _peval(self.num, r) / _peval(self.den, r)

    @property
    def is_polynomial(self) -> bool:
        return len(self.den) == 1

    def __str__(self):
        p = _poly_str(self.num)
        if self.is_polynomial:
            return p
        return f"({p})/({_poly_str(self.den)})"

    def to_json(self) -> dict:
        return {
            "numerator": [[c.numerator, c.denominator] for c in self.num],
            "denominator": [[c.numerator, c.denominator] for c in self.den],
            "fitted_r": [[x.numerator, x.denominator] for x in self.fitted],
            "held_out_r": [[x.numerator, x.denominator] for x in self.held_out],
            "formula": str(self),
        }


def _interpolate(points, max_degree=None) -> RationalFunction:
    points = [(as_fraction(r), as_fraction(c)) for r, c in points]
    rs = [r for r, _ in points]
    if len(set(rs)) != len(rs):
        raise ReconstructionError("parameter values must be distinct")
    n = len(points)
    if n < 2:
        raise ReconstructionError("need at least two instances (one is held out)")
    top = n - 2 if max_degree is None else min(max_degree, n - 2)
    for total in range(top + 1):
        for k in range(total + 1):
            m = total - k
            used, held = points[: m + k + 1], points[m + k + 1:]
            # p(r_i) - c_i q(r_i) = 0 over unknowns (p_0..p_m, q_0..q_k)
            rows = [[r ** i for i in range(m + 1)] + [-c * r ** j for j in range(k + 1)]
                    for r, c in used]
            vec = _nullspace_vector(rows, m + k + 2)
            if vec is None:
                continue
            p, q = vec[: m + 1], vec[m + 1:]
            while len(q) > 1 and q[-1] == 0:
                q.pop()
            lead = q[-1]
            if lead == 0:
                continue
            p = [x / lead for x in p]
            q = [x / lead for x in q]
            while len(p) > 1 and p[-1] == 0:
                p.pop()
            if any(_peval(q, r) == 0 for r, _ in points):
                continue
            if all(_peval(p, r) / _peval(q, r) == c for r, c in points):
                return RationalFunction(tuple(p), tuple(q), tuple(r for r, _ in used),
                                        tuple(r for r, _ in held))
    raise ReconstructionError("no rational interpolant with a held-out check up to the available degree")


def reconstruct_parameter_dependence(instances, max_degree=None):
    """Recover symbolic ``r``-dependence from numeric solves.

    ``instances`` is a list of ``(r, value)`` pairs where every value is a
    rational number or every value is a :class:`PowerSum`.  Scalars give a
    :class:`RationalFunction`; power sums give ``{exponent: RationalFunction}``
    over the union of exponents, a missing exponent counting as zero.  The
    lowest-degree interpolant is chosen and at least one instance is always
    held out and must agree exactly.
    """
    instances = list(instances)
    if not instances:
        raise ReconstructionError("no instances")
    vals = [v for _, v in instances]
    if all(isinstance(v, PowerSum) for v in vals):
        union = sorted(set().union(*(set(v.exponents) for v in vals)))
        if union and not any(list(v.exponents) == union for v in vals):
            raise ReconstructionError(
                f"no instance has the full exponent set {[str(p) for p in union]}")
        return {p: _interpolate([(r, v.coeff(p)) for r, v in instances], max_degree) for p in union}
    if any(isinstance(v, PowerSum) for v in vals):
        raise ReconstructionError("mixed scalar and power-sum instances")
    return _interpolate(instances, max_degree)
