"""Exact sums of rational powers of ``t``.

A :class:`PowerSum` is a finite linear combination ``sum_k c_k t^{p_k}`` with
rational exponents ``p_k``.  Coefficients are normally :class:`fractions.Fraction`,
but any exact ring element works; :class:`ScalePoly` is used by the Lyapunov
search to keep track of how each coefficient scales with the damping strength.

Examples
--------
>>> h = PowerSum.monomial(2, Fraction(-1, 2))
>>> str(h.derivative())
'-t^(-3/2)'
>>> str(h * h - PowerSum.monomial(1, -1))
'3*t^(-1)'
"""
from __future__ import annotations

import math
from fractions import Fraction
from numbers import Rational

import numpy as np


def as_fraction(value) -> Fraction:
    """Convert ints, Fractions and rational strings ("2/3", "0.5") exactly.

    Floats are converted through their shortest repr, so ``0.1`` becomes 1/10.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {value!r}")
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot convert {type(value).__name__} to an exact rational")


def _fmt_q(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


class ScalePoly:
    """Polynomial in a formal damping scale ``s`` with rational coefficients.

    Multiplying the damping by ``s`` and solving the Lyapunov conditions with
    these coefficients keeps every term graded by its homogeneity degree in the
    damping, which is what lets the threshold extraction discard terms that are
    negative for every damping strength.
    """

    __slots__ = ("_c",)

    def __init__(self, coeffs=None):
        c = {}
        for k, v in dict(coeffs or {}).items():
            v = as_fraction(v)
            if v:
                c[int(k)] = v
        self._c = dict(sorted(c.items()))

    @classmethod
    def scale(cls, factor=1) -> "ScalePoly":
        """The monomial ``factor * s``."""
        return cls({1: factor})

    @property
    def coeffs(self) -> dict[int, Fraction]:
        return dict(self._c)

    def at(self, s=1) -> Fraction:
        s = as_fraction(s)
        return sum((c * s**k for k, c in self._c.items()), Fraction(0))

    def _lift(self, other):
        if isinstance(other, ScalePoly):
            return other
        return ScalePoly({0: as_fraction(other)})

    def __add__(self, other):
        try:
            o = self._lift(other)
        except TypeError:
            return NotImplemented
        c = dict(self._c)
        for k, v in o._c.items():
            c[k] = c.get(k, Fraction(0)) + v
        return ScalePoly(c)

    __radd__ = __add__

    def __neg__(self):
        return ScalePoly({k: -v for k, v in self._c.items()})

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        try:
            o = self._lift(other)
        except TypeError:
            return NotImplemented
        c = {}
        for k1, v1 in self._c.items():
            for k2, v2 in o._c.items():
                c[k1 + k2] = c.get(k1 + k2, Fraction(0)) + v1 * v2
        return ScalePoly(c)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, ScalePoly):
            if set(other._c) != {0}:
                raise ZeroDivisionError("division by a non-constant scale polynomial")
            other = other._c[0]
        q = as_fraction(other)
        return ScalePoly({k: v / q for k, v in self._c.items()})

    def __bool__(self):
        return bool(self._c)

    def __eq__(self, other):
        try:
            return self._c == self._lift(other)._c
        except TypeError:
            return NotImplemented

    def __hash__(self):
        if set(self._c) <= {0}:
            return hash(self._c.get(0, Fraction(0)))
        return hash(tuple(self._c.items()))

    def __repr__(self):
        if not self._c:
            return "0"
        parts = []
        for k, v in self._c.items():
            mono = "" if k == 0 else ("s" if k == 1 else f"s^{k}")
            parts.append(f"{_fmt_q(v)}{'*' + mono if mono else ''}")
        return " + ".join(parts)


class PowerSum:
    """Canonical exact sum of terms ``c * t**p``.

    ``terms`` is an iterable of ``(coeff, exponent)`` pairs.  Duplicated
    exponents are merged and zero coefficients dropped, so two equal sums have
    identical ``terms``.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms=()):
        merged: dict[Fraction, object] = {}
        for coeff, exponent in terms:
            p = as_fraction(exponent)
            c = coeff if isinstance(coeff, ScalePoly) else as_fraction(coeff)
            merged[p] = merged[p] + c if p in merged else c
        self._terms = tuple((merged[p], p) for p in sorted(merged) if merged[p])

    @classmethod
    def monomial(cls, coeff, exponent) -> "PowerSum":
        return cls([(coeff, exponent)])

    @classmethod
    def zero(cls) -> "PowerSum":
        return cls()

    @property
    def terms(self) -> tuple:
        """``(coeff, exponent)`` pairs sorted by increasing exponent."""
        return self._terms

    @property
    def exponents(self) -> tuple[Fraction, ...]:
        return tuple(p for _, p in self._terms)

    def coeff(self, exponent):
        p = as_fraction(exponent)
        for c, q in self._terms:
            if q == p:
                return c
        return Fraction(0)

    def is_zero(self) -> bool:
        return not self._terms

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms)

    def __bool__(self):
        return bool(self._terms)

    def __eq__(self, other):
        if isinstance(other, PowerSum):
            return self._terms == other._terms
        if other == 0:
            return not self._terms
        return NotImplemented

    def __hash__(self):
        return hash(self._terms)

    def _coerce(self, other):
        if isinstance(other, PowerSum):
            return other
        return PowerSum.monomial(other, 0)

    def __add__(self, other):
        try:
            o = self._coerce(other)
        except TypeError:
            return NotImplemented
        return PowerSum(self._terms + o._terms)

    __radd__ = __add__

    def __neg__(self):
        return PowerSum((-c, p) for c, p in self._terms)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, PowerSum):
            return PowerSum(
                (c1 * c2, p1 + p2) for c1, p1 in self._terms for c2, p2 in other._terms
            )
        if isinstance(other, (ScalePoly, int, Fraction, str)):
            return PowerSum((c * (other if isinstance(other, ScalePoly) else as_fraction(other)), p)
                            for c, p in self._terms)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        q = as_fraction(other)
        return PowerSum((c / q, p) for c, p in self._terms)

    def shift(self, delta) -> "PowerSum":
        """Multiply by ``t**delta``."""
        d = as_fraction(delta)
        return PowerSum((c, p + d) for c, p in self._terms)

    def derivative(self) -> "PowerSum":
        return PowerSum((c * p, p - 1) for c, p in self._terms if p != 0)

    def antiderivative(self) -> "Weight":
        """Antiderivative with zero constant; a ``t^-1`` term becomes a log."""
        power = []
        log_coeff = Fraction(0)
        for c, p in self._terms:
            if p == -1:
                log_coeff = c
            else:
                power.append((c / (p + 1), p + 1))
        return Weight(PowerSum(power), log_coeff)

    def map_coeffs(self, fn) -> "PowerSum":
        return PowerSum((fn(c), p) for c, p in self._terms)

    def at_scale(self, s=1) -> "PowerSum":
        """Evaluate :class:`ScalePoly` coefficients at a damping scale."""
        return self.map_coeffs(lambda c: c.at(s) if isinstance(c, ScalePoly) else c)

    def __call__(self, t):
        """Floating evaluation at ``t > 0`` (scalar or array)."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for c, p in self.at_scale()._terms:
            out = out + float(c) * t ** float(p)
        return out if out.ndim else float(out)

    def leading(self):
        """Term with the largest exponent, or ``None`` for the zero sum."""
        return self._terms[-1] if self._terms else None

    def __repr__(self):
        return f"PowerSum({str(self)!r})"

    def __str__(self):
        if not self._terms:
            return "0"
        out = []
        for i, (c, p) in enumerate(reversed(self._terms)):
            if isinstance(c, ScalePoly):
                body = f"({c!r})"
                sign = "+"
            else:
                sign = "-" if c < 0 else "+"
                a = abs(c)
                body = "" if (a == 1 and p != 0) else _fmt_q(a)
            mono = "" if p == 0 else ("t" if p == 1 else f"t^({_fmt_q(p)})")
            term = "*".join(x for x in (body, mono) if x)
            if i == 0:
                out.append(("-" if sign == "-" else "") + term)
            else:
                out.append(f" {sign} {term}")
        return "".join(out)

    def to_json(self) -> list:
        """``[[[num, den], [num, den]], ...]`` as ``(coeff, exponent)`` pairs."""
        out = []
        for c, p in self.at_scale()._terms:
            out.append([[c.numerator, c.denominator], [p.numerator, p.denominator]])
        return out

    @classmethod
    def from_json(cls, data) -> "PowerSum":
        return cls((Fraction(*c), Fraction(*p)) for c, p in data)


class Weight:
    """Exponent ``gamma(t) = P(t) + c log t`` of a Lyapunov weight ``e^gamma``."""

    __slots__ = ("power", "log_coeff")

    def __init__(self, power: PowerSum, log_coeff=0):
        self.power = power
        self.log_coeff = as_fraction(log_coeff)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = self.power(t) + float(self.log_coeff) * np.log(t)
        return out if np.ndim(out) else float(out)

    def derivative(self) -> PowerSum:
        return self.power.derivative() + PowerSum.monomial(self.log_coeff, -1)

    def scaled(self, factor) -> "Weight":
        q = as_fraction(factor)
        return Weight(self.power * q, self.log_coeff * q)

    def __eq__(self, other):
        return (isinstance(other, Weight) and self.power == other.power
                and self.log_coeff == other.log_coeff)

    def __hash__(self):
        return hash((self.power, self.log_coeff))

    def __repr__(self):
        parts = []
        if self.power:
            parts.append(str(self.power))
        if self.log_coeff:
            parts.append(f"{_fmt_q(self.log_coeff)}*log(t)")
        return "Weight(" + (" + ".join(parts) or "0") + ")"


class Radical:
    """Exact positive number ``base ** (1 / index)`` with rational base and index."""

    __slots__ = ("base", "index")

    def __init__(self, base, index=1):
        self.base = as_fraction(base)
        self.index = as_fraction(index)
        if self.base < 0 or self.index <= 0:
            raise ValueError("radical needs base >= 0 and index > 0")

    def __float__(self):
        return float(self.base) ** (1.0 / float(self.index))

    def power(self, k) -> Fraction | None:
        """``self**k`` as an exact rational when ``k / index`` is an integer."""
        e = as_fraction(k) / self.index
        if e.denominator != 1:
            return None
        return self.base ** int(e)

    def __eq__(self, other):
        if not isinstance(other, Radical):
            return NotImplemented
        # b1^(1/i1) == b2^(1/i2)  <=>  b1^(n2*d1) == b2^(n1*d2) for i = n/d
        a = other.index.numerator * self.index.denominator
        b = self.index.numerator * other.index.denominator
        return self.base ** a == other.base ** b

    def __hash__(self):
        return hash(round(float(self), 9))

    def to_json(self) -> dict:
        return {
            "base": [self.base.numerator, self.base.denominator],
            "root_index": [self.index.numerator, self.index.denominator],
        }

    @classmethod
    def from_json(cls, data) -> "Radical":
        return cls(Fraction(*data["base"]), Fraction(*data["root_index"]))

    def __repr__(self):
        if self.index == 1:
            return f"Radical({_fmt_q(self.base)})"
        return f"Radical(({_fmt_q(self.base)})^(1/{_fmt_q(self.index)}))"
