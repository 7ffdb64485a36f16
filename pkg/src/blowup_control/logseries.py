"""Finite sums  sum c_{a,b}(x) T^a (ln T)^b  with field-valued coefficients.

This is the bookkeeping used to push the expansion through the wave operator
exactly in T: products, T-derivatives and spatial operators act monomial by
monomial, so orders that cancel analytically can be identified and dropped
before anything is evaluated at a small T.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Callable

import numpy as np


class LogSeries:
    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms: dict[tuple[int, int], np.ndarray | float] = {}
        for key, c in (terms or {}).items():
            self.terms[key] = c

    @classmethod
    def monomial(cls, coeff, a: int, b: int = 0) -> "LogSeries":
        return cls({(a, b): coeff})

    def copy(self) -> "LogSeries":
        return LogSeries(dict(self.terms))

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, LogSeries):
            other = LogSeries.monomial(other, 0)
        out = dict(self.terms)
        for key, c in other.terms.items():
            out[key] = out[key] + c if key in out else c
        return LogSeries(out)

    __radd__ = __add__

    def __neg__(self):
        return LogSeries({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, LogSeries):
            return LogSeries({k: c * other for k, c in self.terms.items()})
        out = defaultdict(float)
        for (a1, b1), c1 in self.terms.items():
            for (a2, b2), c2 in other.terms.items():
                out[(a1 + a2, b1 + b2)] = out[(a1 + a2, b1 + b2)] + c1 * c2
        return LogSeries(dict(out))

    __rmul__ = __mul__

    def shift(self, k: int) -> "LogSeries":
        """Multiply by T^k."""
        return LogSeries({(a + k, b): c for (a, b), c in self.terms.items()})

    def mul_truncated(self, other: "LogSeries", max_order: int) -> "LogSeries":
        out = defaultdict(float)
        for (a1, b1), c1 in self.terms.items():
            for (a2, b2), c2 in other.terms.items():
                if a1 + a2 <= max_order:
                    out[(a1 + a2, b1 + b2)] = out[(a1 + a2, b1 + b2)] + c1 * c2
        return LogSeries(dict(out))

    # -- calculus -----------------------------------------------------------
    def dT(self) -> "LogSeries":
        """d/dT of T^a ln^b T = a T^(a-1) ln^b T + b T^(a-1) ln^(b-1) T."""
        out = defaultdict(float)
        for (a, b), c in self.terms.items():
            if a:
                out[(a - 1, b)] = out[(a - 1, b)] + a * c
            if b:
                out[(a - 1, b - 1)] = out[(a - 1, b - 1)] + b * c
        return LogSeries(dict(out))

    def D(self) -> "LogSeries":
        """Fuchsian derivative T d/dT."""
        return self.dT().shift(1)

    def map(self, fn: Callable) -> "LogSeries":
        """Apply a (linear, spatial) operator to every coefficient."""
        return LogSeries({k: fn(c) for k, c in self.terms.items()})

    # -- inspection ---------------------------------------------------------
    def orders(self) -> list[int]:
        return sorted({a for a, _ in self.terms})

    def select(self, lo: int | None = None, hi: int | None = None) -> "LogSeries":
        return LogSeries(
            {
                (a, b): c
                for (a, b), c in self.terms.items()
                if (lo is None or a >= lo) and (hi is None or a <= hi)
            }
        )

    def at_order(self, a: int) -> dict[int, np.ndarray]:
        return {b: c for (aa, b), c in self.terms.items() if aa == a}

    def sup(self, a: int) -> float:
        vals = [np.max(np.abs(c)) for c in self.at_order(a).values()]
        return float(max(vals)) if vals else 0.0

    def __call__(self, T):
        """Evaluate at T (> 0); T may be a scalar or a field."""
        lnT = np.log(T)
        total = 0.0
        for (a, b), c in self.terms.items():
            total = total + c * (T**a) * (lnT**b if b else 1.0)
        return total

    def compiled(self, shape: tuple[int, ...]) -> "CompiledSeries":
        return CompiledSeries(self, shape)

    def __repr__(self):
        keys = ", ".join(f"T^{a}ln^{b}" for a, b in sorted(self.terms))
        return f"LogSeries({keys})"


class CompiledSeries:
    """Fast repeated evaluation at scalar T: coefficients stacked once, one contraction per call."""

    def __init__(self, series: LogSeries, shape: tuple[int, ...]):
        keys = sorted(series.terms)
        self.a = np.array([k[0] for k in keys], float)
        self.b = np.array([k[1] for k in keys], float)
        self.empty = not keys
        if keys:
            self.C = np.stack([np.broadcast_to(series.terms[k], shape) for k in keys])
        else:
            self.C = np.zeros((1,) + tuple(shape))

    def __call__(self, T: float):
        if self.empty:
            return 0.0
        weights = T**self.a * np.log(T) ** self.b
        return np.tensordot(weights, self.C, axes=1)
