"""Brute-force order matching for the singular expansion (1-D).

Independent of ``expansion.compute_coefficients``: no recursion formula is
used. Every coefficient is a Taylor jet in the spatial displacement h at each
grid point (``jet[m] = f^(m)(x)/m!``), built from the exact derivatives of the
analytic psi, so spatial derivatives are exact shifts. The unknown u is a
polynomial in the two formal variables T and L = T ln T, with
dL/dT = L/T + 1. At each order the wave operator is applied to the whole trial
series, the balance is read off, and its dependence on the new unknown is
discovered numerically (it is affine), so the indicial factor and the
resonance are found, not assumed.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import ResonanceMismatch, ValidationError
from .surface import BlowupSurface

# --- Taylor jets (axis 0 = order) ------------------------------------------


def jet_mul(f, g):
    K = f.shape[0]
    out = np.zeros_like(f)
    for m in range(K):
        out[m] = np.einsum("i...,i...->...", f[: m + 1], g[m::-1])
    return out


def jet_recip(f):
    K = f.shape[0]
    r = np.zeros_like(f)
    r[0] = 1.0 / f[0]
    for m in range(1, K):
        r[m] = -r[0] * np.einsum("i...,i...->...", f[1 : m + 1], r[m - 1 :: -1])
    return r


def jet_sqrt(f):
    K = f.shape[0]
    s = np.zeros_like(f)
    s[0] = np.sqrt(f[0])
    for m in range(1, K):
        acc = np.einsum("i...,i...->...", s[1:m], s[m - 1 : 0 : -1]) if m > 1 else 0.0
        s[m] = (f[m] - acc) / (2 * s[0])
    return s


def jet_dx(f):
    """Derivative of a jet; the top level becomes unknown (NaN) so depth loss is visible."""
    out = np.full_like(f, np.nan)
    m = np.arange(1, f.shape[0]).reshape((-1,) + (1,) * (f.ndim - 1))
    out[:-1] = m * f[1:]
    return out


def jet_const(value, like):
    out = np.zeros_like(like)
    out[0] = value
    return out


# --- series in (T, L) -------------------------------------------------------


def _order(key):
    return key[0] + key[1]


def s_add(*series):
    out = defaultdict(lambda: 0.0)
    for s in series:
        for k, v in s.items():
            out[k] = out[k] + v
    return dict(out)


def s_scale(s, jet):
    return {k: jet_mul(v, jet) for k, v in s.items()}


def s_mul(s1, s2, max_order):
    out = {}
    for k1, v1 in s1.items():
        for k2, v2 in s2.items():
            k = (k1[0] + k2[0], k1[1] + k2[1])
            if _order(k) > max_order:
                continue
            prod = jet_mul(v1, v2)
            out[k] = out[k] + prod if k in out else prod
    return out


def s_dT(s):
    out = {}
    for (a, b), v in s.items():
        for k, coef in (((a - 1, b), a + b), ((a, b - 1), b)):
            if coef:
                out[k] = out[k] + coef * v if k in out else coef * v
    return out


def s_dx(s):
    return {k: jet_dx(v) for k, v in s.items()}


@dataclass
class OracleResult:
    coefficients: list  # per order j: {log power m: field}
    resonant_orders: list = field(default_factory=list)
    jets: list = field(default_factory=list, repr=False)

    def field(self, order: int, log_power: int = 0) -> np.ndarray:
        return self.coefficients[order].get(log_power, np.zeros_like(self.coefficients[0][0]))

    def as_expansion_list(self):
        """(u0, u1, u2, u3, u41) in the layout used by compute_coefficients."""
        return [self.field(0), self.field(1), self.field(2), self.field(3), self.field(4, 1)]


class _Problem:
    def __init__(self, s: BlowupSurface, depth: int):
        if s.n != 1:
            raise ValidationError("the order-matching oracle is 1-D only")
        K = depth
        p = np.stack([s.generator.derivative(s.grid.coords, (m,)) for m in range(K + 1)])
        fact = np.cumprod(np.r_[1.0, np.arange(1, K + 1)]).reshape(-1, 1)
        psi = p / fact
        self.dpsi = jet_dx(psi)
        self.ddpsi = jet_dx(self.dpsi)
        self.gamma = jet_const(1.0, psi) - jet_mul(self.dpsi, self.dpsi)
        self.one = jet_const(1.0, psi)
        self.zero = np.zeros_like(psi)

    def residual(self, u, max_order):
        """gamma u_TT - u_xx + 2 psi' (u_T)_x + psi'' u_T - 2 u^3, up to T-order max_order."""
        uT = s_dT(u)
        uTT = s_dT(uT)
        uxx = s_dx(s_dx(u))
        cube = s_mul(s_mul(u, u, max_order + 3), u, max_order)
        terms = [
            s_scale(uTT, self.gamma),
            {k: -v for k, v in uxx.items()},
            s_scale(s_dx(uT), 2 * self.dpsi),
            s_scale(uT, self.ddpsi),
            {k: -2 * v for k, v in cube.items()},
        ]
        out = s_add(*terms)
        return {k: v for k, v in out.items() if _order(k) <= max_order}


def _slot_key(j, m):
    # T^(j-1) ln^m T = T^(j-1-m) L^m
    return (j - 1 - m, m)


def order_matching_oracle(
    s: BlowupSurface,
    max_order: int = 6,
    allow_log: bool = True,
    tol: float = 1e-10,
    depth: int | None = None,
) -> OracleResult:
    """Coefficients of u = sum_j T^(j-1) sum_m c_{j,m} ln^m T, through order ``max_order``.

    The free datum at a resonant order is set to zero. ``allow_log=False`` forbids
    the log slot and is there to exercise ``ResonanceMismatch``.
    """
    prob = _Problem(s, depth or max_order + 5)
    scale = 1.0

    u = {_slot_key(0, 0): jet_sqrt(prob.gamma)}
    coeffs = [{0: u[_slot_key(0, 0)][0].copy()}]
    jets = [{0: u[_slot_key(0, 0)]}]
    resonant = []

    def component(trial, j, m):
        r = prob.residual(trial, j - 3)
        return r.get((j - 3 - m, m), prob.zero)

    for j in range(1, max_order + 1):
        slots: dict[int, np.ndarray] = {}

        def trial(extra=None):
            out = dict(u)
            for mm, v in {**slots, **(extra or {})}.items():
                out[_slot_key(j, mm)] = v
            return out

        base = prob.residual(trial(), j - 3)
        present = [k[1] for k, v in base.items() if _order(k) == j - 3 and np.nanmax(np.abs(v[0])) > tol * scale]
        top = max(present, default=0)
        for m in range(top, -1, -1):
            r = component(trial(), j, m)
            if np.nanmax(np.abs(r[0])) <= tol * scale:
                continue
            kappa = component(trial({m: prob.one}), j, m) - r
            if np.nanmax(np.abs(kappa[0])) > tol:
                slots[m] = -jet_mul(r, jet_recip(kappa))
                continue
            # degenerate indicial factor: the balance needs one more power of ln T
            if not allow_log or (m + 1) in slots:
                raise ResonanceMismatch(
                    f"order {j}: balance {np.nanmax(np.abs(r[0])):.3g} left at a degenerate order"
                )
            kappa1 = component(trial({m + 1: prob.one}), j, m) - r
            if np.nanmax(np.abs(kappa1[0])) <= tol:
                raise ResonanceMismatch(f"order {j}: log slot cannot absorb the balance")
            slots[m + 1] = -jet_mul(r, jet_recip(kappa1))
            if j not in resonant:
                resonant.append(j)
        # the resonant datum (w at T = 0) is left at zero
        for m, v in slots.items():
            u[_slot_key(j, m)] = v
        for m in range(top + 2):
            leftover = component(trial(), j, m)
            if np.nanmax(np.abs(leftover[0])) > 1e3 * tol:
                raise ResonanceMismatch(f"order {j}, ln^{m}: balance {np.nanmax(np.abs(leftover[0])):.3g} remains")
        coeffs.append({m: v[0].copy() for m, v in slots.items()})
        jets.append(slots)
    return OracleResult(coeffs, resonant, jets)


def indicial_factor(s: BlowupSurface, order: int) -> np.ndarray:
    """Coefficient multiplying a new T^(order-1) term in its own balance (found numerically)."""
    prob = _Problem(s, order + 5)
    res = order_matching_oracle(s, max_order=order - 1, depth=order + 5)
    u = {}
    for j, slots in enumerate(res.jets):
        for m, v in slots.items():
            u[_slot_key(j, m)] = v
    r0 = prob.residual(u, order - 3).get((order - 3, 0), prob.zero)
    u[_slot_key(order, 0)] = prob.one
    r1 = prob.residual(u, order - 3).get((order - 3, 0), prob.zero)
    return (r1 - r0)[0]


def truncation_residual(s: BlowupSurface, keep_order: int = 4, probe: int = 3):
    """First nonvanishing order of the residual when the series stops at ``keep_order``.

    Returns (exponent p, highest log power at that order, {log power: field}).
    The exponent is the power of T in the wave-equation residual.
    """
    depth = keep_order + probe + 5
    res = order_matching_oracle(s, max_order=keep_order, depth=depth)
    prob = _Problem(s, depth)
    u = {}
    for j, slots in enumerate(res.jets):
        for m, v in slots.items():
            u[_slot_key(j, m)] = v
    top = keep_order + probe - 3
    r = prob.residual(u, top)
    for order in range(-3, top + 1):
        comps = {k[1]: v[0] for k, v in r.items() if _order(k) == order}
        nonzero = {m: v for m, v in comps.items() if np.nanmax(np.abs(v)) > 1e-12}
        if nonzero:
            return order, max(nonzero), nonzero
    return None, None, {}
