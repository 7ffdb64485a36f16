"""Formal singular expansion of u near the blow-up surface.

With T = t - psi(x) the cubic wave equation reads

    gamma u_TT - Lap u + 2 grad(psi).grad(u_T) + Lap(psi) u_T = 2 u^3,

and is solved formally by

    u = u0/T + u1 + u2 T + u3 T^2 + u41 T^3 ln T + T^3 w.

Collecting T^(j-3) gives  gamma (j-4)(j+1) u_j + N_j = 0  with

    N_j = -2 C_j + (j-2)(2 grad psi . grad u_{j-1} + Lap psi u_{j-1}) - Lap u_{j-2},
    C_j = sum_{a+b+c=j, a,b,c<j} u_a u_b u_c,

so u_j = -N_j / (gamma (j-4)(j+1)) for j = 1, 2, 3. At j = 4 the factor
vanishes: the T^3 coefficient is free (it is w at T = 0) and the balance is
carried by the log term instead, 5 gamma u41 + N_4 = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .errors import DegenerateSurface, SliceThroughSingularity
from .logseries import LogSeries
from .surface import BlowupSurface

# drop Fourier modes below this fraction of the peak before each derivative
DERIV_FLOOR = 1e-15
GAMMA_FLOOR = 1e-2
RESONANT_ORDER = 4
# residual monomials below this (relative) size are cancelled balances
DEFECT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ExpansionCoefficients:
    u0: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    u41: np.ndarray
    grads: dict = field(repr=False)
    laps: dict = field(repr=False)

    NAMES = ("u0", "u1", "u2", "u3", "u41")

    def fields(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.NAMES}

    def negated(self) -> "ExpansionCoefficients":
        """Coefficients of -u, the branch with u0 = -sqrt(gamma); the recursion is odd."""
        flip = lambda d: {k: tuple(-g for g in v) if isinstance(v, tuple) else -v for k, v in d.items()}  # noqa: E731
        return ExpansionCoefficients(
            *(-getattr(self, name) for name in self.NAMES), grads=flip(self.grads), laps=flip(self.laps)
        )


def _cubic_sum(j, u):
    total = 0.0
    for a in range(j):
        for b in range(j):
            c = j - a - b
            if 0 <= c < j:
                total = total + u[a] * u[b] * u[c]
    return total


def compute_coefficients(s: BlowupSurface, gamma_floor: float = GAMMA_FLOOR) -> ExpansionCoefficients:
    grid = s.grid
    if s.gamma.min() < gamma_floor:
        raise DegenerateSurface(f"inf gamma = {s.gamma.min():.3g} below floor {gamma_floor}")
    gamma = s.gamma
    gpsi = s.grad_psi
    lpsi = s.laplacian_psi

    def grad(f):
        return spectral.gradient(f, grid, DERIV_FLOOR)

    def lap(f):
        return spectral.laplacian(f, grid, DERIV_FLOOR)

    u = [np.sqrt(gamma)]
    grads = [grad(u[0])]
    laps = [lap(u[0])]
    for j in range(1, RESONANT_ORDER + 1):
        transport = 2 * sum(p * g for p, g in zip(gpsi, grads[j - 1])) + lpsi * u[j - 1]
        N = -2 * _cubic_sum(j, u) + (j - 2) * transport
        if j >= 2:
            N = N - laps[j - 2]
        if j < RESONANT_ORDER:
            uj = -N / (gamma * (j - 4) * (j + 1))
        else:
            uj = -N / (5 * gamma)
        u.append(uj)
        grads.append(grad(uj))
        laps.append(lap(uj))

    names = ExpansionCoefficients.NAMES
    return ExpansionCoefficients(
        *u,
        grads=dict(zip(names, grads)),
        laps=dict(zip(names, laps)),
    )


def expansion_series(c: ExpansionCoefficients) -> LogSeries:
    """The truncated expansion (w = 0) as a series in T, ln T."""
    return LogSeries(
        {
            (-1, 0): c.u0,
            (0, 0): c.u1,
            (1, 0): c.u2,
            (2, 0): c.u3,
            (3, 1): c.u41,
        }
    )


def wave_operator_series(U: LogSeries, s: BlowupSurface, max_order: int | None = None) -> LogSeries:
    """gamma U_TT - Lap U + 2 grad psi . grad U_T + Lap psi U_T - 2 U^3, termwise in T."""
    grid = s.grid
    UT = U.dT()
    UTT = UT.dT()
    lapU = U.map(lambda f: spectral.laplacian(f, grid, DERIV_FLOOR))
    transport = 0.0
    for i, p in enumerate(s.grad_psi):
        transport = transport + UT.map(
            lambda f, i=i: spectral.derivative(f, grid, i, 1, DERIV_FLOOR)
        ) * (2 * p)
    if max_order is None:
        cube = U * U * U
    else:
        cube = U.mul_truncated(U, max_order + 3).mul_truncated(U, max_order)
    out = UTT * s.gamma - lapU + transport + UT * s.laplacian_psi - cube * 2.0
    return out if max_order is None else out.select(hi=max_order)


def evaluate_phi(c: ExpansionCoefficients, s: BlowupSurface, t: float):
    """(Phi, d_t Phi) on the slice t, where u = 1/t + Phi + T^3 w."""
    if t <= 0:
        raise SliceThroughSingularity(f"slice time must be positive, got {t}")
    T = t - s.psi
    if T.min() <= 0:
        raise SliceThroughSingularity(f"T = t - psi reaches {T.min():.3g} <= 0 on the slice t = {t}")
    lnT = np.log(T)
    phi = (c.u0 / T - 1.0 / t) + c.u1 + c.u2 * T + c.u3 * T**2 + c.u41 * T**3 * lnT
    phi_t = (-c.u0 / T**2 + 1.0 / t**2) + c.u2 + 2 * c.u3 * T + c.u41 * (T**2 + 3 * T**2 * lnT)
    return phi, phi_t


# ---------------------------------------------------------------------------
# residual diagnostics


@dataclass
class SeriesResidualReport:
    T: np.ndarray
    residual_sup: np.ndarray
    fitted_p: float
    log_correction: bool
    fitted_q: float = 0.0
    p_without_log: float = float("nan")
    p_with_log: float = float("nan")
    balance_defects: dict = field(default_factory=dict)

    def rows(self):
        for T, r in zip(self.T, self.residual_sup):
            yield {"T": float(T), "residual_sup": float(r), "fitted_p": self.fitted_p}


def fit_decay(T, r):
    """Fit log r against log T with and without a log|ln T| regressor; AIC picks one.

    Returns (p, log_flag, q, p_plain, p_log).
    """
    T = np.asarray(T, float)
    r = np.asarray(r, float)
    ok = r > 0
    T, r = T[ok], r[ok]
    if len(T) < 4:
        return float("nan"), False, 0.0, float("nan"), float("nan")
    y = np.log(r)
    X1 = np.column_stack([np.ones_like(T), np.log(T)])
    X2 = np.column_stack([X1, np.log(np.abs(np.log(T)))])
    results = []
    for X in (X1, X2):
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        rss = float(np.sum((X @ coef - y) ** 2))
        n, k = X.shape
        aic = n * np.log(max(rss, 1e-300) / n) + 2 * k
        results.append((coef, aic))
    (c1, aic1), (c2, aic2) = results
    use_log = aic2 < aic1
    p = c2[1] if use_log else c1[1]
    q = c2[2] if use_log else 0.0
    return float(p), bool(use_log), float(q), float(c1[1]), float(c2[1])


def residual_series(c: ExpansionCoefficients, s: BlowupSurface) -> LogSeries:
    return wave_operator_series(expansion_series(c), s)


def residual_order_check(
    c: ExpansionCoefficients, s: BlowupSurface, T_samples, defect_tol: float = DEFECT_TOL
) -> SeriesResidualReport:
    """Sup-norm of the residual of the truncated expansion at each sample T.

    Monomials whose coefficient is below ``defect_tol`` (relative to sup u0) are
    balances that cancel exactly in exact arithmetic; what is left of them is
    round-off in u0^2 - gamma and friends, amplified by T^-3 at small T. They are
    reported in ``balance_defects`` and left out of the evaluated residual.
    """
    T_samples = np.asarray(T_samples, float)
    res = residual_series(c, s)
    scale = max(float(np.max(np.abs(c.u0))), 1.0)
    defects = {}
    kept = LogSeries()
    for key, coeff in res.terms.items():
        size = float(np.max(np.abs(coeff))) / scale
        if size <= defect_tol:
            defects[key] = size
        else:
            kept.terms[key] = coeff
    sups = np.array([np.max(np.abs(kept(T))) if kept.terms else 0.0 for T in T_samples])
    if np.all(sups == 0):
        return SeriesResidualReport(T_samples, sups, float("nan"), False, balance_defects=defects)
    p, flag, q, p1, p2 = fit_decay(T_samples, sups)
    return SeriesResidualReport(T_samples, sups, p, flag, q, p1, p2, defects)


def log_samples(lo: float = 1e-3, hi: float = 1e-1, per_decade: int = 8) -> np.ndarray:
    """Decreasing T samples, ``per_decade`` per decade, from hi down to lo."""
    n = int(round(np.log10(hi / lo) * per_decade)) + 1
    return np.logspace(np.log10(hi), np.log10(lo), n)
