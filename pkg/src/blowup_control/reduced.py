"""Fuchsian reduced system for the unknown  W = (w, w_(0), w_(1..n)).

The first-order form of the wave equation in (X, T),

    d_T u = u_(0),
    gamma d_T u_(0) = sum_i (d_i u_(i) - 2 psi_i d_i u_(0)) - Lap(psi) u_(0) + 2 u^3,
    d_T u_(i) = d_i u_(0),

is rewritten for W through

    u     = P + T^3 w,      P  = u0/T + u1 + u2 T + u3 T^2 + u41 T^3 ln T,
    u_(0) = P0 + T^2 w_(0), P0 = d_T P,
    u_(i) = Pi + T^2 w_(i), Pi = d_i (P without the log term),

which gives  Q (D + A) W = T A^j d_j W + f  with D = T d_T. The change of
unknowns is carried out on (T, ln T) polynomials with field coefficients, so
the orders that cancel because of how u0..u41 were chosen are removed
exactly instead of being subtracted in floating point at small T.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import spectral
from .errors import NullSpaceViolation, SingularTime
from .expansion import DERIV_FLOOR, ExpansionCoefficients, expansion_series
from .logseries import LogSeries
from .surface import BlowupSurface

NULL_TOL = 1e-10


# ---------------------------------------------------------------------------
# matrices


@dataclass(frozen=True, eq=False)
class SystemMatrices:
    """Pointwise matrices, stored as arrays of shape (m, m, *grid) with m = n + 2."""

    Q: np.ndarray
    Aj: tuple[np.ndarray, ...]
    A: np.ndarray
    V: np.ndarray

    @property
    def size(self) -> int:
        return self.A.shape[0]


def constant_A(n: int) -> np.ndarray:
    m = n + 2
    A = np.zeros((m, m))
    A[0, 0], A[0, 1] = 3.0, -1.0
    A[1, 0], A[1, 1] = -6.0, 2.0
    for i in range(2, m):
        A[i, i] = 2.0
    return A


def assemble_matrices(s: BlowupSurface) -> SystemMatrices:
    n = s.n
    m = n + 2
    shape = s.grid.shape
    Q = np.zeros((m, m) + shape)
    V = np.zeros((m, m) + shape)
    Q[0, 0] = 1.0
    Q[1, 1] = s.gamma
    V[0, 0] = 6.0 * s.gamma
    V[1, 1] = 1.0
    for i in range(2, m):
        Q[i, i] = 1.0
        V[i, i] = 1.0
    Aj = []
    for j, pj in enumerate(s.grad_psi):
        M = np.zeros((m, m) + shape)
        M[1, 1] = -2.0 * pj
        M[1, 2 + j] = 1.0
        M[2 + j, 1] = 1.0
        Aj.append(M)
    return SystemMatrices(Q, tuple(Aj), constant_A(n), V)


def _pointwise(M: np.ndarray) -> np.ndarray:
    """(m, m, *grid) -> (points, m, m)."""
    m = M.shape[0]
    return np.moveaxis(M.reshape(m, m, -1), -1, 0)


def matrix_report(M: SystemMatrices, A: np.ndarray | None = None) -> dict:
    """Numbers behind the structural identities; ``A`` overrides the constant matrix."""
    A = M.A if A is None else np.asarray(A, float)
    m = M.size
    Q = _pointwise(M.Q)
    V = _pointwise(M.V)
    VQA = V @ Q @ A
    null = np.zeros(m)
    null[0], null[1] = 1.0, 3.0
    report = {
        "Q_asym": float(np.max(np.abs(Q - Q.transpose(0, 2, 1)))),
        "Q_min_eig": float(np.min(np.linalg.eigvalsh(Q))),
        "Aj_asym": max((float(np.max(np.abs(_pointwise(a) - _pointwise(a).transpose(0, 2, 1)))) for a in M.Aj), default=0.0),
        "VAj_minus_Aj": max((float(np.max(np.abs(V @ _pointwise(a) - _pointwise(a)))) for a in M.Aj), default=0.0),
        "VQA_asym": float(np.max(np.abs(VQA - VQA.transpose(0, 2, 1)))),
        "VQA_min_eig": float(np.min(np.linalg.eigvalsh(0.5 * (VQA + VQA.transpose(0, 2, 1))))),
        "A_spectrum": sorted(set(np.round(np.linalg.eigvals(A).real, 12).tolist())),
        "A_block_spectrum": sorted(np.round(np.linalg.eigvals(A[:2, :2]).real, 12).tolist()),
        "null_residual": float(np.max(np.abs(A @ null))),
    }
    return report


def matrix_identities_hold(report: dict, tol: float = 1e-12) -> bool:
    return (
        report["Q_asym"] == 0
        and report["Q_min_eig"] > 0
        and report["Aj_asym"] == 0
        and report["VAj_minus_Aj"] == 0
        and report["VQA_asym"] <= tol
        and report["VQA_min_eig"] >= -tol
        and report["A_spectrum"] == [0.0, 2.0, 5.0]
        and report["A_block_spectrum"] == [0.0, 5.0]
        and report["null_residual"] == 0
    )


def max_char_speed(s: BlowupSurface) -> float:
    """Largest |mu| with det(xi.A^j - mu Q) = 0 over unit xi: (1 + |grad psi|)/gamma."""
    return 1.0 / (1.0 - s.max_slope)


# ---------------------------------------------------------------------------
# state


@dataclass
class ReducedState:
    data: np.ndarray  # shape (n + 2, *grid)
    T: float

    @property
    def w(self):
        return self.data[0]

    @property
    def w_0(self):
        return self.data[1]

    @property
    def w_i(self):
        return tuple(self.data[2:])

    def copy(self) -> "ReducedState":
        return ReducedState(self.data.copy(), self.T)


def null_state(w0: np.ndarray, n: int, T: float = 0.0) -> ReducedState:
    """(w0, 3 w0, 0): the kernel of A, i.e. the admissible data at T = 0."""
    data = np.zeros((n + 2,) + np.shape(w0))
    data[0] = w0
    data[1] = 3.0 * w0
    return ReducedState(data, T)


def apply_A(data: np.ndarray, shift: float = 0.0) -> np.ndarray:
    out = np.empty_like(data)
    out[0] = (3.0 + shift) * data[0] - data[1]
    out[1] = -6.0 * data[0] + (2.0 + shift) * data[1]
    out[2:] = (2.0 + shift) * data[2:]
    return out


def solve_k_plus_A(rhs: np.ndarray, k: float) -> np.ndarray:
    """Solve (k + A) x = rhs pointwise; k + A is invertible for k > 0 (det = k(k+5))."""
    det = k * (k + 5.0)
    out = np.empty_like(rhs)
    out[0] = ((k + 2.0) * rhs[0] + rhs[1]) / det
    out[1] = (6.0 * rhs[0] + (k + 3.0) * rhs[1]) / det
    out[2:] = rhs[2:] / (k + 2.0)
    return out


# ---------------------------------------------------------------------------
# system


def _prune(ser: LogSeries) -> LogSeries:
    return LogSeries({k: v for k, v in ser.terms.items() if np.any(v != 0)})


class ReducedSystem:
    """Precomputed source polynomials for the reduced right-hand side on one surface."""

    def __init__(self, s: BlowupSurface, c: ExpansionCoefficients):
        self.surface = s
        self.coeffs = c
        self.grid = s.grid
        self.n = s.n
        grid = s.grid
        gamma = s.gamma

        P = expansion_series(c)
        P0 = P.dT()
        # companion series for u_(i): spatial derivatives of the non-log part
        nonlog = LogSeries({k: v for k, v in P.terms.items() if k[1] == 0})
        Pi = [
            nonlog.map(lambda f, i=i: spectral.derivative(f, grid, i, 1, DERIV_FLOOR))
            for i in range(self.n)
        ]
        self.P, self.P0, self.Pi = P, P0, Pi

        # row w_(0): gamma d_T u_(0) - RHS(u) with u = expansion only
        div_Pi = sum(
            (p.map(lambda f, i=i: spectral.derivative(f, grid, i, 1, DERIV_FLOOR)) for i, p in enumerate(Pi)),
            LogSeries(),
        )
        transport = LogSeries()
        for i, pi in enumerate(s.grad_psi):
            transport = transport + P0.map(
                lambda f, i=i: spectral.derivative(f, grid, i, 1, DERIV_FLOOR)
            ) * (2.0 * pi)
        source = div_Pi - transport - P0 * s.laplacian_psi + P * P * P * 2.0 - P0.dT() * gamma
        # orders T^-3 .. T^1 vanish by construction of u0..u41
        self.balance_defects = {k: float(np.max(np.abs(v))) for k, v in source.terms.items() if k[0] <= 1}
        self.E_over_T = _prune(source.select(lo=2).shift(-1))

        # 2 (P + T^3 w)^3 - 2 P^3 = sum_k 2 C(3,k) P^(3-k) T^(3k) w^k, divided by T;
        # the O(1) part of the k = 1 term (6 gamma w) belongs to A
        powers = {0: LogSeries.monomial(1.0, 0), 1: P, 2: P * P}
        cubic = {}
        for k in (1, 2, 3):
            cubic[k] = (powers[3 - k] * (2.0 * comb(3, k))).shift(3 * k - 1)
        cubic[1] = cubic[1].select(lo=1)
        self.cubic = {k: _prune(v) for k, v in cubic.items()}

        # row w_(i): d_T u_(i) = d_i u_(0); the log term of P0 is not in Pi
        g41 = c.grads["u41"]
        self.row_i_source = [
            LogSeries({(1, 0): g, (1, 1): 3.0 * g}) for g in g41
        ]

        self.max_speed = max_char_speed(s)
        shape = grid.shape
        self._E = self.E_over_T.compiled(shape)
        self._cubic = {k: v.compiled(shape) for k, v in self.cubic.items() if v.terms}
        self._row_i = [r.compiled(shape) for r in self.row_i_source]

    # -- helpers --------------------------------------------------------------
    def _d(self, f, i):
        return spectral.derivative(f, self.grid, i, 1)

    def rhs_parts(self, data: np.ndarray, T: float) -> np.ndarray:
        """G(W, T) = D W + A W, i.e. Q^{-1}(T A^j d_j W + f)."""
        s = self.surface
        w, w0 = data[0], data[1]
        wi = data[2:]
        out = np.zeros_like(data)
        grad_w0 = [self._d(w0, i) for i in range(self.n)]
        div_wi = sum(self._d(wi[i], i) for i in range(self.n))
        spatial = div_wi - 2.0 * sum(p * g for p, g in zip(s.grad_psi, grad_w0)) - s.laplacian_psi * w0
        row1 = T * spatial + self._E(T)
        for k, ev in self._cubic.items():
            row1 = row1 + ev(T) * w**k
        out[1] = row1 / s.gamma
        for i in range(self.n):
            out[2 + i] = T * grad_w0[i] + self._row_i[i](T)
        return out

    def Dw(self, data: np.ndarray, T: float) -> np.ndarray:
        if T <= 0:
            raise SingularTime("D W is singular at T = 0; use fuchsian_limit_Dw")
        return self.rhs_parts(data, T) - apply_A(data)

    # -- series version used for the start-up seed -------------------------------
    def rhs_parts_series(self, W: list[LogSeries], max_order: int) -> list[LogSeries]:
        s = self.surface
        grid = self.grid
        w, w0 = W[0], W[1]
        wi = W[2:]

        def d(ser, i):
            return ser.map(lambda f: spectral.derivative(f, grid, i, 1))

        grad_w0 = [d(w0, i) for i in range(self.n)]
        div_wi = sum((d(wi[i], i) for i in range(self.n)), LogSeries())
        spatial = div_wi - sum(
            (g * (2.0 * p) for p, g in zip(s.grad_psi, grad_w0)), LogSeries()
        ) - w0 * s.laplacian_psi
        row1 = spatial.shift(1) + self.E_over_T
        wpow = w
        for k in (1, 2, 3):
            if k > 1:
                wpow = wpow.mul_truncated(w, max_order)
            row1 = row1 + self.cubic[k].mul_truncated(wpow, max_order)
        row1 = (row1 * (1.0 / s.gamma)).select(hi=max_order)
        rows = [LogSeries(), row1]
        for i in range(self.n):
            rows.append((grad_w0[i].shift(1) + self.row_i_source[i]).select(hi=max_order))
        return rows

    def series_seed(self, w0: np.ndarray, order: int = 3) -> list[LogSeries]:
        """Formal solution W = W(0) + sum_{k>=1} T^k sum_m c_{k,m} ln^m T through T^order."""
        base = null_state(w0, self.n).data
        W = [LogSeries.monomial(base[r].copy(), 0) for r in range(self.n + 2)]
        for k in range(1, order + 1):
            G = self.rhs_parts_series(W, k)
            comps = {}
            for r, ser in enumerate(G):
                for (a, b), c in ser.terms.items():
                    if a == k:
                        comps.setdefault(b, np.zeros_like(base))
                        comps[b][r] = comps[b][r] + c
            if not comps:
                continue
            top = max(comps)
            sol = {}
            for m in range(top, -1, -1):
                rhs = comps.get(m, np.zeros_like(base))
                if m + 1 in sol:
                    rhs = rhs - (m + 1) * sol[m + 1]
                sol[m] = solve_k_plus_A(rhs, float(k))
            for m, vec in sol.items():
                for r in range(self.n + 2):
                    W[r] = W[r] + LogSeries.monomial(vec[r], k, m)
        return W


def fuchsian_limit_Dw(state: ReducedState, tol: float = NULL_TOL) -> np.ndarray:
    """T -> 0+ limit of D W. On ker A with a source that vanishes at T = 0 it is zero."""
    residual = apply_A(state.data)
    scale = max(1.0, float(np.max(np.abs(state.data))))
    if np.max(np.abs(residual)) > tol * scale:
        raise NullSpaceViolation(f"|A W(0)| = {np.max(np.abs(residual)):.3g}; need W(0) in ker A")
    return np.zeros_like(state.data)


def evaluate_Dw(
    state: ReducedState, system: ReducedSystem, T: float | None = None, route: str = "series"
) -> np.ndarray:
    """D W at time T.

    ``route="series"`` uses the precomputed polynomials (valid down to T -> 0);
    ``route="direct"`` reconstructs u and differentiates it through the wave system.
    """
    T = state.T if T is None else T
    if T <= 0:
        raise SingularTime("D W is singular at T = 0; use fuchsian_limit_Dw")
    if route == "direct":
        return evaluate_Dw_direct(state, system, T)
    return system.Dw(state.data, T)


# ---------------------------------------------------------------------------
# reconstruction and the literal route


def reconstruct_u(state: ReducedState, system: ReducedSystem, T: float | None = None):
    """(u, u_(0), [u_(i)]) from the reduced unknowns at time T."""
    T = state.T if T is None else T
    if T <= 0:
        raise SingularTime("reconstruction needs T > 0")
    u = system.P(T) + T**3 * state.w
    u0 = system.P0(T) + T**2 * state.w_0
    ui = [p(T) + T**2 * wi for p, wi in zip(system.Pi, state.w_i)]
    return u, u0, ui


def evaluate_Dw_direct(state: ReducedState, system: ReducedSystem, T: float | None = None) -> np.ndarray:
    """D W by reconstructing u, stepping the first-order wave system, and inverting.

    Numerically meaningful only where T^3 w is not lost against u (moderate T);
    it is the cross-check for the polynomial route in ``ReducedSystem.Dw``.
    """
    T = state.T if T is None else T
    s = system.surface
    grid = system.grid
    u, u0, ui = reconstruct_u(state, system, T)
    d = lambda f, i: spectral.derivative(f, grid, i, 1)  # noqa: E731
    ut = u0
    u0t = (
        sum(d(ui[i], i) - 2.0 * s.grad_psi[i] * d(u0, i) for i in range(system.n))
        - s.laplacian_psi * u0
        + 2.0 * u**3
    ) / s.gamma
    uit = [d(u0, i) for i in range(system.n)]
    out = np.empty_like(state.data)
    out[0] = (ut - system.P.dT()(T)) / T**2 - 3.0 * state.w
    out[1] = (u0t - system.P0.dT()(T)) / T - 2.0 * state.w_0
    for i in range(system.n):
        out[2 + i] = (uit[i] - system.Pi[i].dT()(T)) / T - 2.0 * state.w_i[i]
    return out


# ---------------------------------------------------------------------------
# energies


@dataclass
class EnergyReading:
    T: float
    e0: float
    es: float
    sup_norm: float

    def as_dict(self):
        return {"T": self.T, "e0": self.e0, "es": self.es, "sup": self.sup_norm}


def weighted_product(a: np.ndarray, b: np.ndarray, s: BlowupSurface) -> float:
    """(a, VQ b) in L2 with VQ = diag(6 gamma, gamma, 1, ..., 1)."""
    g = s.gamma
    dens = 6.0 * g * a[0] * b[0] + g * a[1] * b[1] + np.sum(a[2:] * b[2:], axis=0)
    return float(np.sum(dens) * s.grid.cell_volume)


def energy(state: ReducedState, s: BlowupSurface, s_index: float = 0.0) -> EnergyReading:
    e0 = weighted_product(state.data, state.data, s)
    if s_index == 0:
        es = e0
    else:
        Sd = np.stack([spectral.apply_S(f, s_index, s.grid) for f in state.data])
        es = weighted_product(Sd, Sd, s)
    return EnergyReading(state.T, e0, es, float(np.max(np.abs(state.data))))


def energy_rate(state: ReducedState, system: ReducedSystem) -> float:
    """D e0 = 2 (W, VQ D W); VQ does not depend on T."""
    return 2.0 * weighted_product(state.data, system.Dw(state.data, state.T), system.surface)
