"""Marching the reduced system in tau = ln T from a series-seeded start to T = b."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BlowupInReducedSystem,
    OutOfRange,
    StepCollapse,
    ValidationError,
)
from .expansion import ExpansionCoefficients
from .reduced import (
    EnergyReading,
    ReducedState,
    ReducedSystem,
    energy,
    fuchsian_limit_Dw,
    null_state,
)
from .surface import BlowupSurface

MIN_DTAU = 1e-12


@dataclass(frozen=True)
class IntegratorConfig:
    T_start: float = 1e-3
    b: float = 13.0
    dtau_max: float = 0.02
    cfl: float = 0.5
    # cap on sup|dW| per step relative to sup|W|; None disables it
    max_increment: float | None = None
    shift: int = 0
    U_guard: float = 1e6
    seed_order: int = 3
    s_index: float = 3.0
    energy_every: int = 1

    def __post_init__(self):
        if not self.T_start > 0:
            raise ValidationError(f"T_start must be positive, got {self.T_start}")
        if not self.b > self.T_start:
            raise ValidationError(f"b = {self.b} must exceed T_start = {self.T_start}")
        if self.shift < 0:
            raise ValidationError("shift must be a nonnegative integer")

    def refined(self, factor: float = 2.0) -> "IntegratorConfig":
        """Same run with every step limit divided by ``factor``."""
        from dataclasses import replace

        return replace(
            self,
            dtau_max=self.dtau_max / factor,
            cfl=self.cfl / factor,
            max_increment=None if self.max_increment is None else self.max_increment / factor,
        )


@dataclass
class ReducedTrajectory:
    taus: np.ndarray
    states: np.ndarray  # (K, n + 2, *grid)
    derivs: np.ndarray  # D W at each checkpoint
    energy_log: list[EnergyReading] = field(default_factory=list)
    steps: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.exp(self.taus)

    @property
    def T_start(self) -> float:
        return float(np.exp(self.taus[0]))

    @property
    def T_end(self) -> float:
        return float(np.exp(self.taus[-1]))

    def state(self, k: int) -> ReducedState:
        return ReducedState(self.states[k], float(np.exp(self.taus[k])))

    def final(self) -> ReducedState:
        return self.state(-1)


def _hermite(y0, y1, f0, f1, h, s):
    s2, s3 = s * s, s * s * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def _locate(traj: ReducedTrajectory, tau):
    taus = traj.taus
    k = np.clip(np.searchsorted(taus, tau, side="right") - 1, 0, len(taus) - 2)
    return k


def sample(traj: ReducedTrajectory, T: float) -> ReducedState:
    """Dense output at a single T; bitwise the checkpoint when T is a node."""
    if not (traj.T_start <= T <= traj.T_end) and not np.isclose(T, traj.T_end, rtol=1e-14):
        raise OutOfRange(f"T = {T} outside [{traj.T_start}, {traj.T_end}]")
    tau = math.log(T)
    hit = np.nonzero(traj.taus == tau)[0]
    if hit.size:
        return traj.state(int(hit[0]))
    k = int(_locate(traj, tau))
    h = traj.taus[k + 1] - traj.taus[k]
    s = (tau - traj.taus[k]) / h
    y = _hermite(traj.states[k], traj.states[k + 1], traj.derivs[k], traj.derivs[k + 1], h, s)
    return ReducedState(y, T)


def sample_field(traj: ReducedTrajectory, T_field: np.ndarray) -> np.ndarray:
    """Each grid point read at its own time T_field[x]; returns (n + 2, *grid)."""
    T_field = np.asarray(T_field, float)
    lo, hi = traj.T_start, traj.T_end
    if T_field.min() < lo * (1 - 1e-14) or T_field.max() > hi * (1 + 1e-14):
        raise OutOfRange(
            f"requested T in [{T_field.min():.6g}, {T_field.max():.6g}], trajectory covers [{lo:.6g}, {hi:.6g}]"
        )
    tau = np.clip(np.log(T_field), traj.taus[0], traj.taus[-1])
    k = _locate(traj, tau)
    h = traj.taus[k + 1] - traj.taus[k]
    s = (tau - traj.taus[k]) / h
    m = traj.states.shape[1]
    flat_k = k.ravel()
    idx = np.arange(flat_k.size)
    out = np.empty((m, flat_k.size))
    ys = traj.states.reshape(traj.states.shape[0], m, -1)
    fs = traj.derivs.reshape(ys.shape)
    for r in range(m):
        out[r] = _hermite(
            ys[flat_k, r, idx], ys[flat_k + 1, r, idx], fs[flat_k, r, idx], fs[flat_k + 1, r, idx],
            h.ravel(), s.ravel(),
        )
    return out.reshape((m,) + T_field.shape)


def seed_state(system: ReducedSystem, w0: np.ndarray, T: float, order: int) -> np.ndarray:
    W = system.series_seed(w0, order)
    return np.stack([ser(T) * np.ones_like(w0) for ser in W])


def integrate(
    w0: np.ndarray,
    c: ExpansionCoefficients,
    s: BlowupSurface,
    cfg: IntegratorConfig = IntegratorConfig(),
    system: ReducedSystem | None = None,
) -> ReducedTrajectory:
    """Classical RK4 in tau from ln T_start to ln b."""
    w0 = np.asarray(w0, float) * np.ones(s.grid.shape)
    if not np.all(np.isfinite(w0)):
        raise ValidationError("w0 must be finite")
    system = system or ReducedSystem(s, c)
    base = null_state(w0, s.n)
    fuchsian_limit_Dw(base)

    h = cfg.shift
    Y0 = base.data
    tau = math.log(cfg.T_start)
    tau_end = math.log(cfg.b)
    Y = seed_state(system, w0, cfg.T_start, cfg.seed_order)
    dx = min(s.grid.spacing)
    speed = system.max_speed

    def F(tau_, Y_):
        return system.Dw(Y_, math.exp(tau_))

    if h:
        # Z = (W - W(0)) / T^h obeys DZ = T^-h DW - h Z
        def G(tau_, Z):
            T = math.exp(tau_)
            return F(tau_, Y0 + T**h * Z) / T**h - h * Z

        def to_Y(tau_, Z):
            return Y0 + math.exp(h * tau_) * Z

        Z = (Y - Y0) / cfg.T_start**h
    else:
        G = F

        def to_Y(tau_, Z):
            return Z

        Z = Y

    taus = [tau]
    states = [Y.copy()]
    derivs = [F(tau, Y)]
    elog = [energy(ReducedState(Y, cfg.T_start), s, cfg.s_index)]
    steps = 0
    while tau < tau_end:
        T = math.exp(tau)
        dt = min(cfg.dtau_max, cfg.cfl * dx / (T * speed))
        if cfg.max_increment is not None:
            rate = float(np.max(np.abs(derivs[-1])))
            size = float(np.max(np.abs(states[-1]))) + 1e-300
            if rate > 0:
                dt = min(dt, cfg.max_increment * size / rate)
        if dt < MIN_DTAU:
            raise StepCollapse(f"step {dt:.3g} in tau at T = {T:.6g}")
        if tau + dt >= tau_end or tau_end - (tau + dt) < 1e-3 * dt:
            dt = tau_end - tau
        k1 = G(tau, Z)
        k2 = G(tau + dt / 2, Z + dt / 2 * k1)
        k3 = G(tau + dt / 2, Z + dt / 2 * k2)
        k4 = G(tau + dt, Z + dt * k3)
        Z = Z + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        tau = tau_end if tau + dt >= tau_end else tau + dt
        steps += 1
        Y = to_Y(tau, Z)
        sup = float(np.max(np.abs(Y)))
        if not np.isfinite(sup) or sup > cfg.U_guard:
            raise BlowupInReducedSystem(
                f"sup|W| = {sup:.3g} exceeds guard {cfg.U_guard:.3g} at T = {math.exp(tau):.6g}"
            )
        taus.append(tau)
        states.append(Y.copy())
        derivs.append(F(tau, Y))
        if steps % cfg.energy_every == 0 or tau == tau_end:
            elog.append(energy(ReducedState(Y, math.exp(tau)), s, cfg.s_index))
    return ReducedTrajectory(np.array(taus), np.stack(states), np.stack(derivs), elog, steps)
