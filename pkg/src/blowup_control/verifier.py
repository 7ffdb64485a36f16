"""Direct solve of u_tt = Lap u + 2 u^3 from Cauchy data, with a per-point blow-up map.

Time stepping is leapfrog in kick-drift-kick form with the nonlinearity taken
at the current level, and a second-order finite-difference Laplacian. The step
is dt = min(cfl dx, kappa / max|u|), so the last decades before blow-up are
resolved. A point is declared blown up when |u| first crosses U_max; the time
is read off by interpolating 1/|u| linearly between steps. Points beyond the
top of the threshold ladder are frozen and neighbours see a linear
extrapolation instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CFLViolation, FitFailure, ImmediateOverflow, NumericalError, ValidationError
from .surface import GridSpec

LADDER = (1e3, 1e4, 1e5)
FIT_TOL = 0.1


@dataclass(frozen=True)
class SolverConfig:
    t_max: float = 20.0
    cfl: float = 0.9
    kappa: float = 0.02
    U_max: float = 1e4
    ladder: tuple[float, ...] = LADDER
    # stop once this fraction of points is past the top of the ladder (after all snapshots)
    stop_fraction: float | None = None
    snapshot_times: tuple[float, ...] = ()
    energy_every: int = 0
    # coefficient of u^3; 0 gives the linear wave equation
    coupling: float = 2.0

    def refined(self, factor: float = 2.0) -> "SolverConfig":
        from dataclasses import replace

        return replace(self, kappa=self.kappa / factor)


@dataclass
class BlowupMap:
    times: np.ndarray  # first crossing of U_max, inf if none
    sign: np.ndarray  # +1 / -1, 0 where finite
    U_max: float
    ladder: tuple[float, ...]
    crossings: np.ndarray  # (len(ladder), *grid)
    monotone: np.ndarray  # |u| nondecreasing over the last 10 steps before crossing U_max
    extrapolated: np.ndarray | None = None
    fit_failed: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def first_time(self) -> float:
        return float(np.min(self.times))

    def best_times(self) -> np.ndarray:
        return self.times if self.extrapolated is None else self.extrapolated

    def rows(self, grid: GridSpec):
        x = grid.coords
        for idx in np.ndindex(self.times.shape):
            row = {f"x{i}" if grid.n > 1 else "x": float(c[idx]) for i, c in enumerate(x)}
            row["t_blow"] = float(self.times[idx])
            row["sign"] = int(self.sign[idx])
            if self.extrapolated is not None:
                row["t_extrapolated"] = float(self.extrapolated[idx])
            yield row


@dataclass
class DirectSolveResult:
    map: BlowupMap
    t: float
    u: np.ndarray
    ut: np.ndarray
    steps: int
    snapshots: dict = field(default_factory=dict)
    probe_times: np.ndarray | None = None
    probe_values: np.ndarray | None = None
    energy_log: list = field(default_factory=list)


# ---------------------------------------------------------------------------


def discrete_energy(u, ut, grid: GridSpec, coupling: float = 2.0) -> float:
    """sum (u_t^2 + |grad u|^2 - (coupling/2) u^4) dV with forward differences; conserved by the flow."""
    dens = ut**2 - 0.5 * coupling * u**4
    for ax, h in enumerate(grid.spacing):
        dens = dens + ((np.roll(u, -1, axis=ax) - u) / h) ** 2
    return float(np.sum(dens) * grid.cell_volume)


def _laplacian_periodic(u, frozen, spacing):
    lap = np.zeros_like(u)
    any_frozen = frozen is not None and frozen.any()
    for ax, h in enumerate(spacing):
        up = np.roll(u, -1, axis=ax)
        dn = np.roll(u, 1, axis=ax)
        if any_frozen:
            fu = np.roll(frozen, -1, axis=ax)
            fd = np.roll(frozen, 1, axis=ax)
            up_g = np.where(fu, np.where(fd, u, 2 * u - dn), up)
            dn_g = np.where(fd, np.where(fu, u, 2 * u - up), dn)
            up, dn = up_g, dn_g
        lap += (up - 2 * u + dn) / h**2
    return lap


def _laplacian_interval(u, frozen, h):
    """Second difference on interior points; the two ends carry boundary data."""
    lap = np.zeros_like(u)
    up, mid, dn = u[2:], u[1:-1], u[:-2]
    if frozen is not None and frozen.any():
        fu, fd = frozen[2:], frozen[:-2]
        up_g = np.where(fu, np.where(fd, mid, 2 * mid - dn), up)
        dn_g = np.where(fd, np.where(fu, mid, 2 * mid - up), dn)
        up, dn = up_g, dn_g
    lap[1:-1] = (up - 2 * mid + dn) / h**2
    return lap


def _as_data(record):
    if isinstance(record, tuple):
        u, ut, grid = record
    else:
        u, ut, grid = record.u, record.ut, record.grid
    return np.array(u, float), np.array(ut, float), grid


def solve_direct(
    record,
    cfg: SolverConfig = SolverConfig(),
    mode: str = "periodic",
    trace=None,
    probes: tuple[int, ...] = (),
) -> DirectSolveResult:
    """March the data forward and map where and when |u| crosses U_max.

    ``record`` is a CauchyDataRecord or a tuple (u, ut, grid). In ``dirichlet``
    mode ``trace`` (a BoundaryTraceRecord) fixes u at its two boundary points and
    only the grid points between them are evolved.
    """
    u, v, grid = _as_data(record)
    ladder = tuple(sorted(set(cfg.ladder) | {cfg.U_max}))
    top = ladder[-1]
    h_min = min(grid.spacing)
    if cfg.cfl * np.sqrt(grid.n) > 1.0 or cfg.cfl <= 0:
        raise CFLViolation(f"CFL number {cfg.cfl} is outside (0, 1/sqrt(n)] for the leapfrog scheme")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ValidationError("Cauchy data must be finite")
    if np.max(np.abs(u)) >= cfg.U_max:
        raise ImmediateOverflow(f"data already reach |u| = {np.max(np.abs(u)):.3g} >= U_max")

    if mode == "dirichlet":
        if trace is None or grid.n != 1:
            raise ValidationError("dirichlet mode needs a 1-D boundary trace")
        i0, i1 = (int(i) for i in trace.indices)
        u, v = u[i0 : i1 + 1].copy(), v[i0 : i1 + 1].copy()
        h = grid.spacing[0]
        bc = trace.at

        def lap(f, frozen):
            return _laplacian_interval(f, frozen, h)

        u[[0, -1]] = bc(0.0)
        fixed = np.zeros(u.shape, bool)
        fixed[[0, -1]] = True
    elif mode == "periodic":
        spacing = grid.spacing

        def lap(f, frozen):
            return _laplacian_periodic(f, frozen, spacing)

        fixed = np.zeros(u.shape, bool)
    else:
        raise ValidationError(f"unknown mode {mode!r}")

    shape = u.shape
    crossings = np.full((len(ladder),) + shape, np.inf)
    sign = np.zeros(shape, int)
    monotone = np.zeros(shape, bool)
    frozen = np.zeros(shape, bool)
    ring = np.repeat(np.abs(u)[None], 10, axis=0)
    kU = ladder.index(cfg.U_max)

    stops = sorted(t for t in cfg.snapshot_times if 0 < t < cfg.t_max)
    snapshots = {}
    t = 0.0
    steps = 0
    probe_t = [0.0]
    probe_v = [u[list(probes)].copy()] if probes else []
    elog = []

    def accel(f):
        a = lap(f, frozen) + cfg.coupling * (f * f * f)
        a[frozen | fixed] = 0.0
        return a

    a = accel(u)
    while t < cfg.t_max:
        active = ~frozen & ~fixed
        if not active.any():
            break
        umax = float(np.max(np.abs(u[active])))
        dt = min(cfg.cfl * h_min, cfg.kappa / max(umax, 1e-300), cfg.t_max - t)
        if stops and t + dt >= stops[0]:
            dt = stops[0] - t
        u_old = u.copy()
        v_half = v + 0.5 * dt * a
        u = u + dt * v_half
        u[frozen] = u_old[frozen]
        t_new = t + dt
        if mode == "dirichlet":
            u[[0, -1]] = bc(t_new)
        a = accel(u)
        v = v_half + 0.5 * dt * a
        v[frozen] = 0.0
        steps += 1

        au = np.abs(u)
        ring = np.roll(ring, -1, axis=0)
        ring[-1] = au
        for k, U in enumerate(ladder):
            new = active & (au >= U) & ~np.isfinite(crossings[k])
            if new.any():
                ia = 1.0 / np.abs(u_old[new])
                ib = 1.0 / au[new]
                frac = np.clip((ia - 1.0 / U) / (ia - ib), 0.0, 1.0)
                crossings[k][new] = t + frac * dt
                if k == kU:
                    sign[new] = np.sign(u[new]).astype(int)
                    monotone[new] = np.all(np.diff(ring[:, new], axis=0) >= 0, axis=0)
        newly_frozen = active & (au >= top)
        if newly_frozen.any():
            frozen |= newly_frozen
            v[frozen] = 0.0
            a = accel(u)
        if not np.all(np.isfinite(u[~frozen])):
            raise NumericalError(f"non-finite values away from frozen points at t = {t_new:.6g}")
        t = t_new
        if probes:
            probe_t.append(t)
            probe_v.append(u[list(probes)].copy())
        if cfg.energy_every and steps % cfg.energy_every == 0:
            elog.append((t, discrete_energy(u, v, grid, cfg.coupling) if mode == "periodic" else float("nan")))
        if stops and np.isclose(t, stops[0], rtol=0, atol=1e-14):
            snapshots[stops.pop(0)] = u.copy()
        if cfg.stop_fraction is not None and not stops:
            # wait for the whole ladder so the earliest points can be extrapolated
            if np.mean(np.isfinite(crossings[-1][~fixed])) >= cfg.stop_fraction:
                break

    times = crossings[kU]
    bmap = BlowupMap(
        times=times,
        sign=sign,
        U_max=cfg.U_max,
        ladder=ladder,
        crossings=crossings,
        monotone=monotone,
        meta={"points": list(shape), "dx": h_min, "dt0": cfg.cfl * h_min, "kappa": cfg.kappa, "mode": mode},
    )
    bmap.extrapolated, bmap.fit_failed = extrapolate_map(crossings, ladder, times)
    return DirectSolveResult(
        bmap,
        t,
        u,
        v,
        steps,
        snapshots,
        np.array(probe_t) if probes else None,
        np.array(probe_v) if probes else None,
        elog,
    )


# ---------------------------------------------------------------------------
# refining crossing times with the local model u ~ C/(t_b - t)


def _fit_tb(t_points, inv_u):
    """Least squares of t = t_b - C (1/|u|); returns (t_b, relative residual)."""
    X = np.column_stack([np.ones_like(inv_u), -inv_u])
    coef, *_ = np.linalg.lstsq(X, t_points, rcond=None)
    tb, C = coef
    span = tb - np.min(t_points)
    if not (C > 0 and span > 0):
        return tb, np.inf
    resid = np.max(np.abs(X @ coef - t_points)) / span
    return tb, resid


def extrapolate_map(crossings, ladder, raw):
    """Per-point extrapolated blow-up time; raw crossing kept where the fit fails."""
    inv = 1.0 / np.asarray(ladder)
    out = raw.copy()
    failed = np.zeros(raw.shape, bool)
    done = np.all(np.isfinite(crossings), axis=0)
    if not done.any():
        return out, failed
    tk = crossings[:, done]  # (L, m)
    X = np.column_stack([np.ones_like(inv), -inv])
    coef, *_ = np.linalg.lstsq(X, tk, rcond=None)
    tb, C = coef
    span = tb - tk.min(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        resid = np.max(np.abs(X @ coef - tk), axis=0) / span
    bad = ~((C > 0) & (span > 0) & (resid <= FIT_TOL))
    vals = np.where(bad, raw[done], tb)
    out[done] = vals
    failed[done] = bad
    return out, failed


def threshold_extrapolation(t, u, ladder=LADDER) -> float:
    """Blow-up time of one point from its history, assuming u ~ C/(t_b - t) at the end.

    Uses the interpolated crossings of the ladder thresholds, or the samples of the
    final increasing run above ladder[0]/10 when fewer than two thresholds were
    crossed. Raises FitFailure if |u| never got near the ladder or the model fits
    worse than 10%.
    """
    t = np.asarray(t, float)
    au = np.abs(np.asarray(u, float))
    pts_t, pts_inv = [], []
    for U in ladder:
        hit = np.nonzero(au >= U)[0]
        if hit.size and hit[0] > 0:
            j = hit[0]
            ia, ib = 1.0 / au[j - 1], 1.0 / au[j]
            frac = (ia - 1.0 / U) / (ia - ib)
            pts_t.append(t[j - 1] + frac * (t[j] - t[j - 1]))
            pts_inv.append(1.0 / U)
    if len(pts_t) < 2:
        # final monotone run
        start = len(au) - 1
        while start > 0 and au[start - 1] <= au[start]:
            start -= 1
        sel = np.arange(start, len(au))
        sel = sel[au[sel] >= ladder[0] / 10]
        if sel.size < 3:
            raise FitFailure("|u| never approached the threshold ladder")
        pts_t, pts_inv = t[sel], 1.0 / au[sel]
    tb, resid = _fit_tb(np.asarray(pts_t), np.asarray(pts_inv))
    if not resid <= FIT_TOL:
        raise FitFailure(f"1/(t_b - t) model misfit {resid:.3g}")
    return float(tb)


@dataclass
class BlowupComparison:
    max_error: float
    n_points: int
    argmin_index: tuple
    argmin_x: tuple
    argmin_in_K: bool
    quantile_time: float
    used_extrapolated: bool

    def as_dict(self):
        return dict(self.__dict__)


def compare_blowup(
    bmap: BlowupMap,
    predicted: np.ndarray,
    K: np.ndarray,
    grid: GridSpec | None = None,
    quantile: float = 0.1,
    use_extrapolated: bool = True,
) -> BlowupComparison:
    times = bmap.best_times() if use_extrapolated else bmap.times
    finite = np.isfinite(times)
    if not finite.any():
        raise ValidationError("no point blew up; nothing to compare")
    ordered = np.sort(times.ravel())
    q = ordered[max(int(np.ceil(quantile * ordered.size)) - 1, 0)]
    if not np.isfinite(q):
        q = ordered[finite.ravel().sum() - 1]
    sel = finite & (times <= q)
    err = float(np.max(np.abs(times[sel] - predicted[sel])))
    idx = np.unravel_index(np.argmin(np.where(finite, times, np.inf)), times.shape)
    dil = K.astype(bool).copy()
    for ax in range(K.ndim):
        dil |= np.roll(K, 1, axis=ax).astype(bool) | np.roll(K, -1, axis=ax).astype(bool)
    xs = tuple(float(c[idx]) for c in grid.coords) if grid is not None else ()
    return BlowupComparison(err, int(sel.sum()), tuple(int(i) for i in idx), xs, bool(dil[idx]), float(q), use_extrapolated)
