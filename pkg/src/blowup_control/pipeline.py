"""From singularity data (psi, w0) to small Cauchy data that blow up on K.

The solution u = 1/t + Phi + T^3 w is built on the slice t = alpha, reversed in
time so that it starts at t = 0 and blows up first at t = alpha on the zero set
of psi, and its norm is split into the parts coming from 1/t, Phi and T^3 w.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import spectral
from .errors import BlowupControlError, BlowupReachedBoundary, TrajectoryTooShort, ValidationError
from .expansion import ExpansionCoefficients, compute_coefficients
from .integrator import IntegratorConfig, ReducedTrajectory, integrate, sample_field
from .reduced import ReducedSystem
from .surface import BlowupSurface, GridSpec, SurfaceGenerator, build_surface, zero_set_indicator

ALPHA_START = 2.5
ALPHA_STEP = 0.5


@dataclass
class ControlBudget:
    epsilon: float
    alpha: float
    norm_exact: float
    norm_phi: float
    norm_tail: float
    total: float

    @property
    def passed(self) -> bool:
        eps = self.epsilon
        return self.norm_exact < eps / 4 and self.norm_phi < eps / 4 and self.norm_tail < eps / 2

    def violators(self) -> list[str]:
        eps = self.epsilon
        limits = {"norm_exact": eps / 4, "norm_phi": eps / 4, "norm_tail": eps / 2}
        return [k for k, lim in limits.items() if not getattr(self, k) < lim]

    def as_dict(self) -> dict:
        out = asdict(self)
        out["pass"] = self.passed
        return out


@dataclass
class CauchyDataRecord:
    """Data (u, u_t) at t = 0 after reversal, plus the three parts it is made of."""

    u: np.ndarray
    ut: np.ndarray
    alpha: float
    grid: GridSpec
    s0: float = 2.0
    parts: dict = field(default_factory=dict, repr=False)
    budget: ControlBudget | None = None
    provenance: dict = field(default_factory=dict)
    slice_time: float = 0.0

    def to_json(self) -> dict:
        return {
            "slice_time": self.slice_time,
            "alpha": self.alpha,
            "s0": self.s0,
            "grid": self.grid.describe(),
            "x": [a.tolist() for a in (self.grid.axis(i) for i in range(self.grid.n))],
            "u": self.u.tolist(),
            "ut": self.ut.tolist(),
            "budget": None if self.budget is None else self.budget.as_dict(),
            "provenance": self.provenance,
        }


@dataclass
class BoundaryTraceRecord:
    omega: tuple[float, float]
    points: np.ndarray  # boundary coordinates
    indices: np.ndarray  # grid indices of the boundary points
    times: np.ndarray
    values: np.ndarray  # (len(times), len(points))

    def rows(self):
        for k, t in enumerate(self.times):
            for j, x in enumerate(self.points):
                yield {"t": float(t), "boundary_point": float(x), "value": float(self.values[k, j])}

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation in t of the boundary values."""
        return np.array([np.interp(t, self.times, self.values[:, j]) for j in range(len(self.points))])


@dataclass
class ConstructedSlice:
    u: np.ndarray
    ut: np.ndarray
    T: np.ndarray
    trajectory: ReducedTrajectory | None
    parts: dict


# ---------------------------------------------------------------------------


def exact_part_norm(alpha: float, grid: GridSpec) -> float:
    """Pair norm of (1/alpha, -1/alpha^2): constants only see the zero mode."""
    return math.sqrt(grid.volume) * (1.0 / alpha + 1.0 / alpha**2)


def choose_alpha(epsilon: float, s0: float = 2.0, grid: GridSpec | None = None) -> float:
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    grid = grid or GridSpec()
    alpha = ALPHA_START
    while not exact_part_norm(alpha, grid) < epsilon / 4:
        alpha += ALPHA_STEP
    return alpha


def bump_profile(grid: GridSpec, radius: float = 1.0, center: tuple[float, ...] | None = None) -> np.ndarray:
    """exp(1 - 1/(1 - r^2/radius^2)) inside the ball, 0 outside; peak value 1."""
    center = center or (0.0,) * grid.n
    q = sum((x - c) ** 2 for x, c in zip(grid.coords, center)) / radius**2
    inside = q < 1
    out = np.zeros(grid.shape)
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - q[inside]))
    return out


def construct_solution(
    s: BlowupSurface,
    w0,
    alpha: float,
    cfg: IntegratorConfig | None = None,
    coeffs: ExpansionCoefficients | None = None,
    system: ReducedSystem | None = None,
) -> ConstructedSlice:
    """u and u_t on the slice t = alpha, where T(x) = alpha - psi(x)."""
    if not alpha > 2:
        raise ValidationError(f"alpha must exceed 2, got {alpha}")
    zero_set_indicator(s)  # psi <= 0
    cfg = cfg or IntegratorConfig(b=alpha + 2.0)
    T = alpha - s.psi
    if cfg.b < T.max():
        raise TrajectoryTooShort(f"b = {cfg.b} < alpha - min psi = {T.max():.6g}")
    w0 = np.asarray(w0, float) * np.ones(s.grid.shape)
    exact = (np.full(s.grid.shape, 1.0 / alpha), np.full(s.grid.shape, -1.0 / alpha**2))
    coeffs = coeffs or compute_coefficients(s)
    system = system or ReducedSystem(s, coeffs)
    traj = integrate(w0, coeffs, s, cfg, system)
    W = sample_field(traj, T)
    P, P0 = system.P(T), system.P0(T)
    tail = (T**3 * W[0], T**2 * W[1])
    phi = (P - 1.0 / alpha, P0 + 1.0 / alpha**2)
    parts = {"exact": exact, "phi": phi, "tail": tail}
    return ConstructedSlice(P + tail[0], P0 + tail[1], T, traj, parts)


def time_reverse(u, ut, alpha: float, grid: GridSpec | None = None, parts: dict | None = None, **kw) -> CauchyDataRecord:
    """Data of u(alpha - t) at t = 0: (u, -u_t)."""
    u = np.asarray(u, float)
    ut = np.asarray(ut, float)
    grid = grid or GridSpec(u.ndim, u.shape[0])
    flipped = {k: (a, -b) for k, (a, b) in (parts or {}).items()}
    return CauchyDataRecord(u.copy(), -ut, alpha, grid, parts=flipped, **kw)


def budget_report(record: CauchyDataRecord, epsilon: float, omega=None) -> ControlBudget:
    g, s0 = record.grid, record.s0

    def norm(pair):
        return spectral.cauchy_pair_norm(pair[0], pair[1], s0, g, omega)

    parts = record.parts
    zero = (np.zeros(g.shape), np.zeros(g.shape))
    budget = ControlBudget(
        epsilon=epsilon,
        alpha=record.alpha,
        norm_exact=norm(parts.get("exact", zero)),
        norm_phi=norm(parts.get("phi", zero)),
        norm_tail=norm(parts.get("tail", zero)),
        total=norm((record.u, record.ut)),
    )
    record.budget = budget
    return budget


@dataclass(frozen=True)
class PipelineSettings:
    epsilon: float = 1.0
    s0: float = 2.0
    alpha: float | None = None
    b: float | None = None
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def resolved_alpha(self, grid: GridSpec) -> float:
        return self.alpha if self.alpha is not None else choose_alpha(self.epsilon, self.s0, grid)


def run_pipeline(
    generator: SurfaceGenerator,
    grid: GridSpec,
    w0,
    settings: PipelineSettings = PipelineSettings(),
    provenance: dict | None = None,
) -> CauchyDataRecord:
    """Surface -> slice -> reversed data with its budget."""
    s = build_surface(generator, grid)
    alpha = settings.resolved_alpha(grid)
    b = settings.b if settings.b is not None else alpha + 2.0
    cfg = replace(settings.integrator, b=b)
    sl = construct_solution(s, w0, alpha, cfg)
    prov = {"surface": s.describe(), "alpha": alpha, "grid": grid.describe(), "integrator": asdict(cfg)}
    prov.update(provenance or {})
    rec = time_reverse(sl.u, sl.ut, alpha, grid, sl.parts, s0=settings.s0, provenance=prov)
    budget_report(rec, settings.epsilon)
    return rec


# ---------------------------------------------------------------------------
# boundary traces


def boundary_indices(grid: GridSpec, omega: tuple[float, float]) -> tuple[int, int]:
    """Grid indices of the first and last points inside omega (1-D)."""
    if grid.n != 1:
        raise ValidationError("boundary traces are implemented for n = 1")
    x = grid.axis(0)
    lo, hi = omega
    half = grid.volume / 2
    if not (-half < lo < hi < half - grid.spacing[0]):
        raise ValidationError(f"omega {omega} must lie strictly inside the periodic box")
    inside = np.nonzero((x >= lo) & (x <= hi))[0]
    return int(inside[0]), int(inside[-1])


def extract_boundary_trace(
    record: CauchyDataRecord,
    omega: tuple[float, float],
    solver_cfg=None,
    guard: float | None = None,
    samples: int | None = None,
) -> BoundaryTraceRecord:
    """Solve on the full box and record u at the two boundary points of omega.

    Sampling is uniform on [0, t_final], with t_final the first blow-up time
    measured on the box. ``guard`` defaults to the lowest threshold of the ladder.
    """
    from .verifier import SolverConfig, solve_direct

    cfg = solver_cfg or SolverConfig()
    if cfg.stop_fraction is None:
        # the trace is only needed up to the first blow-up
        cfg = replace(cfg, stop_fraction=1e-12)
    i0, i1 = boundary_indices(record.grid, omega)
    result = solve_direct(record, cfg, probes=(i0, i1))
    t_final = result.map.first_time()
    if not np.isfinite(t_final):
        t_final = cfg.t_max
    guard = guard if guard is not None else min(cfg.ladder)
    if samples is None:
        # a quarter of the solver's base step: interpolation error stays below the scheme's
        samples = int(np.ceil(4 * t_final / (cfg.cfl * min(record.grid.spacing)))) + 1
    times = np.linspace(0.0, t_final, samples)
    pt, pv = result.probe_times, result.probe_values
    values = np.column_stack([np.interp(times, pt, pv[:, j]) for j in range(2)])
    hot = np.abs(pv[pt <= t_final]).max(initial=0.0)
    # an infinite guard accepts a boundary that blows up with the interior
    if hot > guard or (np.isfinite(guard) and np.any(result.map.times[[i0, i1]] <= t_final)):
        raise BlowupReachedBoundary(
            f"|u| = {hot:.3g} on the boundary of {omega} before t = {t_final:.6g}; K is too close to the boundary"
        )
    x = record.grid.axis(0)
    return BoundaryTraceRecord(tuple(omega), x[[i0, i1]], np.array([i0, i1]), times, values)


# ---------------------------------------------------------------------------
# sweep

SWEEP_COLUMNS = ("lambda", "theta", "alpha", "norm_exact", "norm_phi", "norm_tail", "total", "pass", "error")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("BLOWUP_THREADS", "1")))
    except ValueError:
        return 1


def sweep(
    lambdas,
    thetas,
    generator: SurfaceGenerator,
    grid: GridSpec,
    Z: np.ndarray | None = None,
    settings: PipelineSettings = PipelineSettings(),
    threads: int | None = None,
) -> list[dict]:
    """Budget of every (lambda, theta) cell, sorted by total; failures become tagged rows."""
    Z = bump_profile(grid) if Z is None else Z
    alpha = settings.resolved_alpha(grid)

    def cell(lam, theta):
        row = {"lambda": lam, "theta": theta, "alpha": alpha}
        try:
            rec = run_pipeline(generator.scaled(lam), grid, theta * Z, settings)
            row.update({k: getattr(rec.budget, k) for k in ("norm_exact", "norm_phi", "norm_tail", "total")})
            row["pass"] = rec.budget.passed
            row["error"] = ""
        except BlowupControlError as exc:
            row.update({k: float("nan") for k in ("norm_exact", "norm_phi", "norm_tail", "total")})
            row["pass"] = False
            row["error"] = type(exc).__name__
        return row

    jobs = [(float(l), float(t)) for l in lambdas for t in thetas]
    n = threads or _threads()
    if n > 1:
        with ThreadPoolExecutor(n) as pool:
            rows = list(pool.map(lambda a: cell(*a), jobs))
    else:
        rows = [cell(*a) for a in jobs]
    rows.sort(key=lambda r: (math.isnan(r["total"]), r["total"]))
    return rows


def argmin_theta(rows: list[dict]) -> dict[float, float]:
    """For each lambda, the theta with the smallest total norm."""
    best: dict[float, tuple[float, float]] = {}
    for r in rows:
        if r["error"]:
            continue
        lam = r["lambda"]
        if lam not in best or r["total"] < best[lam][1]:
            best[lam] = (r["theta"], r["total"])
    return {lam: th for lam, (th, _) in best.items()}
