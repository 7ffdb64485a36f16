"""The invariant suite run by ``blowup-control check``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expansion import compute_coefficients
from .oracle import order_matching_oracle
from .pipeline import construct_solution
from .integrator import IntegratorConfig
from .reduced import (
    ReducedState,
    ReducedSystem,
    assemble_matrices,
    matrix_identities_hold,
    matrix_report,
)
from .surface import CosineSeries, CosineWell, GridSpec, Zero, build_surface


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict

    def as_dict(self):
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


def random_cosine_series(
    rng: np.random.Generator, n: int = 1, modes: int = 3, slope: float = 0.6, nonpositive: bool = True
) -> CosineSeries:
    """Random admissible surface with sup|grad psi| <= slope < 1.

    With ``nonpositive`` every mode peaks at the origin, so psi <= 0 and psi(0) = 0;
    otherwise the phases are random.
    """
    terms = []
    for _ in range(modes):
        k = tuple(int(v) for v in rng.integers(-3, 4, size=n))
        if not any(k):
            k = (1,) + (0,) * (n - 1)
        terms.append([rng.uniform(0.2, 1.0), k, rng.uniform(0, 2 * np.pi)])
    # bound |grad psi| <= sum |a| |k| and |psi| by 2 sum |a|
    grad_bound = sum(a * np.linalg.norm(k) for a, k, _ in terms)
    val_bound = 2 * sum(a for a, _, _ in terms)
    scale = min(slope / grad_bound, 0.45 / val_bound)
    if not nonpositive:
        return CosineSeries(0.0, tuple((scale * a, k, p) for a, k, p in terms))
    # psi = sum a (cos(k.x) - 1)
    return CosineSeries(-scale * sum(a for a, _, _ in terms), tuple((scale * a, k, 0.0) for a, k, _ in terms))


def check_matrices(count: int, seed: int, points: int = 64, A_override=None) -> CheckResult:
    rng = np.random.default_rng(seed)
    grid = GridSpec(1, points)
    worst = None
    ok = True
    for _ in range(count):
        s = build_surface(random_cosine_series(rng, nonpositive=False), grid)
        rep = matrix_report(assemble_matrices(s), A_override)
        if not matrix_identities_hold(rep):
            ok = False
            worst = rep
            break
        worst = rep
    return CheckResult("matrix_identities", ok, {"surfaces": count, "last": worst})


def oracle_disagreement(s, perturbation: float = 0.0) -> float:
    c = compute_coefficients(s)
    ref = order_matching_oracle(s, max_order=4).as_expansion_list()
    mine = list(c.fields().values())
    if perturbation:
        mine[-1] = mine[-1] + perturbation
    return max(float(np.max(np.abs(a - b))) for a, b in zip(mine, ref))


def check_oracle(points: int = 128, perturbation: float = 0.0, tol: float = 1e-10) -> CheckResult:
    grid = GridSpec(1, points)
    surfaces = {
        "cosine_well": CosineWell(0.1),
        "cosine_series": CosineSeries(-0.07, ((0.05, (1,), 0.0), (0.02, (2,), 0.0))),
    }
    diffs = {name: oracle_disagreement(build_surface(g, grid), perturbation) for name, g in surfaces.items()}
    return CheckResult("oracle_agreement", all(d <= tol for d in diffs.values()), diffs)


def check_u0(points: int = 128) -> CheckResult:
    s = build_surface(CosineWell(0.2), GridSpec(1, points))
    c = compute_coefficients(s)
    err = float(np.max(np.abs(c.u0 - np.sqrt(s.gamma))))
    return CheckResult("u0_is_sqrt_gamma", err <= 1e-12, {"max_error": err})


def check_exact_solution(alpha: float = 11.0, points: int = 64) -> CheckResult:
    s = build_surface(Zero(), GridSpec(1, points))
    sl = construct_solution(s, 0.0, alpha, IntegratorConfig(b=alpha + 2.0))
    err = max(
        float(np.max(np.abs(sl.u - 1 / alpha))),
        float(np.max(np.abs(sl.ut + 1 / alpha**2))),
    )
    return CheckResult("exact_solution_slice", err <= 1e-10, {"max_error": err})


def check_homogeneous_ode(points: int = 16) -> CheckResult:
    s = build_surface(Zero(), GridSpec(1, points))
    system = ReducedSystem(s, compute_coefficients(s))
    worst = 0.0
    for T, w, v in ((0.3, 1e-2, 0.04), (1.7, -2e-3, 1e-3), (5.0, 1e-4, 3e-4)):
        data = np.zeros((3, points))
        data[0], data[1] = w, v
        D = system.Dw(ReducedState(data, T).data, T)
        expect0 = v - 3 * w
        expect1 = -(2 * v - 6 * w) + 6 * T**4 * w**2 + 2 * T**8 * w**3
        worst = max(worst, float(np.max(np.abs(D[0] - expect0))), float(np.max(np.abs(D[1] - expect1))))
    return CheckResult("homogeneous_reduced_ode", worst <= 1e-9, {"max_error": worst})


def run_suite(seed: int = 0, count: int = 10, A_override=None, oracle_perturbation: float = 0.0) -> list[CheckResult]:
    return [
        check_matrices(count, seed, A_override=A_override),
        check_oracle(perturbation=oracle_perturbation),
        check_u0(),
        check_exact_solution(),
        check_homogeneous_ode(),
    ]
