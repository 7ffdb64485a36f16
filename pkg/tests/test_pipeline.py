import numpy as np
import pytest

from blowup_control import spectral
from blowup_control.errors import BlowupReachedBoundary, TrajectoryTooShort, ValidationError
from blowup_control.expansion import compute_coefficients
from blowup_control.integrator import IntegratorConfig
from blowup_control.pipeline import (
    PipelineSettings,
    budget_report,
    bump_profile,
    choose_alpha,
    construct_solution,
    exact_part_norm,
    extract_boundary_trace,
    run_pipeline,
    sweep,
    argmin_theta,
    time_reverse,
)
from blowup_control.surface import CosineWell, GridSpec, Zero, build_surface
from blowup_control.verifier import SolverConfig

G = GridSpec(1, 128)
Z = bump_profile(G)
# largest cosine-well amplitude that still passes the budget at theta = 1e-6, N = 128 (bisection)
LAMBDA_STAR = 0.00805


def test_choose_alpha():
    assert choose_alpha(1.0) == 11.0
    assert exact_part_norm(11.0, G) < 0.25 <= exact_part_norm(10.5, G)
    assert choose_alpha(1e6) == 2.5
    alphas = [choose_alpha(e) for e in (1.0, 0.5, 0.25, 0.1)]
    assert alphas == sorted(alphas) and alphas[-1] > alphas[0]
    with pytest.raises(ValidationError):
        choose_alpha(0.0)


def test_bump_profile():
    assert Z.max() == pytest.approx(1.0) and Z.min() == 0.0
    assert np.all(Z[np.abs(G.axis(0)) >= 1.0] == 0)


def test_exact_slice():
    s = build_surface(Zero(), G)
    sl = construct_solution(s, 0.0, 11.0, IntegratorConfig(b=13.0))
    assert np.max(np.abs(sl.u - 1 / 11)) <= 1e-10
    assert np.max(np.abs(sl.ut + 1 / 121)) <= 1e-10


def test_slice_on_well():
    s = build_surface(CosineWell(0.05), G)
    sl = construct_solution(s, 0.0, 11.0, IntegratorConfig(b=13.0))
    assert spectral.sobolev_norm(sl.u - 1 / 11, 2, G) > 0
    # parts reassemble the slice
    total = sum(sl.parts[k][0] for k in ("exact", "phi", "tail"))
    assert np.max(np.abs(total - sl.u)) <= 1e-12


def test_slice_time_derivative():
    s = build_surface(CosineWell(0.02), G)
    c = compute_coefficients(s)
    cfg = IntegratorConfig(b=13.0)
    h = 1e-3
    up = construct_solution(s, 1e-6 * Z, 11.0 + h, cfg, c).u
    um = construct_solution(s, 1e-6 * Z, 11.0 - h, cfg, c).u
    ut = construct_solution(s, 1e-6 * Z, 11.0, cfg, c).ut
    assert np.max(np.abs((up - um) / (2 * h) - ut)) <= 1e-6


def test_short_trajectory_rejected():
    s = build_surface(CosineWell(0.05), G)
    with pytest.raises(TrajectoryTooShort):
        construct_solution(s, 0.0, 11.0, IntegratorConfig(b=11.05))


def test_alpha_must_exceed_two():
    with pytest.raises(ValidationError):
        construct_solution(build_surface(Zero(), G), 0.0, 1.5, IntegratorConfig(b=4.0))


def test_time_reverse():
    u, ut = np.full(8, 1 / 11), np.full(8, -1 / 121)
    g = GridSpec(1, 8)
    rec = time_reverse(u, ut, 11.0, g, {})
    assert np.all(rec.ut == 1 / 121) and np.all(rec.u == u)
    again = time_reverse(rec.u, rec.ut, 11.0, g, {})
    assert np.array_equal(again.ut, ut)


def test_flat_budget_passes():
    rec = run_pipeline(Zero(), G, 0.0, PipelineSettings())
    b = rec.budget
    assert b.norm_phi == 0 and b.norm_tail == 0 and b.total == b.norm_exact
    assert b.passed and b.alpha == 11.0


def test_budget_threshold():
    ok = run_pipeline(CosineWell(LAMBDA_STAR), G, 1e-6 * Z, PipelineSettings()).budget
    assert ok.passed
    bad = run_pipeline(CosineWell(2 * LAMBDA_STAR), G, 1e-6 * Z, PipelineSettings()).budget
    assert not bad.passed and "norm_phi" in bad.violators()


def test_total_dominates_parts_at_small_lambda():
    b = run_pipeline(CosineWell(0.002), G, 1e-6 * Z, PipelineSettings()).budget
    assert b.total >= max(b.norm_exact, b.norm_phi, b.norm_tail)
    # at larger lambda the phi and tail parts cancel and the total drops below each of them
    big = run_pipeline(CosineWell(0.05), G, 0.0, PipelineSettings()).budget
    assert big.total < min(big.norm_phi, big.norm_tail)


def test_budget_triangle_and_recompute():
    rec = run_pipeline(CosineWell(0.05), G, 1e-6 * Z, PipelineSettings())
    b = rec.budget
    assert b.total <= b.norm_exact + b.norm_phi + b.norm_tail + 1e-12
    again = budget_report(rec, 1.0)
    assert abs(again.total - b.total) <= 1e-10
    assert abs(spectral.cauchy_pair_norm(rec.u, rec.ut, 2, G) - b.total) <= 1e-10
    assert np.all(np.isfinite(rec.u)) and np.all(np.isfinite(rec.ut))


def test_record_json_round_trip(tmp_path):
    import json

    from blowup_control.cli import load_record

    rec = run_pipeline(CosineWell(0.01), GridSpec(1, 32), 0.0, PipelineSettings())
    path = tmp_path / "record.json"
    path.write_text(json.dumps(rec.to_json()))
    back = load_record(str(path))
    assert np.array_equal(back.u, rec.u) and np.array_equal(back.ut, rec.ut)
    assert back.grid == rec.grid and back.alpha == rec.alpha
    assert back.budget.passed == rec.budget.passed
    assert back.provenance["surface"]["family"] == "cosine_well"


def test_flat_boundary_trace():
    rec = run_pipeline(Zero(), G, 0.0, PipelineSettings())
    # K is the whole box, so the boundary blows up with the interior
    with pytest.raises(BlowupReachedBoundary):
        extract_boundary_trace(rec, (-2.0, 2.0), SolverConfig(t_max=12))
    tr = extract_boundary_trace(rec, (-2.0, 2.0), SolverConfig(t_max=12), guard=np.inf)
    assert np.all(np.diff(tr.times) > 0)
    assert np.allclose(np.diff(tr.times), tr.times[1])
    mask = tr.times <= 10.0
    exact = 1 / (11 - tr.times[mask])
    assert np.max(np.abs(tr.values[mask] - exact[:, None])) <= 1e-3 * exact.max()


def test_well_boundary_trace_bounded():
    rec = run_pipeline(CosineWell(0.05), G, 0.0, PipelineSettings(alpha=11.0))
    tr = extract_boundary_trace(rec, (-2.0, 2.0), SolverConfig(t_max=12))
    assert tr.times[-1] >= 10.99
    # the boundary sits at t_b = alpha + 0.069 and only reaches |u| ~ 15 by t = alpha
    assert np.all(np.isfinite(tr.values)) and np.abs(tr.values).max() < 20.0
    with pytest.raises(BlowupReachedBoundary):
        extract_boundary_trace(rec, (0.0, 2.0), SolverConfig(t_max=12))


@pytest.fixture(scope="module")
def small_sweep():
    return sweep((0.0, 0.002, 0.004), (0.0, 1e-6, 2e-6, 1.0), CosineWell(1.0), G, Z, PipelineSettings())


def test_sweep_rows(small_sweep):
    rows = small_sweep
    assert len(rows) == 12
    origin = next(r for r in rows if r["lambda"] == 0 and r["theta"] == 0)
    assert origin["total"] == origin["norm_exact"]
    totals = [r["total"] for r in rows if not r["error"]]
    assert totals == sorted(totals)
    # an oversized theta blows up the reduced system and is tagged, not raised
    tagged = [r for r in rows if r["error"]]
    assert tagged and all(r["theta"] == 1.0 for r in tagged)
    assert all(not r["pass"] and np.isnan(r["total"]) for r in tagged)


def test_sweep_monotone_in_theta(small_sweep):
    for lam in (0.0, 0.002, 0.004):
        line = [r for _, r in sorted((r["theta"], r) for r in small_sweep if r["lambda"] == lam and not r["error"])]
        totals = [r["total"] for r in line]
        assert all(b >= a - 1e-9 for a, b in zip(totals, totals[1:])), lam
        # phi does not see theta at all
        assert len({r["norm_phi"] for r in line}) == 1


def test_components_shrink_along_joint_path(small_sweep):
    cells = {(r["lambda"], r["theta"]): r for r in small_sweep}
    path = [cells[(0.004, 2e-6)], cells[(0.002, 1e-6)], cells[(0.0, 0.0)]]
    for key in ("norm_phi", "norm_tail", "total"):
        vals = [r[key] for r in path]
        assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:])), key


def test_argmin_theta(small_sweep):
    best = argmin_theta(small_sweep)
    assert set(best) == {0.0, 0.002, 0.004}
    assert all(t in (0.0, 1e-6, 2e-6) for t in best.values())
