import numpy as np
import pytest

from blowup_control import spectral
from blowup_control.errors import NullSpaceViolation, SingularTime
from blowup_control.expansion import compute_coefficients
from blowup_control.integrator import IntegratorConfig, integrate, sample
from blowup_control.pipeline import bump_profile
from blowup_control.reduced import (
    ReducedState,
    ReducedSystem,
    apply_A,
    assemble_matrices,
    constant_A,
    energy,
    energy_rate,
    evaluate_Dw,
    fuchsian_limit_Dw,
    matrix_identities_hold,
    matrix_report,
    max_char_speed,
    null_state,
    reconstruct_u,
    solve_k_plus_A,
)
from blowup_control.surface import CosineWell, GridSpec, Zero, build_surface


def test_flat_matrices():
    s = build_surface(Zero(), GridSpec(1, 8))
    M = assemble_matrices(s)
    at = lambda a: a[..., 0]  # noqa: E731
    assert np.array_equal(at(M.Q), np.eye(3))
    assert np.array_equal(at(M.Aj[0]), [[0, 0, 0], [0, 0, 1], [0, 1, 0]])
    assert np.array_equal(at(M.V), np.diag([6.0, 1, 1]))
    VQA = at(M.V) @ at(M.Q) @ M.A
    assert np.array_equal(VQA, [[18, -6, 0], [-6, 2, 0], [0, 0, 2]])
    assert np.allclose(sorted(np.linalg.eigvalsh(VQA)), [0, 2, 20])


def test_null_vector():
    for n in (1, 2):
        v = np.zeros(n + 2)
        v[:2] = 1, 3
        assert np.all(constant_A(n) @ v == 0)


def test_identities_on_well(well_surface):
    rep = matrix_report(assemble_matrices(well_surface))
    assert matrix_identities_hold(rep)
    assert rep["A_spectrum"] == [0.0, 2.0, 5.0]
    assert rep["A_block_spectrum"] == [0.0, 5.0]


def test_perturbed_A_is_caught(well_surface):
    A = constant_A(1)
    A[0, 2] += 1e-9
    assert not matrix_identities_hold(matrix_report(assemble_matrices(well_surface), A))


def test_apply_and_solve_A():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((4, 5))
    A = constant_A(2)
    assert np.allclose(apply_A(x), np.einsum("ij,jk->ik", A, x))
    for k in (1.0, 2.5, 7.0):
        y = solve_k_plus_A(x, k)
        assert np.allclose(k * y + apply_A(y), x, atol=1e-13)


def test_char_speed():
    s = build_surface(CosineWell(0.2), GridSpec(1, 64))
    assert max_char_speed(s) == pytest.approx(1 / (1 - s.max_slope))


def test_reconstruct_exact_solution():
    s = build_surface(Zero(), GridSpec(1, 16))
    system = ReducedSystem(s, compute_coefficients(s))
    u, u0, ui = reconstruct_u(ReducedState(np.zeros((3, 16)), 2.0), system)
    assert np.all(u == 0.5) and np.all(u0 == -0.25) and np.all(ui[0] == 0)
    with pytest.raises(SingularTime):
        reconstruct_u(ReducedState(np.zeros((3, 16)), 0.0), system)


def test_equilibrium_of_exact_solution():
    s = build_surface(Zero(), GridSpec(1, 16))
    system = ReducedSystem(s, compute_coefficients(s))
    for T in (1e-3, 0.5, 9.0):
        assert np.all(evaluate_Dw(ReducedState(np.zeros((3, 16)), T), system) == 0)
    with pytest.raises(SingularTime):
        evaluate_Dw(ReducedState(np.zeros((3, 16)), 0.0), system)


def test_homogeneous_first_order_form():
    s = build_surface(Zero(), GridSpec(1, 16))
    system = ReducedSystem(s, compute_coefficients(s))
    for T, w, v in ((0.2, 3e-3, -1e-3), (4.0, -1e-4, 2e-4)):
        data = np.zeros((3, 16))
        data[0], data[1] = w, v
        D = evaluate_Dw(ReducedState(data, T), system)
        assert np.allclose(D[0], v - 3 * w, atol=1e-15)
        assert np.allclose(D[1], -(2 * v - 6 * w) + 6 * T**4 * w**2 + 2 * T**8 * w**3, rtol=1e-12, atol=1e-15)


def test_series_and_direct_routes_agree(well_system):
    g = well_system.surface.grid
    x = g.axis(0)
    data = np.stack([1e-3 * np.cos(x), 2e-3 * np.sin(x), 1e-3 * np.cos(2 * x)])
    for T in (0.5, 1.0, 3.0):
        st = ReducedState(data, T)
        a = evaluate_Dw(st, well_system, route="series")
        b = evaluate_Dw(st, well_system, route="direct")
        assert np.max(np.abs(a - b)) <= 1e-9 * max(1.0, np.max(np.abs(a)))


def test_fuchsian_limit():
    w0 = np.linspace(-1, 1, 9)
    assert np.all(apply_A(null_state(w0, 1).data) == 0)
    assert np.all(fuchsian_limit_Dw(null_state(w0, 1)) == 0)
    bad = ReducedState(np.stack([np.ones(9), np.zeros(9), np.zeros(9)]), 0.0)
    with pytest.raises(NullSpaceViolation):
        fuchsian_limit_Dw(bad)


@pytest.fixture(scope="module")
def well_trajectory(well_surface):
    w0 = 1e-4 * bump_profile(well_surface.grid)
    c = compute_coefficients(well_surface)
    system = ReducedSystem(well_surface, c)
    return integrate(w0, c, well_surface, IntegratorConfig(b=4.0, dtau_max=0.01), system), system


def test_reconstructed_time_derivative(well_trajectory):
    traj, system = well_trajectory
    T = 1.3
    errs = []
    for h in (1e-3, 5e-4):
        up = reconstruct_u(sample(traj, T + h), system)[0]
        um = reconstruct_u(sample(traj, T - h), system)[0]
        u0 = reconstruct_u(sample(traj, T), system)[1]
        errs.append(np.max(np.abs((up - um) / (2 * h) - u0)))
    # second-order finite difference: error drops by about four
    assert errs[1] < errs[0] / 3 or errs[1] < 1e-10


def test_reconstructed_space_derivative(well_trajectory):
    traj, system = well_trajectory
    for k in (len(traj.taus) // 2, -1):
        st = traj.state(k)
        u, _, ui = reconstruct_u(st, system)
        du = spectral.derivative(u, system.surface.grid)
        assert np.max(np.abs(du - ui[0])) <= 1e-9


def test_energy_examples(zero_surface):
    N = zero_surface.grid.points
    assert energy(ReducedState(np.zeros((3, N)), 1.0), zero_surface, 3).e0 == 0
    data = np.zeros((3, N))
    data[0] = 0.2
    e = energy(ReducedState(data, 1.0), zero_surface, 3)
    assert e.e0 == pytest.approx(6 * 2 * np.pi * 0.04, rel=1e-14)
    assert e.es == pytest.approx(e.e0, rel=1e-12)


def test_energy_index_zero_and_monotone(well_surface):
    x = well_surface.grid.axis(0)
    data = np.stack([np.cos(x), np.sin(3 * x), 0.2 * np.cos(5 * x)])
    st = ReducedState(data, 1.0)
    e0 = energy(st, well_surface, 0)
    assert abs(e0.es - e0.e0) <= 1e-12 * e0.e0
    assert energy(st, well_surface, 2).es >= e0.e0


def test_energy_rate_matches_log(well_trajectory):
    traj, system = well_trajectory
    # D e0 from the product formula against a centred difference of the logged e0
    k = len(traj.taus) // 2
    e = np.array([r.e0 for r in traj.energy_log])
    fd = (e[k + 1] - e[k - 1]) / (traj.taus[k + 1] - traj.taus[k - 1])
    assert energy_rate(traj.state(k), system) == pytest.approx(fd, rel=1e-3)
