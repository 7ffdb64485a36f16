import numpy as np
import pytest

from blowup_control import spectral
from blowup_control.errors import DegenerateSurface, ResonanceMismatch, SliceThroughSingularity
from blowup_control.expansion import (
    compute_coefficients,
    evaluate_phi,
    fit_decay,
    log_samples,
    residual_order_check,
)
from blowup_control.oracle import indicial_factor, order_matching_oracle, truncation_residual
from blowup_control.surface import CosineSeries, CosineWell, GridSpec, Zero, build_surface


def test_flat_surface_coefficients(zero_surface):
    c = compute_coefficients(zero_surface)
    assert np.all(c.u0 == 1.0)
    for f in (c.u1, c.u2, c.u3, c.u41):
        assert np.all(f == 0.0)


def test_u0_is_sqrt_gamma(analytic_surfaces, grid128):
    for gen in analytic_surfaces.values():
        s = build_surface(gen, grid128)
        c = compute_coefficients(s)
        assert np.max(np.abs(c.u0**2 + s.d(1) ** 2 - 1)) <= 1e-12


def test_u1_closed_form(well_surface):
    # balance of the T^-2 terms
    s = well_surface
    c = compute_coefficients(s)
    u0x = spectral.derivative(c.u0, s.grid)
    expected = -(2 * s.d(1) * u0x + c.u0 * s.d(2)) / (6 * s.gamma)
    assert np.max(np.abs(c.u1 - expected)) <= 1e-10


def test_recursion_matches_oracle(analytic_surfaces, grid128):
    for name, gen in analytic_surfaces.items():
        s = build_surface(gen, grid128)
        mine = compute_coefficients(s).fields()
        ref = order_matching_oracle(s, max_order=4).as_expansion_list()
        for (key, a), b in zip(mine.items(), ref):
            assert np.max(np.abs(a - b)) <= 1e-10, (name, key)


def test_oracle_on_flat_surface(zero_surface):
    res = order_matching_oracle(zero_surface, max_order=4)
    vals = [float(np.max(np.abs(f))) for f in res.as_expansion_list()]
    assert vals == [1.0, 0.0, 0.0, 0.0, 0.0]


def test_resonance_is_at_order_four(well_surface):
    res = order_matching_oracle(well_surface, max_order=5)
    assert res.resonant_orders == [4]
    # indicial factor gamma (j - 4)(j + 1) vanishes at j = 4 only
    g = well_surface.gamma
    for j in (2, 3, 5):
        assert np.allclose(indicial_factor(well_surface, j), g * (j - 4) * (j + 1), atol=1e-10)
    assert np.max(np.abs(indicial_factor(well_surface, 4))) <= 1e-12


def test_oracle_without_log_slot_fails(well_surface):
    with pytest.raises(ResonanceMismatch):
        order_matching_oracle(well_surface, max_order=4, allow_log=False)


def test_degenerate_surface():
    s = build_surface(CosineSeries(0.0, ((0.999, (1,), 0.0),)), GridSpec(1, 64))
    with pytest.raises(DegenerateSurface):
        compute_coefficients(s, gamma_floor=1e-2)


def test_flat_residual_vanishes(zero_surface):
    rep = residual_order_check(compute_coefficients(zero_surface), zero_surface, log_samples())
    assert np.all(rep.residual_sup == 0.0)


def test_residual_exponent_matches_oracle(analytic_surfaces, grid128):
    for gen in analytic_surfaces.values():
        s = build_surface(gen, grid128)
        p, log_power, _ = truncation_residual(s)
        assert (p, log_power) == (2, 1)
        rep = residual_order_check(compute_coefficients(s), s, log_samples())
        assert abs(rep.fitted_p - p) <= 0.2


def test_residual_is_grid_independent():
    gen = CosineWell(0.3, (0.7,))
    sups = []
    for N in (128, 256):
        s = build_surface(gen, GridSpec(1, N))
        sups.append(residual_order_check(compute_coefficients(s), s, log_samples()).residual_sup)
    assert np.max(np.abs(sups[0] / sups[1] - 1)) < 0.05


def test_log_samples_layout():
    T = log_samples()
    assert np.all(np.diff(T) < 0)
    assert T[0] == pytest.approx(0.1) and T[-1] == pytest.approx(1e-3)
    assert len(T) >= 17


def test_fit_decay_recovers_power_and_log():
    T = log_samples()
    p, flag, q, *_ = fit_decay(T, 3 * T**2)
    assert p == pytest.approx(2, abs=1e-9) and not flag
    p, flag, q, *_ = fit_decay(T, T**2 * np.abs(np.log(T)) ** 2)
    assert flag and p == pytest.approx(2, abs=1e-6) and q == pytest.approx(2, abs=1e-6)


def test_phi_vanishes_on_flat_surface(zero_surface):
    phi, phi_t = evaluate_phi(compute_coefficients(zero_surface), zero_surface, 11.0)
    assert np.all(phi == 0) and np.all(phi_t == 0)


def test_phi_slice_checks():
    s = build_surface(CosineSeries(-0.3, ((0.3, (1,), 0.0),)), GridSpec(1, 64))
    c = compute_coefficients(s)
    evaluate_phi(c, s, 0.5)
    with pytest.raises(SliceThroughSingularity):
        evaluate_phi(c, s, -0.1)
    w = build_surface(CosineWell(0.3), GridSpec(1, 64))
    with pytest.raises(SliceThroughSingularity):
        evaluate_phi(compute_coefficients(w), w, -0.6)


def test_phi_time_derivative(well_surface):
    c = compute_coefficients(well_surface)
    h = 1e-4
    p1, _ = evaluate_phi(c, well_surface, 11.0 + h)
    p0, _ = evaluate_phi(c, well_surface, 11.0 - h)
    _, pt = evaluate_phi(c, well_surface, 11.0)
    assert np.max(np.abs((p1 - p0) / (2 * h) - pt)) <= 1e-6 * np.max(np.abs(pt))


def test_phi_norm_shrinks_with_lambda():
    g = GridSpec(1, 256)
    ratios = []
    norms = []
    for lam in (0.1, 0.05, 0.025, 0.0125):
        s = build_surface(CosineWell(lam), g)
        phi, _ = evaluate_phi(compute_coefficients(s), s, 11.0)
        norms.append(spectral.sobolev_norm(phi, 2, g))
        ratios.append(norms[-1] / lam)
    # halving lambda at least halves the norm
    assert all(a >= 2 * b for a, b in zip(norms, norms[1:]))
    # norm / lambda settles: successive differences shrink
    diffs = np.abs(np.diff(ratios))
    assert np.all(diffs[1:] < diffs[:-1])
