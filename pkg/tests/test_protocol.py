"""Tests for force-protocol planning, validation, and endpoint perturbation."""

import dataclasses

import numpy as np
import pytest

from chernscope import (
    DEFAULT_GEOMETRY,
    MalformedPlan,
    ModelParams,
    perturb_plan,
    plan_site,
    site_displacements,
    site_start,
    validate_plan,
)

P0 = ModelParams()
G = DEFAULT_GEOMETRY


def test_site_starts_are_inversion_partners():
    s1 = site_start("I", P0)
    s2 = site_start("II", P0)
    assert np.allclose(s1, [2 * np.pi / (3 * np.sqrt(3)), 0.0], atol=1e-12)
    assert np.allclose(s2, -s1, atol=1e-14)


def test_site_displacements_are_reciprocal_vectors():
    d1 = site_displacements("I", P0)
    assert np.allclose(d1["down"], -(G.b1 + G.b2), atol=1e-12)
    assert np.allclose(d1["up"], -G.b2, atol=1e-12)
    d2 = site_displacements("II", P0)
    assert np.allclose(d2["down"], -d1["down"], atol=1e-12)
    assert np.allclose(d2["up"], -d1["up"], atol=1e-12)


def test_leg_displacements_share_one_length():
    d = site_displacements("I", P0)
    for vec in d.values():
        assert np.linalg.norm(vec) == pytest.approx(4 * np.pi / 3, abs=1e-12)


def test_plan_endpoints_exact():
    for site in ("I", "II"):
        plan = plan_site(site, P0)
        d = site_displacements(site, P0)
        assert np.allclose(plan.endpoint_down, plan.start + d["down"], atol=1e-12)
        assert np.allclose(plan.endpoint_up, plan.start + d["up"], atol=1e-12)
        walked = plan.integrated_displacements()
        assert np.allclose(walked["down"], d["down"], atol=1e-12)
        assert np.allclose(walked["up"], d["up"], atol=1e-12)


def test_step_sequence():
    echo = plan_site("I", P0, with_echo=True)
    assert [s.kind for s in echo.steps] == [
        "transport", "pi2_pulse", "force_leg", "pi_pulse", "force_leg", "pi2_pulse",
    ]
    plain = plan_site("I", P0, with_echo=False)
    assert [s.kind for s in plain.steps] == [
        "transport", "pi2_pulse", "force_leg", "pi2_pulse",
    ]


def test_echo_does_not_change_momentum_paths():
    """The gradient flip at the echo pulse compensates the spin swap, so
    each packet follows the same straight line either way."""
    echo = plan_site("I", P0, with_echo=True)
    plain = plan_site("I", P0, with_echo=False)
    assert np.allclose(echo.k_path_down.points, plain.k_path_down.points, atol=1e-12)
    assert np.allclose(echo.k_path_up.points, plain.k_path_up.points, atol=1e-12)


def test_force_decomposition():
    plan = plan_site("I", P0)
    leg = next(s for s in plan.steps if s.kind == "force_leg")
    v_down = leg.force.velocity(-1.0)
    v_up = leg.force.velocity(+1.0)
    assert np.allclose((v_down + v_up) / 2, -leg.force.lattice_force, atol=1e-14)
    assert np.allclose((v_up - v_down) / 2, -leg.force.gradient_force, atol=1e-14)
    # Flipping the gradient direction exchanges the two spin velocities.
    assert np.allclose(leg.force.velocity(-1.0, flipped=True), v_up, atol=1e-14)


def test_force_magnitude_ratio_is_sqrt3():
    plan = plan_site("I", P0)
    leg = next(s for s in plan.steps if s.kind == "force_leg")
    assert leg.force.magnitude_ratio == pytest.approx(np.sqrt(3), abs=1e-12)


def test_velocity_times_leg_time_reaches_endpoint():
    plan = plan_site("II", P0, with_echo=False)
    leg = next(s for s in plan.steps if s.kind == "force_leg")
    d = site_displacements("II", P0)
    assert np.allclose(leg.force.velocity(-1.0) * plan.leg_time, d["down"], atol=1e-12)
    assert np.allclose(leg.force.velocity(+1.0) * plan.leg_time, d["up"], atol=1e-12)


def test_samples_per_leg_forced_even():
    plan = plan_site("I", P0, samples_per_leg=7)
    assert plan.samples_per_leg == 8
    assert plan.k_path_down.points.shape == (9, 2)


def test_plan_site_rejects_unknown_site():
    with pytest.raises(ValueError):
        plan_site("III", P0)


def test_swap_spin_assignment_exchanges_targets():
    plain = plan_site("I", P0)
    swapped = plan_site("I", P0, swap_spin_assignment=True)
    assert np.allclose(swapped.endpoint_down, plain.endpoint_up, atol=1e-12)
    assert np.allclose(swapped.endpoint_up, plain.endpoint_down, atol=1e-12)


def test_validate_nominal_plan():
    diag = validate_plan(plan_site("I", P0), P0)
    assert diag.endpoint_residual < 1e-12
    assert diag.endpoints_reciprocal
    assert diag.xi == pytest.approx(0.007754946119391695, abs=1e-12)
    assert not diag.adiabatic_warning


def test_validate_warns_on_fast_drive():
    diag = validate_plan(plan_site("I", P0, leg_time=2.0), P0)
    assert diag.xi == pytest.approx(0.7754946119391695, abs=1e-12)
    assert diag.adiabatic_warning
    assert any("adiabatic" in m for m in diag.messages)


def test_validate_rejects_inconsistent_endpoint():
    plan = plan_site("I", P0)
    broken = dataclasses.replace(plan, endpoint_down=plan.endpoint_down + 0.1)
    with pytest.raises(MalformedPlan):
        validate_plan(broken, P0)


def test_perturb_zero_radius_is_identity():
    plan = plan_site("I", P0)
    same = perturb_plan(plan, radius=0.0, seed=11)
    assert np.array_equal(same.endpoint_down, plan.endpoint_down)
    assert np.array_equal(same.endpoint_up, plan.endpoint_up)
    noargs = perturb_plan(plan)
    assert np.array_equal(noargs.endpoint_down, plan.endpoint_down)


def test_perturb_is_seed_deterministic():
    plan = plan_site("I", P0)
    a = perturb_plan(plan, radius=0.02, seed=5)
    b = perturb_plan(plan, radius=0.02, seed=5)
    c = perturb_plan(plan, radius=0.02, seed=6)
    assert np.array_equal(a.endpoint_down, b.endpoint_down)
    assert np.array_equal(a.endpoint_up, b.endpoint_up)
    assert not np.array_equal(a.endpoint_down, c.endpoint_down)


def test_perturb_draw_stays_inside_disk():
    plan = plan_site("I", P0)
    for seed in range(20):
        pert = perturb_plan(plan, radius=0.01, seed=seed)
        assert np.linalg.norm(pert.endpoint_down - plan.endpoint_down) <= 0.01
        assert np.linalg.norm(pert.endpoint_up - plan.endpoint_up) <= 0.01


def test_perturb_explicit_error_lands_exactly():
    plan = plan_site("I", P0)
    err = np.array([0.003, -0.001])
    pert = perturb_plan(plan, error_down=err)
    assert np.allclose(pert.endpoint_down, plan.endpoint_down + err, atol=1e-15)
    assert np.allclose(pert.endpoint_up, plan.endpoint_up, atol=1e-15)
    walked = pert.integrated_displacements()
    assert np.allclose(walked["down"], pert.endpoint_down - pert.start, atol=1e-12)


def test_perturbed_endpoints_lose_reciprocity():
    pert = perturb_plan(plan_site("I", P0), radius=0.01, seed=3)
    diag = validate_plan(pert, P0)
    assert diag.endpoint_residual < 1e-12
    assert not diag.endpoints_reciprocal


def test_perturb_rejects_oversized_errors():
    plan = plan_site("I", P0)
    limit = np.linalg.norm(G.b1) / 4
    with pytest.raises(ValueError):
        perturb_plan(plan, radius=limit * 1.01)
    with pytest.raises(ValueError):
        perturb_plan(plan, error_down=np.array([limit * 1.01, 0.0]))
