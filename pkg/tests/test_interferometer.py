"""Tests for pulses, adiabatic and stepwise evolution, and the phase ledger."""

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chernscope import (
    KPath,
    ModelParams,
    apply_pi,
    apply_pi2,
    evolve_adiabatic,
    evolve_tdse,
    initial_state,
    landau_zener_estimate,
    noncyclic_zak,
    plan_site,
    perturb_plan,
    readout,
    run_fringe,
    wrap_angle,
)

P0 = ModelParams()

# Ledger values at samples_per_leg=2000, frozen from the dual-route check
# against the open-path Zak phase of the concatenated leg pair.
SITE_I_PHASE = 2.8360915281025494
SITE_II_PHASE = -1.3526986766838414
NO_ECHO_GEOMETRIC_I = 0.30550112548724373
LZ_FAST = 0.444858066222941
LEAK_FAST_DOWN = 0.7575582247702286
LEAK_FAST_UP = 0.479697377560215


def evolve_site(site, **kwargs):
    samples = kwargs.pop("samples_per_leg", 2000)
    zeeman_rate = kwargs.pop("zeeman_rate", 0.0)
    plan = plan_site(site, P0, samples_per_leg=samples, **kwargs)
    return evolve_adiabatic(initial_state(P0), plan, P0, zeeman_rate=zeeman_rate)


# ------------------------------------------------------------------ pulses


def test_pi2_pulse_splits_evenly():
    state = apply_pi2(initial_state(P0), 0.0)
    assert state.amp_down == pytest.approx(1 / np.sqrt(2), abs=1e-15)
    assert state.amp_up == pytest.approx(1j / np.sqrt(2), abs=1e-15)


def test_two_pi2_pulses_invert_population():
    state = apply_pi2(apply_pi2(initial_state(P0), 0.0), 0.0)
    n_down, n_up = readout(state)
    assert n_down == pytest.approx(0.0, abs=1e-14)
    assert n_up == pytest.approx(1.0, abs=1e-14)


def test_pulse_phase_shifts_fringe():
    # The pulse phase enters the up amplitude as exp(i phi_mw).
    for phi in (0.3, -1.2, 2.9):
        state = apply_pi2(initial_state(P0), phi)
        assert np.angle(state.amp_up) == pytest.approx(
            wrap_angle(np.pi / 2 + phi), abs=1e-12
        )


@given(
    st.floats(-np.pi, np.pi, allow_nan=False),
    st.floats(0.05, 0.95),
    st.floats(-np.pi, np.pi, allow_nan=False),
)
@settings(max_examples=200, deadline=None)
def test_pi2_pulse_is_unitary(phi_mw, weight, rel_phase):
    base = initial_state(P0)
    mixed = dataclasses.replace(
        base,
        amp_down=complex(np.sqrt(weight)),
        amp_up=np.sqrt(1 - weight) * np.exp(1j * rel_phase),
    )
    out = apply_pi2(mixed, phi_mw)
    assert out.norm == pytest.approx(1.0, abs=1e-12)


def test_pi_pulse_is_involutive():
    state = apply_pi2(initial_state(P0), 0.4)
    back = apply_pi(apply_pi(state))
    assert back.amp_down == pytest.approx(state.amp_down, abs=1e-15)
    assert back.amp_up == pytest.approx(state.amp_up, abs=1e-15)
    assert np.allclose(back.k_down, state.k_down)


def test_state_norm_validated():
    with pytest.raises(ValueError):
        dataclasses.replace(initial_state(P0), amp_down=0.5)


def test_evolution_requires_pure_spin_down():
    split = apply_pi2(initial_state(P0), 0.0)
    with pytest.raises(ValueError):
        evolve_adiabatic(split, plan_site("I", P0), P0)


# ------------------------------------------------------------ phase ledger


def test_site_phases_match_frozen_values():
    _, ledger_i = evolve_site("I")
    _, ledger_ii = evolve_site("II")
    assert ledger_i.pancharatnam_phase == pytest.approx(SITE_I_PHASE, abs=1e-12)
    assert ledger_ii.pancharatnam_phase == pytest.approx(SITE_II_PHASE, abs=1e-12)


def test_ledger_matches_open_path_zak():
    """Dual route: the ledger's two-leg Pancharatnam phase must equal the
    noncyclic Zak phase of the reversed-up + down concatenated path."""
    plan = plan_site("I", P0, samples_per_leg=2000)
    _, ledger = evolve_adiabatic(initial_state(P0), plan, P0)
    pair = KPath(
        np.concatenate([plan.k_path_up.points[::-1], plan.k_path_down.points[1:]])
    )
    assert ledger.pancharatnam_phase == pytest.approx(
        noncyclic_zak(P0, pair), abs=1e-10
    )


def test_nominal_ledger_has_no_dynamic_or_zeeman_phase():
    for site in ("I", "II"):
        _, ledger = evolve_site(site)
        assert ledger.dynamic == pytest.approx(0.0, abs=1e-12)
        assert ledger.zeeman == 0.0
        assert ledger.total == pytest.approx(ledger.geometric, abs=1e-12)


def test_echo_cancels_zeeman_phase_exactly():
    _, ledger = evolve_site("I", zeeman_rate=0.02)
    assert ledger.zeeman == 0.0
    assert ledger.total == pytest.approx(SITE_I_PHASE, abs=1e-12)


def test_no_echo_ledger_transforms():
    _, ledger = evolve_site("I", with_echo=False, zeeman_rate=0.02)
    assert ledger.geometric == pytest.approx(NO_ECHO_GEOMETRIC_I, abs=1e-12)
    assert ledger.geometric == pytest.approx(
        wrap_angle(np.pi - ledger.pancharatnam_phase), abs=1e-12
    )
    # Without the echo the full differential Zeeman phase survives.
    assert ledger.zeeman == pytest.approx(-0.02 * 200.0, abs=1e-12)
    assert ledger.total == pytest.approx(
        wrap_angle(ledger.geometric + ledger.dynamic + ledger.zeeman), abs=1e-12
    )


def test_ledger_gauge_invariant():
    # A pure function of k, so every band_states call inside the evolution
    # applies the same rotation to the same momentum.
    def gauge(kpts):
        kpts = np.asarray(kpts)
        return 2.7 * np.sin(3.1 * kpts[..., 0]) + 1.3 * np.cos(2.3 * kpts[..., 1])

    plan = plan_site("I", P0, samples_per_leg=600)
    _, plain = evolve_adiabatic(initial_state(P0), plan, P0)
    _, rotated = evolve_adiabatic(initial_state(P0), plan, P0, gauge_fn=gauge)
    assert rotated.total == pytest.approx(plain.total, abs=1e-10)
    assert rotated.pancharatnam_phase == pytest.approx(
        plain.pancharatnam_phase, abs=1e-10
    )


# ---------------------------------------------------------------- fringes


@pytest.mark.parametrize("with_echo", [True, False])
def test_fringe_law_pointwise(with_echo):
    """N_up must equal (1 - cos(total - phi_mw)) / 2 at every pulse phase."""
    phi = np.linspace(-np.pi, np.pi, 41)
    scan = run_fringe(
        P0, "I", phi, with_echo=with_echo, zeeman_rate=0.01, samples_per_leg=800
    )
    law = 0.5 * (1.0 - np.cos(scan.ledger.total - phi))
    assert np.max(np.abs(scan.n_up - law)) < 1e-9
    assert np.allclose(scan.n_down + scan.n_up, 1.0, atol=1e-12)


def test_run_fringe_rejects_unknown_mode():
    with pytest.raises(ValueError):
        run_fringe(P0, "I", [0.0, 1.0], mode="exact")


def test_run_fringe_accepts_prebuilt_plan():
    plan = perturb_plan(plan_site("I", P0, samples_per_leg=600), radius=0.002, seed=1)
    scan = run_fringe(P0, "II", [0.0, 0.5, 1.0], plan=plan)
    assert scan.site == "I"
    assert scan.n_up.shape == (3,)


# ------------------------------------------------------- stepwise evolution


def test_slow_drive_stays_in_band():
    plan = plan_site("I", P0, leg_time=400.0, samples_per_leg=2000)
    _, diag = evolve_tdse(initial_state(P0), plan, P0)
    assert diag.leakage_down < 1e-3
    assert diag.leakage_up < 1e-3
    assert diag.leakage_down == pytest.approx(3.0182791366240025e-07, rel=1e-6)
    assert diag.leakage_up == pytest.approx(4.010248222385826e-08, rel=1e-6)
    assert diag.norm_drift < 1e-8


def test_slow_drive_phase_matches_adiabatic():
    plan = plan_site("I", P0, leg_time=400.0, samples_per_leg=2000)
    _, diag = evolve_tdse(initial_state(P0), plan, P0)
    _, ledger = evolve_adiabatic(initial_state(P0), plan, P0)
    assert abs(diag.extracted_phase - ledger.total) < 1e-2
    assert abs(diag.extracted_phase - ledger.total) == pytest.approx(
        2.0767202520755035e-05, abs=1e-7
    )


def test_step_halving_converged():
    plan = plan_site("I", P0, leg_time=400.0, samples_per_leg=2000)
    _, coarse = evolve_tdse(initial_state(P0), plan, P0)
    _, fine = evolve_tdse(initial_state(P0), plan, P0, dt=coarse.dt / 2)
    assert abs(fine.extracted_phase - coarse.extracted_phase) < 1e-6


def test_fast_drive_leaks_like_landau_zener():
    plan = plan_site("I", P0, leg_time=2.0, samples_per_leg=400)
    estimate = landau_zener_estimate(P0, plan)
    assert estimate == pytest.approx(LZ_FAST, abs=1e-9)
    _, diag = evolve_tdse(initial_state(P0), plan, P0)
    assert diag.leakage_down == pytest.approx(LEAK_FAST_DOWN, rel=1e-9)
    assert diag.leakage_up == pytest.approx(LEAK_FAST_UP, rel=1e-9)
    for leak in (diag.leakage_down, diag.leakage_up):
        assert estimate / 3 < leak < estimate * 3


def test_tdse_step_size_precondition():
    plan = plan_site("I", P0, leg_time=2.0, samples_per_leg=400)
    with pytest.raises(ValueError):
        evolve_tdse(initial_state(P0), plan, P0, dt=0.01)


def test_tdse_fringe_keeps_populations_physical():
    phi = np.linspace(-np.pi, np.pi, 9)
    scan = run_fringe(
        P0, "I", phi, mode="tdse", leg_time=2.0, samples_per_leg=400
    )
    total = scan.n_down + scan.n_up
    assert np.all(total <= 1.0 + 1e-12)
    assert np.all(total >= 0.0)
    # Leaked weight is excluded from the two-level readout.
    expected = 1.0 - (scan.diagnostics.leakage_down + scan.diagnostics.leakage_up) / 2
    assert np.allclose(total, expected, atol=1e-12)


def test_initial_state_defaults_to_zone_center():
    state = initial_state(P0)
    assert np.allclose(state.k_down, np.zeros(2))
    assert np.allclose(state.k_up, np.zeros(2))
    assert state.amp_down == 1.0 + 0j
    assert state.amp_up == 0j
    custom = initial_state(P0, k=np.array([0.2, 0.1]))
    assert np.allclose(custom.k_down, [0.2, 0.1])


def test_wrap_angle_range():
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(2 * np.pi + 0.3) == pytest.approx(0.3, abs=1e-12)
    assert wrap_angle(-np.pi - 0.1) == pytest.approx(np.pi - 0.1, abs=1e-12)
    for x in np.linspace(-12.0, 12.0, 101):
        w = wrap_angle(x)
        assert -np.pi - 1e-12 < w <= np.pi + 1e-12
        assert np.cos(w) == pytest.approx(np.cos(x), abs=1e-12)
        assert np.sin(w) == pytest.approx(np.sin(x), abs=1e-12)
