import numpy as np
import pytest

from dynopt.solver_interface import SolverOptions
from dynopt.ventilator import (REFERENCE_PATIENTS, ControlBounds, EstimationConfig, VentilatorSettings,
                               estimate_parameters, simulate_breath, solve_breath, synthesize_measurements,
                               tidal_volume, tidal_volume_bounds)
from dynopt.ventilator_studies import (ESTIMATION_SETTINGS, control_study, convergence_order, convergence_table,
                                      estimation_study, form_comparison, residual_comparison)

SOLVER = SolverOptions(tol=1e-9, max_iter=1000)


class TestBreathIntegration:
    """Integration tests for the periodic breath of known patients."""

    @pytest.mark.integration
    @pytest.mark.slow
    def test_breath_matches_simulation(self):
        """IT801: Reference patients - Should be periodic and match the simulated tidal volumes."""
        settings = VentilatorSettings()
        solution = solve_breath(REFERENCE_PATIENTS, settings, solver_options=SOLVER)
        inhale, exhale = solution.phases
        periodic_gap = np.abs(inhale.state.start_value(0)[:2] - exhale.state.final_value()[:2])
        assert np.max(periodic_gap) < 1e-6
        simulated = simulate_breath(REFERENCE_PATIENTS, settings).tidal_volume()
        for p in range(2):
            volume = tidal_volume(solution, p)
            assert volume.discrepancy < 1e-6
            assert volume.value == pytest.approx(simulated[p], rel=1e-3)

    @pytest.mark.integration
    @pytest.mark.slow
    def test_flow_signs(self):
        """IT802: Breath solution - Should keep inhale flows nonnegative and exhale flows nonpositive."""
        solution = solve_breath(REFERENCE_PATIENTS, VentilatorSettings(), solver_options=SOLVER)
        inhale, exhale = solution.phases
        times_in = np.linspace(inhale.t0, inhale.tf, 21)[:-1]
        times_ex = np.linspace(exhale.t0, exhale.tf, 21)[1:]
        assert np.min(inhale.inputs.evaluate(times_in)) > -1e-6
        assert np.max(exhale.inputs.evaluate(times_ex)) < 1e-6


class TestEstimationIntegration:
    """Integration tests for patient parameter estimation."""

    @pytest.mark.integration
    @pytest.mark.slow
    def test_one_patient_recovery(self):
        """IT803: Noiseless readings of one patient - Should recover every parameter within 0.1%."""
        truth = REFERENCE_PATIENTS[:1]
        settings = VentilatorSettings(valve_inhale=(0.0,), valve_exhale=(0.0,))
        readings = synthesize_measurements(truth, settings, noise=0.0, noise_bound=1e-9)
        result = estimate_parameters(settings, readings, solver_options=SOLVER)
        np.testing.assert_allclose(result.params[0].as_array(), truth[0].as_array(), rtol=1e-3)
        assert np.max(np.abs(result.noise)) <= 1e-9 + 1e-12

    @pytest.mark.integration
    @pytest.mark.slow
    def test_two_patient_recovery(self):
        """IT804: Total flow plus one branch flow - Should recover both patients within 5%."""
        study = estimation_study(noise=0.0, solver_options=SOLVER, with_bounds=False)
        assert study.measurements.times.size == 6
        assert np.max(study.relative_errors()) < 0.05

    @pytest.mark.integration
    @pytest.mark.slow
    def test_noisy_estimate_within_bounds(self):
        """IT805: Readings with noise 0.005 - Should place each estimated tidal volume inside its bounds."""
        study = estimation_study(noise=0.005, seed=3, solver_options=SOLVER)
        assert len(study.bounds) == 2
        for bounds, volume in zip(study.bounds, study.estimate.tidal_volumes):
            assert bounds.width >= 0.0
            assert bounds.contains(volume.value, tol=1e-4)

    @pytest.mark.integration
    @pytest.mark.slow
    def test_tidal_bounds_pinch_without_noise(self):
        """IT810: Noiseless readings and tight disturbances - Should pinch the tidal interval onto the true volume."""
        truth = REFERENCE_PATIENTS[:1]
        settings = VentilatorSettings(valve_inhale=(0.0,), valve_exhale=(0.0,))
        simulation = simulate_breath(truth, settings)
        readings = synthesize_measurements(truth, settings, noise=0.0, noise_bound=1e-6, simulation=simulation)
        config = EstimationConfig(disturbance_bound=1e-3)
        estimate = estimate_parameters(settings, readings, config, solver_options=SOLVER)
        bounds = tidal_volume_bounds(settings, readings, config, solver_options=SOLVER, estimate=estimate)[0]
        assert 0.0 <= bounds.width <= 1e-3
        assert bounds.contains(simulation.tidal_volume()[0], tol=1e-3)

    @pytest.mark.integration
    @pytest.mark.slow
    def test_tidal_bounds_widen_with_noise_bound(self):
        """IT811: Noise bound doubled from 0.005 to 0.01 - Should keep the truth inside and not narrow the interval."""
        truth = REFERENCE_PATIENTS[:1]
        settings = VentilatorSettings(valve_inhale=(0.0,), valve_exhale=(0.0,))
        simulation = simulate_breath(truth, settings)
        true_volume = simulation.tidal_volume()[0]
        widths = []
        for noise_bound in (0.005, 0.01):
            readings = synthesize_measurements(truth, settings, seed=3, noise=0.005, noise_bound=noise_bound,
                                               simulation=simulation)
            estimate = estimate_parameters(settings, readings, solver_options=SOLVER)
            bounds = tidal_volume_bounds(settings, readings, solver_options=SOLVER, estimate=estimate)[0]
            assert bounds.contains(true_volume, tol=1e-4)
            widths.append(bounds.width)
        assert widths[1] >= widths[0] - 1e-6

    @pytest.mark.integration
    @pytest.mark.slow
    def test_dae_and_ode_forms_agree(self):
        """IT806: Same readings in DAE and reduced ODE form - Should give the same estimate to 1e-4."""
        comparison = form_comparison(solver_options=SOLVER)
        assert comparison.relative_difference() < 1e-4
        assert set(comparison.time_per_iteration()) == {'dae', 'ode'}


class TestControlIntegration:
    """Integration tests for minimum-energy ventilator control."""

    @pytest.mark.integration
    @pytest.mark.slow
    def test_constant_and_time_varying(self):
        """IT807: Both pressure modes - Should meet the tidal targets and halve the energy when time-varying."""
        bounds = ControlBounds()
        study = control_study(targets=0.5, tolerances=0.005, bounds=bounds, solver_options=SOLVER)
        for result in (study.constant, study.time_varying):
            for volume in result.tidal_volumes:
                assert abs(volume.value - 0.5) <= 0.005 + 1e-5
            settings = result.settings
            assert bounds.rate[0] - 1e-6 <= settings.rate <= bounds.rate[1] + 1e-6
            assert bounds.ratio[0] - 1e-6 <= settings.ratio <= bounds.ratio[1] + 1e-6
            assert all(0.0 <= a <= 1.0 for a in settings.valve_inhale + settings.valve_exhale)
        constant = study.constant.settings
        assert bounds.pip[0] - 1e-6 <= constant.pip <= bounds.pip[1] + 1e-6
        assert bounds.peep[0] - 1e-6 <= constant.peep <= bounds.peep[1] + 1e-6
        assert study.constant.energy > 0.0
        assert study.time_varying.energy <= 0.5 * study.constant.energy
        for valves in (constant.valve_inhale, constant.valve_exhale):
            assert 0.98 <= valves[0] <= 1.0
            assert 0.0 <= valves[1] <= 0.02
        assert constant.peep == pytest.approx(20.0, abs=0.2)
        assert constant.pip == pytest.approx(31.3, rel=0.03)
        delivered = sum(volume.value for volume in study.constant.tidal_volumes)
        assert study.constant.energy == pytest.approx((constant.pip - constant.peep) * delivered, rel=1e-3)


class TestStudiesIntegration:
    """Integration tests for the transcription studies."""

    @pytest.mark.integration
    @pytest.mark.slow
    def test_convergence_orders(self):
        """IT808: xdot = x over 4 to 64 intervals - Should show second order for TR and fourth for HS."""
        table = convergence_table(solver_options=SolverOptions(tol=1e-12, max_iter=200))
        assert len(table) == 10
        assert 1.8 <= convergence_order(table, 'TR') <= 2.2
        assert 3.6 <= convergence_order(table, 'HS') <= 4.4

    @pytest.mark.integration
    @pytest.mark.slow
    def test_integrated_residual_beats_collocation(self):
        """IT809: Inhale phase on three intervals - Should leave a smaller dense residual than collocation."""
        comparison = residual_comparison(settings=ESTIMATION_SETTINGS, solver_options=SOLVER)
        assert comparison.residual_dense < comparison.collocation_dense
        assert comparison.collocation_at_points <= 1e-8
