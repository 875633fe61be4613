"""Experiment pipelines: scans, sweeps, noise runs, design extrapolation."""

import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.constants import c as C_LIGHT
from scipy.constants import h as H_PLANCK

from xpmsim import (
    BeamPowers,
    DesignParams,
    DetectorModel,
    DomainError,
    ModelBundle,
    ScanConfig,
    SweepConfig,
    SweepResult,
    default_bundle,
    default_meter_values,
    default_scan_grid,
    default_signal_values,
    detection_improvement,
    extrapolate_design,
    meter_phase_shift,
    operating_point_detuning,
    run_meter_sweep,
    run_noise_characterization,
    run_signal_sweep,
    run_spectrum_scan,
    transmission,
)
from xpmsim.detection import effective_window
from xpmsim.harness import parallel_map
from xpmsim.kerr import dispersion_reference

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="module")
def fast_bundle(bundle):
    return replace(bundle, detector=DetectorModel(duration=20e-6))


def predicted_std(bundle: ModelBundle, p_met: float) -> float:
    w = effective_window(bundle.detector, bundle.tones.offset_freq,
                         bundle.time_constant)
    kappa = 1.0 - (bundle.time_constant / w) * (1.0 - math.exp(-w / bundle.time_constant))
    e_ph = H_PLANCK * C_LIGHT / bundle.tones.wavelength
    return math.sqrt(2.0 * kappa * e_ph
                     / (bundle.detector.quantum_efficiency * p_met * w))


class TestSpectrumScan:
    def test_noiseless_equals_pointwise_model(self, bundle):
        grid = default_scan_grid(25)
        cfg = ScanConfig(grid, BeamPowers(p_met=1e-6, p_sig=45e-6))
        spec = run_spectrum_scan(cfg, bundle)
        cal = bundle.calibration_for("max_phase")
        for i, d in enumerate(grid):
            direct = meter_phase_shift(bundle.cell, cfg.powers, float(d), cal,
                                       bundle.manifold, bundle.lineshape,
                                       bundle.consts)
            assert spec.phase[i] == direct
            t = transmission(bundle.cell, cfg.powers, float(d), cal,
                             bundle.manifold, bundle.lineshape)
            assert spec.transmission[i] == t

    def test_zero_signal_scan(self, bundle):
        cfg = ScanConfig(default_scan_grid(31), BeamPowers(p_met=1e-6, p_sig=0.0))
        spec = run_spectrum_scan(cfg, bundle)
        assert np.all(spec.phase == 0.0)
        assert np.all(spec.transmission < 1.0)

    def test_noisy_scan_mean_tracks_analytic(self, bundle):
        # max |phase| stays below pi at 10 uW so no wrap ambiguity
        grid = np.linspace(-TWO_PI * 40e6, TWO_PI * 40e6, 9)
        powers = BeamPowers(p_met=1e-6, p_sig=10e-6)
        clean = run_spectrum_scan(ScanConfig(grid, powers), bundle)
        assert np.max(np.abs(clean.phase)) < math.pi
        n_seeds = 50
        noisy = run_spectrum_scan(
            ScanConfig(grid, powers, include_detection_noise=True,
                       seeds=range(n_seeds)), bundle)
        se = predicted_std(bundle, powers.p_met) / math.sqrt(n_seeds)
        np.testing.assert_allclose(noisy.phase, clean.phase, atol=4.0 * se)
        np.testing.assert_array_equal(noisy.transmission, clean.transmission)

    def test_scan_config_validation(self):
        with pytest.raises(DomainError):
            ScanConfig(np.array([0.0]), BeamPowers(p_met=1e-6, p_sig=1e-6))
        with pytest.raises(DomainError):
            ScanConfig(np.array([1.0, 0.0]), BeamPowers(p_met=1e-6, p_sig=1e-6))
        with pytest.raises(DomainError):
            ScanConfig(np.array([0.0, 1.0]), BeamPowers(p_met=1e-6, p_sig=1e-6),
                       seeds=())
        cfg = ScanConfig(np.array([0.0, 1.0]), BeamPowers(p_met=1e-6, p_sig=1e-6),
                         seeds=3)
        assert cfg.seeds == (3,)


class TestSignalSweep:
    def test_unit_loglog_slope(self, bundle):
        cfg = SweepConfig(axis="signal_power", values=default_signal_values(),
                          fixed_power=1e-6)
        res = run_signal_sweep(cfg, bundle)
        assert res.metadata["loglog_slope"] == pytest.approx(1.0, abs=1e-9)
        assert res.metadata["loglog_slope_ci"] == pytest.approx(0.0, abs=1e-9)

    def test_pointwise_equality(self, bundle):
        cfg = SweepConfig(axis="signal_power", values=default_signal_values(),
                          fixed_power=1e-6)
        res = run_signal_sweep(cfg, bundle)
        cal = bundle.calibration_for("max_phase")
        d_ext = operating_point_detuning("max_phase", bundle.manifold,
                                         bundle.lineshape)
        for i, v in enumerate(res.axis_values):
            assert res.phase[i] == meter_phase_shift(
                bundle.cell, BeamPowers(p_met=1e-6, p_sig=float(v)), d_ext,
                cal, bundle.manifold, bundle.lineshape, bundle.consts)

    def test_parallel_lines_at_different_meter_powers(self, bundle):
        phases = []
        for p_met in (1e-6, 10e-6, 30e-6):
            cfg = SweepConfig(axis="signal_power",
                              values=default_signal_values(),
                              fixed_power=p_met)
            res = run_signal_sweep(cfg, bundle)
            assert res.metadata["loglog_slope"] == pytest.approx(1.0, abs=1e-9)
            phases.append(res.phase)
        # saturation rescales the whole line without tilting it
        for other in phases[1:]:
            ratio = other / phases[0]
            np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)

    def test_results_keyed_by_value(self, bundle):
        full = SweepConfig(axis="signal_power", values=default_signal_values(),
                           fixed_power=1e-6)
        sparse = SweepConfig(axis="signal_power",
                             values=default_signal_values()[::2],
                             fixed_power=1e-6)
        a = run_signal_sweep(full, bundle)
        b = run_signal_sweep(sparse, bundle)
        np.testing.assert_array_equal(a.phase[::2], b.phase)
        np.testing.assert_array_equal(a.absorption[::2], b.absorption)

    def test_detuned_ratio_in_metadata(self, bundle):
        cfg = SweepConfig(axis="signal_power", values=default_signal_values(),
                          fixed_power=1e-6)
        res = run_signal_sweep(cfg, bundle)
        ratio = res.metadata["detuned_to_max_phase_ratio"]
        assert 0.2 < ratio < 0.8

    def test_axis_mismatch_rejected(self, bundle):
        cfg = SweepConfig(axis="meter_power", values=default_meter_values(),
                          fixed_power=25e-6)
        with pytest.raises(DomainError):
            run_signal_sweep(cfg, bundle)


class TestMeterSweep:
    def test_recovers_saturation_power(self, bundle):
        cfg = SweepConfig(axis="meter_power", values=default_meter_values(),
                          fixed_power=25e-6)
        res = run_meter_sweep(cfg, bundle)
        meta = res.metadata
        assert meta["fitted_p_sat_phase_w"] == pytest.approx(3e-6, rel=1e-6)
        assert meta["fitted_p_sat_abs_w"] == pytest.approx(3e-6, rel=1e-6)

    def test_unsaturated_phase(self, bundle):
        cfg = SweepConfig(axis="meter_power", values=default_meter_values(),
                          fixed_power=25e-6)
        meta = run_meter_sweep(cfg, bundle).metadata
        assert meta["analytic_unsaturated_phase_rad"] == pytest.approx(
            4.0 * math.pi / 3.0, rel=1e-12)
        assert meta["fitted_unsaturated_phase_rad"] == pytest.approx(
            meta["analytic_unsaturated_phase_rad"], rel=1e-6)

    def test_detuned_operating_point_uses_its_own_saturation(self, bundle):
        cfg = SweepConfig(axis="meter_power", values=default_meter_values(),
                          fixed_power=25e-6,
                          operating_point="detuned_minus_35MHz")
        meta = run_meter_sweep(cfg, bundle).metadata
        assert meta["fitted_p_sat_phase_w"] == pytest.approx(20e-6, rel=1e-6)
        assert meta["configured_p_sat_phase_w"] == 20e-6

    def test_axis_mismatch_rejected(self, bundle):
        cfg = SweepConfig(axis="signal_power", values=default_signal_values(),
                          fixed_power=1e-6)
        with pytest.raises(DomainError):
            run_meter_sweep(cfg, bundle)


class TestNoiseCharacterization:
    def test_small_run_statistics(self, fast_bundle):
        p_vals = np.geomspace(1e-6, 1e-5, 3)
        res = run_noise_characterization(p_vals, fast_bundle, n_trials=30,
                                         seed=0)
        assert np.all((res.mc_over_predicted > 0.6)
                      & (res.mc_over_predicted < 1.4))
        assert res.exponent == pytest.approx(-0.5, abs=0.1)
        np.testing.assert_allclose(res.floor_ratio, res.floor_ratio[0],
                                   rtol=1e-12)
        assert res.floor_ratio[0] == pytest.approx(19.62, abs=0.05)

    def test_deterministic_in_seed(self, fast_bundle):
        p_vals = np.geomspace(1e-6, 1e-5, 3)
        a = run_noise_characterization(p_vals, fast_bundle, n_trials=5, seed=0)
        b = run_noise_characterization(p_vals, fast_bundle, n_trials=5, seed=0)
        c = run_noise_characterization(p_vals, fast_bundle, n_trials=5, seed=1)
        np.testing.assert_array_equal(a.mc_std, b.mc_std)
        assert np.any(a.mc_std != c.mc_std)

    def test_two_powers_yield_nan_exponent(self, fast_bundle):
        res = run_noise_characterization([1e-6, 2e-6], fast_bundle, n_trials=3,
                                         seed=0)
        assert math.isnan(res.exponent)

    def test_validation(self, fast_bundle):
        with pytest.raises(DomainError):
            run_noise_characterization([], fast_bundle)
        with pytest.raises(DomainError):
            run_noise_characterization([-1e-6], fast_bundle)
        with pytest.raises(DomainError):
            run_noise_characterization([1e-6], fast_bundle, n_trials=1)


class TestParallelism:
    def test_order_preserved(self, monkeypatch):
        monkeypatch.setenv("XPMSIM_THREADS", "8")
        assert parallel_map(lambda i: i * i, range(100)) == [i * i for i in range(100)]

    def test_invalid_thread_count(self, monkeypatch):
        monkeypatch.setenv("XPMSIM_THREADS", "lots")
        with pytest.raises(DomainError):
            parallel_map(lambda i: i, [1, 2])

    def test_thread_count_does_not_change_results(self, bundle, monkeypatch):
        fast = replace(bundle, detector=DetectorModel(duration=20e-6))
        grid = np.linspace(-TWO_PI * 20e6, TWO_PI * 20e6, 5)
        cfg = ScanConfig(grid, BeamPowers(p_met=1e-6, p_sig=10e-6),
                         include_detection_noise=True, seeds=(0, 1, 2))
        monkeypatch.setenv("XPMSIM_THREADS", "1")
        serial = run_spectrum_scan(cfg, fast)
        monkeypatch.setenv("XPMSIM_THREADS", "4")
        threaded = run_spectrum_scan(cfg, fast)
        np.testing.assert_array_equal(serial.phase, threaded.phase)


class TestDesignExtrapolation:
    def test_headline_number(self):
        phi = extrapolate_design(DesignParams())
        assert phi == pytest.approx(0.208, rel=1e-12)
        assert phi >= 0.2

    def test_identity_factors(self):
        params = DesignParams(core_factor=1.0, density_factor=1.0,
                              length_factor=1.0)
        assert extrapolate_design(params) == 1.3e-6

    def test_linear_in_each_factor(self):
        base = extrapolate_design(DesignParams())
        assert extrapolate_design(DesignParams(core_factor=160.0)) == pytest.approx(
            2.0 * base, rel=1e-12)
        assert extrapolate_design(DesignParams(length_factor=20.0)) == pytest.approx(
            2.0 * base, rel=1e-12)

    def test_quantum_efficiency_does_not_move_the_phase(self):
        assert extrapolate_design(DesignParams(qe_new=0.5)) == extrapolate_design(
            DesignParams(qe_new=0.9))

    def test_detection_improvement(self):
        gain = detection_improvement(DesignParams())
        assert gain == pytest.approx(math.sqrt(0.9 / 0.04), rel=1e-12)
        with pytest.raises(DomainError):
            detection_improvement(DesignParams(), qe_old=0.0)

    def test_params_validation(self):
        with pytest.raises(DomainError):
            DesignParams(core_factor=0.0)
        with pytest.raises(DomainError):
            DesignParams(baseline_phi_ph=-1.0)


class TestOperatingPoints:
    def test_max_phase_detuning(self, bundle):
        d = operating_point_detuning("max_phase", bundle.manifold,
                                     bundle.lineshape)
        assert d == dispersion_reference(bundle.manifold, bundle.lineshape)[0]

    def test_detuned_point(self, bundle):
        d = operating_point_detuning("detuned_minus_35MHz", bundle.manifold,
                                     bundle.lineshape)
        assert d == -TWO_PI * 35e6

    def test_unknown_rejected(self, bundle):
        with pytest.raises(DomainError):
            operating_point_detuning("elsewhere", bundle.manifold,
                                     bundle.lineshape)


class TestBundleAndConfigs:
    def test_bundle_saturation_coverage_enforced(self):
        with pytest.raises(DomainError):
            ModelBundle(saturation_powers=(("max_phase", (3e-6, 3e-6)),))
        with pytest.raises(DomainError):
            ModelBundle(saturation_powers=(
                ("max_phase", (0.0, 3e-6)),
                ("detuned_minus_35MHz", (20e-6, 20e-6)),
            ))

    def test_uncalibrated_bundle_refuses_pipelines(self):
        bundle = ModelBundle()
        with pytest.raises(DomainError):
            bundle.calibration_for("max_phase")

    def test_default_bundle_is_calibrated(self):
        bundle = default_bundle()
        cal = bundle.calibration_for("max_phase")
        assert cal.p_sat_phase == 3e-6
        cal_det = bundle.calibration_for("detuned_minus_35MHz")
        assert cal_det.p_sat_phase == 20e-6
        assert cal_det.coupling_c == cal.coupling_c

    def test_sweep_config_validation(self):
        with pytest.raises(DomainError):
            SweepConfig(axis="frequency", values=(1e-6, 2e-6, 3e-6),
                        fixed_power=1e-6)
        with pytest.raises(DomainError):
            SweepConfig(axis="signal_power", values=(1e-6, 2e-6),
                        fixed_power=1e-6)
        with pytest.raises(DomainError):
            SweepConfig(axis="signal_power", values=(1e-6, 3e-6, 2e-6),
                        fixed_power=1e-6)
        with pytest.raises(DomainError):
            SweepConfig(axis="signal_power", values=(-1e-6, 2e-6, 3e-6),
                        fixed_power=1e-6)
        with pytest.raises(DomainError):
            SweepConfig(axis="signal_power", values=(1e-6, 2e-6, 3e-6),
                        fixed_power=1e-6, operating_point="elsewhere")

    def test_sweep_result_length_check(self):
        with pytest.raises(DomainError):
            SweepResult(axis_values=np.ones(3), phase=np.ones(2),
                        absorption=np.ones(3), ci_halfwidths=np.ones(3),
                        metadata={})
