from __future__ import annotations

import math
import warnings

import numpy as np
import pytest

from conftest import make_radar
from uavdet.errors import ParameterError, SimulationWarning
from uavdet.scenarios import PAPER_RADAR, aliased_doppler
from uavdet.sim import (C, ClutterScatterer, GroundSpec, PulseTrain, Scenario, TargetState, add_awgn,
                        amplitude_factor, clutter_echo, direct_echo, lfm_pulse, multipath_echo, path_difference,
                        pulse_time_axis, roughness_factor, signal_power, simulate, specular_coefficient,
                        target_range, target_returns)


def _target(**kw) -> TargetState:
    base = dict(initial_range=800.0, height=48.0, speed=20.0, aspect_angle=0.0)
    base.update(kw)
    return TargetState(**base)


# ---------------------------------------------------------------- waveform


def test_chirp_rate_of_full_size_waveform():
    radar = make_radar(PAPER_RADAR, num_pulses=2)
    assert radar.chirp_rate == pytest.approx(2.0e11, rel=1e-12)


def test_lfm_pulse_zero_amplitude_is_zero(desk_radar):
    radar = make_radar(num_pulses=4, amplitude=0.0)
    assert not np.any(lfm_pulse(radar, 0))


def test_lfm_pulse_envelope_and_instantaneous_frequency():
    radar = make_radar(num_pulses=4)
    s = lfm_pulse(radar, 0)
    n = radar.pulse_samples
    assert np.allclose(np.abs(s[:n]), radar.amplitude)
    assert not np.any(s[n:])
    # phase increments track a linear frequency ramp with slope K
    dphi = np.angle(s[1:n] * np.conj(s[:n - 1]))
    t = (np.arange(n - 1) + 0.5) / radar.sample_rate
    expected = 2 * np.pi * (-radar.bandwidth / 2 + radar.chirp_rate * t) / radar.sample_rate
    assert np.allclose(dphi, expected, atol=1e-9)


def test_lfm_pulses_are_shifted_by_one_pri():
    radar = make_radar(num_pulses=4)
    assert np.array_equal(lfm_pulse(radar, 0), lfm_pulse(radar, 1))
    assert np.allclose(pulse_time_axis(radar, 1) - pulse_time_axis(radar, 0), radar.pri)


def test_lfm_pulse_rejects_bad_index_and_params():
    radar = make_radar(num_pulses=4)
    with pytest.raises(ParameterError):
        lfm_pulse(radar, 4)
    with pytest.raises(ParameterError):
        make_radar(bandwidth=float("nan"))
    with pytest.raises(ParameterError):
        make_radar(pulse_width=1.0)


# ---------------------------------------------------------------- geometry


def test_target_range_examples():
    assert target_range(_target(), 0.0) == 800.0
    tgt = _target(speed=60.0)
    assert target_range(tgt, 10.0) == pytest.approx(1000.0, rel=1e-12)
    side = _target(aspect_angle=math.pi / 2)
    assert np.allclose(target_range(side, np.linspace(0, 100, 11)), 800.0)
    with pytest.raises(ParameterError):
        target_range(tgt, -1.0)


def test_path_difference_symmetric_case():
    h, height = 700.0, 45.0
    assert path_difference(h, height, height) == pytest.approx(math.sqrt(h * h + 4 * height**2) - h, rel=1e-12)


def test_path_difference_matches_direct_evaluation():
    h, h1, h2 = 1000.0, 40.0, 50.0
    direct = math.sqrt(h**2 + (h1 + h2) ** 2) - math.sqrt(h**2 + (h1 - h2) ** 2)
    assert path_difference(h, h1, h2) == pytest.approx(direct, rel=1e-12)
    assert path_difference(h, h1, h2) == pytest.approx(3.995, abs=5e-3)


def test_path_difference_far_field_asymptote():
    h, h1, h2 = 1e6, 40.0, 50.0
    assert path_difference(h, h1, h2) == pytest.approx(2 * h1 * h2 / h, rel=1e-6)


def test_path_difference_rejects_nonpositive():
    with pytest.raises(ParameterError):
        path_difference(0.0, 1.0, 1.0)


# ---------------------------------------------------------------- reflection


def test_specular_coefficient_examples():
    assert specular_coefficient(GroundSpec(fresnel_rho0=1.0, roughness=0.0)) == 1.0
    for g in (0.0, 0.05, 0.3):
        assert specular_coefficient(GroundSpec(fresnel_rho0=0.0, roughness=g)) == 0.0


def test_roughness_branches_meet_at_knee():
    g = (2 * math.pi * 0.1) ** 2
    low = math.exp(-2 * g)
    high = 0.812537 / (1 + 2 * g)
    assert abs(low - high) < 1e-4
    assert low == pytest.approx(0.45404, abs=1e-5)
    assert roughness_factor(0.1) == pytest.approx(0.45404, abs=1e-5)
    assert roughness_factor(0.1 + 1e-12) == pytest.approx(0.45404, abs=1e-4)


def test_amplitude_factor_examples():
    assert amplitude_factor(0.0, 1.3) == (1.0, 0.0)
    b, phi = amplitude_factor(1.0, 0.0)
    assert (b, phi) == (4.0, 0.0)
    assert amplitude_factor(1.0, math.pi)[0] == pytest.approx(0.0, abs=1e-15)


def test_amplitude_factor_matches_complex_square(rng):
    rho = rng.uniform(0, 1, 10_000)
    beta = rng.uniform(-2 * np.pi, 2 * np.pi, 10_000)
    b, phi = amplitude_factor(rho, beta)
    ref = (1 + rho * np.exp(1j * beta)) ** 2
    assert np.max(np.abs(b - np.abs(1 + rho * np.exp(1j * beta)) ** 2)) < 1e-12
    assert np.max(np.abs(b * np.exp(1j * phi) - ref)) < 1e-12


def test_amplitude_factor_rejects_rho_outside_unit_interval():
    with pytest.raises(ParameterError):
        amplitude_factor(1.5, 0.0)


# ---------------------------------------------------------------- echoes


def test_multipath_without_reflection_is_direct_path(desk_radar):
    tgt = _target()
    ground = GroundSpec(fresnel_rho0=0.0)
    for m in (0, 7, 63):
        a = multipath_echo(tgt, ground, desk_radar, m)
        b = direct_echo(tgt, desk_radar, m)
        assert np.array_equal(a, b)


def test_multipath_beta_sweep_extremes_ratio():
    # a near-zero target height makes the extra path delay negligible, isolating the interference term
    radar = make_radar(num_pulses=4)
    tgt = TargetState(800.0, 1e-6, 0.0)
    rho = 0.8
    ground = GroundSpec(fresnel_rho0=rho)
    peaks = [np.abs(multipath_echo(tgt, ground, radar, 0, beta=b)).max() for b in np.linspace(0, 2 * np.pi, 721)]
    assert max(peaks) / min(peaks) == pytest.approx((1 + rho) ** 2 / (1 - rho) ** 2, rel=1e-3)
    assert (1 + rho) ** 2 / (1 - rho) ** 2 == pytest.approx(81.0)


def test_multipath_zero_delay_scale():
    radar = make_radar(num_pulses=4)
    tgt = TargetState(800.0, 1e-6, 0.0)
    rho = 0.6
    ground = GroundSpec(fresnel_rho0=rho)
    e = multipath_echo(tgt, ground, radar, 0, beta=0.0)
    d = direct_echo(tgt, radar, 0)
    assert np.allclose(e, (1 + rho) ** 2 * d, rtol=1e-9, atol=1e-12)


def test_multipath_warns_when_echo_passes_pri():
    radar = make_radar(num_pulses=4)
    far = TargetState(radar.unambiguous_range - 100.0, 45.0, 0.0)
    with pytest.warns(SimulationWarning):
        direct_echo(far, radar, 0)


def test_clutter_examples(desk_radar):
    assert not np.any(clutter_echo([], desk_radar))
    pair = [ClutterScatterer(600.0, 1.0, 0.0), ClutterScatterer(600.0, 1.0, math.pi)]
    assert np.max(np.abs(clutter_echo(pair, desk_radar))) < 1e-12
    with pytest.warns(SimulationWarning):
        out = clutter_echo([ClutterScatterer(desk_radar.unambiguous_range + 1, 1.0)], desk_radar)
    assert not np.any(out)


def test_clutter_is_identical_on_every_pulse(desk_radar):
    sc = Scenario(desk_radar, clutter=[ClutterScatterer(600.0, 2.0, 0.3)])
    x = simulate(sc).samples
    assert np.array_equal(x[:, 0], x[:, -1])


# ---------------------------------------------------------------- noise


def test_awgn_infinite_snr_is_identity(rng):
    x = rng.standard_normal((8, 4)) + 0j
    assert np.array_equal(add_awgn(x, math.inf, 0), x)


def test_awgn_measured_snr():
    x = np.ones(100_000, dtype=complex) * (0.3 - 0.4j)
    y = add_awgn(x, 3.0, 99)
    noise = y - x
    snr = 10 * np.log10(signal_power(x) / np.mean(np.abs(noise) ** 2))
    assert snr == pytest.approx(3.0, abs=0.1)
    # circular: real and imaginary parts carry equal power
    assert np.var(noise.real) == pytest.approx(np.var(noise.imag), rel=0.05)


def test_awgn_is_deterministic_and_checks_power(rng):
    x = rng.standard_normal(64) + 1j
    assert np.array_equal(add_awgn(x, 0.0, 5), add_awgn(x, 0.0, 5))
    with pytest.raises(ParameterError):
        add_awgn(np.zeros(16, complex), 0.0, 1)
    with pytest.raises(ParameterError):
        add_awgn(np.zeros(0, complex), 0.0, 1)


# ---------------------------------------------------------------- full scene


def test_empty_scene_is_zero(desk_radar):
    train = simulate(Scenario(desk_radar))
    assert isinstance(train, PulseTrain)
    assert train.samples.shape == (desk_radar.fast_time_bins, desk_radar.num_pulses)
    assert train.samples.shape[0] == round(desk_radar.pri * desk_radar.sample_rate)
    assert not np.any(train.samples)


def test_linearity_in_targets(desk_radar):
    ground = GroundSpec(fresnel_rho0=0.7, roughness=0.05)
    a = _target(initial_range=760.0, speed=14.0)
    b = _target(initial_range=820.0, speed=31.0, aspect_angle=math.pi, initial_phase=1.1)
    both = simulate(Scenario(desk_radar, targets=[a, b], ground=ground)).samples
    sa = simulate(Scenario(desk_radar, targets=[a], ground=ground)).samples
    sb = simulate(Scenario(desk_radar, targets=[b], ground=ground)).samples
    assert np.max(np.abs(both - (sa + sb))) <= 1e-9 * np.max(np.abs(both))


def test_doubling_reflectivity_doubles_echo(desk_radar):
    ground = GroundSpec(fresnel_rho0=0.5)
    one = target_returns(Scenario(desk_radar, targets=[_target(reflectivity=1.0)], ground=ground))
    two = target_returns(Scenario(desk_radar, targets=[_target(reflectivity=2.0)], ground=ground))
    assert np.array_equal(two, 2 * one)


def test_simulate_is_deterministic(desk_radar):
    sc = Scenario(desk_radar, targets=[_target()], ground=GroundSpec(0.6, 0.02),
                  clutter=[ClutterScatterer(500.0, 1.0)], snr_db=0.0, seed=2**63 + 5)
    assert np.array_equal(simulate(sc).samples, simulate(sc).samples)
    other = Scenario(desk_radar, targets=[_target()], ground=GroundSpec(0.6, 0.02),
                     clutter=[ClutterScatterer(500.0, 1.0)], snr_db=0.0, seed=6)
    assert not np.array_equal(simulate(sc).samples, simulate(other).samples)


def test_noise_only_scene_needs_reference_power(desk_radar):
    with pytest.raises(ParameterError):
        simulate(Scenario(desk_radar, snr_db=0.0))
    train = simulate(Scenario(desk_radar, snr_db=0.0, reference_power=2.0))
    assert np.mean(np.abs(train.samples) ** 2) == pytest.approx(2.0, rel=0.05)


def test_rayleigh_beta_mode_runs_and_differs(desk_radar):
    ground = GroundSpec(fresnel_rho0=0.8)
    geo = target_returns(Scenario(desk_radar, targets=[_target()], ground=ground))
    ray = target_returns(Scenario(desk_radar, targets=[_target()], ground=ground, beta_mode="rayleigh", seed=3))
    assert geo.shape == ray.shape
    assert not np.allclose(geo, ray)


def test_scenario_validation(desk_radar):
    with pytest.raises(ParameterError):
        Scenario(desk_radar, targets=[_target()], label=2)
    with pytest.raises(ParameterError):
        Scenario(desk_radar, targets=[_target()] * 3)
    with pytest.raises(ParameterError):
        Scenario(desk_radar, snr_db=float("nan"))


def test_slow_time_doppler_of_approaching_target():
    radar = make_radar(num_pulses=256)
    tgt = _target(speed=20.0, initial_range=800.0)
    fd = 2 * tgt.radial_velocity * radar.carrier_freq / C
    assert fd == pytest.approx(4666.7, abs=0.1)
    train = simulate(Scenario(radar, targets=[tgt]))
    gate = int(np.argmax(np.sum(np.abs(train.samples) ** 2, axis=1)))
    spec = np.abs(np.fft.fft(train.samples[gate]))
    freqs = np.fft.fftfreq(radar.num_pulses, radar.pri)
    folded = (fd + radar.prf / 2) % radar.prf - radar.prf / 2
    assert folded == pytest.approx(aliased_doppler(20.0, radar))
    nearest = int(np.argmin(np.abs(freqs - folded)))
    assert abs(int(np.argmax(spec)) - nearest) <= 1


def test_stop_and_hop_moves_delay_between_pulses():
    radar = make_radar(num_pulses=4)
    tgt = _target(speed=45.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        e0 = direct_echo(tgt, radar, 0)
        e3 = direct_echo(tgt, radar, 3)
    # envelopes share the same support (motion << one range bin) but carrier phase rotates
    assert np.array_equal(np.abs(e0) > 0, np.abs(e3) > 0)
    assert not np.allclose(e0, e3)
