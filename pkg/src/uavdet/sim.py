"""Pulse-Doppler echo simulation for low-altitude UAV scenes.

Signals are complex baseband. The carrier only enters through the two-way
propagation phase, which produces the Doppler rotation across pulses and the
multipath phase offset between direct and ground-bounced paths. Ranges are
frozen within a pulse and updated pulse to pulse (stop-and-hop).

Matrices are laid out ``[fast_time_bins, num_pulses]``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ParameterError, SimulationWarning

C = 3.0e8  # propagation speed, m/s

ROUGHNESS_KNEE = 0.1
ROUGH_SURFACE_NUMERATOR = 0.812537

RANGE_LAWS = ("linear", "crossing")
BETA_MODES = ("geometric", "rayleigh")


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class RadarParams:
    carrier_freq: float
    bandwidth: float
    pulse_width: float
    pri: float
    num_pulses: int
    sample_rate: float
    radar_height: float
    gain: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        if not _finite(self.carrier_freq, self.bandwidth, self.pulse_width, self.pri,
                       self.sample_rate, self.radar_height, self.gain, self.amplitude):
            raise ParameterError("radar parameters must be finite")
        if self.bandwidth <= 0:
            raise ParameterError(f"bandwidth must be > 0, got {self.bandwidth}")
        if not 0 < self.pulse_width < self.pri:
            raise ParameterError("need 0 < pulse_width < pri")
        if self.sample_rate < 2 * self.bandwidth:
            raise ParameterError("sample_rate must be at least twice the bandwidth")
        if int(self.num_pulses) != self.num_pulses or self.num_pulses < 1:
            raise ParameterError("num_pulses must be a positive integer")
        if self.carrier_freq <= 0 or self.radar_height <= 0 or self.amplitude < 0:
            raise ParameterError("carrier_freq, radar_height must be > 0 and amplitude >= 0")

    @property
    def chirp_rate(self) -> float:
        """LFM slope K = B / T_p in Hz/s."""
        return self.bandwidth / self.pulse_width

    @property
    def prf(self) -> float:
        return 1.0 / self.pri

    @property
    def fast_time_bins(self) -> int:
        return int(round(self.pri * self.sample_rate))

    @property
    def pulse_samples(self) -> int:
        return int(math.ceil(self.pulse_width * self.sample_rate - 1e-9))

    @property
    def wavelength(self) -> float:
        return C / self.carrier_freq

    @property
    def unambiguous_range(self) -> float:
        return C * self.pri / 2.0


@dataclass(frozen=True)
class TargetState:
    initial_range: float
    height: float
    speed: float
    aspect_angle: float = 0.0
    reflectivity: float = 1.0
    initial_phase: float = 0.0

    def __post_init__(self) -> None:
        if not _finite(self.initial_range, self.height, self.speed, self.aspect_angle,
                       self.reflectivity, self.initial_phase):
            raise ParameterError("target parameters must be finite")
        if self.initial_range <= 0 or self.height <= 0 or self.speed < 0:
            raise ParameterError("need initial_range > 0, height > 0, speed >= 0")

    @property
    def radial_velocity(self) -> float:
        """Closing speed along the line of sight (positive = approaching)."""
        return self.speed * math.cos(self.aspect_angle)


@dataclass(frozen=True)
class GroundSpec:
    fresnel_rho0: float = 0.0
    roughness: float = 0.0
    reflection_phase: float = math.pi

    def __post_init__(self) -> None:
        if not _finite(self.fresnel_rho0, self.roughness, self.reflection_phase):
            raise ParameterError("ground parameters must be finite")
        if not 0.0 <= self.fresnel_rho0 <= 1.0:
            raise ParameterError("fresnel_rho0 must lie in [0, 1]")
        if self.roughness < 0:
            raise ParameterError("roughness must be >= 0")


@dataclass(frozen=True)
class ClutterScatterer:
    range: float
    amplitude: float
    phase: float = 0.0

    def __post_init__(self) -> None:
        if not _finite(self.range, self.amplitude, self.phase):
            raise ParameterError("clutter parameters must be finite")
        if self.range <= 0 or self.amplitude < 0:
            raise ParameterError("need clutter range > 0 and amplitude >= 0")


@dataclass(frozen=True)
class Scenario:
    """A complete, seeded description of one observation.

    ``reference_power`` is the clean-echo power used to scale noise when the
    scene has no target. ``range_law`` selects the target kinematics used by
    :func:`simulate` (see :func:`range_at`), ``beta_mode`` whether the
    multipath phase follows the geometry or is drawn per pulse.
    """

    radar: RadarParams
    targets: tuple[TargetState, ...] = ()
    ground: GroundSpec = field(default_factory=GroundSpec)
    clutter: tuple[ClutterScatterer, ...] = ()
    snr_db: float = math.inf
    seed: int = 0
    label: int | None = None
    reference_power: float | None = None
    range_law: str = "linear"
    beta_mode: str = "geometric"
    rayleigh_scale: float = math.pi / 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "clutter", tuple(self.clutter))
        if self.label is None:
            object.__setattr__(self, "label", len(self.targets))
        if len(self.targets) > 2:
            raise ParameterError("at most two targets are supported")
        if self.label != len(self.targets):
            raise ParameterError(f"label {self.label} != number of targets {len(self.targets)}")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("seed must be an unsigned 64-bit integer")
        if self.range_law not in RANGE_LAWS:
            raise ParameterError(f"range_law must be one of {RANGE_LAWS}")
        if self.beta_mode not in BETA_MODES:
            raise ParameterError(f"beta_mode must be one of {BETA_MODES}")
        if math.isnan(self.snr_db):
            raise ParameterError("snr_db is NaN")


@dataclass
class PulseTrain:
    samples: np.ndarray  # complex [fast_time_bins, num_pulses]
    fast_time_step: float
    pri: float
    origin_time: float = 0.0

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 2:
            raise ParameterError("pulse train samples must be a 2-D matrix")
        if not np.all(np.isfinite(self.samples)):
            raise ParameterError("pulse train contains non-finite samples")

    @property
    def fast_time_bins(self) -> int:
        return self.samples.shape[0]

    @property
    def num_pulses(self) -> int:
        return self.samples.shape[1]


# --------------------------------------------------------------------------
# transmit waveform


def _pulse_at(radar: RadarParams, delay: float) -> np.ndarray:
    """Transmit pulse delayed by ``delay`` seconds, sampled over one PRI."""
    n = radar.fast_time_bins
    out = np.zeros(n, dtype=complex)
    fs = radar.sample_rate
    i0 = max(0, int(math.floor(delay * fs)))
    i1 = min(n, int(math.ceil((delay + radar.pulse_width) * fs)) + 1)
    if i0 >= i1:
        return out
    t = np.arange(i0, i1) / fs - delay
    inside = (t >= 0.0) & (t < radar.pulse_width)
    t = t[inside]
    # chirp centred on baseband: instantaneous frequency sweeps [-B/2, B/2)
    phase = 2 * np.pi * (-0.5 * radar.bandwidth * t + 0.5 * radar.chirp_rate * t**2)
    out[np.arange(i0, i1)[inside]] = radar.amplitude * np.exp(1j * phase)
    return out


def lfm_pulse(radar: RadarParams, m: int = 0) -> np.ndarray:
    """Baseband LFM pulse for pulse ``m`` sampled over its PRI.

    The samples are relative to the pulse emission time ``m * pri``; use
    :func:`pulse_time_axis` for absolute times. Every pulse has the same
    baseband samples, so pulse ``m`` is pulse 0 shifted by ``m * pri``.
    """
    if not 0 <= m < radar.num_pulses:
        raise ParameterError(f"pulse index {m} out of range [0, {radar.num_pulses})")
    return _pulse_at(radar, 0.0)


def pulse_time_axis(radar: RadarParams, m: int) -> np.ndarray:
    return m * radar.pri + np.arange(radar.fast_time_bins) / radar.sample_rate


# --------------------------------------------------------------------------
# geometry


def target_range(target: TargetState, t: float | np.ndarray) -> float | np.ndarray:
    """Range of a target crossing the line of sight, ``sqrt(R0^2 + (v cos(phi) t)^2)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ParameterError("time must be non-negative")
    r = np.sqrt(target.initial_range**2 + (target.speed * math.cos(target.aspect_angle) * t) ** 2)
    return float(r) if r.ndim == 0 else r


def range_at(target: TargetState, t: float, law: str = "linear") -> float:
    """Target range at time ``t`` under the chosen kinematic law.

    ``"crossing"`` is :func:`target_range`. ``"linear"`` moves the target along
    the line of sight with closing speed ``v cos(phi)``, so that ``phi = 0``
    approaches and ``phi = pi`` recedes at the full speed.
    """
    if law == "crossing":
        return target_range(target, t)
    if law == "linear":
        r = target.initial_range - target.radial_velocity * t
        if r <= 0:
            raise ParameterError(f"target reached the radar at t={t:.4g} s")
        return r
    raise ParameterError(f"unknown range law {law!r}")


def path_difference(horizontal_dist: float, h1: float, h2: float) -> float:
    """Extra length of the ground-bounce path over the direct path."""
    if horizontal_dist <= 0 or h1 <= 0 or h2 <= 0:
        raise ParameterError("path_difference needs positive distance and heights")
    h2d = horizontal_dist * horizontal_dist
    # difference of squares form avoids cancellation at long range
    num = (h1 + h2) ** 2 - (h1 - h2) ** 2
    return num / (math.sqrt(h2d + (h1 + h2) ** 2) + math.sqrt(h2d + (h1 - h2) ** 2))


def horizontal_distance(slant_range: float, h1: float, h2: float) -> float:
    dz = h1 - h2
    return math.sqrt(max(slant_range * slant_range - dz * dz, 1e-12))


def roughness_factor(roughness: float) -> float:
    """Specular correction rho_s for surface roughness Gamma."""
    if roughness < 0:
        raise ParameterError("roughness must be >= 0")
    g = (2 * math.pi * roughness) ** 2
    if roughness <= ROUGHNESS_KNEE:
        return math.exp(-2 * g)
    return ROUGH_SURFACE_NUMERATOR / (1 + 2 * g)


def specular_coefficient(ground: GroundSpec) -> float:
    return ground.fresnel_rho0 * roughness_factor(ground.roughness)


def amplitude_factor(rho: float | np.ndarray, beta: float | np.ndarray):
    """Multipath amplitude ``B`` and phase ``phi_B`` for reflection ``rho`` and
    relative phase ``beta``; ``B * exp(1j * phi_B) == (1 + rho * exp(1j * beta))**2``.
    """
    rho = np.asarray(rho, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if np.any((rho < 0) | (rho > 1)):
        raise ParameterError("rho must lie in [0, 1]")
    re = 1 + rho * np.cos(beta)
    im = rho * np.sin(beta)
    b = re**2 + im**2
    phi_b = 2 * np.arctan2(im, re)
    if b.ndim == 0:
        return float(b), float(phi_b)
    return b, phi_b


def multipath_phase(target: TargetState, ground: GroundSpec, radar: RadarParams,
                    slant_range: float) -> tuple[float, float]:
    """Return ``(t_delta, beta)`` for a target at ``slant_range``.

    ``t_delta`` is the single-bounce excess delay and ``beta`` the phase of the
    bounced path relative to the direct one (carrier term plus the ground
    reflection phase).
    """
    h1, h2 = radar.radar_height, target.height
    ld = path_difference(horizontal_distance(slant_range, h1, h2), h1, h2)
    t_delta = ld / C
    beta = ground.reflection_phase - 2 * math.pi * math.fmod(radar.carrier_freq * t_delta, 1.0)
    return t_delta, beta


# --------------------------------------------------------------------------
# echo components


def direct_echo(target: TargetState, radar: RadarParams, m: int,
                range_law: str = "linear") -> np.ndarray:
    """Direct-path return of one pulse: delayed, scaled pulse with two-way carrier phase."""
    r = range_at(target, m * radar.pri, range_law)
    tau = 2 * r / C
    _warn_truncation(radar, tau, "target")
    carrier = -2 * math.pi * math.fmod(radar.carrier_freq * tau, 1.0) + target.initial_phase
    return target.reflectivity * np.exp(1j * carrier) * _pulse_at(radar, tau)


def multipath_echo(target: TargetState, ground: GroundSpec, radar: RadarParams, m: int,
                   range_law: str = "linear", beta: float | None = None) -> np.ndarray:
    """Four-path return of one pulse.

    Direct path (weight k), the two single-bounce paths combined (weight
    2*rho*k, excess delay t_delta, excess phase beta) and the double bounce
    (weight rho^2*k, delay 2*t_delta, phase 2*beta). ``beta`` overrides the
    geometric phase, e.g. for Rayleigh-distributed interference.
    """
    if not 0 <= m < radar.num_pulses:
        raise ParameterError(f"pulse index {m} out of range")
    direct = direct_echo(target, radar, m, range_law)
    rho = specular_coefficient(ground)
    if rho == 0.0:
        return direct
    r = range_at(target, m * radar.pri, range_law)
    t_delta, beta_geo = multipath_phase(target, ground, radar, r)
    if beta is None:
        beta = beta_geo
    tau = 2 * r / C
    _warn_truncation(radar, tau + 2 * t_delta, "multipath")
    carrier = -2 * math.pi * math.fmod(radar.carrier_freq * tau, 1.0) + target.initial_phase
    k = target.reflectivity * np.exp(1j * carrier)
    single = 2 * rho * k * np.exp(1j * beta) * _pulse_at(radar, tau + t_delta)
    double = rho**2 * k * np.exp(2j * beta) * _pulse_at(radar, tau + 2 * t_delta)
    return direct + single + double


def clutter_echo(clutter: Sequence[ClutterScatterer], radar: RadarParams, m: int = 0) -> np.ndarray:
    """Return of static ground scatterers; identical for every pulse."""
    if not 0 <= m < radar.num_pulses:
        raise ParameterError(f"pulse index {m} out of range")
    out = np.zeros(radar.fast_time_bins, dtype=complex)
    for sc in clutter:
        if sc.range >= radar.unambiguous_range:
            warnings.warn(f"clutter scatterer at {sc.range:.1f} m beyond unambiguous range; skipped",
                          SimulationWarning, stacklevel=2)
            continue
        out += sc.amplitude * np.exp(1j * sc.phase) * _pulse_at(radar, 2 * sc.range / C)
    return out


def _warn_truncation(radar: RadarParams, delay: float, what: str) -> None:
    if delay + radar.pulse_width > radar.pri:
        warnings.warn(f"{what} echo at delay {delay * 1e6:.2f} us extends past the PRI; truncated",
                      SimulationWarning, stacklevel=3)


# --------------------------------------------------------------------------
# noise


def pulse_rng(seed: int, pulse: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, pulse, stream) triple.

    Streams depend only on their key, so pulses can be generated in any order
    or in parallel with identical results.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(pulse), int(stream))))


def signal_power(signal: np.ndarray) -> float:
    """Mean squared magnitude over the samples where the signal is non-zero."""
    mag2 = np.abs(signal) ** 2
    support = mag2 > 0
    if not np.any(support):
        return 0.0
    return float(mag2[support].mean())


def noise_variance(reference_power: float, snr_db: float) -> float:
    if reference_power <= 0 or not math.isfinite(reference_power):
        raise ParameterError("SNR undefined: reference signal power is zero")
    return reference_power / 10 ** (snr_db / 10)


def complex_noise(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    scale = math.sqrt(variance / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def add_awgn(signal: np.ndarray, snr_db: float, rng: np.random.Generator | int,
             reference_power: float | None = None) -> np.ndarray:
    """Add circular complex Gaussian noise at ``snr_db`` below the signal power.

    The signal power defaults to :func:`signal_power` of ``signal``;
    ``snr_db = inf`` returns an unchanged copy.
    """
    signal = np.asarray(signal)
    if signal.size == 0:
        raise ParameterError("signal is empty")
    if math.isinf(snr_db) and snr_db > 0:
        return signal.astype(complex, copy=True)
    power = signal_power(signal) if reference_power is None else reference_power
    var = noise_variance(power, snr_db)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return signal + complex_noise(rng, signal.shape, var)


# --------------------------------------------------------------------------
# full scene


def target_returns(scenario: Scenario) -> np.ndarray:
    """Noise- and clutter-free sum of all target echoes, ``[bins, pulses]``."""
    radar = scenario.radar
    out = np.zeros((radar.fast_time_bins, radar.num_pulses), dtype=complex)
    for m in range(radar.num_pulses):
        for i, tgt in enumerate(scenario.targets):
            beta = None
            if scenario.beta_mode == "rayleigh":
                draw = pulse_rng(scenario.seed, m, stream=1 + i).rayleigh(scenario.rayleigh_scale)
                beta = float(np.mod(draw, 2 * np.pi))
            out[:, m] += multipath_echo(tgt, scenario.ground, radar, m, scenario.range_law, beta)
    return out


def simulate(scenario: Scenario) -> PulseTrain:
    """Receive matrix for a scenario: targets + clutter + noise.

    Noise variance is set from the clean target echo power over its support;
    scenes without targets use ``scenario.reference_power``. Noise for pulse
    ``m`` comes from :func:`pulse_rng` ``(seed, m)``.
    """
    radar = scenario.radar
    echoes = target_returns(scenario)
    clean_power = signal_power(echoes)
    if scenario.clutter:
        echoes += clutter_echo(scenario.clutter, radar)[:, None]
    if math.isfinite(scenario.snr_db):
        if scenario.targets:
            ref = clean_power
        else:
            ref = scenario.reference_power
            if ref is None:
                raise ParameterError("scenario without targets needs reference_power for a finite SNR")
        var = noise_variance(ref, scenario.snr_db)
        for m in range(radar.num_pulses):
            echoes[:, m] += complex_noise(pulse_rng(scenario.seed, m), radar.fast_time_bins, var)
    elif scenario.snr_db < 0:
        raise ParameterError("snr_db = -inf is not meaningful")
    return PulseTrain(echoes, 1.0 / radar.sample_rate, radar.pri)
