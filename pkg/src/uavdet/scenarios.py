"""Scenario presets and seeded random scene generation.

A preset is a plain dict of ranges from which scenes are drawn. Presets can be
overridden key by key from a JSON config::

    {"preset": "desk", "overrides": {"speed_range": [15, 30], "radar": {"num_pulses": 256}}}

Preset keys
-----------
radar                 RadarParams fields except ``radar_height``
radar_height_range    metres, drawn per scene
target_height_range   metres
range_window          initial range of the first target, metres
pair_range_spread     second target lies within +/- this of the first, metres
speed_range           m/s
aspect_jitter_deg     targets approach (aspect ~ 0) or recede (aspect ~ pi) within this
reflectivity_range    target reflectivity k
rho0_range            Fresnel coefficient of the ground
roughness_range       ground roughness Gamma
clutter_count         [min, max] number of scatterers spread over clutter_window
clutter_window        metres, absolute range span of the spread scatterers
near_clutter_count    [min, max] scatterers within near_clutter_spread of the target zone
near_clutter_spread   metres
clutter_to_signal_db  [min, max] scatterer amplitude relative to the target echo amplitude
min_doppler_sep_hz    aliased Doppler separation between the two targets
blind_doppler_hz      targets keep at least this aliased Doppler away from zero
beta_mode             "geometric" or "rayleigh"
range_law             "linear" or "crossing"
"""

from __future__ import annotations

import copy
import math
from typing import Any

import numpy as np

from .errors import ParameterError
from .sim import C, ClutterScatterer, GroundSpec, RadarParams, Scenario, TargetState, specular_coefficient

PAPER_RADAR = dict(carrier_freq=35e9, bandwidth=10e6, pulse_width=50e-6, pri=1 / 2000.0,
                   num_pulses=1000, sample_rate=20e6, gain=1.0, amplitude=1.0)

DESK_RADAR = dict(carrier_freq=35e9, bandwidth=0.5e6, pulse_width=20e-6, pri=1 / 2000.0,
                  num_pulses=512, sample_rate=1e6, gain=1.0, amplitude=1.0)

_COMMON = dict(
    radar_height_range=[40.0, 50.0],
    target_height_range=[40.0, 50.0],
    range_window=[700.0, 900.0],
    pair_range_spread=40.0,
    speed_range=[10.0, 45.0],
    aspect_jitter_deg=10.0,
    reflectivity_range=[0.8, 1.2],
    rho0_range=[0.5, 0.9],
    roughness_range=[0.0, 0.15],
    clutter_count=[3, 6],
    clutter_window=[300.0, 1500.0],
    near_clutter_count=[1, 2],
    near_clutter_spread=30.0,
    clutter_to_signal_db=[0.0, 10.0],
    min_doppler_sep_hz=150.0,
    blind_doppler_hz=250.0,
    beta_mode="geometric",
    range_law="linear",
)

PRESETS: dict[str, dict[str, Any]] = {
    "paper-sim": dict(_COMMON, radar=dict(PAPER_RADAR)),
    "desk": dict(_COMMON, radar=dict(DESK_RADAR)),
    "desk-strong-clutter": dict(
        _COMMON,
        radar=dict(DESK_RADAR),
        rho0_range=[0.7, 0.95],
        roughness_range=[0.0, 0.08],
        clutter_count=[6, 10],
        near_clutter_count=[2, 3],
        clutter_to_signal_db=[15.0, 25.0],
    ),
}


def get_preset(name: str, overrides: dict[str, Any] | None = None) -> dict[str, Any]:
    """Copy of preset ``name`` with ``overrides`` merged in (``radar`` merges per field)."""
    if name not in PRESETS:
        raise ParameterError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    preset = copy.deepcopy(PRESETS[name])
    for key, value in (overrides or {}).items():
        if key == "radar":
            unknown = set(value) - set(preset["radar"])
            if unknown:
                raise ParameterError(f"unknown radar keys {sorted(unknown)}")
            preset["radar"].update(value)
        elif key in preset:
            preset[key] = copy.deepcopy(value)
        else:
            raise ParameterError(f"unknown preset key {key!r}")
    return preset


def sample_seed(seed: int, label: int, index: int, snr_db: float) -> int:
    """Per-scene 64-bit seed derived from the dataset seed and the scene's slot."""
    snr_key = int(round(snr_db * 1000)) + 10**6 if math.isfinite(snr_db) else 0
    ss = np.random.SeedSequence([int(seed), int(label), int(index), snr_key])
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def aliased_doppler(radial_velocity: float, radar: RadarParams) -> float:
    """Doppler of a closing speed folded into ``[-PRF/2, PRF/2)``."""
    fd = 2 * radial_velocity * radar.carrier_freq / C
    prf = radar.prf
    return (fd + prf / 2) % prf - prf / 2


def _circ_dist(a: float, b: float, period: float) -> float:
    d = abs(a - b) % period
    return min(d, period - d)


def surveillance_window(preset: dict[str, Any]) -> tuple[float, float]:
    """Range interval (m) that can hold targets of scenes drawn from ``preset``."""
    lo, hi = preset["range_window"]
    spread = preset["pair_range_spread"]
    return lo - spread, hi + spread


def expected_echo_power(amplitude: float, reflectivity: float, rho: float) -> float:
    """Mean clean-echo power of one target averaged over a uniform multipath phase."""
    return (amplitude * reflectivity) ** 2 * (1 + 4 * rho**2 + rho**4)


def draw_scenario(preset: dict[str, Any], label: int, snr_db: float, seed: int) -> Scenario:
    """Random scene with ``label`` targets, fully determined by ``seed``."""
    if label not in (0, 1, 2):
        raise ParameterError(f"label must be 0, 1 or 2, got {label}")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(2**31,)))

    def uniform(key):
        lo, hi = preset[key]
        return float(rng.uniform(lo, hi))

    radar = RadarParams(radar_height=uniform("radar_height_range"), **preset["radar"])
    ground = GroundSpec(fresnel_rho0=uniform("rho0_range"), roughness=uniform("roughness_range"))
    zone = uniform("range_window")

    targets: list[TargetState] = []
    dopplers: list[float] = []
    sep = preset["min_doppler_sep_hz"]
    jitter = math.radians(preset["aspect_jitter_deg"])
    for i in range(label):
        for _ in range(1000):
            speed = uniform("speed_range")
            aspect = float(rng.uniform(0, jitter))
            if rng.random() < 0.5:
                aspect = math.pi - aspect
            t = TargetState(
                initial_range=zone if i == 0 else zone + float(rng.uniform(-1, 1)) * preset["pair_range_spread"],
                height=uniform("target_height_range"),
                speed=speed,
                aspect_angle=aspect,
                reflectivity=uniform("reflectivity_range"),
                initial_phase=float(rng.uniform(0, 2 * math.pi)),
            )
            fd = aliased_doppler(t.radial_velocity, radar)
            clear = _circ_dist(fd, 0.0, radar.prf) >= preset["blind_doppler_hz"]
            if clear and all(_circ_dist(fd, other, radar.prf) >= sep for other in dopplers):
                break
        else:
            raise ParameterError("could not place targets with the requested Doppler separation")
        targets.append(t)
        dopplers.append(fd)

    k_ref = float(np.mean(preset["reflectivity_range"]))
    rho = specular_coefficient(ground)
    echo_amp = radar.amplitude * k_ref
    clutter: list[ClutterScatterer] = []
    n_far = int(rng.integers(preset["clutter_count"][0], preset["clutter_count"][1] + 1))
    n_near = int(rng.integers(preset["near_clutter_count"][0], preset["near_clutter_count"][1] + 1))
    positions = [uniform("clutter_window") for _ in range(n_far)]
    positions += [zone + float(rng.uniform(-1, 1)) * preset["near_clutter_spread"] for _ in range(n_near)]
    for r in positions:
        csr = uniform("clutter_to_signal_db")
        clutter.append(ClutterScatterer(range=r, amplitude=echo_amp * 10 ** (csr / 20),
                                        phase=float(rng.uniform(0, 2 * math.pi))))

    return Scenario(
        radar=radar,
        targets=tuple(targets),
        ground=ground,
        clutter=tuple(clutter),
        snr_db=snr_db,
        seed=int(seed),
        label=label,
        reference_power=expected_echo_power(radar.amplitude, k_ref, rho),
        range_law=preset["range_law"],
        beta_mode=preset["beta_mode"],
    )


def scenario_to_dict(sc: Scenario) -> dict[str, Any]:
    from dataclasses import asdict

    d = asdict(sc)
    d["snr_db"] = _encode_float(sc.snr_db)
    return d


def scenario_from_dict(d: dict[str, Any]) -> Scenario:
    return Scenario(
        radar=RadarParams(**d["radar"]),
        targets=tuple(TargetState(**t) for t in d["targets"]),
        ground=GroundSpec(**d["ground"]),
        clutter=tuple(ClutterScatterer(**c) for c in d["clutter"]),
        snr_db=_decode_float(d["snr_db"]),
        seed=int(d["seed"]),
        label=int(d["label"]),
        reference_power=d.get("reference_power"),
        range_law=d.get("range_law", "linear"),
        beta_mode=d.get("beta_mode", "geometric"),
        rayleigh_scale=d.get("rayleigh_scale", math.pi / 2),
    )


def _encode_float(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _decode_float(x) -> float:
    return float(x)
