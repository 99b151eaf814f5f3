from __future__ import annotations

import numpy as np
import pytest

from uavdet.sim import RadarParams
from uavdet.scenarios import DESK_RADAR, PAPER_RADAR


def make_radar(base: dict = DESK_RADAR, radar_height: float = 45.0, **kw) -> RadarParams:
    params = dict(base, radar_height=radar_height)
    params.update(kw)
    return RadarParams(**params)


@pytest.fixture
def desk_radar() -> RadarParams:
    return make_radar(num_pulses=64)


@pytest.fixture
def paper_radar() -> RadarParams:
    return make_radar(PAPER_RADAR, num_pulses=8)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
