from __future__ import annotations

import numpy as np
import pytest

from uavdet.errors import FormatError
from uavdet.io import (read_binary_image, read_json, read_pgm, read_pulse_train, read_tf_image, write_json,
                       write_pgm, write_pulse_train, write_tf_image)
from uavdet.sim import PulseTrain
from uavdet.tfproc import BinaryImage, TFImage


def _train(rng, rows=20, cols=7):
    samples = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))).astype(np.complex64)
    return PulseTrain(samples.astype(complex), fast_time_step=1e-6, pri=5e-4, origin_time=2e-6)


def test_pulse_train_round_trip(tmp_path, rng):
    tr = _train(rng)
    p = tmp_path / "a.uavpt"
    write_pulse_train(tr, p)
    assert p.stat().st_size == 64 + 20 * 7 * 8
    back = read_pulse_train(p)
    assert np.array_equal(back.samples, tr.samples)
    assert (back.fast_time_step, back.pri, back.origin_time) == (1e-6, 5e-4, 2e-6)


def test_pulse_train_corruption(tmp_path, rng):
    p = tmp_path / "a.uavpt"
    write_pulse_train(_train(rng), p)
    data = p.read_bytes()
    for bad in (data[:-1], data + b"\0", b"XXXXXXXX" + data[8:], data[:40]):
        p.write_bytes(bad)
        with pytest.raises(FormatError):
            read_pulse_train(p)


def test_tf_image_round_trip(tmp_path, rng):
    img = TFImage(rng.random((16, 8)).astype(np.float32).astype(float), time_step=5e-7, freq_step=250.0,
                  freq_origin=-1000.0)
    p = tmp_path / "a.uavtf"
    write_tf_image(img, p)
    assert p.stat().st_size == 32 + 16 * 8 * 4
    back = read_tf_image(p)
    assert np.array_equal(back.values, img.values)
    assert (back.time_step, back.freq_step, back.freq_origin) == (5e-7, 250.0, -1000.0)


def test_binary_image_round_trip(tmp_path, rng):
    bits = (rng.random((28, 28)) > 0.5).astype(np.uint8)
    img = BinaryImage(bits, time_step=1.0, freq_step=2.0, freq_origin=-28.0)
    p = tmp_path / "b.uavtf"
    write_tf_image(img, p)
    assert np.array_equal(read_binary_image(p).bits, bits)
    write_tf_image(TFImage(np.full((2, 2), 0.5), 1.0, 1.0, -1.0), p)
    with pytest.raises(FormatError):
        read_binary_image(p)


def test_tf_image_corruption(tmp_path, rng):
    p = tmp_path / "a.uavtf"
    write_tf_image(TFImage(rng.random((4, 4)), 1.0, 1.0, -2.0), p)
    data = p.read_bytes()
    for bad in (data[:-4], b"UAVPT001" + data[8:], data[:10]):
        p.write_bytes(bad)
        with pytest.raises(FormatError):
            read_tf_image(p)


def test_pgm_round_trip(tmp_path):
    v = np.arange(12, dtype=float).reshape(3, 4)
    p = tmp_path / "a.pgm"
    write_pgm(v, p)
    assert p.read_bytes().startswith(b"P5\n4 3\n255\n")
    img = read_pgm(p)
    assert img.shape == (3, 4)
    assert np.array_equal(img, np.round(v / 11 * 255).astype(np.uint8))
    p.write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(FormatError):
        read_pgm(p)
    with pytest.raises(FormatError):
        write_pgm(np.zeros(3), p)


def test_json_round_trip(tmp_path):
    obj = {"b": [1, 2.5], "a": {"x": None}}
    p = tmp_path / "a.json"
    write_json(obj, p)
    assert read_json(p) == obj
    p.write_text("{not json")
    with pytest.raises(FormatError):
        read_json(p)
