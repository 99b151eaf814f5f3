"""Binary file formats for pulse trains and time-frequency images, plus PGM export.

Pulse train (``.uavpt``), little-endian::

    0   8s   magic b"UAVPT001"
    8   u64  fast_time_bins (rows)
    16  u64  num_pulses (columns)
    24  f64  fast_time_step, seconds
    32  f64  pri, seconds
    40  f64  origin_time, seconds
    48  16 reserved zero bytes
    64  rows * cols interleaved (re, im) float32 pairs, row-major [fast_time, pulse]

Time-frequency image (``.uavtf``), little-endian::

    0   8s   magic b"UAVTF001"
    8   u32  rows (time bins)
    12  u32  cols (frequency bins)
    16  f64  time_step, seconds
    24  f64  freq_step, Hz
    32  rows * cols float32, row-major; binary images hold 0.0 / 1.0

The header has no room for the frequency origin; images are stored with a
centred spectrum, so ``freq_origin = -cols * freq_step / 2`` on reload.
"""

from __future__ import annotations

import json
import re
import struct
from pathlib import Path
from typing import Any

import numpy as np

from .errors import FormatError
from .sim import PulseTrain
from .tfproc import BinaryImage, TFImage

PT_MAGIC = b"UAVPT001"
PT_HEADER = struct.Struct("<8sQQddd16x")
TF_MAGIC = b"UAVTF001"
TF_HEADER = struct.Struct("<8sIIdd")


def write_pulse_train(train: PulseTrain, path: str | Path) -> None:
    rows, cols = train.samples.shape
    header = PT_HEADER.pack(PT_MAGIC, rows, cols, train.fast_time_step, train.pri, train.origin_time)
    body = np.empty((rows, cols, 2), dtype="<f4")
    body[..., 0] = train.samples.real
    body[..., 1] = train.samples.imag
    Path(path).write_bytes(header + body.tobytes())


def read_pulse_train(path: str | Path) -> PulseTrain:
    data = Path(path).read_bytes()
    if len(data) < PT_HEADER.size:
        raise FormatError(f"{path}: file shorter than the {PT_HEADER.size}-byte header")
    magic, rows, cols, step, pri, origin = PT_HEADER.unpack_from(data)
    if magic != PT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    expected = PT_HEADER.size + rows * cols * 8
    if len(data) != expected:
        raise FormatError(f"{path}: size {len(data)} does not match header ({expected} expected)")
    body = np.frombuffer(data, dtype="<f4", offset=PT_HEADER.size).reshape(rows, cols, 2)
    samples = body[..., 0].astype(np.float64) + 1j * body[..., 1].astype(np.float64)
    return PulseTrain(samples, fast_time_step=step, pri=pri, origin_time=origin)


def write_tf_image(img: TFImage | BinaryImage, path: str | Path) -> None:
    values = img.bits.astype("<f4") if isinstance(img, BinaryImage) else np.asarray(img.values, dtype="<f4")
    rows, cols = values.shape
    header = TF_HEADER.pack(TF_MAGIC, rows, cols, img.time_step, img.freq_step)
    Path(path).write_bytes(header + np.ascontiguousarray(values).tobytes())


def _read_tf(path: str | Path):
    data = Path(path).read_bytes()
    if len(data) < TF_HEADER.size:
        raise FormatError(f"{path}: file shorter than the {TF_HEADER.size}-byte header")
    magic, rows, cols, tstep, fstep = TF_HEADER.unpack_from(data)
    if magic != TF_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if len(data) != TF_HEADER.size + rows * cols * 4:
        raise FormatError(f"{path}: size {len(data)} does not match a {rows}x{cols} image")
    values = np.frombuffer(data, dtype="<f4", offset=TF_HEADER.size).reshape(rows, cols).astype(np.float64)
    return values, tstep, fstep, -cols * fstep / 2


def read_tf_image(path: str | Path) -> TFImage:
    values, tstep, fstep, origin = _read_tf(path)
    return TFImage(values, time_step=tstep, freq_step=fstep, freq_origin=origin)


def read_binary_image(path: str | Path) -> BinaryImage:
    values, tstep, fstep, origin = _read_tf(path)
    if not np.all((values == 0) | (values == 1)):
        raise FormatError(f"{path}: binary image holds values other than 0 and 1")
    return BinaryImage(values.astype(np.uint8), time_step=tstep, freq_step=fstep, freq_origin=origin)


def write_pgm(values: np.ndarray, path: str | Path) -> None:
    """8-bit binary PGM (P5) with min-max scaling; a constant image maps to mid gray."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 2 or v.size == 0:
        raise FormatError(f"{path}: PGM export needs a non-empty 2-D array")
    lo, hi = v.min(), v.max()
    if hi > lo:
        pix = np.round((v - lo) / (hi - lo) * 255.0)
    else:
        pix = np.full(v.shape, 128.0)
    rows, cols = v.shape
    header = f"P5\n{cols} {rows}\n255\n".encode("ascii")
    Path(path).write_bytes(header + pix.astype(np.uint8).tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise FormatError(f"{path}: not a binary PGM")
    cols, rows, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM is supported")
    pix = data[m.end():]
    if len(pix) != rows * cols:
        raise FormatError(f"{path}: pixel data size mismatch")
    return np.frombuffer(pix, dtype=np.uint8).reshape(rows, cols)


def write_json(obj: Any, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
