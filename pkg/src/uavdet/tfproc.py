"""Pulse compression, time-frequency transforms and binary image cleanup.

The chain used for detection is::

    pulse_compress -> strongest_gate -> slow_time_series -> zam_transform
    -> to_db -> median_filter -> binarize -> morph_open -> resize

Images are stored ``[time_bins, freq_bins]`` with frequencies fft-shifted so
column 0 is ``-PRF/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal as sps

from .errors import ParameterError
from .sim import C, PulseTrain, RadarParams, lfm_pulse


@dataclass
class TFImage:
    values: np.ndarray  # real, >= 0, [time_bins, freq_bins]
    time_step: float = 1.0
    freq_step: float = 1.0
    freq_origin: float = 0.0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ParameterError("TF image must be 2-D")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def frequencies(self) -> np.ndarray:
        return self.freq_origin + self.freq_step * np.arange(self.values.shape[1])

    def times(self) -> np.ndarray:
        return self.time_step * np.arange(self.values.shape[0])


@dataclass
class BinaryImage:
    bits: np.ndarray  # uint8 {0, 1}
    time_step: float = 1.0
    freq_step: float = 1.0
    freq_origin: float = 0.0
    degenerate: bool = False

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ParameterError("binary image must be 2-D")
        if not np.all((bits == 0) | (bits == 1)):
            raise ParameterError("binary image values must be 0 or 1")
        self.bits = bits.astype(np.uint8)

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def like(self, bits: np.ndarray, **changes) -> "BinaryImage":
        kw = dict(time_step=self.time_step, freq_step=self.freq_step, freq_origin=self.freq_origin)
        kw.update(changes)
        return BinaryImage(bits, **kw)


@dataclass(frozen=True)
class ZamParams:
    window_len: int = 32
    cone_slope: float = 0.5
    num_freq_bins: int = 128

    def __post_init__(self) -> None:
        if self.window_len < 8 or self.window_len % 2:
            raise ParameterError("window_len must be even and >= 8")
        if not self.cone_slope > 0:
            raise ParameterError("cone_slope must be > 0")
        if self.num_freq_bins < 2 * self.window_len + 1:
            raise ParameterError("num_freq_bins must be at least 2 * window_len + 1")


@dataclass(frozen=True)
class StructuringElement:
    bits: np.ndarray = field(default_factory=lambda: np.ones((3, 3), dtype=np.uint8))
    anchor: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 2 or bits.size == 0 or not bits.any():
            raise ParameterError("structuring element must be a non-empty 2-D mask")
        object.__setattr__(self, "bits", bits)
        anchor = self.anchor
        if anchor is None:
            anchor = (bits.shape[0] // 2, bits.shape[1] // 2)
        if not (0 <= anchor[0] < bits.shape[0] and 0 <= anchor[1] < bits.shape[1]):
            raise ParameterError("anchor outside structuring element")
        object.__setattr__(self, "anchor", tuple(int(a) for a in anchor))

    def offsets(self) -> list[tuple[int, int]]:
        ay, ax = self.anchor
        return [(int(u) - ay, int(v) - ax) for u, v in zip(*np.nonzero(self.bits))]

    def reflected(self) -> "StructuringElement":
        h, w = self.bits.shape
        return StructuringElement(self.bits[::-1, ::-1].copy(), (h - 1 - self.anchor[0], w - 1 - self.anchor[1]))


def square(size: int = 3) -> StructuringElement:
    return StructuringElement(np.ones((size, size), dtype=np.uint8))


# --------------------------------------------------------------------------
# pulse compression


def matched_filter_taps(pulse: np.ndarray, gain: float = 1.0) -> np.ndarray:
    """Conjugated, time-reversed replica ``gain * conj(pulse[::-1])``."""
    pulse = np.asarray(pulse, dtype=complex)
    return gain * np.conj(pulse[::-1])


def matched_filter(radar: RadarParams) -> np.ndarray:
    """Taps ``h[n] = M * conj(s[L-1-n])`` over the pulse support of length L.

    Reversal about the pulse end means the filter delay equals one pulse width;
    :func:`pulse_compress` removes it so peaks land on the echo delay bin.
    """
    pulse = lfm_pulse(radar, 0)[: radar.pulse_samples]
    return matched_filter_taps(pulse, radar.gain)


def pulse_compress(train: PulseTrain, taps: np.ndarray) -> PulseTrain:
    """Filter every pulse with ``taps`` along fast time.

    Output bin ``n`` is full-convolution sample ``n + len(taps) - 1``, so a
    pulse starting at bin ``d`` compresses to a peak at bin ``d``.
    """
    taps = np.asarray(taps, dtype=complex)
    if taps.ndim != 1 or taps.size == 0:
        raise ParameterError("taps must be a non-empty vector")
    n = train.fast_time_bins
    if taps.size > n:
        raise ParameterError(f"{taps.size} taps exceed {n} fast-time bins")
    nfft = 1 << int(math.ceil(math.log2(n + taps.size - 1)))
    spec = np.fft.fft(train.samples, nfft, axis=0) * np.fft.fft(taps, nfft)[:, None]
    full = np.fft.ifft(spec, axis=0)
    out = full[taps.size - 1: taps.size - 1 + n]
    return PulseTrain(out, train.fast_time_step, train.pri, train.origin_time)


def slow_time_series(train: PulseTrain, range_gate: int) -> np.ndarray:
    if not 0 <= range_gate < train.fast_time_bins:
        raise ParameterError(f"range gate {range_gate} out of bounds")
    return train.samples[range_gate].copy()


def strongest_gate(train: PulseTrain, remove_stationary: bool = True,
                   gates: tuple[int, int] | None = None) -> int:
    """Range gate with the most slow-time energy.

    With ``remove_stationary`` the per-gate slow-time mean is subtracted
    first, so static clutter does not capture the gate. ``gates`` limits the
    search to the half-open interval ``[lo, hi)``.
    """
    lo, hi = (0, train.fast_time_bins) if gates is None else gates
    lo, hi = max(0, lo), min(train.fast_time_bins, hi)
    if lo >= hi:
        raise ParameterError(f"empty gate window [{lo}, {hi})")
    x = train.samples[lo:hi]
    if remove_stationary:
        x = x - x.mean(axis=1, keepdims=True)
    return lo + int(np.argmax(np.sum(np.abs(x) ** 2, axis=1)))


def gate_window(train: PulseTrain, min_range: float, max_range: float) -> tuple[int, int]:
    """Half-open gate interval covering ranges ``[min_range, max_range]`` metres."""
    to_bin = 2.0 / (C * train.fast_time_step)
    return int(math.floor(min_range * to_bin)), int(math.ceil(max_range * to_bin)) + 1


# --------------------------------------------------------------------------
# time-frequency transforms


def zam_transform(x: np.ndarray, params: ZamParams = ZamParams(), sample_rate: float = 1.0) -> TFImage:
    """Zhao-Atlas-Marks (cone kernel) distribution of a complex sequence.

    The sequence is interpolated by two, giving half-sample access, and for
    every time ``n`` and lag ``m`` (both on the interpolated grid) the lag
    product ``y[p+m] y*[p-m]`` is averaged over the cone ``|p - n| <= 2a|m|``.
    The lag ``m`` corresponds to a separation of ``m`` original samples
    between the two factors, so ``|m| <= window_len`` keeps every product
    inside a span of ``window_len`` samples and the doubled phase rate covers
    the whole band ``[-fs/2, fs/2)``. The averaged products are tapered by a
    Hann lag window and Fourier transformed over ``m``.

    Averaging rather than summing over the cone amounts to a lag window
    ``g(tau) = hann(tau) / (cone length)`` in the ``g(tau)|tau| sinc`` kernel.

    Rows are the interpolated time instants (step ``1 / (2 fs)``); the output
    is the magnitude of the distribution.
    """
    x = np.asarray(x, dtype=complex)
    if x.ndim != 1:
        raise ParameterError("signal must be 1-D")
    if x.size < params.window_len:
        raise ParameterError(f"signal length {x.size} shorter than window {params.window_len}")
    y = sps.resample_poly(x, 2, 1)
    n = y.size
    half = params.window_len
    k = params.num_freq_bins
    g = np.hanning(2 * half + 3)[1:-1]  # 2*half+1 non-zero taps
    pad = np.concatenate([np.zeros(half, complex), y, np.zeros(half, complex)])
    idx = np.arange(n)
    acc = np.zeros((n, k), dtype=complex)
    for m, gm in zip(range(-half, half + 1), g):
        prod = pad[half + m: half + m + n] * np.conj(pad[half - m: half - m + n])
        w = int(math.floor(2 * params.cone_slope * abs(m) + 1e-9))
        csum = np.concatenate([[0.0], np.cumsum(prod)])
        acc[:, m % k] += gm / (2 * w + 1) * (csum[np.minimum(idx + w + 1, n)] - csum[np.maximum(idx - w, 0)])
    tfd = np.fft.fftshift(np.fft.fft(acc, axis=1), axes=1)
    return TFImage(np.abs(tfd), time_step=0.5 / sample_rate, freq_step=sample_rate / k,
                   freq_origin=-sample_rate / 2)


def stft(x: np.ndarray, window_len: int, hop: int | None = None, sample_rate: float = 1.0,
         nfft: int | None = None) -> TFImage:
    """Magnitude short-time Fourier transform with a periodic Hann window.

    Frames are centred on multiples of ``hop``; the signal is zero padded by
    half a window at each end. ``nfft`` (>= ``window_len``) zero pads each
    frame to sample the spectrum more finely.
    """
    x = np.asarray(x, dtype=complex)
    if x.ndim != 1:
        raise ParameterError("signal must be 1-D")
    hop = window_len // 4 if hop is None else hop
    if window_len < 2 or window_len > x.size or hop < 1:
        raise ParameterError("need 2 <= window_len <= len(signal) and hop >= 1")
    nfft = window_len if nfft is None else nfft
    if nfft < window_len:
        raise ParameterError("nfft must be at least window_len")
    win = sps.get_window("hann", window_len)
    half = window_len // 2
    padded = np.concatenate([np.zeros(half, complex), x, np.zeros(half, complex)])
    frames = sliding_window_view(padded, window_len)[::hop]
    spec = np.fft.fftshift(np.fft.fft(frames * win, n=nfft, axis=1), axes=1)
    return TFImage(np.abs(spec), time_step=hop / sample_rate, freq_step=sample_rate / nfft,
                   freq_origin=-sample_rate / 2)


def stft_energy(img: TFImage, window_len: int, hop: int) -> float:
    """Signal energy implied by an :func:`stft` image without zero padding (Parseval with Hann overlap)."""
    win = sps.get_window("hann", window_len)
    return float(np.sum(img.values**2) * hop / (window_len * np.sum(win**2)))


def rd_map(train: PulseTrain, window: int) -> np.ndarray:
    """Range-Doppler magnitude ``[range, doppler]`` from the first ``window`` pulses.

    Slow-time samples are Hann weighted and Fourier transformed per gate;
    Doppler columns are fft-shifted (column ``window // 2`` is zero Doppler).
    """
    if not 1 <= window <= train.num_pulses:
        raise ParameterError(f"window {window} must lie in [1, {train.num_pulses}]")
    block = train.samples[:, :window] * np.hanning(window)[None, :]
    return np.abs(np.fft.fftshift(np.fft.fft(block, axis=1), axes=1))


def rd_axes(train: PulseTrain, window: int, carrier_freq: float) -> tuple[np.ndarray, np.ndarray]:
    """Range (m) and closing-velocity (m/s) axes matching :func:`rd_map`."""
    ranges = np.arange(train.fast_time_bins) * train.fast_time_step * C / 2
    doppler = np.fft.fftshift(np.fft.fftfreq(window, train.pri))
    return ranges, doppler * C / (2 * carrier_freq)


# --------------------------------------------------------------------------
# image cleanup


def to_db(img: TFImage, dynamic_range: float = 40.0, power: bool = True) -> TFImage:
    """Map magnitudes to ``[0, 1]`` over ``dynamic_range`` dB below the peak."""
    v = img.values
    peak = v.max()
    if peak <= 0:
        out = np.zeros_like(v)
    else:
        scale = 10.0 if power else 20.0
        with np.errstate(divide="ignore"):
            db = scale * np.log10(v / peak)
        out = np.clip((db + dynamic_range) / dynamic_range, 0.0, 1.0)
    return TFImage(out, img.time_step, img.freq_step, img.freq_origin)


def median_filter(img: TFImage, k: int = 3) -> TFImage:
    """k x k median with edge-replicated borders."""
    if k < 1 or k % 2 == 0:
        raise ParameterError(f"median window must be odd and >= 1, got {k}")
    if k == 1:
        return TFImage(img.values.copy(), img.time_step, img.freq_step, img.freq_origin)
    r = k // 2
    padded = np.pad(img.values, r, mode="edge")
    windows = sliding_window_view(padded, (k, k))
    out = np.median(windows.reshape(*img.values.shape, k * k), axis=-1)
    return TFImage(out, img.time_step, img.freq_step, img.freq_origin)


def otsu_threshold(values: np.ndarray, bins: int = 256) -> tuple[int, np.ndarray]:
    """Otsu split of ``values`` on a ``bins``-level histogram.

    Returns ``(t, levels)`` where ``levels`` are per-pixel histogram indices;
    pixels with ``levels > t`` are foreground. ``t = bins - 1`` for a constant
    input.
    """
    v = np.asarray(values, dtype=float).ravel()
    lo, hi = v.min(), v.max()
    if hi <= lo:
        return bins - 1, np.zeros(v.shape, dtype=int)
    levels = np.minimum(((v - lo) / (hi - lo) * bins).astype(int), bins - 1)
    hist = np.bincount(levels, minlength=bins).astype(float)
    p = hist / hist.sum()
    w0 = np.cumsum(p)[:-1]
    mu_t = np.arange(bins) @ p
    mu0_sum = np.cumsum(np.arange(bins) * p)[:-1]
    w1 = 1.0 - w0
    valid = (w0 > 0) & (w1 > 0)
    between = np.zeros(bins - 1)
    between[valid] = (mu_t * w0[valid] - mu0_sum[valid]) ** 2 / (w0[valid] * w1[valid])
    best = between.max()
    # first maximiser, treating rounding-level differences as ties
    t = int(np.flatnonzero(between >= best * (1 - 1e-12))[0])
    return t, levels


THRESHOLD_METHODS = {"otsu": otsu_threshold}


def binarize(img: TFImage, bins: int = 256, method: str = "otsu") -> BinaryImage:
    """Global histogram-threshold binarization; a constant image gives all zeros flagged degenerate.

    ``method`` names an entry of ``THRESHOLD_METHODS``: a function
    ``(values, bins) -> (threshold, levels)`` where pixels with ``levels > threshold``
    become 1.
    """
    if method not in THRESHOLD_METHODS:
        raise ParameterError(f"unknown threshold method {method!r}")
    if img.values.size == 0:
        raise ParameterError("cannot binarize an empty image")
    v = img.values
    if v.max() <= v.min():
        return BinaryImage(np.zeros(v.shape, np.uint8), img.time_step, img.freq_step,
                           img.freq_origin, degenerate=True)
    t, levels = THRESHOLD_METHODS[method](v, bins)
    bits = (levels > t).reshape(v.shape).astype(np.uint8)
    return BinaryImage(bits, img.time_step, img.freq_step, img.freq_origin)


def _shifted(bits: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """``out[i, j] = bits[i + dy, j + dx]`` with zeros outside the image."""
    h, w = bits.shape
    out = np.zeros_like(bits)
    ys, yd = (slice(dy, h), slice(0, h - dy)) if dy >= 0 else (slice(0, h + dy), slice(-dy, h))
    xs, xd = (slice(dx, w), slice(0, w - dx)) if dx >= 0 else (slice(0, w + dx), slice(-dx, w))
    if abs(dy) < h and abs(dx) < w:
        out[yd, xd] = bits[ys, xs]
    return out


def erode(img: BinaryImage, se: StructuringElement) -> BinaryImage:
    """1 where every element of ``se`` (placed at its anchor) covers a 1; zeros outside."""
    out = np.ones_like(img.bits)
    for dy, dx in se.offsets():
        out &= _shifted(img.bits, dy, dx)
    return img.like(out)


def dilate(img: BinaryImage, se: StructuringElement) -> BinaryImage:
    """Minkowski sum: 1 where some element of ``se`` reaches back onto a 1."""
    out = np.zeros_like(img.bits)
    for dy, dx in se.offsets():
        out |= _shifted(img.bits, -dy, -dx)
    return img.like(out)


def morph_open(img: BinaryImage, a1: StructuringElement | None = None,
               a2: StructuringElement | None = None) -> BinaryImage:
    a1 = square(3) if a1 is None else a1
    a2 = square(3) if a2 is None else a2
    return dilate(erode(img, a1), a2)


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic ``[n_out, n_in]`` overlap weights for area resampling."""
    scale = n_in / n_out
    edges = np.arange(n_out + 1) * scale
    lo, hi = edges[:-1, None], edges[1:, None]
    cells = np.arange(n_in)[None, :]
    overlap = np.clip(np.minimum(hi, cells + 1) - np.maximum(lo, cells), 0.0, None)
    return overlap / overlap.sum(axis=1, keepdims=True)


def resize(img: TFImage | BinaryImage, out_h: int, out_w: int):
    """Area-averaging resize; binary images are re-thresholded at 0.5."""
    if out_h < 1 or out_w < 1:
        raise ParameterError("output dimensions must be positive")
    is_binary = isinstance(img, BinaryImage)
    src = img.bits.astype(float) if is_binary else img.values
    h, w = src.shape
    if (h, w) == (out_h, out_w):
        out = src.copy()
    else:
        out = _area_weights(h, out_h) @ src @ _area_weights(w, out_w).T
    time_step = img.time_step * h / out_h
    freq_step = img.freq_step * w / out_w
    if is_binary:
        return BinaryImage((out >= 0.5).astype(np.uint8), time_step, freq_step, img.freq_origin)
    return TFImage(out, time_step, freq_step, img.freq_origin)
