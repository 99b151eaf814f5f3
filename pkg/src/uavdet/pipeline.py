"""Scene-to-decision pipeline: preprocessing chain, dataset assembly, splits and experiments."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable

import numpy as np

from .detector import Detector, DetectorConfig, decide_batch, train_detector
from .errors import ParameterError
from .features import BIN_SIZE, MAG_SIZE, FeatureNet, FeatureNetConfig, train_feature_net
from .metrics import MetricReport, compute_metrics
from .scenarios import draw_scenario, get_preset, sample_seed, surveillance_window
from .sim import PulseTrain, RadarParams, Scenario, simulate
from .tfproc import (BinaryImage, TFImage, ZamParams, binarize, gate_window, matched_filter, median_filter,
                     morph_open, pulse_compress, resize, slow_time_series, stft, strongest_gate, to_db,
                     zam_transform)

log = logging.getLogger(__name__)

SPLIT_RATIOS = (0.64, 0.16, 0.20)


@dataclass(frozen=True)
class TransformConfig:
    transform: str = "zam"
    zam: ZamParams = field(default_factory=ZamParams)
    stft_window: int = 32
    stft_hop: int = 4
    dynamic_range_db: float = 40.0
    median_k: int = 3
    num_windows: int = 8

    def __post_init__(self) -> None:
        if self.transform not in ("zam", "stft"):
            raise ParameterError(f"transform must be 'zam' or 'stft', got {self.transform!r}")
        if self.num_windows < 1 or self.median_k < 1 or self.median_k % 2 == 0:
            raise ParameterError("num_windows must be >= 1 and median_k odd")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TransformConfig":
        d = dict(d)
        if "zam" in d and isinstance(d["zam"], dict):
            d["zam"] = ZamParams(**d["zam"])
        return cls(**d)


@dataclass
class SampleImages:
    """Per-window network inputs plus the full-length images they were cut from."""

    mags: np.ndarray   # [W, 128, 128] float, values in [0, 1]
    bits: np.ndarray   # [W, 28, 28] uint8
    gate: int
    tf: TFImage
    binary: BinaryImage


def tf_image(series: np.ndarray, prf: float, cfg: TransformConfig) -> TFImage:
    if cfg.transform == "zam":
        return zam_transform(series, cfg.zam, prf)
    return stft(series, cfg.stft_window, cfg.stft_hop, prf)


def _as_f32(x: np.ndarray) -> np.ndarray:
    # images are persisted as float32; rounding here keeps in-memory and on-disk runs identical
    return x.astype(np.float32).astype(np.float64)


def preprocess(train: PulseTrain, radar: RadarParams, gates: tuple[int, int] | None,
               cfg: TransformConfig = TransformConfig()) -> SampleImages:
    """Compress, pick the gate, transform, clean up and cut into ``cfg.num_windows`` windows."""
    comp = pulse_compress(train, matched_filter(radar))
    gate = strongest_gate(comp, gates=gates)
    series = slow_time_series(comp, gate)
    img = to_db(tf_image(series, radar.prf, cfg), cfg.dynamic_range_db)
    opened = morph_open(binarize(median_filter(img, cfg.median_k)))
    rows = img.values.shape[0]
    w = cfg.num_windows
    if rows < w:
        raise ParameterError(f"{rows} time bins cannot be cut into {w} windows")
    step = rows // w
    mags, bits = [], []
    for k in range(w):
        sl = slice(k * step, (k + 1) * step)
        mags.append(resize(TFImage(img.values[sl], img.time_step, img.freq_step, img.freq_origin),
                           MAG_SIZE, MAG_SIZE).values)
        bits.append(resize(opened.like(opened.bits[sl]), BIN_SIZE, BIN_SIZE).bits)
    return SampleImages(mags=_as_f32(np.stack(mags)), bits=np.stack(bits).astype(np.uint8), gate=gate,
                        tf=img, binary=opened)


def surveillance_gates(preset: dict[str, Any], train: PulseTrain) -> tuple[int, int]:
    return gate_window(train, *surveillance_window(preset))


# --------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class SampleSpec:
    sample_id: str
    label: int
    snr_db: float
    seed: int
    index: int


def snr_tag(snr_db: float) -> str:
    if math.isinf(snr_db):
        return "snrinf"
    return ("snrm" if snr_db < 0 else "snrp") + f"{abs(snr_db):g}".replace(".", "p")


def sample_specs(labels: Iterable[int], per_class: int, snr_list: Iterable[float], seed: int) -> list[SampleSpec]:
    """Balanced list of scenes: ``per_class`` per label per SNR, in a fixed order."""
    specs = []
    for snr in snr_list:
        for label in labels:
            for i in range(per_class):
                sid = f"{snr_tag(snr)}_L{label}_{i:05d}"
                specs.append(SampleSpec(sid, int(label), float(snr), sample_seed(seed, label, i, snr), i))
    return specs


def make_scenario(preset: dict[str, Any], spec: SampleSpec) -> Scenario:
    return draw_scenario(preset, spec.label, spec.snr_db, spec.seed)


def split_counts(n: int, ratios: tuple[float, float, float] = SPLIT_RATIOS) -> tuple[int, int, int]:
    """Train / test / holdout sizes: the first two rounded down, the remainder held out."""
    a = int(math.floor(ratios[0] * n + 1e-9))
    b = int(math.floor(ratios[1] * n + 1e-9))
    return a, b, n - a - b


def split_indices(labels, seed: int, ratios: tuple[float, float, float] = SPLIT_RATIOS):
    """Stratified seeded split; returns sorted index arrays ``(train, test, holdout)``."""
    labels = np.asarray(labels, dtype=int)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(5,)))
    parts: list[list[int]] = [[], [], []]
    for lab in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == lab))
        a, b, _ = split_counts(len(idx), ratios)
        parts[0].extend(idx[:a])
        parts[1].extend(idx[a:a + b])
        parts[2].extend(idx[a + b:])
    return tuple(np.sort(np.asarray(p, dtype=int)) for p in parts)


@dataclass
class ImageSet:
    ids: list[str]
    labels: np.ndarray   # [n]
    mags: np.ndarray     # [n, W, 128, 128]
    bits: np.ndarray     # [n, W, 28, 28]

    def subset(self, idx) -> "ImageSet":
        idx = np.asarray(idx, dtype=int)
        return ImageSet([self.ids[i] for i in idx], self.labels[idx], self.mags[idx], self.bits[idx])


def build_image_set(preset: dict[str, Any], specs: list[SampleSpec], cfg: TransformConfig) -> ImageSet:
    mags, bits = [], []
    for spec in specs:
        sc = make_scenario(preset, spec)
        train = simulate(sc)
        imgs = preprocess(train, sc.radar, surveillance_gates(preset, train), cfg)
        mags.append(imgs.mags)
        bits.append(imgs.bits)
    return ImageSet([s.sample_id for s in specs], np.array([s.label for s in specs]),
                    np.stack(mags), np.stack(bits))


# --------------------------------------------------------------------------
# training and evaluation


@dataclass
class TrainedModel:
    features: FeatureNet
    detector: Detector
    feature_log: list[dict]
    detector_log: list[dict]


def sequences(net: FeatureNet, data: ImageSet) -> np.ndarray:
    """``[n, W, 50]`` per-window codes."""
    n, w = data.mags.shape[:2]
    f = net.features(data.mags.reshape((n * w,) + data.mags.shape[2:]),
                     data.bits.reshape((n * w,) + data.bits.shape[2:]).astype(float))
    return f.reshape(n, w, -1)


def train_models(data: ImageSet, feat_cfg: FeatureNetConfig, det_cfg: DetectorConfig) -> TrainedModel:
    n, w = data.mags.shape[:2]
    window_labels = np.repeat((data.labels > 0).astype(int), w)
    net, flog = train_feature_net(data.mags.reshape((n * w,) + data.mags.shape[2:]),
                                  data.bits.reshape((n * w,) + data.bits.shape[2:]),
                                  window_labels, feat_cfg)
    det, dlog = train_detector(sequences(net, data), data.labels, det_cfg)
    return TrainedModel(net, det, flog, dlog)


def predict(model: TrainedModel, data: ImageSet) -> np.ndarray:
    return model.detector.predict_proba(sequences(model.features, data))


def evaluate(model: TrainedModel, data: ImageSet, threshold: float = 0.5) -> tuple[MetricReport, np.ndarray]:
    probs = predict(model, data)
    return compute_metrics((data.labels, decide_batch(probs, threshold))), probs


@dataclass
class ExperimentResult:
    report: MetricReport
    model: TrainedModel
    probs: np.ndarray
    holdout: ImageSet
    splits: tuple[np.ndarray, np.ndarray, np.ndarray]


def run_experiment(preset_name: str, snr_db: float, per_class: int, seed: int,
                   feat_cfg: FeatureNetConfig | None = None, det_cfg: DetectorConfig | None = None,
                   tcfg: TransformConfig = TransformConfig(), overrides: dict | None = None,
                   threshold: float = 0.5) -> ExperimentResult:
    """Generate a balanced 0/1/2 dataset in memory, train on the 64 % split and score the 20 % holdout."""
    preset = get_preset(preset_name, overrides)
    feat_cfg = feat_cfg or FeatureNetConfig(seed=seed)
    det_cfg = det_cfg or DetectorConfig(seed=seed, fusion_dim=feat_cfg.fusion_dim)
    data = build_image_set(preset, sample_specs((0, 1, 2), per_class, [snr_db], seed), tcfg)
    splits = split_indices(data.labels, seed)
    model = train_models(data.subset(splits[0]), feat_cfg, det_cfg)
    holdout = data.subset(splits[2])
    report, probs = evaluate(model, holdout, threshold)
    return ExperimentResult(report, model, probs, holdout, splits)
