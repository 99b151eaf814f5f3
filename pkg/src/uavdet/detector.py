"""Recurrent 0/1/2-target classifier over sequences of feature vectors.

Each step of a sequence is the 50-d concatenated code of one time-frequency
window. Steps are standardised with statistics frozen from the training set
(parameters ``norm.mean`` and ``norm.scale``, never updated by the optimiser),
a Dense fusion layer compresses every step, a bidirectional GRU reads the
sequence, and a Dense layer with softmax scores the three classes.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ParameterError, TrainingError
from .features import AUTOENCODER_DIM, CONTRASTIVE_DIM, build_fusion
from .nn import BiGRU, Dense, ParamStore, adam_step, cross_entropy, one_hot, softmax, softmax_backward

log = logging.getLogger(__name__)

NUM_CLASSES = 3
FEATURE_DIM = CONTRASTIVE_DIM + AUTOENCODER_DIM


@dataclass(frozen=True)
class DetectorConfig:
    hidden: int = 100
    fusion_dim: int = 32
    lr: float = 4e-4
    epochs: int = 60
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("hidden", "fusion_dim", "lr", "epochs", "batch_size"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DetectionResult:
    probs: np.ndarray
    label: int
    threshold_used: float


class Detector:
    def __init__(self, cfg: DetectorConfig = DetectorConfig(), store: ParamStore | None = None) -> None:
        self.cfg = cfg
        self.fusion = build_fusion(cfg.fusion_dim)
        self.gru = BiGRU("gru", cfg.fusion_dim, cfg.hidden)
        self.out = Dense("out", 2 * cfg.hidden, NUM_CLASSES)
        if store is None:
            store = ParamStore()
            rng = np.random.default_rng(np.random.SeedSequence(int(cfg.seed), spawn_key=(3,)))
            store.add("norm.mean", np.zeros(FEATURE_DIM))
            store.add("norm.scale", np.ones(FEATURE_DIM))
            self.fusion.init(store, rng)
            self.gru.init(store, rng)
            self.out.init(store, rng)
        self.store = store

    @property
    def trainable_names(self) -> list[str]:
        return [n for n in self.store.names() if not n.startswith("norm.")]

    def set_normalization(self, seqs: np.ndarray, floor: float = 1e-6) -> None:
        """Freeze per-dimension mean and standard deviation (floored) of ``seqs [B, T, 50]``."""
        flat = np.asarray(seqs, dtype=float).reshape(-1, FEATURE_DIM)
        self.store.set("norm.mean", flat.mean(axis=0))
        self.store.set("norm.scale", np.maximum(flat.std(axis=0), floor))

    def _forward(self, seqs: np.ndarray):
        b, t, d = seqs.shape
        x = (seqs - self.store["norm.mean"]) / self.store["norm.scale"]
        f, c_fuse = self.fusion.forward(self.store, x.reshape(b * t, d))
        h, c_gru = self.gru.forward(self.store, f.reshape(b, t, -1))
        logits, c_out = self.out.forward(self.store, h)
        p, c_sm = softmax(logits)
        return p, (c_fuse, c_gru, c_out, c_sm, (b, t))

    def _backward(self, dp: np.ndarray, caches) -> None:
        c_fuse, c_gru, c_out, c_sm, (b, t) = caches
        dh = self.out.backward(self.store, softmax_backward(dp, c_sm), c_out)
        df = self.gru.backward(self.store, dh, c_gru)
        self.fusion.backward(self.store, df.reshape(b * t, -1), c_fuse)

    def predict_proba(self, seqs) -> np.ndarray:
        """Class probabilities ``[B, 3]`` for sequences ``[B, T, 50]`` (or one ``[T, 50]``)."""
        seqs = np.asarray(seqs, dtype=float)
        single = seqs.ndim == 2
        if single:
            seqs = seqs[None]
        if seqs.ndim != 3 or seqs.shape[1] < 1 or seqs.shape[2] != FEATURE_DIM:
            raise ParameterError(f"expected [B, T>=1, {FEATURE_DIM}] sequences, got {seqs.shape}")
        p = self._forward(seqs)[0]
        return p[0] if single else p

    def train_step(self, seqs: np.ndarray, labels: np.ndarray, lr: float) -> float:
        names = self.trainable_names
        self.store.zero_grad(names)
        p, caches = self._forward(seqs)
        loss, dp = cross_entropy(p, one_hot(labels, NUM_CLASSES))
        self._backward(dp, caches)
        adam_step(self.store, lr, names=names)
        return loss


def classify(seq, detector: Detector) -> np.ndarray:
    """Probability 3-vector for one ``[T, 50]`` feature sequence."""
    seq = np.asarray(seq, dtype=float)
    if seq.ndim != 2:
        raise ParameterError(f"expected one [T, {FEATURE_DIM}] sequence, got {seq.shape}")
    return detector.predict_proba(seq)


def decide(probs, threshold: float = 0.5) -> int:
    """0 when ``p1 + p2 < threshold``, else the likelier of 1 and 2 (ties go to 1)."""
    p = np.asarray(probs, dtype=float)
    if p[1] + p[2] < threshold:
        return 0
    return 1 if p[1] >= p[2] else 2


def decide_batch(probs: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    present = probs[:, 1] + probs[:, 2] >= threshold
    return np.where(present, np.where(probs[:, 1] >= probs[:, 2], 1, 2), 0)


def train_detector(seqs, labels, cfg: DetectorConfig = DetectorConfig(),
                   detector: Detector | None = None) -> tuple[Detector, list[dict]]:
    """Cross-entropy training with Adam; returns the detector and ``[{"epoch", "loss", "accuracy"}]``.

    A fresh detector takes its input standardisation from ``seqs``; a passed-in
    one keeps its own.
    """
    seqs = np.asarray(seqs, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if seqs.ndim != 3 or len(seqs) != len(labels):
        raise ParameterError(f"need [B, T, {FEATURE_DIM}] sequences and B labels")
    missing = [c for c in range(NUM_CLASSES) if not np.any(labels == c)]
    if missing:
        raise TrainingError(f"no training samples for class(es) {missing}")
    if detector is None:
        det = Detector(cfg)
        det.set_normalization(seqs)
    else:
        det = detector
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg.seed), spawn_key=(4,)))
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(seqs))
        losses, weights = [], []
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            losses.append(det.train_step(seqs[idx], labels[idx], cfg.lr))
            weights.append(len(idx))
        loss = float(np.average(losses, weights=weights))
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite detector loss at epoch {epoch}")
        acc = float(np.mean(np.argmax(det.predict_proba(seqs), axis=1) == labels))
        history.append({"epoch": epoch, "loss": loss, "accuracy": acc})
        log.info("detector epoch %d loss %.6f acc %.3f", epoch, loss, acc)
    return det, history


def detect(seq, detector: Detector, threshold: float = 0.5) -> DetectionResult:
    p = classify(seq, detector)
    return DetectionResult(probs=p, label=decide(p, threshold), threshold_used=threshold)
