"""Two-branch feature extractor: contrastive CNN encoder and fully connected autoencoder.

Branch one maps a 128x128 magnitude time-frequency image through a small CNN
to a 20-vector, and a projection head maps that onto the 128-d unit sphere
where the supervised contrastive loss is applied. Branch two encodes a 28x28
binary image to a 30-vector and decodes it back. The two codes are
concatenated and compressed by a Dense fusion layer; the fusion layer is
trained together with the detector.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ParameterError, TrainingError
from .nn import (AdaptiveAvgPool, Conv2d, Dense, L2Normalize, ParamStore, ReLU, Reshape, Sequential,
                 adam_step, recon_loss, supcon_loss)

log = logging.getLogger(__name__)

MAG_SIZE = 128
BIN_SIZE = 28
CONTRASTIVE_DIM = 20
AUTOENCODER_DIM = 30


@dataclass(frozen=True)
class FeatureNetConfig:
    tau: float = 0.1
    lr: float = 4e-4
    epochs: int = 40
    batch_pairs: int = 16
    alternation_k: int = 1
    fusion_dim: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("tau", "lr", "epochs", "batch_pairs", "alternation_k", "fusion_dim"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def build_encoder1() -> Sequential:
    return Sequential([
        Reshape((1, MAG_SIZE, MAG_SIZE), "input"),
        Conv2d("enc1.conv1", 1, 8), ReLU(),
        AdaptiveAvgPool(21, 21, "adap_pool1"),
        Conv2d("enc1.conv2", 8, 16), ReLU(),
        AdaptiveAvgPool(3, 3, "adap_pool2"),
        Reshape((144,), "flatten"),
        Dense("enc1.fc1", 144, 50), ReLU(),
        Dense("enc1.fc2", 50, CONTRASTIVE_DIM),
    ], (MAG_SIZE, MAG_SIZE))


def build_head() -> Sequential:
    return Sequential([
        Dense("head.fc1", CONTRASTIVE_DIM, 2048), ReLU(),
        Dense("head.fc2", 2048, 128),
        L2Normalize(),
    ], (CONTRASTIVE_DIM,))


def build_encoder2() -> Sequential:
    return Sequential([
        Reshape((BIN_SIZE * BIN_SIZE,), "flatten"),
        Dense("enc2.fc3", BIN_SIZE * BIN_SIZE, 512), ReLU(),
        Dense("enc2.fc4", 512, 128), ReLU(),
        Dense("enc2.fc5", 128, AUTOENCODER_DIM), ReLU(),
    ], (BIN_SIZE, BIN_SIZE))


def build_decoder() -> Sequential:
    return Sequential([
        Dense("dec.fc6", AUTOENCODER_DIM, 128), ReLU(),
        Dense("dec.fc7", 128, 512), ReLU(),
        Dense("dec.fc8", 512, BIN_SIZE * BIN_SIZE), ReLU(),
        Reshape((BIN_SIZE, BIN_SIZE), "image"),
    ], (AUTOENCODER_DIM,))


def build_fusion(fusion_dim: int = 32) -> Sequential:
    """Dense ``50 -> fusion_dim`` + ReLU applied over the last axis."""
    return Sequential([Dense("fuse.fc", CONTRASTIVE_DIM + AUTOENCODER_DIM, fusion_dim), ReLU()],
                      (CONTRASTIVE_DIM + AUTOENCODER_DIM,))


def fuse(store: ParamStore, fusion: Sequential, r20: np.ndarray, r30: np.ndarray):
    """Concatenate the branch codes (``[..., 20]`` and ``[..., 30]``) and apply ``fusion``.

    Returns ``(fused, caches)``; leading axes are carried through.
    """
    r20 = np.asarray(r20, dtype=float)
    r30 = np.asarray(r30, dtype=float)
    if r20.shape[-1] != CONTRASTIVE_DIM or r30.shape[-1] != AUTOENCODER_DIM or r20.shape[:-1] != r30.shape[:-1]:
        raise ParameterError(f"fuse needs [..., 20] and [..., 30], got {r20.shape} and {r30.shape}")
    x = np.concatenate([r20, r30], axis=-1)
    lead = x.shape[:-1]
    y, caches = fusion.forward(store, x.reshape(-1, x.shape[-1]))
    return y.reshape(lead + (y.shape[-1],)), caches


class FeatureNet:
    """Encoder1 + projection head and Encoder2 + decoder sharing one parameter store."""

    def __init__(self, seed: int = 0, store: ParamStore | None = None) -> None:
        self.encoder1 = build_encoder1()
        self.head = build_head()
        self.encoder2 = build_encoder2()
        self.decoder = build_decoder()
        if store is None:
            store = ParamStore()
            rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1,)))
            for net in (self.encoder1, self.head, self.encoder2, self.decoder):
                net.init(store, rng)
        self.store = store

    @property
    def contrastive_names(self) -> list[str]:
        return self.store.names("enc1.") + self.store.names("head.")

    @property
    def autoencoder_names(self) -> list[str]:
        return self.store.names("enc2.") + self.store.names("dec.")

    def encode1(self, mags: np.ndarray) -> np.ndarray:
        return self.encoder1.forward(self.store, mags)[0]

    def project(self, r20: np.ndarray) -> np.ndarray:
        return self.head.forward(self.store, r20)[0]

    def encode2(self, bits: np.ndarray) -> np.ndarray:
        return self.encoder2.forward(self.store, bits)[0]

    def decode(self, r30: np.ndarray) -> np.ndarray:
        return self.decoder.forward(self.store, r30)[0]

    def features(self, mags: np.ndarray, bits: np.ndarray, batch: int = 64) -> np.ndarray:
        """Concatenated ``[n, 50]`` codes (20 contrastive, then 30 autoencoder)."""
        out = []
        for s in range(0, len(mags), batch):
            out.append(np.concatenate([self.encode1(mags[s:s + batch]), self.encode2(bits[s:s + batch])], axis=1))
        return np.concatenate(out, axis=0) if out else np.zeros((0, CONTRASTIVE_DIM + AUTOENCODER_DIM))

    # -- single training steps ------------------------------------------------

    def contrastive_step(self, mags: np.ndarray, labels: np.ndarray, tau: float, lr: float) -> float:
        names = self.contrastive_names
        self.store.zero_grad(names)
        r, c1 = self.encoder1.forward(self.store, mags)
        z, c2 = self.head.forward(self.store, r)
        loss, dz = supcon_loss(z, labels, tau)
        self.encoder1.backward(self.store, self.head.backward(self.store, dz, c2), c1)
        adam_step(self.store, lr, names=names)
        return loss

    def autoencoder_step(self, bits: np.ndarray, lr: float) -> float:
        names = self.autoencoder_names
        self.store.zero_grad(names)
        r, c1 = self.encoder2.forward(self.store, bits)
        rec, c2 = self.decoder.forward(self.store, r)
        loss, drec = recon_loss(bits, rec)
        self.encoder2.backward(self.store, self.decoder.backward(self.store, drec, c2), c1)
        adam_step(self.store, lr, names=names)
        return loss


def _contrastive_batches(labels: np.ndarray, n_pairs: int, rng: np.random.Generator):
    """Index batches of ``n_pairs`` target images paired with ``n_pairs`` non-target images."""
    tgt = rng.permutation(np.flatnonzero(labels == 1))
    non = rng.permutation(np.flatnonzero(labels == 0))
    n_batches = min(len(tgt), len(non)) // n_pairs
    for b in range(n_batches):
        sl = slice(b * n_pairs, (b + 1) * n_pairs)
        yield np.concatenate([tgt[sl], non[sl]])


def train_feature_net(mags: np.ndarray, bits: np.ndarray, labels, cfg: FeatureNetConfig = FeatureNetConfig(),
                      net: FeatureNet | None = None) -> tuple[FeatureNet, list[dict]]:
    """Alternate ``k`` contrastive epochs with ``k`` autoencoder epochs until ``cfg.epochs`` in total.

    ``labels`` are binary (1 = target present). Contrastive minibatches hold
    ``batch_pairs`` target images paired with as many non-target images; when
    a class has fewer images than ``batch_pairs`` the pair count is reduced
    (logged). Returns the trained net and the per-epoch log
    ``[{"epoch", "branch", "loss"}]``.
    """
    mags = np.asarray(mags, dtype=float)
    bits = np.asarray(bits, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if not (len(mags) == len(bits) == len(labels)):
        raise ParameterError("mags, bits and labels must have the same length")
    if not set(np.unique(labels)) <= {0, 1}:
        raise ParameterError("contrastive labels must be binary 0/1")
    n_min = min(int(np.sum(labels == 0)), int(np.sum(labels == 1)))
    if n_min < 2:
        raise TrainingError("each of target / non-target needs at least two images")
    n_pairs = cfg.batch_pairs
    if n_pairs > n_min:
        log.warning("batch_pairs %d exceeds the smaller class (%d images); using %d", n_pairs, n_min, n_min)
        n_pairs = n_min

    net = FeatureNet(cfg.seed) if net is None else net
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg.seed), spawn_key=(2,)))
    ae_batch = 2 * n_pairs
    history: list[dict] = []
    for epoch in range(cfg.epochs):
        branch = "contrastive" if (epoch // cfg.alternation_k) % 2 == 0 else "autoencoder"
        losses = []
        if branch == "contrastive":
            for idx in _contrastive_batches(labels, n_pairs, rng):
                losses.append(net.contrastive_step(mags[idx], labels[idx], cfg.tau, cfg.lr))
        else:
            order = rng.permutation(len(bits))
            for s in range(0, len(order), ae_batch):
                losses.append(net.autoencoder_step(bits[order[s:s + ae_batch]], cfg.lr))
        loss = float(np.mean(losses))
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite {branch} loss at epoch {epoch}")
        history.append({"epoch": epoch, "branch": branch, "loss": loss})
        log.info("feature epoch %d %s loss %.6f", epoch, branch, loss)
    return net, history
