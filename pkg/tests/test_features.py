from __future__ import annotations

import numpy as np
import pytest

from uavdet.errors import ParameterError, TrainingError
from uavdet.features import (FeatureNet, FeatureNetConfig, build_fusion, fuse, train_feature_net)
from uavdet.nn import ParamStore, grad_check
from uavdet.nn.functional import l2_normalize


def _synthetic(n_per_class: int, seed: int = 0):
    """Target windows hold a bright slanted ridge, non-target windows only speckle."""
    rng = np.random.default_rng(seed)
    mags, bits, labels = [], [], []
    for label in (0, 1):
        for _ in range(n_per_class):
            m = 0.2 * rng.random((128, 128))
            b = np.zeros((28, 28))
            if label:
                col = rng.integers(30, 90)
                for r in range(128):
                    c = col + r // 8
                    m[r, c - 2:c + 3] = 0.8 + 0.2 * rng.random()
                b[:, col // 5:col // 5 + 3] = 1.0
            mags.append(m)
            bits.append(b)
            labels.append(label)
    return np.array(mags), np.array(bits), np.array(labels)


def _zero_store(net: FeatureNet) -> None:
    for n in net.store.names():
        net.store.set(n, np.zeros_like(net.store[n]))


def _mean_cos(a: np.ndarray, b: np.ndarray, same: bool) -> float:
    ua = a / np.linalg.norm(a, axis=1, keepdims=True)
    ub = b / np.linalg.norm(b, axis=1, keepdims=True)
    s = ua @ ub.T
    if same:
        return float((s.sum() - np.trace(s)) / (s.size - len(s)))
    return float(s.mean())


def test_config_validation():
    cfg = FeatureNetConfig()
    assert (cfg.lr, cfg.tau, cfg.batch_pairs, cfg.alternation_k, cfg.fusion_dim) == (4e-4, 0.1, 16, 1, 32)
    with pytest.raises(ParameterError):
        FeatureNetConfig(tau=0.0)


def test_encoder1_zero_and_determinism(rng):
    net = FeatureNet(seed=1)
    img = rng.random((2, 128, 128))
    a = net.encode1(img)
    assert a.shape == (2, 20)
    assert np.allclose(a[0], net.encode1(img[:1])[0], rtol=0, atol=1e-12)
    assert np.array_equal(net.encode1(np.stack([img[0], img[0]]))[0], net.encode1(np.stack([img[0], img[0]]))[1])
    for n in net.store.names():
        if n.endswith(".b"):
            net.store.set(n, np.zeros_like(net.store[n]))
    assert not net.encode1(np.zeros((1, 128, 128))).any()
    with pytest.raises(ParameterError):
        net.encode1(np.zeros((1, 64, 64)))


def test_projection_head_unit_norm_and_floor(rng):
    net = FeatureNet(seed=2)
    z = net.project(rng.standard_normal((16, 20)) * 5)
    assert z.shape == (16, 128)
    assert np.all(np.abs(np.linalg.norm(z, axis=1) - 1) < 1e-9)
    _zero_store(net)
    pre = np.zeros((1, 128))
    _, (_, _, floored) = l2_normalize(pre)
    assert floored.all()
    assert not net.project(rng.standard_normal((1, 20))).any()


def test_encoder2_decoder_shapes_and_zero(rng):
    net = FeatureNet(seed=3)
    r = net.encode2(rng.random((3, 28, 28)))
    assert r.shape == (3, 30) and np.all(r >= 0)
    rec = net.decode(r)
    assert rec.shape == (3, 28, 28) and np.all(rec >= 0)
    for n in net.store.names():
        if n.endswith(".b"):
            net.store.set(n, np.zeros_like(net.store[n]))
    assert not net.decode(net.encode2(np.zeros((1, 28, 28)))).any()
    with pytest.raises(ParameterError):
        net.encode2(np.zeros((1, 28 * 28)))


def test_features_concatenate_both_codes(rng):
    net = FeatureNet(seed=4)
    mags, bits = rng.random((5, 128, 128)), (rng.random((5, 28, 28)) > 0.5).astype(float)
    f = net.features(mags, bits, batch=2)
    assert f.shape == (5, 50)
    assert np.allclose(f[:, :20], net.encode1(mags))
    assert np.allclose(f[:, 20:], net.encode2(bits))


def test_fuse_identity_and_block_structure(rng):
    fusion = build_fusion(50)
    store = ParamStore()
    fusion.init(store, rng)
    store.set("fuse.fc.w", np.eye(50))
    store.set("fuse.fc.b", np.zeros(50))
    r20, r30 = rng.random((4, 20)), rng.random((4, 30))
    out, _ = fuse(store, fusion, r20, r30)
    assert np.array_equal(out, np.concatenate([r20, r30], axis=1))
    fusion32 = build_fusion(32)
    s32 = ParamStore()
    fusion32.init(s32, rng)
    a, _ = fuse(s32, fusion32, r20, np.zeros((4, 30)))
    b, _ = fuse(s32, fusion32, r20, np.zeros((4, 30)))
    w = s32["fuse.fc.w"].copy()
    w[20:] = rng.standard_normal((30, 32))
    s32.set("fuse.fc.w", w)
    c, _ = fuse(s32, fusion32, r20, np.zeros((4, 30)))
    assert np.array_equal(a, b) and np.array_equal(a, c)
    with pytest.raises(ParameterError):
        fuse(store, fusion, r20, r30[:, :29])


def test_fuse_gradient(rng):
    fusion = build_fusion(8)
    store = ParamStore()
    fusion.init(store, rng)
    store.set("fuse.fc.b", np.full(8, 0.5))
    probe = rng.standard_normal((3, 8))

    def op(inp):
        for n in store.names():
            store.set(n, inp[n])
        store.zero_grad()
        y, caches = fuse(store, fusion, inp["r20"], inp["r30"])
        dx = fusion.backward(store, probe, caches)
        return float(np.sum(y * probe)), {"r20": dx[:, :20], "r30": dx[:, 20:],
                                          **{n: store.grads[n].copy() for n in store.names()}}
    inputs = {"r20": rng.random((3, 20)), "r30": rng.random((3, 30)), **store.copy_values()}
    assert grad_check(op, inputs) < 1e-4


def test_autoencoder_reduces_reconstruction_loss():
    rng = np.random.default_rng(0)
    bits = np.zeros((50, 28, 28))
    for i in range(50):
        r, c = rng.integers(2, 20, size=2)
        bits[i, r:r + 6, c:c + 6] = 1.0
    net = FeatureNet(seed=5)
    first = net.autoencoder_step(bits, 1e-3)
    for _ in range(150):
        last = net.autoencoder_step(bits, 1e-3)
    assert last < 0.5 * first


@pytest.fixture(scope="module")
def trained():
    mags, bits, labels = _synthetic(24)
    cfg = FeatureNetConfig(epochs=12, batch_pairs=8, seed=11, lr=1e-3)
    net, history = train_feature_net(mags, bits, labels, cfg)
    return net, history, (mags, bits, labels), cfg


def test_training_alternates_branches_and_lowers_contrastive_loss(trained):
    net, history, _, _ = trained
    assert [h["branch"] for h in history[:4]] == ["contrastive", "autoencoder", "contrastive", "autoencoder"]
    con = [h["loss"] for h in history if h["branch"] == "contrastive"]
    assert con[-1] < 0.8 * con[0]


def test_embeddings_separate_after_training(trained):
    net, _, (mags, bits, labels), _ = trained
    mags_eval, _, labels_eval = _synthetic(10, seed=99)
    z = net.project(net.encode1(mags_eval))
    tgt, non = z[labels_eval == 1], z[labels_eval == 0]
    assert _mean_cos(tgt, tgt, True) > _mean_cos(tgt, non, False)
    r20 = net.encode1(mags_eval)
    assert _mean_cos(r20[labels_eval == 1], r20[labels_eval == 1], True) > _mean_cos(
        r20[labels_eval == 1], r20[labels_eval == 0], False)


def test_training_is_deterministic(trained):
    _, history, (mags, bits, labels), cfg = trained
    _, again = train_feature_net(mags, bits, labels, FeatureNetConfig(**{**cfg.to_dict(), "epochs": 3}))
    assert again == history[:3]


def test_alternation_k_groups_epochs():
    mags, bits, labels = _synthetic(4)
    _, history = train_feature_net(mags, bits, labels, FeatureNetConfig(epochs=4, alternation_k=2, batch_pairs=4))
    assert [h["branch"] for h in history] == ["contrastive", "contrastive", "autoencoder", "autoencoder"]


def test_training_input_checks(caplog):
    mags, bits, labels = _synthetic(3)
    with pytest.raises(ParameterError):
        train_feature_net(mags, bits, labels * 2, FeatureNetConfig(epochs=1))
    with pytest.raises(TrainingError):
        train_feature_net(mags[:4], bits[:4], np.array([0, 0, 0, 1]), FeatureNetConfig(epochs=1))
    with caplog.at_level("WARNING"):
        train_feature_net(mags, bits, labels, FeatureNetConfig(epochs=1, batch_pairs=16))
    assert "batch_pairs" in caplog.text
