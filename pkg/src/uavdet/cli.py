"""Command-line entry point: ``uavdet {generate,transform,rdmap,train,eval,validate}``.

Every command writes ``config.resolved.json`` into its output directory; passing
that file back with ``--config`` reruns the command with identical settings.
Logs go to stderr, data only to files. Exit codes: 0 success, 2 usage,
configuration or input errors, 3 numeric failure during training.

Config files are JSON objects whose keys mirror the long flags (``preset``,
``overrides``, ``seed``, ``snr``, ``per_class``, ``labels``, ``dataset``,
``out``, ``transform``, ``transform_params``, ``feature_net``, ``detector``,
``checkpoints``, ``threshold``, ``window``, ``sample``). Flags given on the
command line take precedence.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .detector import Detector, DetectorConfig, decide_batch, train_detector
from .errors import FormatError, ParameterError, TrainingError
from .features import FeatureNet, FeatureNetConfig, train_feature_net
from .io import (read_binary_image, read_json, read_pulse_train, read_tf_image, write_json, write_pgm,
                 write_pulse_train, write_tf_image)
from .metrics import (compute_metrics, export_heatmap, operating_points, threshold_sweep, write_confusion_csv,
                      write_csv, write_metrics_csv)
from .nn import load_params, save_params
from .pipeline import (ImageSet, TrainedModel, TransformConfig, make_scenario, preprocess, sample_specs,
                       sequences, split_indices, surveillance_gates)
from .scenarios import PRESETS, get_preset, scenario_from_dict, scenario_to_dict
from .sim import simulate
from .tfproc import TFImage, matched_filter, pulse_compress, rd_axes, rd_map

log = logging.getLogger("uavdet")

MANIFEST_VERSION = 1
PAPER_SCALE_PER_CLASS = 667   # ~2000 scenes over three labels
PAPER_SCALE_EPOCHS = 8192
SWEEP_THRESHOLDS = [round(0.05 * i, 2) for i in range(1, 20)]
PF_TARGETS = [0.0, 0.05, 0.1, 0.2, 0.4]


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# config handling


def _parse_list(text: str, cast) -> list:
    try:
        return [cast(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse list {text!r}: {exc}") from exc


def _snr(v: str) -> float:
    v = v.strip().lower()
    return math.inf if v in ("inf", "+inf") else float(v)


def resolve(args: argparse.Namespace, defaults: dict[str, Any]) -> dict[str, Any]:
    """Merge defaults < config file < explicit flags."""
    cfg = dict(defaults)
    if args.config:
        try:
            loaded = read_json(args.config)
        except (OSError, FormatError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(loaded) - set(defaults) - {"command", "version"}
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
        cfg.update({k: v for k, v in loaded.items() if k in defaults})
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def snapshot(cfg: dict[str, Any], command: str, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    data = {"command": command, "version": __version__}
    for k, v in cfg.items():
        if k == "snr":
            v = ["inf" if math.isinf(x) else x for x in v]
        data[k] = v
    write_json(data, out / "config.resolved.json")


def _snr_list(cfg) -> list[float]:
    return [_snr(str(v)) for v in cfg["snr"]]


def _threads() -> int:
    try:
        n = int(os.environ.get("UAVDET_THREADS", "0"))
    except ValueError:
        raise UsageError("UAVDET_THREADS must be an integer")
    cpus = os.cpu_count() or 1
    return max(1, min(n, cpus)) if n > 0 else cpus


def _parallel_map(fn, items: list) -> list:
    """Order-preserving map over worker processes (serial when one worker)."""
    workers = min(_threads(), max(1, len(items)))
    if workers == 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


# --------------------------------------------------------------------------
# generate


GEN_DEFAULTS = dict(preset="desk", overrides={}, seed=0, snr=[10.0], per_class=100, labels=[0, 1, 2],
                    out=None, paper_scale=False)


def _generate_one(job) -> dict:
    preset, spec, out = job
    sc = make_scenario(preset, spec)
    train = simulate(sc)
    write_pulse_train(train, out / "samples" / f"{spec.sample_id}.uavpt")
    meta = {"sample_id": spec.sample_id, "label": spec.label, "snr_db": "inf" if math.isinf(spec.snr_db) else spec.snr_db,
            "seed": spec.seed, "scenario": scenario_to_dict(sc)}
    write_json(meta, out / "samples" / f"{spec.sample_id}.json")
    return {"sample": f"samples/{spec.sample_id}.uavpt", "metadata": f"samples/{spec.sample_id}.json",
            "label": spec.label, "snr_db": meta["snr_db"], "seed": spec.seed}


def cmd_generate(args) -> int:
    cfg = resolve(args, GEN_DEFAULTS)
    if cfg["paper_scale"]:
        if args.preset is None and not args.config:
            cfg["preset"] = "paper-sim"
        if args.per_class is None:
            cfg["per_class"] = PAPER_SCALE_PER_CLASS
    if cfg["out"] is None:
        raise UsageError("--out is required")
    if cfg["per_class"] < 1:
        raise UsageError("--per-class must be >= 1")
    labels = [int(v) for v in cfg["labels"]]
    if not labels or not set(labels) <= {0, 1, 2}:
        raise UsageError("labels must be a non-empty subset of 0,1,2")
    try:
        preset = get_preset(cfg["preset"], cfg["overrides"])
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(cfg["out"])
    try:
        (out / "samples").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create {out}: {exc}") from exc
    snapshot(cfg, "generate", out)
    specs = sample_specs(labels, int(cfg["per_class"]), _snr_list(cfg), int(cfg["seed"]))
    log.info("generating %d scenes with preset %s", len(specs), cfg["preset"])
    entries = _parallel_map(_generate_one, [(preset, s, out) for s in specs])
    write_json({"format_version": MANIFEST_VERSION, "preset": cfg["preset"], "overrides": cfg["overrides"],
                "seed": int(cfg["seed"]), "balanced": True, "samples": entries}, out / "manifest.json")
    log.info("wrote %d samples to %s", len(entries), out)
    return 0


# --------------------------------------------------------------------------
# transform


TF_DEFAULTS = dict(dataset=None, out=None, transform="zam", transform_params={})


def _load_manifest(dataset: Path) -> dict:
    try:
        man = read_json(dataset / "manifest.json")
    except (OSError, FormatError) as exc:
        raise UsageError(f"cannot read manifest in {dataset}: {exc}") from exc
    if man.get("format_version") != MANIFEST_VERSION:
        raise UsageError(f"{dataset}: unsupported manifest version {man.get('format_version')}")
    return man


def _transform_one(job):
    dataset, entry, preset, tcfg, out = job
    sid = Path(entry["sample"]).stem
    try:
        train = read_pulse_train(dataset / entry["sample"])
        meta = read_json(dataset / entry["metadata"])
        sc = scenario_from_dict(meta["scenario"])
        if train.samples.shape != (sc.radar.fast_time_bins, sc.radar.num_pulses):
            raise FormatError(f"{entry['sample']}: shape {train.samples.shape} disagrees with its metadata")
    except (OSError, FormatError, KeyError, ValueError) as exc:
        return sid, None, str(exc)
    imgs = preprocess(train, sc.radar, surveillance_gates(preset, train), tcfg)
    for k in range(imgs.mags.shape[0]):
        write_tf_image(TFImage(imgs.mags[k], imgs.tf.time_step, imgs.tf.freq_step, imgs.tf.freq_origin),
                       out / f"{sid}_w{k}_mag.uavtf")
        write_tf_image(imgs.binary.like(imgs.bits[k]), out / f"{sid}_w{k}_bin.uavtf")
    write_tf_image(imgs.tf, out / f"{sid}_tf.uavtf")
    return sid, {"id": sid, "label": entry["label"], "snr_db": entry["snr_db"], "gate": imgs.gate,
                 "windows": int(imgs.mags.shape[0])}, None


def cmd_transform(args) -> int:
    cfg = resolve(args, TF_DEFAULTS)
    if cfg["dataset"] is None:
        raise UsageError("--dataset is required")
    dataset = Path(cfg["dataset"])
    out = Path(cfg["out"]) if cfg["out"] else dataset / f"tf_{cfg['transform']}"
    cfg["out"] = str(out)
    try:
        tcfg = TransformConfig.from_dict({"transform": cfg["transform"], **cfg["transform_params"]})
        man = _load_manifest(dataset)
        preset = get_preset(man["preset"], man.get("overrides"))
    except (ParameterError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    snapshot(cfg, "transform", out)
    results = _parallel_map(_transform_one, [(dataset, e, preset, tcfg, out) for e in man["samples"]])
    entries = []
    for sid, entry, err in results:
        if err:
            log.error("skipping %s: %s", sid, err)
        else:
            entries.append(entry)
    if not entries:
        log.error("no sample could be transformed")
        return 2
    write_json({"format_version": MANIFEST_VERSION, "transform": tcfg.to_dict(), "source": str(dataset),
                "samples": entries}, out / "tf_manifest.json")
    log.info("transformed %d/%d samples into %s", len(entries), len(man["samples"]), out)
    return 0


# --------------------------------------------------------------------------
# rdmap


RD_DEFAULTS = dict(sample=None, out=None, window=512)


def _mask_zero_doppler(rd: np.ndarray, half_width: int = 2) -> np.ndarray:
    """Copy of ``rd`` with the columns around zero Doppler set to -inf."""
    c = rd.shape[1] // 2
    masked = rd.astype(float).copy()
    masked[:, max(0, c - half_width):c + half_width + 1] = -np.inf
    return masked


def cmd_rdmap(args) -> int:
    cfg = resolve(args, RD_DEFAULTS)
    if cfg["sample"] is None or cfg["out"] is None:
        raise UsageError("--sample and --out are required")
    sample = Path(cfg["sample"])
    try:
        train = read_pulse_train(sample)
        meta = read_json(sample.with_suffix(".json"))
        sc = scenario_from_dict(meta["scenario"])
    except (OSError, FormatError, KeyError) as exc:
        raise UsageError(f"cannot load {sample}: {exc}") from exc
    window = min(int(cfg["window"]), train.num_pulses)
    comp = pulse_compress(train, matched_filter(sc.radar))
    rd = rd_map(comp, window)
    ranges, vels = rd_axes(comp, window, sc.radar.carrier_freq)
    out = Path(cfg["out"])
    snapshot(cfg, "rdmap", out)
    stem = sample.stem
    write_tf_image(TFImage(rd, time_step=comp.fast_time_step, freq_step=1.0 / (window * comp.pri),
                           freq_origin=-0.5 / comp.pri), out / f"{stem}_rd.uavtf")
    write_pgm(20 * np.log10(rd + 1e-12 * max(rd.max(), 1e-300)), out / f"{stem}_rd.pgm")
    rows = []
    for kind, masked in (("all", rd), ("moving", _mask_zero_doppler(rd))):
        r_idx, d_idx = np.unravel_index(int(np.argmax(masked)), rd.shape)
        rows.append((kind, int(r_idx), int(d_idx), float(ranges[r_idx]), float(vels[d_idx]), float(rd[r_idx, d_idx])))
        log.info("RD %s peak at %.1f m, %.2f m/s", kind, ranges[r_idx], vels[d_idx])
    write_csv(out / f"{stem}_rd_peak.csv",
              ["kind", "range_bin", "doppler_bin", "range_m", "velocity_mps", "magnitude"], rows)
    return 0


# --------------------------------------------------------------------------
# train / eval


TRAIN_DEFAULTS = dict(dataset=None, out=None, seed=0, feature_net={}, detector={}, paper_scale=False)


def load_image_set(tf_dir: Path) -> tuple[ImageSet, dict]:
    try:
        man = read_json(tf_dir / "tf_manifest.json")
    except (OSError, FormatError) as exc:
        raise UsageError(f"cannot read transformed dataset {tf_dir}: {exc}") from exc
    mags, bits = [], []
    for e in man["samples"]:
        try:
            mags.append([read_tf_image(tf_dir / f"{e['id']}_w{k}_mag.uavtf").values for k in range(e["windows"])])
            bits.append([read_binary_image(tf_dir / f"{e['id']}_w{k}_bin.uavtf").bits for k in range(e["windows"])])
        except (OSError, FormatError) as exc:
            raise UsageError(f"corrupt transformed sample {e['id']}: {exc}") from exc
    data = ImageSet([e["id"] for e in man["samples"]], np.array([e["label"] for e in man["samples"]]),
                    np.array(mags, dtype=float), np.array(bits, dtype=np.uint8))
    return data, man


def _write_log(rows: list[dict], path: Path, columns: list[str]) -> None:
    write_csv(path, columns, [[r[c] for c in columns] for r in rows])


def cmd_train(args) -> int:
    cfg = resolve(args, TRAIN_DEFAULTS)
    if cfg["dataset"] is None or cfg["out"] is None:
        raise UsageError("--dataset and --out are required")
    seed = int(cfg["seed"])
    feat = {"seed": seed, **cfg["feature_net"]}
    if cfg["paper_scale"] and "epochs" not in cfg["feature_net"]:
        feat["epochs"] = PAPER_SCALE_EPOCHS
    try:
        fcfg = FeatureNetConfig(**feat)
        dcfg = DetectorConfig(**{"seed": seed, "fusion_dim": fcfg.fusion_dim, **cfg["detector"]})
    except (ParameterError, TypeError) as exc:
        raise UsageError(f"bad training config: {exc}") from exc
    data, _ = load_image_set(Path(cfg["dataset"]))
    out = Path(cfg["out"])
    snapshot(cfg, "train", out)
    tr, te, ho = split_indices(data.labels, seed)
    write_json({"seed": seed, "train": [data.ids[i] for i in tr], "test": [data.ids[i] for i in te],
                "holdout": [data.ids[i] for i in ho]}, out / "splits.json")
    train = data.subset(tr)
    n, w = train.mags.shape[:2]
    net, flog = train_feature_net(train.mags.reshape((n * w,) + train.mags.shape[2:]),
                                  train.bits.reshape((n * w,) + train.bits.shape[2:]),
                                  np.repeat((train.labels > 0).astype(int), w), fcfg)
    _write_log(flog, out / "feature_loss.csv", ["epoch", "branch", "loss"])
    det, dlog = train_detector(sequences(net, train), train.labels, dcfg)
    _write_log(dlog, out / "detector_loss.csv", ["epoch", "loss", "accuracy"])
    save_params(net.store, out / "features.uavnn")
    save_params(det.store, out / "detector.uavnn")
    log.info("saved checkpoints to %s", out)
    return 0


def load_model(ckpt: Path) -> TrainedModel:
    try:
        fstore = load_params(ckpt / "features.uavnn")
        dstore = load_params(ckpt / "detector.uavnn")
    except (OSError, FormatError) as exc:
        raise UsageError(f"cannot load checkpoints from {ckpt}: {exc}") from exc
    hidden = dstore["gru.fwd.Uz"].shape[0]
    fusion_dim = dstore["fuse.fc.w"].shape[1]
    det = Detector(DetectorConfig(hidden=hidden, fusion_dim=fusion_dim), store=dstore)
    return TrainedModel(FeatureNet(store=fstore), det, [], [])


EVAL_DEFAULTS = dict(dataset=None, checkpoints=None, out=None, threshold=0.5, split="holdout")


def cmd_eval(args) -> int:
    cfg = resolve(args, EVAL_DEFAULTS)
    if cfg["dataset"] is None or cfg["checkpoints"] is None or cfg["out"] is None:
        raise UsageError("--dataset, --checkpoints and --out are required")
    ckpt = Path(cfg["checkpoints"])
    model = load_model(ckpt)
    data, _ = load_image_set(Path(cfg["dataset"]))
    if cfg["split"] != "all":
        try:
            splits = read_json(ckpt / "splits.json")
        except (OSError, FormatError) as exc:
            raise UsageError(f"cannot read {ckpt / 'splits.json'}: {exc}") from exc
        if cfg["split"] not in splits:
            raise UsageError(f"unknown split {cfg['split']!r}")
        wanted = set(splits[cfg["split"]])
        data = data.subset([i for i, sid in enumerate(data.ids) if sid in wanted])
        if not data.ids:
            raise UsageError("the selected split has no samples in this dataset")
    out = Path(cfg["out"])
    snapshot(cfg, "eval", out)
    seqs = sequences(model.features, data)
    probs = model.detector.predict_proba(seqs)
    pred = decide_batch(probs, float(cfg["threshold"]))
    report = compute_metrics((data.labels, pred))
    write_metrics_csv(report, out / "metrics.csv")
    write_confusion_csv(report.confusion, out / "confusion.csv")
    sweep = threshold_sweep(probs, data.labels, SWEEP_THRESHOLDS)
    write_csv(out / "sweep.csv", ["threshold", "p_d", "p_f", "p_m"], sweep)
    write_csv(out / "operating_points.csv", ["method", "pf_target", "threshold", "p_d", "p_f", "p_m"],
              operating_points(sweep, PF_TARGETS))
    write_csv(out / "predictions.csv", ["sample_id", "p0", "p1", "p2", "label", "true_label"],
              [(sid, float(p[0]), float(p[1]), float(p[2]), int(lab), int(t))
               for sid, p, lab, t in zip(data.ids, probs, pred, data.labels)])
    # heat map: up to 15 samples per label, mean code over windows
    pick = np.concatenate([np.flatnonzero(data.labels == c)[:15] for c in (0, 1, 2)])
    export_heatmap(seqs[pick].mean(axis=1), out / "heatmap", labels=data.labels[pick])
    log.info("p_d %.4f  p_f %.4f  p_m %.4f on %d samples", report.p_d, report.p_f, report.p_m, len(data.ids))
    return 0


# --------------------------------------------------------------------------
# validate


VAL_DEFAULTS = dict(dataset=None)


def cmd_validate(args) -> int:
    cfg = resolve(args, VAL_DEFAULTS)
    if cfg["dataset"] is None:
        raise UsageError("--dataset is required")
    dataset = Path(cfg["dataset"])
    man = _load_manifest(dataset)
    problems = []
    counts: dict[int, int] = {}
    for e in man["samples"]:
        try:
            train = read_pulse_train(dataset / e["sample"])
            meta = read_json(dataset / e["metadata"])
            sc = scenario_from_dict(meta["scenario"])
            if train.samples.shape != (sc.radar.fast_time_bins, sc.radar.num_pulses):
                raise FormatError("sample shape disagrees with metadata")
            if int(meta["label"]) != int(e["label"]):
                raise FormatError("label disagrees with metadata")
        except (OSError, FormatError, KeyError, ValueError) as exc:
            problems.append(f"{e.get('sample')}: {exc}")
            continue
        counts[int(e["label"])] = counts.get(int(e["label"]), 0) + 1
    if man.get("balanced") and len(set(counts.values())) > 1:
        problems.append(f"labels not balanced: {counts}")
    for p in problems:
        log.error("%s", p)
    if problems:
        log.error("%d problem(s) in %s", len(problems), dataset)
        return 2
    log.info("%s: %d samples OK", dataset, len(man["samples"]))
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uavdet", description="UAV radar echo simulation and detection")
    p.add_argument("--version", action="version", version=f"uavdet {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", type=str, default=None, help="JSON config (keys mirror the flags)")
        if out:
            sp.add_argument("--out", type=str, default=None, help="output directory")

    g = sub.add_parser("generate", help="simulate a balanced dataset of pulse trains")
    common(g)
    g.add_argument("--preset", choices=sorted(PRESETS), default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--snr", type=lambda s: _parse_list(s, _snr), default=None, help="comma-separated dB list")
    g.add_argument("--per-class", dest="per_class", type=int, default=None)
    g.add_argument("--labels", type=lambda s: _parse_list(s, int), default=None)
    g.add_argument("--paper-scale", dest="paper_scale", action="store_const", const=True, default=None,
                   help="full-size volumes (hours of compute)")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("transform", help="turn pulse trains into time-frequency images")
    common(t)
    t.add_argument("--dataset", type=str, default=None)
    t.add_argument("--transform", choices=("zam", "stft"), default=None)
    t.set_defaults(func=cmd_transform)

    r = sub.add_parser("rdmap", help="range-Doppler map of one sample")
    common(r)
    r.add_argument("--sample", type=str, default=None)
    r.add_argument("--window", type=int, default=None)
    r.set_defaults(func=cmd_rdmap)

    tr = sub.add_parser("train", help="train the feature network and the detector")
    common(tr)
    tr.add_argument("--dataset", type=str, default=None, help="transformed dataset directory")
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument("--paper-scale", dest="paper_scale", action="store_const", const=True, default=None)
    tr.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a trained model")
    common(e)
    e.add_argument("--dataset", type=str, default=None, help="transformed dataset directory")
    e.add_argument("--checkpoints", type=str, default=None)
    e.add_argument("--threshold", type=float, default=None)
    e.add_argument("--split", choices=("train", "test", "holdout", "all"), default=None)
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("validate", help="check a dataset manifest and its files")
    common(v, out=False)
    v.add_argument("--dataset", type=str, default=None)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ParameterError, FormatError) as exc:
        log.error("%s", exc)
        return 2
    except TrainingError as exc:
        log.error("numeric failure: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
