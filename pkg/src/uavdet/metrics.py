"""Detection, false-alarm and miss rates over 0/1/2-target labels, and their exports.

With ``N1`` samples holding no target and ``N2`` holding one or two:

* ``p_d`` = correctly labelled samples / ``(N1 + N2)``
* ``p_f`` = #{(0 -> 1), (0 -> 2), (1 -> 2)} / ``N2``
* ``p_m`` = #{(1 -> 0), (2 -> 0)} / ``N2``

where ``(a -> b)`` is a sample with true label ``a`` predicted as ``b``. The
definitions are asymmetric: ``1 -> 2`` counts as a false alarm while
``2 -> 1`` counts in no rate. :func:`compute_metrics` applies them as stated and
also reports a symmetric variant that counts both target-count confusions.

CSV schemas (header row first, fixed column order):

* metrics:    ``variant,p_d,p_f,p_m,n1,n2``
* sweep:      ``threshold,p_d,p_f,p_m``
* operating:  ``method,pf_target,threshold,p_d,p_f,p_m``
* confusion:  ``true_label,pred_0,pred_1,pred_2``
* heat map:   one row per sample, ``label`` then ``f0..f{d-1}``
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .detector import decide_batch
from .errors import ParameterError
from .io import write_pgm

UNDEFINED = float("nan")


@dataclass(frozen=True)
class EvalRecord:
    sample_id: str
    true_label: int
    predicted: int
    presence: float = float("nan")


@dataclass(frozen=True)
class MetricReport:
    p_d: float
    p_f: float
    p_m: float
    n1: int
    n2: int
    confusion: np.ndarray
    sym_p_f: float
    sym_p_m: float

    @property
    def defined(self) -> bool:
        return self.n2 > 0


def confusion_matrix(true, pred, num_classes: int = 3) -> np.ndarray:
    true = np.asarray(true, dtype=int)
    pred = np.asarray(pred, dtype=int)
    if true.shape != pred.shape:
        raise ParameterError("label and prediction lists differ in length")
    if np.any((true < 0) | (true >= num_classes) | (pred < 0) | (pred >= num_classes)):
        raise ParameterError(f"labels must lie in [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (true, pred), 1)
    return cm


def metrics_from_confusion(cm: np.ndarray) -> MetricReport:
    n1 = int(cm[0].sum())
    n2 = int(cm[1:].sum())
    total = n1 + n2
    if total == 0:
        raise ParameterError("no records to evaluate")
    p_d = float(np.trace(cm)) / total
    if n2 > 0:
        p_f = float(cm[0, 1] + cm[0, 2] + cm[1, 2]) / n2
        p_m = float(cm[1, 0] + cm[2, 0]) / n2
        sym_p_f = float(cm[0, 1] + cm[0, 2] + cm[1, 2] + cm[2, 1]) / n2
    else:
        p_f = p_m = sym_p_f = UNDEFINED
    return MetricReport(p_d=p_d, p_f=p_f, p_m=p_m, n1=n1, n2=n2, confusion=cm,
                        sym_p_f=sym_p_f, sym_p_m=p_m)


def compute_metrics(records: Sequence[EvalRecord] | tuple[Iterable[int], Iterable[int]]) -> MetricReport:
    """Rates for a list of :class:`EvalRecord` or a ``(true, predicted)`` pair of label lists.

    ``p_f`` and ``p_m`` (and their symmetric versions) are NaN when no
    sample holds a target.
    """
    if isinstance(records, tuple) and len(records) == 2 and not isinstance(records[0], EvalRecord):
        true, pred = records
    else:
        if len(records) == 0:
            raise ParameterError("no records to evaluate")
        true = [r.true_label for r in records]
        pred = [r.predicted for r in records]
    return metrics_from_confusion(confusion_matrix(true, pred))


def threshold_sweep(probs: np.ndarray, true, thresholds: Iterable[float]) -> list[tuple[float, float, float, float]]:
    """``(theta, p_d, p_f, p_m)`` for each threshold applied to the presence score."""
    probs = np.asarray(probs, dtype=float)
    true = np.asarray(true, dtype=int)
    rows = []
    for th in thresholds:
        rep = compute_metrics((true, decide_batch(probs, th)))
        rows.append((float(th), rep.p_d, rep.p_f, rep.p_m))
    return rows


def operating_points(sweep: list[tuple[float, float, float, float]], pf_targets: Iterable[float],
                     method: str = "proposed") -> list[tuple[str, float, float, float, float, float]]:
    """Invert a sweep: for each target false-alarm rate pick the sweep row with the
    largest ``p_d`` among those with ``p_f <= target`` (lowest threshold on ties).

    Rows are ``(method, pf_target, threshold, p_d, p_f, p_m)``; if no row meets
    the target the threshold and rates are NaN.
    """
    out = []
    for target in pf_targets:
        ok = [r for r in sweep if not math.isnan(r[2]) and r[2] <= target + 1e-12]
        if ok:
            best = max(ok, key=lambda r: (r[1], -r[0]))
            out.append((method, float(target)) + tuple(best))
        else:
            out.append((method, float(target), UNDEFINED, UNDEFINED, UNDEFINED, UNDEFINED))
    return out


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_metrics_csv(report: MetricReport, path: str | Path) -> None:
    write_csv(path, ["variant", "p_d", "p_f", "p_m", "n1", "n2"], [
        ("verbatim", report.p_d, report.p_f, report.p_m, report.n1, report.n2),
        ("symmetric", report.p_d, report.sym_p_f, report.sym_p_m, report.n1, report.n2),
    ])


def write_confusion_csv(cm: np.ndarray, path: str | Path) -> None:
    write_csv(path, ["true_label", "pred_0", "pred_1", "pred_2"],
              [(i, *map(int, cm[i])) for i in range(cm.shape[0])])


def export_heatmap(features: np.ndarray, path: str | Path, labels=None) -> tuple[Path, Path]:
    """Write ``features [samples, dims]`` as ``<path>.csv`` and a min-max scaled ``<path>.pgm``.

    With ``labels`` the rows are grouped by label (stable order within a
    label) and the label leads each CSV row. Returns the two paths.
    """
    f = np.asarray(features, dtype=float)
    if f.ndim != 2 or f.size == 0:
        raise ParameterError("heat map needs a non-empty [samples, dims] matrix")
    base = Path(path)
    if labels is not None:
        labels = np.asarray(labels, dtype=int)
        order = np.argsort(labels, kind="stable")
        f, labels = f[order], labels[order]
    csv_path, pgm_path = base.with_suffix(".csv"), base.with_suffix(".pgm")
    try:
        header = (["label"] if labels is not None else []) + [f"f{j}" for j in range(f.shape[1])]
        lead = [[int(lab)] for lab in labels] if labels is not None else [[] for _ in range(len(f))]
        write_csv(csv_path, header, [lead[i] + [float(v) for v in f[i]] for i in range(len(f))])
        write_pgm(f, pgm_path)
    except OSError as exc:
        raise OSError(f"cannot write heat map to {base}: {exc}") from exc
    return csv_path, pgm_path


def read_heatmap_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray | None]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    has_label = header[0] == "label"
    data = np.array([[float(v) for v in r[1 if has_label else 0:]] for r in body])
    labels = np.array([int(r[0]) for r in body]) if has_label else None
    return data, labels
