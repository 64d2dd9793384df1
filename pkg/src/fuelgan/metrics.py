"""Confusion counts and accuracy / precision / recall / F1 with anomalous as the positive class.

A metric whose denominator is zero is reported as ``None`` together with a
reason, never as NaN or a silent 0.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(y_true, y_pred) -> ConfusionMatrix:
    t = np.asarray(y_true).astype(int).ravel()
    p = np.asarray(y_pred).astype(int).ravel()
    if t.shape != p.shape:
        raise ValueError(f"y_true has {t.size} labels but y_pred has {p.size}")
    if set(np.unique(t)) - {0, 1} or set(np.unique(p)) - {0, 1}:
        raise ValueError("labels must be 0 or 1")
    return ConfusionMatrix(
        tp=int(np.sum((t == 1) & (p == 1))),
        tn=int(np.sum((t == 0) & (p == 0))),
        fp=int(np.sum((t == 0) & (p == 1))),
        fn=int(np.sum((t == 1) & (p == 0))),
    )


def accuracy(cm: ConfusionMatrix) -> Optional[float]:
    return (cm.tp + cm.tn) / cm.total if cm.total else None


def recall(cm: ConfusionMatrix) -> Optional[float]:
    return cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else None


def precision(cm: ConfusionMatrix) -> Optional[float]:
    return cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else None


def f1(prec: Optional[float], rec: Optional[float]) -> Optional[float]:
    """Harmonic mean of precision and recall."""
    if prec is None or rec is None or prec + rec == 0:
        return None
    return 2.0 * prec * rec / (prec + rec)


UNDEFINED_REASONS = {
    "accuracy": "undefined (no evaluated rows)",
    "precision": "undefined (no positive predictions)",
    "recall": "undefined (no positive rows)",
    "f1": "undefined (precision or recall undefined, or both zero)",
}


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    accuracy: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    threshold: float
    dataset: str = ""
    fingerprint: str = ""
    label_rules_fingerprint: str = ""
    undefined: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["confusion"] = asdict(self.confusion)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d["confusion"] = ConfusionMatrix(**d["confusion"])
        return cls(**d)


def evaluate(y_true, y_pred, threshold: float, **info) -> EvalReport:
    cm = confusion(y_true, y_pred)
    values = {"accuracy": accuracy(cm), "precision": precision(cm), "recall": recall(cm)}
    values["f1"] = f1(values["precision"], values["recall"])
    undefined = {k: UNDEFINED_REASONS[k] for k, v in values.items() if v is None}
    return EvalReport(confusion=cm, threshold=threshold, undefined=undefined, **values, **info)


def save_report(report: EvalReport, path) -> None:
    Path(path).write_text(report.to_json())


def load_report(path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text()))


COMPARE_ROWS = [("Accuracy Score", "accuracy"), ("Precision", "precision"),
                ("Recall", "recall"), ("F1 Score", "f1")]


def compare_table(a: EvalReport, b: EvalReport, names=("without augmentation", "with augmentation")):
    """Side-by-side metric rows; refuses reports produced under different label rules."""
    if a.label_rules_fingerprint != b.label_rules_fingerprint:
        raise DomainError("reports were labeled with different rule sets "
                          f"({a.label_rules_fingerprint} vs {b.label_rules_fingerprint})")
    rows = [["Metrics", *names]]
    for title, key in COMPARE_ROWS:
        rows.append([title, *(_cell(getattr(r, key)) for r in (a, b))])
    return rows


def _cell(v: Optional[float]) -> str:
    return "undefined" if v is None else f"{v:.6g}"


def write_rows(rows, path, fingerprint: str = "") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        if fingerprint:
            fh.write(f"# fingerprint={fingerprint}\n")
        csv.writer(fh, lineterminator="\n").writerows(rows)


def threshold_sweep(scores, y_true, thresholds: Sequence[float]):
    """Raw (threshold, tp, tn, fp, fn) rows for external curve plotting."""
    scores = np.asarray(scores, dtype=np.float64)
    out = []
    for t in thresholds:
        cm = confusion(y_true, scores > t)
        out.append((float(t), cm.tp, cm.tn, cm.fp, cm.fn))
    return out
