"""Confusion-matrix task metrics and feature export.

The headline dialogue metric is micro F1 ignoring the majority label:
instances whose gold label is the majority class are excluded entirely, and
predictions into the majority class earn no pooled true/false positives.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import LabelSpace


class MetricsError(ValueError):
    pass


def confusion_matrix(gold, pred, n_classes: int) -> np.ndarray:
    """C x C counts, rows = gold label index, cols = predicted."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for g, p in zip(gold, pred, strict=True):
        cm[g, p] += 1
    return cm


def accuracy(cm: np.ndarray) -> float:
    total = int(cm.sum())
    if total == 0:
        raise MetricsError("empty confusion matrix")
    return float(np.trace(cm)) / total


def _f1(tp: float, fp: float, fn: float) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom > 0 else 0.0


def per_class_prf(cm: np.ndarray) -> list[dict]:
    out = []
    for c in range(cm.shape[0]):
        tp = float(cm[c, c])
        fp = float(cm[:, c].sum() - cm[c, c])
        fn = float(cm[c, :].sum() - cm[c, c])
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        out.append({"precision": precision, "recall": recall, "f1": _f1(tp, fp, fn)})
    return out


def macro_f1(cm: np.ndarray) -> float:
    """Unweighted mean of per-class F1; undefined per-class F1 counts as 0."""
    scores = [c["f1"] for c in per_class_prf(cm)]
    return sum(scores) / len(scores)


def micro_f1_no_majority(cm: np.ndarray, majority: int) -> float:
    """Micro F1 pooled over all classes except the majority one.

    Gold-majority instances are excluded outright; predictions into the
    majority class count as pooled false negatives but never as pooled
    true/false positives. 0 when the pooled denominator is empty.
    """
    C = cm.shape[0]
    if not (0 <= majority < C):
        raise MetricsError("majority index out of range")
    tp = fp = fn = 0.0
    for c in range(C):
        if c == majority:
            continue
        tp += cm[c, c]
        fn += cm[c, :].sum() - cm[c, c]
        fp += sum(cm[r, c] for r in range(C) if r != c and r != majority)
    return _f1(tp, fp, fn)


@dataclass
class MetricReport:
    accuracy: float
    macro_f1: float
    micro_f1_no_majority: float
    majority: int
    per_class: list[dict] = field(default_factory=list)

    def score(self, metric: str) -> float:
        if metric == "accuracy":
            return self.accuracy
        if metric == "macro_f1":
            return self.macro_f1
        if metric == "micro_f1_no_majority":
            return self.micro_f1_no_majority
        raise MetricsError(f"unknown metric {metric!r}")

    def to_json(self) -> str:
        return json.dumps({
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "micro_f1_no_majority": self.micro_f1_no_majority,
            "majority": self.majority,
            "per_class": self.per_class,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        d = json.loads(text)
        return cls(**d)


def report_from_cm(cm: np.ndarray, majority: int) -> MetricReport:
    return MetricReport(
        accuracy=accuracy(cm),
        macro_f1=macro_f1(cm),
        micro_f1_no_majority=micro_f1_no_majority(cm, majority),
        majority=majority,
        per_class=per_class_prf(cm),
    )


def report_from_predictions(gold, pred, label_space: LabelSpace, majority: int | None = None) -> MetricReport:
    gold_idx = [label_space.index(g) for g in gold]
    pred_idx = [label_space.index(p) for p in pred]
    cm = confusion_matrix(gold_idx, pred_idx, len(label_space))
    if majority is None:
        majority = label_space.majority if label_space.majority is not None else 0
    return report_from_cm(cm, majority)


def cm_to_csv(cm: np.ndarray, path, labels=None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        if labels is not None:
            f.write("," + ",".join(labels) + "\n")
        for r in range(cm.shape[0]):
            prefix = f"{labels[r]}," if labels is not None else ""
            f.write(prefix + ",".join(str(int(x)) for x in cm[r]) + "\n")


def export_features(instances, tags, model, path) -> None:
    """Write one sparse feature row per instance with its provenance tag, for
    external projection tools (t-SNE and friends). Deterministic given the
    model and input order."""
    X = model.featurizer.transform(list(instances))
    with open(path, "w", encoding="utf-8") as f:
        for row_idx, tag in zip(range(X.shape[0]), tags, strict=True):
            row = X.getrow(row_idx)
            features = {str(int(i)): float(v) for i, v in zip(row.indices, row.data)}
            f.write(json.dumps({"row": row_idx, "tag": tag, "features": features},
                               sort_keys=True) + "\n")
