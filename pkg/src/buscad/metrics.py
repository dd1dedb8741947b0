"""Confusion-matrix metrics, ROC/AUC, lexicographic model selection, and the
embedding-space domain-shift indicator."""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

MALIGNANT_INDEX = 2
SELECT_TOL = 1e-4


def confusion_matrix(y_true: Sequence[int], y_pred: Sequence[int], n_classes: int = 3) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        if not (0 <= t < n_classes and 0 <= p < n_classes):
            raise ValueError(f"label out of range: true={t} pred={p}")
        cm[t, p] += 1
    return cm


@dataclass
class ClassificationMetrics:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy_standard: float
    accuracy_paper: float


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def classification_metrics(cm: np.ndarray) -> ClassificationMetrics:
    """Per-class and macro P/R/F1 plus both accuracy conventions.

    accuracy_standard is trace/total. accuracy_paper aggregates the
    per-class binarized counts sum_c(TP_c+TN_c) / sum_c(TP_c+FP_c+FN_c+TN_c),
    which differs from the standard definition for more than 2 classes.
    """
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total == 0:
        raise ValueError("empty confusion matrix")
    c = cm.shape[0]
    tp = np.diag(cm).astype(float)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    tn = total - tp - fp - fn
    precision = np.array([_safe_div(tp[i], tp[i] + fp[i]) for i in range(c)])
    recall = np.array([_safe_div(tp[i], tp[i] + fn[i]) for i in range(c)])
    f1 = np.array(
        [_safe_div(2 * precision[i] * recall[i], precision[i] + recall[i]) for i in range(c)]
    )
    return ClassificationMetrics(
        precision=precision,
        recall=recall,
        f1=f1,
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        accuracy_standard=float(tp.sum() / total),
        accuracy_paper=float((tp + tn).sum() / (tp + fp + fn + tn).sum()),
    )


@dataclass
class RocCurve:
    thresholds: np.ndarray  # descending; leading +inf sentinel
    fpr: np.ndarray  # nondecreasing, starts 0 ends 1
    tpr: np.ndarray


def roc_auc(scores: Sequence[float], positives: Sequence[bool]) -> tuple[RocCurve, float]:
    """ROC sweep over distinct scores (ties grouped) + trapezoidal AUC."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    if scores.shape != positives.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(positives.sum())
    n_neg = int(len(positives) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC requires at least one positive and one negative")

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = positives[order]
    thresholds = [np.inf]
    fpr = [0.0]
    tpr = [0.0]
    tp = fp = 0
    i = 0
    n = len(s)
    while i < n:
        j = i
        while j < n and s[j] == s[i]:
            tp += int(y[j])
            fp += int(not y[j])
            j += 1
        thresholds.append(s[i])
        fpr.append(fp / n_neg)
        tpr.append(tp / n_pos)
        i = j
    curve = RocCurve(np.array(thresholds), np.array(fpr), np.array(tpr))
    auc = float(
        np.sum((curve.tpr[:-1] + curve.tpr[1:]) / 2.0 * np.diff(curve.fpr))
    )
    return curve, auc


def multiclass_auc(scores: np.ndarray, y_true: Sequence[int]) -> tuple[np.ndarray, float]:
    """One-vs-rest AUC per class from that class's score column, plus macro."""
    scores = np.asarray(scores, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=int)
    if scores.ndim != 2 or scores.shape[0] != len(y_true):
        raise ValueError(f"scores must be (n_samples, n_classes), got {scores.shape}")
    n_classes = scores.shape[1]
    aucs = np.empty(n_classes)
    for c in range(n_classes):
        pos = y_true == c
        if pos.sum() == 0:
            raise ValueError(f"missing class {c} in y_true")
        _, aucs[c] = roc_auc(scores[:, c], pos)
    return aucs, float(aucs.mean())


@dataclass
class EvalReport:
    """Everything the model-selection rule needs about one classifier."""

    name: str
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy_standard: float
    accuracy_paper: float
    per_class_auc: Optional[np.ndarray] = None
    macro_auc: Optional[float] = None
    latency_s: Optional[float] = None
    fold_variance: Optional[dict] = None  # keys: malignant_recall, macro_auc, accuracy

    @property
    def malignant_recall(self) -> float:
        return float(self.recall[MALIGNANT_INDEX])

    @property
    def malignant_vs_rest_auc(self) -> Optional[float]:
        if self.per_class_auc is None:
            return None
        return float(self.per_class_auc[MALIGNANT_INDEX])

    def to_dict(self, include_latency: bool = False) -> dict:
        d = {
            "name": self.name,
            "confusion": self.confusion.tolist(),
            "per_class": {
                "precision": self.precision.tolist(),
                "recall": self.recall.tolist(),
                "f1": self.f1.tolist(),
            },
            "macro": {
                "precision": self.macro_precision,
                "recall": self.macro_recall,
                "f1": self.macro_f1,
            },
            "accuracy_standard": self.accuracy_standard,
            "accuracy_paper": self.accuracy_paper,
            "malignant_recall": self.malignant_recall,
            "per_class_auc": None if self.per_class_auc is None else self.per_class_auc.tolist(),
            "macro_auc": self.macro_auc,
            "malignant_vs_rest_auc": self.malignant_vs_rest_auc,
            "fold_variance": self.fold_variance,
        }
        if include_latency:
            d["latency_s"] = self.latency_s
        return d


def build_report(
    name: str,
    y_true: Sequence[int],
    y_pred: Sequence[int],
    scores: Optional[np.ndarray] = None,
    n_classes: int = 3,
    latency_s: Optional[float] = None,
    fold_variance: Optional[dict] = None,
) -> EvalReport:
    cm = confusion_matrix(y_true, y_pred, n_classes)
    m = classification_metrics(cm)
    per_class_auc = macro = None
    if scores is not None:
        per_class_auc, macro = multiclass_auc(scores, y_true)
    return EvalReport(
        name=name,
        confusion=cm,
        precision=m.precision,
        recall=m.recall,
        f1=m.f1,
        macro_precision=m.macro_precision,
        macro_recall=m.macro_recall,
        macro_f1=m.macro_f1,
        accuracy_standard=m.accuracy_standard,
        accuracy_paper=m.accuracy_paper,
        per_class_auc=per_class_auc,
        macro_auc=macro,
        latency_s=latency_s,
        fold_variance=fold_variance,
    )


def _selection_keys(r: EvalReport) -> tuple[float, float, float]:
    return (
        r.malignant_recall,
        r.macro_auc if r.macro_auc is not None else 0.0,
        r.accuracy_standard,
    )


def _mean_fold_variance(r: EvalReport) -> float:
    if not r.fold_variance:
        return float("inf")
    return float(np.mean(list(r.fold_variance.values())))


def _beats(a: EvalReport, b: EvalReport) -> bool:
    """True when a strictly outranks b under the lexicographic rule."""
    for ka, kb in zip(_selection_keys(a), _selection_keys(b)):
        if ka > kb + SELECT_TOL:
            return True
        if kb > ka + SELECT_TOL:
            return False
    va, vb = _mean_fold_variance(a), _mean_fold_variance(b)
    if va != vb:
        return va < vb
    la = a.latency_s if a.latency_s is not None else float("inf")
    lb = b.latency_s if b.latency_s is not None else float("inf")
    return la < lb


def select_best_model(reports: Sequence[EvalReport]) -> tuple[str, str]:
    """Pick by (malignant recall, macro AUC, accuracy) with 1e-4 ties broken
    by mean fold variance, then latency, then input order."""
    if len(reports) == 0:
        raise ValueError("no reports to select from")
    best = reports[0]
    for r in reports[1:]:
        if _beats(r, best):
            best = r
    lines = [
        f"selected: {best.name}",
        "rule: lexicographic (malignant_recall, macro_auc, accuracy_standard),"
        f" tolerance {SELECT_TOL}; ties by mean fold variance, then latency, then input order",
        "candidates:",
    ]
    for r in reports:
        lines.append(
            f"  {r.name}: malignant_recall={r.malignant_recall:.4f}"
            f" macro_auc={(r.macro_auc if r.macro_auc is not None else float('nan')):.4f}"
            f" accuracy={r.accuracy_standard:.4f}"
            f" fold_var={_mean_fold_variance(r):.3g}"
            f" latency_s={r.latency_s if r.latency_s is not None else float('nan'):.3g}"
        )
    return best.name, "\n".join(lines)


@dataclass
class DomainShiftIndicator:
    delta_mu: float

    def __post_init__(self):
        if self.delta_mu < 0:
            raise ValueError("delta_mu must be nonnegative")


def domain_shift_delta(train_embeddings: np.ndarray, ext_embeddings: np.ndarray) -> DomainShiftIndicator:
    """L2 distance between mean embeddings of the two sets."""
    a = np.asarray(train_embeddings, dtype=np.float64)
    b = np.asarray(ext_embeddings, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("embedding sets must be nonempty 2-D matrices")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"embedding dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    return DomainShiftIndicator(float(np.linalg.norm(a.mean(axis=0) - b.mean(axis=0))))
