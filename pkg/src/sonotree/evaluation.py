"""Classification metrics, stratified cross-validation, and the ablation grid.

Metrics follow the standard confusion-count definitions; ROC-AUC is the exact
Mann-Whitney rank statistic (tie-aware), not a trapezoid approximation. Folds
are stratified per class with seeded shuffling and round-robin assignment.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import ContractViolation, Rng

# trend-comparison reference averages from the original study's tables
REFERENCE_ACCURACY = {
    "level1": 0.70,
    "fused": 0.90,
    "with_rag": 0.99,
    "without_rag": 0.93,
    "with_lora": 0.88,
    "without_lora": 0.82,
}


@dataclass
class ConfusionCounts:
    """One-vs-rest counts per class plus the class list."""

    classes: list
    tp: dict
    fp: dict
    fn: dict
    tn: dict
    n: int

    def support(self, cls) -> int:
        return self.tp[cls] + self.fn[cls]


def confusion(y_true, y_pred, classes=None) -> ConfusionCounts:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ContractViolation("confusion: length mismatch")
    if classes is None:
        classes = sorted(set(y_true.tolist()) | set(y_pred.tolist()))
    known = set(classes)
    for value in np.concatenate([y_true, y_pred]).tolist():
        if value not in known:
            raise ContractViolation(f"confusion: unknown label {value!r}")
    tp, fp, fn, tn = {}, {}, {}, {}
    n = y_true.shape[0]
    for cls in classes:
        is_true = y_true == cls
        is_pred = y_pred == cls
        tp[cls] = int(np.sum(is_true & is_pred))
        fp[cls] = int(np.sum(~is_true & is_pred))
        fn[cls] = int(np.sum(is_true & ~is_pred))
        tn[cls] = int(np.sum(~is_true & ~is_pred))
    return ConfusionCounts(classes=list(classes), tp=tp, fp=fp, fn=fn, tn=tn, n=n)


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1_macro: float
    f1_weighted: float
    roc_auc: float | None = None
    degenerate: list = field(default_factory=list)  # zero-denominator notes

    def row(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision,
                "recall": self.recall, "f1_macro": self.f1_macro,
                "f1_weighted": self.f1_weighted,
                "roc_auc": "" if self.roc_auc is None else self.roc_auc}


def _safe_div(num, den, note, degenerate):
    if den == 0:
        degenerate.append(note)
        return 0.0
    return num / den


def metrics(counts: ConfusionCounts, scores=None, labels=None,
            positive=None) -> MetricsReport:
    """accuracy, precision, recall, macro/weighted F1, and (optionally) AUC.

    For binary problems precision/recall are reported for the positive class
    (the largest label by default); multiclass reports macro averages.
    Zero-denominator cases yield 0.0 plus a note in ``degenerate``.
    """
    degenerate: list = []
    total_tp = sum(counts.tp.values())
    accuracy = _safe_div(total_tp, counts.n, "accuracy: empty", degenerate)

    per_class = {}
    for cls in counts.classes:
        p = _safe_div(counts.tp[cls], counts.tp[cls] + counts.fp[cls],
                      f"precision[{cls}]: no positive predictions", degenerate)
        r = _safe_div(counts.tp[cls], counts.tp[cls] + counts.fn[cls],
                      f"recall[{cls}]: no positive labels", degenerate)
        f1 = _safe_div(2 * p * r, p + r, f"f1[{cls}]: zero precision+recall",
                       degenerate)
        per_class[cls] = (p, r, f1)

    if len(counts.classes) == 2:
        pos = positive if positive is not None else counts.classes[-1]
        precision, recall, _ = per_class[pos]
    else:
        precision = float(np.mean([v[0] for v in per_class.values()]))
        recall = float(np.mean([v[1] for v in per_class.values()]))

    f1_macro = float(np.mean([v[2] for v in per_class.values()]))
    supports = np.array([counts.support(c) for c in counts.classes], dtype=float)
    if supports.sum() > 0:
        weights = supports / supports.sum()
        f1_weighted = float(np.sum(weights * [per_class[c][2]
                                              for c in counts.classes]))
    else:
        degenerate.append("f1_weighted: no support")
        f1_weighted = 0.0

    auc = None
    if scores is not None:
        if labels is None:
            raise ContractViolation("metrics: scores given without labels")
        auc = roc_auc(scores, labels)
    return MetricsReport(accuracy=accuracy, precision=precision, recall=recall,
                         f1_macro=f1_macro, f1_weighted=f1_weighted,
                         roc_auc=auc, degenerate=degenerate)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney statistic P(score+ > score-) + 0.5 P(equal), via average
    ranks in O(n log n)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == labels.max()
    n_pos = int(np.sum(pos))
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ContractViolation("roc_auc: both classes must be present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.shape[0], dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum_pos = float(np.sum(ranks[pos]))
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def roc_curve_points(scores, labels):
    """(fpr, tpr) pairs over all thresholds, for plotting exports."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == labels.max()
    n_pos = int(np.sum(pos))
    n_neg = labels.shape[0] - n_pos
    order = np.argsort(-scores, kind="mergesort")
    points = [(0.0, 0.0)]
    tp = fp = 0
    prev = None
    for idx in order:
        if prev is not None and scores[idx] != prev:
            points.append((fp / max(n_neg, 1), tp / max(n_pos, 1)))
        if pos[idx]:
            tp += 1
        else:
            fp += 1
        prev = scores[idx]
    points.append((1.0, 1.0))
    return points


# ---------------------------------------------------------------------------
# stratified folds
# ---------------------------------------------------------------------------

@dataclass
class FoldPlan:
    k: int
    folds: list  # list of id lists
    labels: dict  # id -> label

    def test_ids(self, fold: int) -> list:
        return list(self.folds[fold])

    def train_ids(self, fold: int) -> list:
        out = []
        for i, ids in enumerate(self.folds):
            if i != fold:
                out.extend(ids)
        return out


def stratified_kfold(ids, labels, k: int, seed: int) -> FoldPlan:
    """Seeded shuffle within each class, then round-robin into k folds."""
    if k < 2:
        raise ContractViolation("stratified_kfold: k must be >= 2")
    ids = list(ids)
    labels = list(labels)
    if len(ids) != len(labels):
        raise ContractViolation("stratified_kfold: ids/labels length mismatch")
    by_class: dict = {}
    for sample_id, label in zip(ids, labels):
        by_class.setdefault(label, []).append(sample_id)
    folds = [[] for _ in range(k)]
    rng = Rng(seed)
    for label in sorted(by_class, key=str):
        members = sorted(by_class[label])
        if len(members) < k:
            raise ContractViolation(
                f"stratified_kfold: class {label!r} has {len(members)} < k={k}")
        rng.shuffle(members)
        for i, sample_id in enumerate(members):
            folds[i % k].append(sample_id)
    return FoldPlan(k=k, folds=folds, labels=dict(zip(ids, labels)))


# ---------------------------------------------------------------------------
# ablation grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AblationCell:
    name: str
    levels: tuple
    use_numeric: bool
    use_rag: bool
    use_lora: bool
    gate_mode: str
    reference_accuracy: float | None = None


def trend_grid() -> list:
    """Configurations for the directional trend comparisons.

    Single-level cells are visual-only. The fusion cells use the soft
    mixture when retrieval is off (with no text signal a hard gate would
    collapse onto one constant level instead of fusing); the full pipeline
    uses the hard gate it ships with.
    """
    return [
        AblationCell("level1", ("c",), False, False, True, "hard",
                     REFERENCE_ACCURACY["level1"]),
        AblationCell("level2", ("m",), False, False, True, "hard", None),
        AblationCell("level3", ("f",), False, False, True, "hard", None),
        AblationCell("fused", ("c", "m", "f"), False, False, True, "soft",
                     REFERENCE_ACCURACY["fused"]),
        AblationCell("full-no-rag", ("c", "m", "f"), True, False, True, "soft",
                     REFERENCE_ACCURACY["without_rag"]),
        AblationCell("full", ("c", "m", "f"), True, True, True, "hard",
                     REFERENCE_ACCURACY["with_rag"]),
        AblationCell("full-no-lora", ("c", "m", "f"), True, True, False, "hard",
                     REFERENCE_ACCURACY["without_lora"]),
    ]


def full_grid() -> list:
    """{L1, L2, L3, all} x {numeric} x {rag} x {lora} x {gate mode}."""
    cells = []
    level_sets = {"L1": ("c",), "L2": ("m",), "L3": ("f",),
                  "L123": ("c", "m", "f")}
    for lname, levels in level_sets.items():
        for numeric in (False, True):
            for rag in (False, True):
                for lora in (False, True):
                    for mode in ("hard", "soft"):
                        name = (f"{lname}-{'num' if numeric else 'nonum'}-"
                                f"{'rag' if rag else 'norag'}-"
                                f"{'lora' if lora else 'nolora'}-{mode}")
                        cells.append(AblationCell(name, levels, numeric, rag,
                                                  lora, mode))
    return cells


def write_results_csv(path, rows) -> None:
    """rows: dicts with config/fold plus MetricsReport.row() columns."""
    path = Path(path)
    columns = ["config", "fold", "accuracy", "precision", "recall",
               "f1_macro", "f1_weighted", "roc_auc", "reference_accuracy"]
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c, "") for c in columns})


def mean_metric(rows, config_name, metric_name="accuracy") -> float:
    values = [float(r[metric_name]) for r in rows
              if r["config"] == config_name and r["fold"] != "mean"]
    if not values:
        raise ContractViolation(f"no rows for config {config_name}")
    return float(np.mean(values))
