"""Dataset assembly and the patient-level cross-validation driver.

Folds split by patient, never by image, so no patient contributes to both
sides of a split. Each fold trains a fresh model with a fold-derived seed;
metrics come out per fold plus the mean row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clinical import raw_features
from .estimator import GatedFusionClassifier
from .evaluation import AblationCell, confusion, metrics, stratified_kfold
from .numerics import ContractViolation

LABEL_NAMES = ("control", "sarcopenic")


@dataclass
class SampleTable:
    sample_ids: list
    patient_ids: list
    coarse: np.ndarray
    mid: np.ndarray
    fine: np.ndarray
    text: np.ndarray
    numeric: np.ndarray
    labels: np.ndarray  # 0 = control, 1 = sarcopenic

    @property
    def n(self) -> int:
        return len(self.sample_ids)

    def x(self) -> dict:
        return {"coarse": self.coarse, "mid": self.mid, "fine": self.fine,
                "text": self.text, "numeric": self.numeric}

    def subset(self, indices) -> "SampleTable":
        idx = np.asarray(indices, dtype=int)
        return SampleTable(
            sample_ids=[self.sample_ids[i] for i in idx],
            patient_ids=[self.patient_ids[i] for i in idx],
            coarse=self.coarse[idx], mid=self.mid[idx], fine=self.fine[idx],
            text=self.text[idx], numeric=self.numeric[idx],
            labels=self.labels[idx])

    def patient_labels(self) -> dict:
        out = {}
        for pid, label in zip(self.patient_ids, self.labels):
            out[pid] = int(label)
        return out


def patient_of_sample(sample_id: str) -> str:
    """Sample ids are '<patient>_<index>'."""
    return sample_id.rsplit("_", 1)[0]


def build_sample_table(features: dict, patients: list,
                       patient_text: dict | None, text_dim: int = 768) -> SampleTable:
    """Join per-sample visual features with per-patient clinical and text rows.

    ``patient_text`` maps patient id -> pooled knowledge vector; None (or a
    missing patient) yields a zero text vector, the no-retrieval input.
    """
    by_patient = {p.id: p for p in patients}
    sample_ids = sorted(features.keys())
    rows_c, rows_m, rows_f, rows_t, rows_n, labels = [], [], [], [], [], []
    patient_ids = []
    for sid in sample_ids:
        pid = patient_of_sample(sid)
        if pid not in by_patient:
            raise ContractViolation(f"sample {sid}: unknown patient {pid}")
        record = by_patient[pid]
        if record.label not in LABEL_NAMES:
            raise ContractViolation(f"patient {pid}: missing or unknown label")
        level_data = features[sid]
        rows_c.append(np.asarray(level_data["coarse"]).ravel())
        rows_m.append(np.asarray(level_data["mid"]).ravel())
        rows_f.append(np.asarray(level_data["fine"]).ravel())
        if patient_text is not None and pid in patient_text:
            rows_t.append(np.asarray(patient_text[pid], dtype=np.float64))
        else:
            rows_t.append(np.zeros(text_dim))
        rows_n.append(raw_features(record))
        labels.append(LABEL_NAMES.index(record.label))
        patient_ids.append(pid)
    return SampleTable(
        sample_ids=sample_ids, patient_ids=patient_ids,
        coarse=np.stack(rows_c), mid=np.stack(rows_m), fine=np.stack(rows_f),
        text=np.stack(rows_t), numeric=np.stack(rows_n),
        labels=np.asarray(labels, dtype=int))


def make_classifier(cell: AblationCell, seed: int, lr: float = 1e-3,
                    batch_size: int = 32, epochs: int = 100,
                    rank: int = 16) -> GatedFusionClassifier:
    return GatedFusionClassifier(
        levels=cell.levels, use_numeric=cell.use_numeric, use_rag=cell.use_rag,
        use_lora=cell.use_lora, gate_mode=cell.gate_mode, rank=rank, lr=lr,
        batch_size=batch_size, epochs=epochs, seed=seed)


def evaluate_split(clf: GatedFusionClassifier, test: SampleTable):
    probs = clf.predict_proba(test.x())
    predicted = np.argmax(probs, axis=1)
    counts = confusion(test.labels, predicted, classes=[0, 1])
    return metrics(counts, scores=probs[:, 1], labels=test.labels, positive=1), probs


def cross_validate(table: SampleTable, cell: AblationCell, k: int = 5,
                   seed: int = 0, lr: float = 1e-3, batch_size: int = 32,
                   epochs: int = 100, rank: int = 16):
    """Patient-stratified k-fold; returns (result rows, fold plan)."""
    plabels = table.patient_labels()
    pids = sorted(plabels)
    plan = stratified_kfold(pids, [plabels[p] for p in pids], k=k, seed=seed)
    rows = []
    fold_metrics = []
    for fold in range(k):
        test_pids = set(plan.test_ids(fold))
        test_idx = [i for i, pid in enumerate(table.patient_ids)
                    if pid in test_pids]
        train_idx = [i for i, pid in enumerate(table.patient_ids)
                     if pid not in test_pids]
        train, test = table.subset(train_idx), table.subset(test_idx)
        clf = make_classifier(cell, seed=seed * 1000 + fold, lr=lr,
                              batch_size=batch_size, epochs=epochs, rank=rank)
        clf.fit(train.x(), train.labels)
        report, _ = evaluate_split(clf, test)
        fold_metrics.append(report)
        row = {"config": cell.name, "fold": fold, **report.row()}
        if cell.reference_accuracy is not None:
            row["reference_accuracy"] = cell.reference_accuracy
        rows.append(row)
    mean_row = {"config": cell.name, "fold": "mean"}
    for key in ("accuracy", "precision", "recall", "f1_macro", "f1_weighted"):
        mean_row[key] = float(np.mean([getattr(m, key) for m in fold_metrics]))
    aucs = [m.roc_auc for m in fold_metrics if m.roc_auc is not None]
    mean_row["roc_auc"] = float(np.mean(aucs)) if aucs else ""
    if cell.reference_accuracy is not None:
        mean_row["reference_accuracy"] = cell.reference_accuracy
    rows.append(mean_row)
    return rows, plan
