"""Structured patient variables: CSV loading, latent encoding, and the
threshold rules that turn a record into standardized clinical terms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import ContractViolation, MinMaxScaler, Rng, relu

SEXES = ("M", "F")
LABELS = ("control", "sarcopenic")
RAW_DIM = 8  # sex one-hot (2) + age, height, weight, bmi, falls, sppb
ENCODER_HIDDEN = 64
EMBED_DIM = 400

DIMENSION_TAGS = ("Diagnosis", "Prognosis", "Risk Factors", "Comorbidities")


@dataclass
class PatientRecord:
    id: str
    age: float
    sex: str
    height_cm: float
    weight_kg: float
    bmi: float
    falls: int
    sppb: int
    label: str | None = None

    def validate(self) -> None:
        if not 18 <= self.age <= 120:
            raise ContractViolation(f"patient {self.id}: age {self.age} out of range")
        if self.sex not in SEXES:
            raise ContractViolation(f"patient {self.id}: sex must be M or F")
        if not 0 <= self.sppb <= 12:
            raise ContractViolation(f"patient {self.id}: sppb {self.sppb} out of range")
        if self.falls < 0:
            raise ContractViolation(f"patient {self.id}: negative falls count")
        if self.height_cm > 0 and self.weight_kg > 0 and self.bmi > 0:
            derived = self.weight_kg / (self.height_cm / 100.0) ** 2
            if abs(self.bmi - derived) > 0.05 * derived:
                raise ContractViolation(
                    f"patient {self.id}: bmi {self.bmi:.1f} inconsistent with "
                    f"height/weight ({derived:.1f})")
        if self.label is not None and self.label not in LABELS:
            raise ContractViolation(f"patient {self.id}: unknown label {self.label}")


CSV_HEADER = ["id", "age", "sex", "height_cm", "weight_kg", "bmi", "falls",
              "sppb", "label"]


def load_patients_csv(path) -> list:
    """Read patient records; the label column is optional."""
    records = []
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_HEADER[:-1] if c not in (reader.fieldnames or [])]
        if missing:
            raise ContractViolation(f"patients csv missing columns: {missing}")
        for row in reader:
            label = (row.get("label") or "").strip() or None
            rec = PatientRecord(
                id=row["id"].strip(),
                age=float(row["age"]),
                sex=row["sex"].strip(),
                height_cm=float(row["height_cm"]),
                weight_kg=float(row["weight_kg"]),
                bmi=float(row["bmi"]),
                falls=int(row["falls"]),
                sppb=int(row["sppb"]),
                label=label,
            )
            rec.validate()
            records.append(rec)
    return records


def save_patients_csv(path, records) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([r.id, f"{r.age:g}", r.sex, f"{r.height_cm:g}",
                             f"{r.weight_kg:g}", f"{r.bmi:g}", r.falls, r.sppb,
                             r.label or ""])


def raw_features(record: PatientRecord) -> np.ndarray:
    """Unscaled 8-dim vector: [sex=M, sex=F, age, height, weight, bmi, falls, sppb]."""
    onehot = [1.0 if record.sex == s else 0.0 for s in SEXES]
    return np.array(onehot + [record.age, record.height_cm, record.weight_kg,
                              record.bmi, float(record.falls), float(record.sppb)])


def fit_feature_scaler(records) -> MinMaxScaler:
    """Min-max scaler over the 6 continuous columns, fitted on the given
    (training) records only."""
    if not records:
        raise ContractViolation("fit_feature_scaler: no records")
    continuous = np.stack([raw_features(r)[2:] for r in records])
    return MinMaxScaler().fit(continuous)


def scaled_features(record: PatientRecord, scaler: MinMaxScaler) -> np.ndarray:
    raw = raw_features(record)
    return np.concatenate([raw[:2], scaler.transform(raw[2:])])


class ClinicalEncoder:
    """Two dense layers (8 -> 64 ReLU -> 400); trained jointly with fusion."""

    def __init__(self, w1, b1, w2, b2):
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2

    @classmethod
    def init(cls, rng: Rng, sigma: float = 0.02) -> "ClinicalEncoder":
        return cls(w1=rng.normals((ENCODER_HIDDEN, RAW_DIM)) * sigma,
                   b1=np.zeros(ENCODER_HIDDEN),
                   w2=rng.normals((EMBED_DIM, ENCODER_HIDDEN)) * sigma,
                   b2=np.zeros(EMBED_DIM))

    @classmethod
    def zeros(cls) -> "ClinicalEncoder":
        return cls(w1=np.zeros((ENCODER_HIDDEN, RAW_DIM)), b1=np.zeros(ENCODER_HIDDEN),
                   w2=np.zeros((EMBED_DIM, ENCODER_HIDDEN)), b2=np.zeros(EMBED_DIM))

    def encode(self, x8: np.ndarray) -> np.ndarray:
        hidden = relu(self.w1 @ x8 + self.b1)
        return self.w2 @ hidden + self.b2


def encode_patient(record: PatientRecord, scaler: MinMaxScaler,
                   encoder: ClinicalEncoder) -> np.ndarray:
    """400-d latent embedding of the scaled record."""
    if scaler.min_ is None:
        raise ContractViolation("encode_patient: scaler not fitted")
    return encoder.encode(scaled_features(record, scaler))


@dataclass(frozen=True)
class ClinicalTerm:
    term: str
    source: str  # which variable triggered the rule
    tag: str  # one of DIMENSION_TAGS

    def __post_init__(self):
        if not self.term:
            raise ContractViolation("ClinicalTerm: empty term")
        if self.tag not in DIMENSION_TAGS:
            raise ContractViolation(f"ClinicalTerm: unknown tag {self.tag}")


def derive_terms(record: PatientRecord, include_falls_rule: bool = False) -> list:
    """Threshold rules mapping a record to standardized terms.

    The falls rule (>=2 self-reported falls -> "Recurrent Falls") is an
    extension beyond the published thresholds and is off by default.
    Output order is fixed; no term/tag pair is emitted twice.
    """
    terms = [ClinicalTerm("Sarcopenia", "condition", "Diagnosis")]
    if record.bmi >= 30:
        terms.append(ClinicalTerm("Obesity", "bmi", "Risk Factors"))
        terms.append(ClinicalTerm("Obesity", "bmi", "Comorbidities"))
        terms.append(ClinicalTerm("High Body Mass Index", "bmi", "Risk Factors"))
    if record.sppb <= 7:
        terms.append(ClinicalTerm("Low Physical Performance", "sppb", "Diagnosis"))
        terms.append(ClinicalTerm("Low Physical Performance", "sppb", "Prognosis"))
        terms.append(ClinicalTerm("Frailty", "sppb", "Risk Factors"))
        terms.append(ClinicalTerm("Frailty", "sppb", "Prognosis"))
    if record.age >= 65:
        terms.append(ClinicalTerm("Elderly Population", "age", "Risk Factors"))
    terms.append(ClinicalTerm(
        "Male phenotype" if record.sex == "M" else "Female phenotype",
        "sex", "Risk Factors"))
    if include_falls_rule and record.falls >= 2:
        terms.append(ClinicalTerm("Recurrent Falls", "falls", "Risk Factors"))
        terms.append(ClinicalTerm("Recurrent Falls", "falls", "Prognosis"))
    return terms
